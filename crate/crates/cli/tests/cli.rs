use std::fs;
use std::process::{Command, Output};

fn detirs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_detirs"))
        .args(args)
        .env_remove("DETIRS_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn ball_sizes() {
    for (r, n) in [("0", 1), ("1", 4), ("2", 8), ("3", 12)] {
        let o = detirs(&["ball", "--radius", r]);
        assert!(o.status.success());
        assert_eq!(stdout(&o).trim(), format!("|ball({r})| = {n}"));
    }
}

#[test]
fn alpha_on_trivial_games() {
    let o = detirs(&["alpha", "corpus:all-accepting", "--level", "1"]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("alpha_1 = 1/1"));
    let o = detirs(&["alpha", "corpus:all-rejecting", "--level", "1", "--mode", "trace"]);
    assert!(stdout(&o).starts_with("alpha_1 = 0/1"));
}

#[test]
fn alpha_writes_logs() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_detirs"))
        .args(["alpha", "corpus:consistency", "--level", "2", "--mode", "trace"])
        .env("DETIRS_OUTPUT_DIR", dir.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    let log = fs::read_to_string(dir.path().join("alpha.log")).unwrap();
    assert_eq!(log, "alpha_1 = 1/1\nalpha_2 = 1/1\n");
    assert!(dir.path().join("lp_2.txt").exists());
    assert!(dir.path().join("witness_1.txt").exists());
}

#[test]
fn dovetail_exit_codes() {
    assert_eq!(detirs(&["dovetail", "corpus:all-accepting", "--budget", "200"]).status.code(), Some(0));
    assert_eq!(detirs(&["dovetail", "corpus:all-rejecting", "--budget", "200"]).status.code(), Some(2));
    let o = detirs(&["dovetail", "corpus:consistency", "--rounds", "1", "--accept", "1", "--reject", "1", "--budget", "1"]);
    assert!(matches!(o.status.code(), Some(0) | Some(3)));
    assert_eq!(detirs(&["dovetail", "corpus:triangle", "--accept", "1", "--reject", "1/2"]).status.code(), Some(1));
}

#[test]
fn fkdet_examples() {
    let dir = tempfile::tempdir().unwrap();
    let action = dir.path().join("a.txt");
    fs::write(&action, "degree 2\nx.1: (1 2)\nJ: (1 2)\n").unwrap();
    let run = |m: &str| {
        let path = dir.path().join("m.txt");
        fs::write(&path, m).unwrap();
        let o = detirs(&["fkdet", action.to_str().unwrap(), path.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let out = stdout(&o);
        let line = out.lines().find(|l| l.starts_with("logdet")).unwrap().to_string();
        line.rsplit(' ').next().unwrap().parse::<f64>().unwrap()
    };
    assert_eq!(run("[[e]]"), 0.0);
    assert!((run("[[e + x{1}]]") - 2f64.ln()).abs() < 1e-12);
    assert!((run("[[2]]") - 4f64.ln()).abs() < 1e-12);
}

#[test]
fn lnpoly_reports() {
    let o = detirs(&["lnpoly", "--level", "1", "--interval", "4", "--cap", "32"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("g(0) = 0"));
    let o = detirs(&["lnpoly", "--level", "2", "--interval", "16", "--cap", "16", "--strict"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("estimated minimal degree"));
}

#[test]
fn value_and_validate() {
    let dir = tempfile::tempdir().unwrap();
    let game = dir.path().join("g.game");
    fs::write(&game, fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../games/consistency.game")).unwrap()).unwrap();
    let action = dir.path().join("a.txt");
    fs::write(&action, "degree 2\nJ: (1 2)\n").unwrap();
    let o = detirs(&["validate", game.to_str().unwrap(), "--action", action.to_str().unwrap()]);
    assert!(o.status.success());
    let o = detirs(&["value", game.to_str().unwrap(), action.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("value = 1/2"));
    fs::write(&action, "degree 2\nx.1: (1 2)\n").unwrap();
    assert_eq!(detirs(&["value", game.to_str().unwrap(), action.to_str().unwrap()]).status.code(), Some(1));
}
