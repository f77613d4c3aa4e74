use detirs::{corpus, GameSpec};

#[test]
fn game_files_match_corpus() {
    for (name, game) in corpus::all() {
        let path = format!("{}/../../games/{name}.game", env!("CARGO_MANIFEST_DIR"));
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(GameSpec::parse(&text).unwrap().format(), game.format(), "{name}");
    }
}
