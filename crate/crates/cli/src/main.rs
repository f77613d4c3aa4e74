use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use detirs::dovetail::{dovetail, DovetailOptions, Thresholds};
use detirs::hierarchy::{alpha_sequence, AlphaOptions, DetOptions};
use detirs::lnplus::{check_domination, lnplus_poly, AccuracyPolicy, LnPolyOptions};
use detirs::permstrat::{fk_logdet, perm_value, perm_value_direct, search_beta, BetaOptions, PermutationAction};
use detirs::rational::{fmt_decimal, parse_rat};
use detirs::{ball, corpus, AlgebraMatrix, Error, GameSpec, GroupParams, Rat};

const EXIT_ERROR: u8 = 1;
const EXIT_BUDGET: u8 = 3;
const EXIT_VERIFY: u8 = 4;

#[derive(Parser)]
#[command(name = "detirs", version, about = "Bounds on determinant-IRS values of synchronous games")]
struct Cli {
    /// Directory for logs, LP dumps and witnesses
    #[arg(long, global = true, env = "DETIRS_OUTPUT_DIR")]
    output_dir: Option<PathBuf>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Words of length at most RADIUS
    Ball {
        #[arg(long, value_delimiter = ',', default_value = "x,y")]
        questions: Vec<String>,
        #[arg(long, default_value_t = 1)]
        bits: u32,
        #[arg(long)]
        radius: u32,
        #[arg(long)]
        list: bool,
    },
    /// Upper bounds alpha_1..alpha_LEVEL
    Alpha {
        game: String,
        #[arg(long, default_value_t = 1)]
        level: u32,
        #[command(flatten)]
        h: HierarchyArgs,
    },
    /// Lower bound from permutation strategies
    Beta {
        game: String,
        #[arg(long, default_value_t = 4)]
        max_degree: usize,
        #[command(flatten)]
        b: BetaArgs,
    },
    /// Value of a permutation strategy
    Value { game: String, action: PathBuf },
    /// Determinant data of a matrix under a permutation action
    Fkdet {
        action: PathBuf,
        matrix: PathBuf,
        /// game or corpus name fixing the question labels
        #[arg(long, default_value = "corpus:consistency")]
        game: String,
    },
    /// Certified polynomial upper approximation of ln+ on [0, N]
    Lnpoly {
        #[arg(long)]
        level: u32,
        #[arg(long)]
        interval: String,
        #[arg(long, default_value_t = 1024)]
        cap: usize,
        #[arg(long, default_value_t = 64)]
        grid: usize,
        /// require sup-norm accuracy instead of shifting
        #[arg(long)]
        strict: bool,
    },
    /// Interleave alpha and beta until a threshold decides
    Dovetail {
        game: String,
        #[arg(long, default_value_t = 2)]
        rounds: u32,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, default_value = "1/2")]
        accept: String,
        #[arg(long, default_value = "1")]
        reject: String,
        #[command(flatten)]
        h: HierarchyArgs,
        #[command(flatten)]
        b: BetaArgs,
    },
    /// Parse and check input files
    Validate {
        game: String,
        #[arg(long)]
        action: Vec<PathBuf>,
        #[arg(long)]
        matrix: Vec<PathBuf>,
    },
}

#[derive(Args)]
struct HierarchyArgs {
    #[arg(long, default_value = "auto")]
    mode: String,
    /// only enforce the constraints generated at each level
    #[arg(long)]
    no_cumulative: bool,
    #[arg(long)]
    no_det: bool,
    #[arg(long, default_value_t = 4)]
    deg_cap: usize,
    #[arg(long, default_value_t = 64)]
    matrix_budget: usize,
    #[arg(long)]
    ball_radius_start: Option<u32>,
    #[arg(long, default_value_t = 4000)]
    support_budget: usize,
}

impl HierarchyArgs {
    fn options(&self) -> Result<AlphaOptions, Error> {
        Ok(AlphaOptions {
            mode: self.mode.parse()?,
            cumulative: !self.no_cumulative,
            use_det: !self.no_det,
            deg_cap: self.deg_cap,
            det: DetOptions { matrix_budget: self.matrix_budget, ..DetOptions::default() },
            ball_radius_start: self.ball_radius_start,
            support_budget: self.support_budget,
            ..AlphaOptions::default()
        })
    }
}

#[derive(Args)]
struct BetaArgs {
    #[arg(long, default_value_t = 20_000)]
    budget: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn exact(q: &Rat) -> String {
    format!("{}/{}", q.numer(), q.denom())
}

fn load_game(spec: &str) -> Result<GameSpec, Error> {
    if let Some(name) = spec.strip_prefix("corpus:") {
        return corpus::all()
            .into_iter()
            .find(|(n, _)| *n == name)
            .map(|(_, g)| g)
            .ok_or_else(|| Error::ParamMismatch(format!("no corpus game `{name}`")));
    }
    GameSpec::parse(&fs::read_to_string(spec)?)
}

fn load_action(params: &GroupParams, path: &Path) -> Result<PermutationAction, Error> {
    PermutationAction::parse(params, &fs::read_to_string(path)?)
}

fn persist(dir: &Option<PathBuf>, name: &str, body: &str) -> Result<(), Error> {
    if let Some(dir) = dir {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(name), body)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<u8, Error> {
    let out = &cli.output_dir;
    match cli.cmd {
        Cmd::Ball { questions, bits, radius, list } => {
            let params = GroupParams::new(questions, bits)?;
            let b = ball(&params, radius);
            println!("|ball({radius})| = {}", b.len());
            if list {
                for w in b.format() {
                    println!("{w}");
                }
            }
        }
        Cmd::Alpha { game, level, h } => {
            let g = load_game(&game)?;
            let run = alpha_sequence(&g, level, &h.options()?)?;
            let mut log = String::new();
            for l in &run.levels {
                let line = format!("alpha_{} = {}", l.n, exact(&l.alpha));
                println!("{line}  (~{}, mode {}, |B̃| = {}, {} det rows)", fmt_decimal(&l.alpha, 6), run.mode.name(), l.b_tilde.len(), l.det.len());
                log.push_str(&line);
                log.push('\n');
                persist(out, &format!("lp_{}.txt", l.n), &l.full_lp().dump())?;
                persist(out, &format!("witness_{}.txt", l.n), &l.certificate.format(g.params()))?;
            }
            persist(out, "alpha.log", &log)?;
        }
        Cmd::Beta { game, max_degree, b } => {
            let g = load_game(&game)?;
            let opts = BetaOptions { max_degree, budget: b.budget, seed: b.seed, ..BetaOptions::default() };
            let r = search_beta(&g, &opts)?;
            if perm_value_direct(&g, &r.action)? != r.value {
                return Err(Error::Verification("direct evaluation disagrees with the search".into()));
            }
            println!("beta = {}  (~{})", exact(&r.value), fmt_decimal(&r.value, 6));
            println!("evaluated {} actions; exhaustive degrees {:?}", r.evaluated, r.exhaustive_degrees);
            persist(out, "beta.log", &format!("beta_{} = {}\n", max_degree, exact(&r.value)))?;
            persist(out, "best_action.txt", &r.action.format())?;
            if r.budget_exhausted {
                println!("budget exhausted before the search space was covered");
            }
        }
        Cmd::Value { game, action } => {
            let g = load_game(&game)?;
            let a = load_action(g.params(), &action)?;
            let v = perm_value(&g, &a)?;
            if perm_value_direct(&g, &a)? != v {
                return Err(Error::Verification("functional and direct values differ".into()));
            }
            println!("value = {}  (~{})", exact(&v), fmt_decimal(&v, 6));
        }
        Cmd::Fkdet { action, matrix, game } => {
            let g = load_game(&game)?;
            let a = load_action(g.params(), &action)?;
            let m = AlgebraMatrix::parse(g.params(), &fs::read_to_string(&matrix)?)?;
            print!("{}", fk_logdet(&a, &m)?.format());
        }
        Cmd::Lnpoly { level, interval, cap, grid, strict } => {
            let end = parse_rat(&interval)?;
            let policy = if strict { AccuracyPolicy::Strict } else { AccuracyPolicy::Relaxed };
            let opts = LnPolyOptions { degree_cap: cap, policy, grid_size: grid };
            let c = lnplus_poly(level, &end, &opts)?;
            let report = check_domination(&c.g, grid);
            println!("{}", c.summary());
            print!("{}", report.format());
            persist(out, &format!("lnpoly_{level}.txt"), &(c.poly().format() + "\n"))?;
            if !report.passed() {
                return Err(Error::Verification("domination check failed".into()));
            }
        }
        Cmd::Dovetail { game, rounds, workers, accept, reject, h, b } => {
            let g = load_game(&game)?;
            let opts = DovetailOptions {
                rounds,
                alpha: h.options()?,
                beta: BetaOptions { budget: b.budget, seed: b.seed, ..BetaOptions::default() },
                thresholds: Thresholds { accept: parse_rat(&accept)?, reject: parse_rat(&reject)? },
                workers,
            };
            let r = dovetail(&g, &opts)?;
            let t = r.transcript();
            print!("{t}");
            persist(out, "dovetail.log", &t)?;
            return Ok(r.verdict.exit_code() as u8);
        }
        Cmd::Validate { game, action, matrix } => {
            let g = load_game(&game)?;
            println!("game ok: {} questions, {} answer bits", g.params().num_questions(), g.params().answer_width());
            for p in action {
                let a = load_action(g.params(), &p)?;
                println!("{}: action of degree {} ok", p.display(), a.degree());
            }
            for p in matrix {
                let m = AlgebraMatrix::parse(g.params(), &fs::read_to_string(&p)?)?;
                println!("{}: {}x{} matrix ok", p.display(), m.size(), m.size());
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Budget { .. } | Error::DegreeCap { .. } => EXIT_BUDGET,
                Error::Verification(_) | Error::Certification { .. } => EXIT_VERIFY,
                _ => EXIT_ERROR,
            })
        }
    }
}
