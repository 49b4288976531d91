//! Command-line front end. Parses a transition system, runs the
//! analysis, and speaks the verdict protocol: the first line of standard
//! output is exactly one of `NO`, `MAYBE`, `unsafe`, `safe`; everything
//! else goes to the error stream. Exit code 0 means a verdict was
//! produced (including `MAYBE`), 1 an input problem, 2 a solver or
//! internal failure.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use prover_core::engine::{self, Analysis, Mode, SearchOptions, StepOrder};
use prover_core::parser;
use prover_core::report;
use prover_core::smt::SolverConfig;

#[derive(Parser)]
#[command(
    name = "prover",
    version,
    about = "Disproves termination of integer transition systems; \
             in safety mode, searches for reachable error locations"
)]
struct Cli {
    #[command(subcommand)]
    command: Option<Cmd>,

    /// Input transition system (.its).
    input: Option<PathBuf>,

    #[command(flatten)]
    run: RunArgs,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run every .its file in a directory against expected verdicts.
    ///
    /// The expectations file holds lines of `<file> <token>`; the mode of
    /// each run is inferred from the token (`safe`/`unsafe` select safety
    /// mode). Exits nonzero if any file misses its expectation.
    Corpus {
        dir: PathBuf,
        /// Expectations file (default: <dir>/expected.txt).
        #[arg(long)]
        expected: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Analysis mode.
    #[arg(long, global = true, value_enum, default_value_t = ModeArg::Nonterm)]
    mode: ModeArg,

    /// SMT solver command; overrides PROVER_SMT and autodetection.
    #[arg(long, global = true)]
    smt: Option<String>,

    /// Wall-clock budget for one analysis, in seconds.
    #[arg(long, global = true, default_value_t = 60, value_parser = clap::value_parser!(u64).range(1..))]
    timeout: u64,

    /// Budget per solver query, in seconds.
    #[arg(long, global = true, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    smt_timeout: u64,

    /// Trace depth at which the search stops extending and backtracks.
    #[arg(long, global = true, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
    max_depth: u64,

    /// Cap on learned transitions.
    #[arg(long, global = true, default_value_t = 200, value_parser = clap::value_parser!(u64).range(1..))]
    max_learned: u64,

    /// Print the witness after the verdict line.
    #[arg(long, global = true, conflicts_with = "machine")]
    proof: bool,

    /// Print the witness as line-oriented key/value pairs.
    #[arg(long, global = true)]
    machine: bool,

    /// Which transitions to try first when extending the trace.
    #[arg(long, global = true, value_enum, default_value_t = SeedOrder::LearnedFirst)]
    seed_order: SeedOrder,

    /// Echo the search log to the error stream.
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Nonterm,
    Safety,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Nonterm => Mode::Nonterm,
            ModeArg::Safety => Mode::Safety,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SeedOrder {
    File,
    LearnedFirst,
}

impl From<SeedOrder> for StepOrder {
    fn from(o: SeedOrder) -> StepOrder {
        match o {
            SeedOrder::File => StepOrder::FileOrder,
            SeedOrder::LearnedFirst => StepOrder::LearnedFirst,
        }
    }
}

/// A failure with the exit code it maps to.
enum Failure {
    /// Unreadable, unparsable, or rejected input: exit 1.
    Input(String),
    /// Solver or engine breakage: exit 2.
    Internal(String),
}

impl Failure {
    fn code(&self) -> ExitCode {
        match self {
            Failure::Input(_) => ExitCode::from(1),
            Failure::Internal(_) => ExitCode::from(2),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Input(m) | Failure::Internal(m) => write!(f, "{m}"),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Usage problems are input errors under this tool's contract,
            // not clap's default exit code 2.
            let fine = matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let _ = e.print();
            return if fine {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            };
        }
    };
    let result = match cli.command {
        Some(Cmd::Corpus { dir, expected }) => run_corpus(&dir, expected.as_deref(), &cli.run),
        None => match cli.input {
            Some(input) => run_file(&input, &cli.run),
            None => Err(Failure::Input(
                "an input file or the corpus subcommand is required".into(),
            )),
        },
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("prover: {e}");
            e.code()
        }
    }
}

fn solver_config(args: &RunArgs) -> Result<SolverConfig, Failure> {
    let timeout = Duration::from_secs(args.smt_timeout);
    match &args.smt {
        Some(cmd) => {
            let command: Vec<String> = cmd.split_whitespace().map(str::to_string).collect();
            if command.is_empty() {
                return Err(Failure::Input("--smt needs a non-empty command".into()));
            }
            Ok(SolverConfig::new(command, timeout))
        }
        None => SolverConfig::locate(timeout).map_err(|e| Failure::Internal(e.to_string())),
    }
}

fn analyze_file(path: &Path, args: &RunArgs, mode: Mode) -> Result<Analysis, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    let parsed =
        parser::parse(&text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    for w in &parsed.warnings {
        eprintln!(
            "prover: warning: {}: {}: {}",
            path.display(),
            w.span,
            w.message
        );
    }
    let config = solver_config(args)?;
    let opts = SearchOptions {
        wall: Duration::from_secs(args.timeout),
        max_depth: args.max_depth as usize,
        max_learned: args.max_learned as usize,
        order: args.seed_order.into(),
        ..SearchOptions::default()
    };
    let analysis = engine::analyze(&parsed.system, mode, &opts, &config).map_err(|e| match e {
        engine::EngineError::Smt(_) => Failure::Internal(e.to_string()),
        _ => Failure::Input(format!("{}: {e}", path.display())),
    })?;
    if args.verbose {
        for event in &analysis.log {
            eprintln!("prover: {event}");
        }
    }
    Ok(analysis)
}

fn run_file(path: &Path, args: &RunArgs) -> Result<ExitCode, Failure> {
    let analysis = analyze_file(path, args, args.mode.into())?;
    let out = if args.machine {
        report::machine(&analysis)
    } else if args.proof {
        report::human(&analysis)
    } else {
        report::plain(&analysis)
    };
    print!("{out}");
    Ok(ExitCode::SUCCESS)
}

/// Expected verdict tokens and the mode each one runs under.
fn token_mode(token: &str) -> Option<Mode> {
    match token {
        "NO" | "MAYBE" => Some(Mode::Nonterm),
        "safe" | "unsafe" => Some(Mode::Safety),
        _ => None,
    }
}

fn read_expectations(path: &Path) -> Result<BTreeMap<String, String>, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    let mut map = BTreeMap::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (Some(name), Some(token), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Failure::Input(format!(
                "{}: line {}: expected `<file> <token>`",
                path.display(),
                no + 1
            )));
        };
        if token_mode(token).is_none() {
            return Err(Failure::Input(format!(
                "{}: line {}: unknown verdict token {token:?}",
                path.display(),
                no + 1
            )));
        }
        map.insert(name.to_string(), token.to_string());
    }
    Ok(map)
}

fn run_corpus(dir: &Path, expected: Option<&Path>, args: &RunArgs) -> Result<ExitCode, Failure> {
    let expectations_path = expected
        .map(Path::to_path_buf)
        .unwrap_or_else(|| dir.join("expected.txt"));
    let mut expectations = read_expectations(&expectations_path)?;
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Failure::Input(format!("{}: {e}", dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "its"))
        .collect();
    files.sort();

    let mut passed = 0usize;
    let mut total = 0usize;
    for path in &files {
        total += 1;
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let Some(want) = expectations.remove(&name) else {
            println!("FAIL {name}: no expectation");
            continue;
        };
        let mode = token_mode(&want).expect("tokens validated on read");
        let started = Instant::now();
        match analyze_file(path, args, mode) {
            Ok(analysis) => {
                let got = analysis.verdict.token();
                let secs = started.elapsed().as_secs_f64();
                if got == want {
                    passed += 1;
                    println!("ok   {name}: {got} in {secs:.2}s");
                } else {
                    println!("FAIL {name}: got {got}, expected {want} in {secs:.2}s");
                }
            }
            Err(e) => println!("FAIL {name}: {e}"),
        }
    }
    for name in expectations.keys() {
        total += 1;
        println!("FAIL {name}: file not found");
    }
    println!("{passed}/{total} passed");
    Ok(if passed == total {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}
