use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use qnn_landscape::experiments::{self, Config, ExperimentKind};
use qnn_landscape::par;

const THREADS_ENV: &str = "QNN_LANDSCAPE_THREADS";

#[derive(Parser)]
#[command(name = "qnn-landscape", version, about = "Quantum state learning landscapes: simulation and statistical checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Adam loss curves toward targets at fixed overlap
    Train(RunArgs),
    /// Loss profiles along random directions through θ*
    Landscape(RunArgs),
    /// Empirical local-minimum probability against its bound
    ProbLocalmin(RunArgs),
    /// Gradient and Hessian moments over the target ensemble
    Lemma1(RunArgs),
    /// Loss mean and variance away from θ*, and axis profiles
    Prop1(RunArgs),
    /// Subspace Haar integrals against Monte Carlo
    VerifyHaar(RunArgs),
    /// Local Hamiltonian loss statistics and bound
    LocalLoss(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON config file
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: config output_path, else ./results)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: $QNN_LANDSCAPE_THREADS, else all cores)
    #[arg(long)]
    threads: Option<usize>,
}

impl Command {
    fn split(self) -> (ExperimentKind, RunArgs) {
        match self {
            Command::Train(a) => (ExperimentKind::Train, a),
            Command::Landscape(a) => (ExperimentKind::Landscape, a),
            Command::ProbLocalmin(a) => (ExperimentKind::ProbLocalmin, a),
            Command::Lemma1(a) => (ExperimentKind::Lemma1, a),
            Command::Prop1(a) => (ExperimentKind::Prop1, a),
            Command::VerifyHaar(a) => (ExperimentKind::VerifyHaar, a),
            Command::LocalLoss(a) => (ExperimentKind::LocalLoss, a),
        }
    }
}

fn threads(arg: Option<usize>) -> Result<Option<usize>, String> {
    if arg.is_some() {
        return Ok(arg);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse::<usize>()
            .map(Some)
            .map_err(|_| format!("{THREADS_ENV}={v:?} is not a thread count")),
        _ => Ok(None),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (kind, args) = cli.command.split();
    let fail = |msg: String| {
        eprintln!("error: {msg}");
        ExitCode::from(1)
    };
    let mut config = match Config::from_path(&args.config) {
        Ok(c) => c,
        Err(e) => return fail(e.to_string()),
    };
    if let Some(s) = args.seed {
        config.seed = s;
    }
    let threads = match threads(args.threads) {
        Ok(t) => t,
        Err(e) => return fail(e),
    };
    if threads == Some(0) {
        return fail("thread count must be positive".into());
    }
    let out_dir = args
        .out
        .or_else(|| config.output_path.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results"));

    let start = Instant::now();
    let output = match par::with_threads(threads, || experiments::run(kind, &config)) {
        Ok(o) => o,
        Err(e) => return fail(e.to_string()),
    };
    let (csv, json) = match output.write(&config, &out_dir) {
        Ok(p) => p,
        Err(e) => return fail(e.to_string()),
    };
    eprintln!("{kind}: {:.2} s wall time", start.elapsed().as_secs_f64());
    println!("wrote {} and {}", csv.display(), json.display());
    match output.passed {
        Some(false) => {
            eprintln!("{kind}: statistical checks failed; see {}", json.display());
            ExitCode::from(2)
        }
        Some(true) => {
            println!("{kind}: all checks passed");
            ExitCode::SUCCESS
        }
        None => ExitCode::SUCCESS,
    }
}
