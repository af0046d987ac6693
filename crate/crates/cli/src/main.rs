use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use tep_cli::{run, CliError, Experiment, ExperimentConfig};

/// Experiments for expectation propagation in the t-exponential family.
#[derive(Parser)]
#[command(name = "tep", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// ADF vs EP boundary spread over data orderings on the BPM mixture.
    BpmPermutation(RunArgs),
    /// StP vs GP boundary rotation caused by added outliers.
    StpRobustness(RunArgs),
    /// Large-dof cross-checks against classical Gaussian EP.
    LimitsCheck(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration file; omitted keys take the experiment defaults.
    #[arg(long)]
    config: PathBuf,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

const EXIT_CONFIG: u8 = 1;
const EXIT_NON_CONVERGENCE: u8 = 2;

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("TEP_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("TEP_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))
}

fn execute(experiment: Experiment, args: RunArgs) -> Result<u8, CliError> {
    configure_threads()?;
    let mut cfg = ExperimentConfig::load(experiment, &args.config)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(o) = args.out {
        cfg.output_dir = o;
    }
    let outcome = run(&cfg)?;
    println!("{}", serde_json::to_string_pretty(&summary(&outcome.report))?);
    if outcome.non_converged > 0 {
        eprintln!("{} fit(s) did not converge", outcome.non_converged);
        return Ok(EXIT_NON_CONVERGENCE);
    }
    Ok(0)
}

/// Report without the embedded per-run details.
fn summary(report: &serde_json::Value) -> serde_json::Value {
    let mut s = report.clone();
    if let Some(o) = s.as_object_mut() {
        for k in ["runs", "seeds", "problems", "config"] {
            o.remove(k);
        }
    }
    s
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (experiment, args) = match cli.command {
        Command::BpmPermutation(a) => (Experiment::BpmPermutation, a),
        Command::StpRobustness(a) => (Experiment::StpRobustness, a),
        Command::LimitsCheck(a) => (Experiment::LimitsCheck, a),
    };
    match execute(experiment, args) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}
