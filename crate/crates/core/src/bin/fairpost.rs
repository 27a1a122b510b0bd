use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use fairpost::metrics::DEFAULT_GAMMA_EVAL;
use fairpost::pipeline::{cmd_calibrate, cmd_oracle, cmd_report, cmd_synth, RunConfig};
use fairpost::{Error, OracleConfig, Result, SolveMode, SolverConfig, SynthConfig};

#[derive(Parser)]
#[command(name = "fairpost", version, about = "Bias-amplification reports and posterior calibration")]
struct Cli {
    /// Worker threads for per-instance computations.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Report bias amplification of the uncalibrated posteriors.
    Report(CommonArgs),
    /// Calibrate posteriors and report before/after.
    Calibrate(SolveArgs),
    /// Generate a synthetic corpus and training stats.
    Synth(SynthArgs),
    /// Compare the solver against the brute-force projection on a small input.
    Oracle(OracleArgs),
}

#[derive(Args)]
struct CommonArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    stats: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    gamma_eval: Option<f64>,
    /// JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Stochastic,
    FullBatch,
}

#[derive(Args)]
struct SolverFlags {
    #[arg(long)]
    gamma_solve: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lr_decay: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    solver: SolverFlags,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    stats: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Grid points per axis.
    #[arg(long)]
    resolution: Option<usize>,
    #[command(flatten)]
    solver: SolverFlags,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    n_activities: Option<usize>,
    #[arg(long)]
    instances_per_activity: Option<usize>,
    #[arg(long)]
    candidates: Option<usize>,
    #[arg(long)]
    bias_min: Option<f64>,
    #[arg(long)]
    bias_max: Option<f64>,
    #[arg(long)]
    boost: Option<f64>,
    #[arg(long)]
    gold_noise: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    gamma_eval: Option<f64>,
    solver: Option<SolverConfig>,
}

fn read_config(path: Option<&Path>) -> Result<FileConfig> {
    match path {
        Some(p) => Ok(serde_json::from_str(&fs::read_to_string(p)?)?),
        None => Ok(FileConfig::default()),
    }
}

fn merge_solver(base: Option<SolverConfig>, flags: &SolverFlags) -> SolverConfig {
    let mut s = base.unwrap_or_default();
    if let Some(v) = flags.gamma_solve {
        s.gamma_solve = v;
    }
    if let Some(v) = flags.batch_size {
        s.batch_size = v;
    }
    if let Some(v) = flags.epochs {
        s.epochs = v;
    }
    if let Some(v) = flags.lr {
        s.initial_lr = v;
    }
    if let Some(v) = flags.lr_decay {
        s.lr_decay = v;
    }
    if let Some(v) = flags.seed {
        s.seed = v;
    }
    if let Some(m) = flags.mode {
        s.mode = match m {
            ModeArg::Stochastic => SolveMode::Stochastic,
            ModeArg::FullBatch => SolveMode::FullBatch,
        };
    }
    s
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Error::Validation(e.to_string()))?;
    }
    match cli.command {
        Command::Report(a) => {
            let file = read_config(a.config.as_deref())?;
            let gamma_eval = a.gamma_eval.or(file.gamma_eval).unwrap_or(DEFAULT_GAMMA_EVAL);
            let report = cmd_report(&a.corpus, &a.stats, &a.out, gamma_eval)?;
            println!(
                "mean_amp_dist {:.4} | mean_amp_top {} | violations_dist {}/{} | violations_top {}/{}",
                report.mean_amp_dist,
                report.mean_amp_top.map(|v| format!("{v:.4}")).unwrap_or_else(|| "n/a".into()),
                report.n_violations_dist,
                report.activities.len(),
                report.n_violations_top,
                report.activities.len(),
            );
        }
        Command::Calibrate(a) => {
            let file = read_config(a.common.config.as_deref())?;
            let mut config = RunConfig::new(&a.common.corpus, &a.common.stats, &a.common.out);
            config.gamma_eval = a.common.gamma_eval.or(file.gamma_eval).unwrap_or(DEFAULT_GAMMA_EVAL);
            config.solver = merge_solver(file.solver, &a.solver);
            let summary = cmd_calibrate(&config)?;
            println!("{summary}");
        }
        Command::Synth(a) => {
            let d = SynthConfig::default();
            let config = SynthConfig {
                n_activities: a.n_activities.unwrap_or(d.n_activities),
                instances_per_activity: a.instances_per_activity.unwrap_or(d.instances_per_activity),
                candidates_per_instance: a.candidates.unwrap_or(d.candidates_per_instance),
                bias_range: (a.bias_min.unwrap_or(d.bias_range.0), a.bias_max.unwrap_or(d.bias_range.1)),
                amplification_boost: a.boost.unwrap_or(d.amplification_boost),
                gold_noise: a.gold_noise.unwrap_or(d.gold_noise),
                seed: a.seed.unwrap_or(d.seed),
                ..d
            };
            let (corpus, stats) = cmd_synth(&config, &a.out)?;
            println!("wrote {} instances over {} activities to {}", corpus.len(), stats.len(), a.out.display());
        }
        Command::Oracle(a) => {
            let file = read_config(a.config.as_deref())?;
            let solver = merge_solver(file.solver, &a.solver);
            let mut oracle = OracleConfig::default();
            if let Some(r) = a.resolution {
                oracle.resolution = r;
            }
            let r = cmd_oracle(&a.corpus, &a.stats, &a.out, &solver, &oracle)?;
            println!(
                "kl solver {:.6e} | kl oracle {:.6e} | max tv {:.3e}",
                r.kl_solver, r.kl_oracle, r.max_total_variation
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
