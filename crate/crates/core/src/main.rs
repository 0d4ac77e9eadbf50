use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};

use tscond::cli::{self, EvalTarget};
use tscond::config::{parse_config, RunConfig};

#[derive(Parser)]
#[command(name = "tscond", version, about = "Dataset condensation for time-series forecasting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Config file (sectioned key = value); a manifest works too.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset CSV; overrides data.path.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Reject constant channels in the train split instead of warning.
    #[arg(long)]
    strict: bool,
    /// Dotted overrides such as condense.beta=0.05.
    #[arg(value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Baseline {
    Random,
    Full,
}

#[derive(Subcommand)]
enum Command {
    /// Train the expert buffer on the train split.
    Buffer {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Distill a synthetic series from an expert buffer.
    Distill {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        buffer: Option<PathBuf>,
        #[arg(long)]
        out_synthetic: Option<PathBuf>,
        #[arg(long)]
        out_metrics: Option<PathBuf>,
    },
    /// Train fresh models on a synthetic series (or a baseline) and score them on the test split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, conflicts_with = "baseline", required_unless_present = "baseline")]
        synthetic: Option<PathBuf>,
        #[arg(long, value_enum)]
        baseline: Option<Baseline>,
        #[arg(long)]
        out: PathBuf,
        /// Row label in reports; inferred from the distill manifest by default.
        #[arg(long)]
        label: Option<String>,
    },
    /// Distill and evaluate over a grid such as "G=1,3,5;beta=0.01,0.05".
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        buffer: Option<PathBuf>,
        #[arg(long)]
        grid: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Merge eval reports into a comparison table.
    Report {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn resolve(common: &Common, extra: &[(&str, Option<&PathBuf>)]) -> Result<RunConfig> {
    let mut overrides = Vec::new();
    if let Some(d) = &common.data {
        overrides.push(format!("data.path={}", d.display()));
    }
    if common.strict {
        overrides.push("data.strict=true".into());
    }
    for (key, value) in extra {
        if let Some(v) = value {
            overrides.push(format!("{key}={}", v.display()));
        }
    }
    overrides.extend(common.overrides.iter().cloned());
    Ok(parse_config(common.config.as_deref(), &overrides)?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Buffer { common, out } => {
            let cfg = resolve(&common, &[("buffer.out", out.as_ref())])?;
            let buf = cli::run_buffer(&cfg)?;
            for p in &buf.pairs {
                println!(
                    "expert {:>3}: final train loss {:.6}",
                    p.expert_index, p.train_loss_final
                );
            }
        }
        Command::Distill {
            common,
            buffer,
            out_synthetic,
            out_metrics,
        } => {
            let cfg = resolve(
                &common,
                &[
                    ("buffer.out", buffer.as_ref()),
                    ("condense.out", out_synthetic.as_ref()),
                ],
            )?;
            let (_, log) = cli::run_distill(&cfg, out_metrics.as_deref())?;
            if let Some(last) = log.last() {
                println!("epoch {}: label error {:.6}", last.epoch, last.label_error);
            }
        }
        Command::Eval {
            common,
            synthetic,
            baseline,
            out,
            label,
        } => {
            let cfg = resolve(&common, &[])?;
            let target = match (synthetic, baseline) {
                (Some(p), _) => EvalTarget::Synthetic(p),
                (None, Some(Baseline::Random)) => EvalTarget::Random,
                (None, Some(Baseline::Full)) => EvalTarget::Full,
                (None, None) => unreachable!("clap requires one of --synthetic/--baseline"),
            };
            let report = cli::run_eval(&cfg, &target, &out, label.as_deref())?;
            print!("{}", tscond::eval::comparison_table(std::slice::from_ref(&report)));
        }
        Command::Sweep {
            common,
            buffer,
            grid,
            out,
        } => {
            let cfg = resolve(&common, &[("buffer.out", buffer.as_ref())])?;
            let axes = cli::parse_grid(&grid)?;
            let rows = cli::run_sweep(&cfg, &axes, &out)?;
            for row in rows {
                println!(
                    "{:<24} mae {:.4}  mse {:.4}",
                    row.values.join(" "),
                    row.mean_mae,
                    row.mean_mse
                );
            }
        }
        Command::Report { reports, out } => {
            print!("{}", cli::run_report(&reports, out.as_deref())?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
