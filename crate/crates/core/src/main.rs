use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use sohkan::commands::{self, RunConfig};

/// Battery state of health from cell temperature with a two-input KAN.
#[derive(Debug, Parser)]
#[command(name = "sohkan", version)]
struct Cli {
    /// JSON run configuration; missing sections take defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for initialization and batch shuffling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Overrides {
    /// Last cycle index E of the simulated life (cycles 0..=E).
    #[arg(long, global = true)]
    cycles: Option<usize>,
    #[arg(long, global = true)]
    steps: Option<usize>,
    #[arg(long, global = true)]
    batch_size: Option<usize>,
    #[arg(long, global = true)]
    learning_rate: Option<f64>,
    #[arg(long, global = true)]
    lambda: Option<f64>,
    #[arg(long, global = true)]
    nu1: Option<f64>,
    #[arg(long, global = true)]
    nu2: Option<f64>,
    /// Prediction horizon N in samples.
    #[arg(long, global = true)]
    horizon: Option<usize>,
    #[arg(long, global = true)]
    grid_intervals: Option<usize>,
    #[arg(long, global = true)]
    spline_order: Option<usize>,
    /// SoH milestone threshold, %.
    #[arg(long, global = true)]
    threshold: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate cycling telemetry and the exact SoH curve.
    Simulate,
    /// Validate a telemetry CSV and export its horizon pairs.
    Ingest {
        #[arg(long)]
        data: PathBuf,
    },
    /// Train the KAN on a telemetry CSV.
    Train {
        #[arg(long)]
        data: PathBuf,
    },
    /// Fit closed forms to the learned cycle activation.
    Extract {
        #[arg(long)]
        model: PathBuf,
        /// Training telemetry; enables the anchored offset correction.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// SoH curves, errors and milestones.
    Soh {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        fits: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Reference SoH CSV; the IR-drop baseline is used when absent.
        #[arg(long)]
        oracle: Option<PathBuf>,
    },
    /// simulate, ingest, train, extract and soh in one run.
    Report,
}

fn build_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("reading config {}", p.display()))?,
        None => RunConfig::default(),
    };
    let o = &cli.overrides;
    if let Some(v) = cli.seed {
        cfg.train.seed = v;
    }
    if let Some(v) = o.cycles {
        cfg.profile.n_cycles = v;
    }
    if let Some(v) = o.steps {
        cfg.train.steps = v;
    }
    if let Some(v) = o.batch_size {
        cfg.train.batch_size = v;
    }
    if let Some(v) = o.learning_rate {
        cfg.train.learning_rate = v;
    }
    if let Some(v) = o.lambda {
        cfg.train.lambda = v;
    }
    if let Some(v) = o.nu1 {
        cfg.train.nu1 = v;
    }
    if let Some(v) = o.nu2 {
        cfg.train.nu2 = v;
    }
    if let Some(v) = o.horizon {
        cfg.train.horizon_n = v;
    }
    if let Some(v) = o.grid_intervals {
        cfg.train.grid_intervals = v;
    }
    if let Some(v) = o.spline_order {
        cfg.train.spline_order = v;
    }
    if let Some(v) = o.threshold {
        cfg.threshold = v;
    }
    cfg.train.validate()?;
    Ok(cfg)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SOHKAN_LOG", "warn")).init();
    let cli = Cli::parse();
    let cfg = build_config(&cli)?;
    let out = &cli.out;
    let manifest = match &cli.command {
        Command::Simulate => commands::cmd_simulate(&cfg, out)?,
        Command::Ingest { data } => commands::cmd_ingest(&cfg, data, out)?,
        Command::Train { data } => commands::cmd_train(&cfg, data, out)?,
        Command::Extract { model, data } => {
            commands::cmd_extract(&cfg, model, data.as_deref(), out)?
        }
        Command::Soh {
            model,
            fits,
            data,
            oracle,
        } => commands::cmd_soh(&cfg, model, fits, data, oracle.as_deref(), out)?,
        Command::Report => commands::cmd_report(&cfg, out)?,
    };
    for p in &manifest.outputs {
        println!("{}", p.display());
    }
    Ok(())
}
