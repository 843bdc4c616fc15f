use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;

use commands::Method;
use config::{ConfigError, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "smsdiff", version, about = "Simultaneous multi-slice MRI simulation and reconstruction")]
struct Cli {
    /// JSON run configuration; defaults apply to every missing key.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Caps the number of worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides `sim.ny`.
    #[arg(long, global = true)]
    ny: Option<usize>,
    /// Overrides `sim.nx`.
    #[arg(long, global = true)]
    nx: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate phantoms, coils and an SMS acquisition.
    Simulate,
    /// Fit Slice-GRAPPA kernels and pick coil maps for a simulated acquisition.
    Calibrate {
        #[arg(long)]
        input: PathBuf,
    },
    /// Train the toy score model on simulated single-slice data.
    Train,
    /// Reconstruct the slices of a simulated acquisition.
    Recon {
        #[arg(long, value_enum)]
        method: Method,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        calib: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Compare a reconstruction with the ground truth.
    Eval {
        /// Directory holding `truth` (a simulate output).
        #[arg(long)]
        truth: PathBuf,
        /// Directory holding `recon` (a recon output).
        #[arg(long)]
        recon: PathBuf,
    },
}

fn exit_code(err: &smsdiff::Error) -> u8 {
    use smsdiff::Error::*;
    match err {
        Argument(_) => 2,
        Io { .. } | Format { .. } | Shape(_) => 3,
        DegenerateInput(_) | Numerical { .. } | Divergence { .. } | TrainingDiverged { .. } => 4,
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(ny) = cli.ny {
        cfg.sim.ny = ny;
    }
    if let Some(nx) = cli.nx {
        cfg.sim.nx = nx;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let cfg = match resolve(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let out = cfg.output_dir.clone();
    let result = match &cli.command {
        Command::Simulate => commands::simulate(&cfg, &out),
        Command::Calibrate { input } => commands::calibrate(&cfg, input, &out),
        Command::Train => commands::train(&cfg, &out),
        Command::Recon {
            method,
            input,
            calib,
            model,
        } => commands::recon(&cfg, *method, input, calib, model.as_deref(), &out),
        Command::Eval { truth, recon } => commands::eval(&cfg, truth, recon, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
