use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use stlgcp::config;
use stlgcp::pipeline::{self, Run};

/// Spatiotemporal log-Gaussian Cox process modelling of point events.
#[derive(Parser)]
#[command(name = "stlgcp", version)]
struct Cli {
    /// Run configuration (TOML, or JSON by extension).
    #[arg(short, long, global = true, default_value = "stlgcp.toml")]
    config: PathBuf,
    /// Override a configuration key, e.g. `--set fit.max_evals=100`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Worker threads (defaults to the number of CPUs).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Triangulate the study region.
    Mesh,
    /// Compute facility distances and raster values at the mesh vertices.
    Covariates,
    /// Simulate covariates, events and the true field from [simulate].
    Simulate,
    /// Fit the model and compute information criteria.
    Fit,
    /// Predict the log-intensity from a fitted model.
    Predict,
    /// Tabulate information criteria of fitted models.
    Ic {
        /// Fit files to compare; defaults to every fit_*.json in the output directory.
        fits: Vec<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<()> {
    let loaded = config::load(&cli.config, &cli.overrides)?;
    let run = Run::new(loaded);
    let written = match &cli.command {
        Command::Mesh => vec![pipeline::cmd_mesh(&run)?],
        Command::Covariates => vec![pipeline::cmd_covariates(&run)?],
        Command::Simulate => vec![pipeline::cmd_simulate(&run)?],
        Command::Fit => vec![pipeline::cmd_fit(&run)?],
        Command::Predict => pipeline::cmd_predict(&run)?,
        Command::Ic { fits } => vec![pipeline::cmd_ic(&run, fits)?],
    };
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let numerical = err
        .chain()
        .any(|e| e.downcast_ref::<stlgcp_core::Error>().is_some_and(stlgcp_core::Error::is_numerical));
    if numerical {
        3
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        pool = pool.num_threads(n.max(1));
    }
    let result = match pool.build() {
        Ok(pool) => pool.install(|| run(cli)),
        Err(e) => Err(e.into()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
