use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand};
use trt::{load_config, presets, run, Method};

#[derive(Parser)]
#[command(name = "trt", version, about = "Grey thermal radiative transfer mini-app")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation described by a JSON config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `method`.
        #[arg(long)]
        method: Option<Method>,
        /// Overrides `rank`.
        #[arg(long)]
        rank: Option<usize>,
        /// Overrides `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the built-in problems.
    Presets,
}

/// `TRT_THREADS` caps the worker pool; 0 runs serially.
fn configure_threads() -> anyhow::Result<()> {
    let Ok(value) = std::env::var("TRT_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .with_context(|| format!("TRT_THREADS must be a nonnegative integer (got `{value}`)"))?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n.max(1))
        .build_global()
        .context("configuring the thread pool")?;
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    configure_threads()?;
    match cli.command {
        Command::Presets => {
            for name in presets::names() {
                let spec = presets::preset(name)?;
                println!("{name}: {}", spec.description);
            }
        }
        Command::Run {
            config,
            method,
            rank,
            out,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(m) = method {
                cfg.method = m;
            }
            if let Some(r) = rank {
                cfg.rank = r;
            }
            if let Some(dir) = out {
                let o = cfg.output.get_or_insert(trt::config::OutputConfig {
                    dir: dir.clone(),
                    every: 0,
                    vtk: false,
                });
                o.dir = dir;
            }
            cfg.validate()?;
            let summary = run(&cfg)?;
            let sim = &summary.simulation;
            println!(
                "{} steps to t = {} with {}; final material energy {:.6e}, radiation energy {:.6e}",
                sim.step,
                sim.time,
                cfg.method,
                sim.material_energy(),
                sim.radiation_energy()
            );
        }
    }
    Ok(())
}
