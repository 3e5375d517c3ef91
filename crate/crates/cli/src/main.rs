use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use sda_cli::{cmd_fit, cmd_predict, cmd_report, cmd_simulate, error_stage, Outcome, RunConfig};
use sda_core::sim::SimScenario;

#[derive(Parser)]
#[command(name = "sda", version, about = "Spatially discrete approximation to log-Gaussian Cox processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// key = value configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_parser = ["population", "uniform"])]
    weighting: Option<String>,
    /// lo:hi:n
    #[arg(long = "phi-grid")]
    phi_grid: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit (β, σ², φ) by Monte Carlo maximum likelihood
    Fit(Common),
    /// Predict region incidence and the continuous relative-risk surface
    Predict {
        #[command(flatten)]
        common: Common,
        /// fit.json from `sda fit` (default: OUT/fit.json)
        #[arg(long)]
        fit: Option<PathBuf>,
    },
    /// Run a simulation study
    Simulate(Common),
    /// Summarize fit.json / metrics.json in a directory
    Report {
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn run_config(c: &Common) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let here = std::path::Path::new(".");
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(w) = &c.weighting {
        cfg.set("weighting", w, here)?;
    }
    if let Some(g) = &c.phi_grid {
        cfg.set("phi_grid", g, here)?;
    }
    if let Some(o) = &c.out {
        cfg.out = o.clone();
    }
    Ok(cfg)
}

fn scenario(c: &Common) -> Result<SimScenario> {
    let mut s = match &c.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading scenario {}", p.display()))?;
            SimScenario::parse(&text)?
        }
        None => SimScenario::default(),
    };
    if let Some(seed) = c.seed {
        s.seed = seed;
    }
    if let Some(w) = &c.weighting {
        s.set("weighting", w)?;
    }
    if let Some(g) = &c.phi_grid {
        s.set("phi_grid", g)?;
    }
    s.validate()?;
    Ok(s)
}

#[cfg(feature = "parallel")]
fn set_threads(threads: Option<usize>) -> Result<()> {
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring worker threads")?;
    }
    Ok(())
}

#[cfg(not(feature = "parallel"))]
fn set_threads(threads: Option<usize>) -> Result<()> {
    if threads.is_some_and(|n| n > 1) {
        log::warn!("built without the parallel feature; --threads is ignored");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Fit(c) => {
            set_threads(c.threads)?;
            cmd_fit(&run_config(&c)?)
        }
        Command::Predict { common, fit } => {
            set_threads(common.threads)?;
            let cfg = run_config(&common)?;
            let fit = fit.unwrap_or_else(|| cfg.out.join("fit.json"));
            cmd_predict(&cfg, &fit)
        }
        Command::Simulate(c) => {
            set_threads(c.threads)?;
            let s = scenario(&c)?;
            cmd_simulate(&s, c.out.as_deref().unwrap_or("out".as_ref()))
        }
        Command::Report { out } => {
            print!("{}", cmd_report(&out)?);
            Ok(Outcome::default())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(outcome) => {
            for f in &outcome.files {
                log::info!("wrote {}", f.display());
            }
            if outcome.warnings.is_empty() {
                ExitCode::SUCCESS
            } else {
                for w in &outcome.warnings {
                    eprintln!("warning: {w}");
                }
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error [{}]: {e:#}", error_stage(&e));
            ExitCode::from(2)
        }
    }
}
