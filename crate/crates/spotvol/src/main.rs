use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use spotvol::config::{PipelineConfig, SimulationParams};
use spotvol::pipeline::{self, run_pipeline, run_stage, zone_sources, Stage};
use spotvol::validation::{run_suite, SuiteConfig};

#[derive(Parser)]
#[command(name = "spotvol", version, about = "Realized covariation of day-ahead electricity price panels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Pipeline configuration (TOML). Without it the simulated zone is used.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for simulation and validation.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Restrict stage commands to one zone.
    #[arg(long, global = true)]
    zone: Option<String>,
    #[arg(long, global = true)]
    bandwidth_days: Option<f64>,
    #[arg(long, global = true)]
    no_dow_dummies: bool,
    #[arg(long, global = true)]
    refit_days: Option<usize>,
    #[arg(long, global = true)]
    burn_in_days: Option<usize>,
    #[arg(long, global = true)]
    ridge: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse raw price files into panels.
    Ingest,
    Detrend,
    Semigroup,
    Rcv,
    Factors,
    Stats,
    /// Write a simulated heat-equation panel and its truth file.
    Simulate,
    /// Run the validation suite and write `validation.json`.
    Validate {
        /// Run only these criteria (repeatable).
        #[arg(long)]
        only: Vec<u8>,
        /// Replications per size or power estimate.
        #[arg(long)]
        replications: Option<usize>,
    },
    /// Every stage for every zone, then the manifest.
    RunAll,
}

fn load_config(c: &Common) -> Result<PipelineConfig> {
    let mut cfg = match &c.config {
        Some(p) => PipelineConfig::load(p)?,
        // Without a config file, run on the built-in simulated zone.
        None => PipelineConfig { simulation: Some(SimulationParams::default()), ..PipelineConfig::default() },
    };
    if let Some(o) = &c.out {
        cfg.out_dir = o.clone();
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(b) = c.bandwidth_days {
        cfg.detrend.bandwidth_days = b;
    }
    if c.no_dow_dummies {
        cfg.detrend.dow_dummies = false;
    }
    if let Some(r) = c.refit_days {
        cfg.semigroup.refit_days = r;
    }
    if let Some(b) = c.burn_in_days {
        cfg.semigroup.burn_in_days = b;
    }
    if let Some(r) = c.ridge {
        cfg.semigroup.ridge = r;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn zones_for(cfg: &PipelineConfig, only: &Option<String>) -> Vec<String> {
    zone_sources(cfg).into_iter().map(|(z, _)| z).filter(|z| only.as_ref().is_none_or(|o| o == z)).collect()
}

fn run(cli: Cli) -> Result<bool> {
    let c = &cli.common;
    let stage = match &cli.command {
        Command::Ingest => Stage::Ingest,
        Command::Detrend => Stage::Detrend,
        Command::Semigroup => Stage::Semigroup,
        Command::Rcv => Stage::Rcv,
        Command::Factors => Stage::Factors,
        Command::Stats => Stage::Stats,
        Command::Simulate => {
            let mut cfg = load_config(c)?;
            let sim = cfg.simulation.get_or_insert_with(SimulationParams::default).clone();
            run_stage(&cfg, Stage::Simulate, &sim.zone)?;
            println!("wrote {}", pipeline::zone_dir(&cfg, &sim.zone).display());
            return Ok(true);
        }
        Command::Validate { only, replications } => {
            let out = c.out.clone().unwrap_or_else(|| PathBuf::from("out"));
            let mut suite = SuiteConfig { only: only.clone(), ..SuiteConfig::default() };
            if let Some(s) = c.seed {
                suite.seed = s;
            }
            if let Some(r) = replications {
                suite.replications = *r;
            }
            let report = run_suite(&suite);
            for line in report.criteria.iter().map(|r| r.summary_line()) {
                println!("{line}");
            }
            std::fs::create_dir_all(&out)?;
            let path = out.join("validation.json");
            spotvol::formats::write_json(&path, &report).with_context(|| format!("writing {}", path.display()))?;
            return Ok(report.all_passed);
        }
        Command::RunAll => {
            let cfg = load_config(c)?;
            let manifest = run_pipeline(&cfg)?;
            for (zone, files) in &manifest.zones {
                println!("{zone}: {} files", files.len());
            }
            return Ok(true);
        }
    };
    let cfg = load_config(c)?;
    let zones = zones_for(&cfg, &c.zone);
    if zones.is_empty() {
        anyhow::bail!("no zones configured");
    }
    let mut ok = true;
    for zone in zones {
        if let Err(e) = run_stage(&cfg, stage, &zone) {
            eprintln!("error: {e}");
            ok = false;
        }
    }
    Ok(ok)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
