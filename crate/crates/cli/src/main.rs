use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use satloc::harness::commands;
use satloc::harness::{Config, Method};
use satloc::{Error, Result};

#[derive(Parser)]
#[command(
    name = "satloc",
    version,
    about = "Localize ground images against a satellite feature map"
)]
struct Cli {
    /// Plain-text `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Extra `key=value` overrides applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Full,
    NoProjection,
    GroundOnly,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic world and write it as a dataset directory.
    SynthGen {
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the ground-satellite dictionary of a dataset.
    BuildDict {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Learn the ground and satellite projections from a dictionary.
    LearnProj {
        #[arg(long)]
        dict: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Localize every query of a dataset and write an estimates CSV.
    Localize {
        #[arg(long)]
        dict: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
        /// Same as `--method no-projection`.
        #[arg(long, conflicts_with = "method")]
        no_projection: bool,
        #[arg(long)]
        w_ground: Option<PathBuf>,
        #[arg(long)]
        w_sat: Option<PathBuf>,
    },
    /// Error statistics and precision/recall of an estimates CSV.
    Evaluate {
        #[arg(long)]
        estimates: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep the confidence threshold and report the precision/recall curve.
    PrSweep {
        #[arg(long)]
        estimates: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut cfg = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    for kv in &cli.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{kv}` is not key=value")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(threads) = cli.threads {
        cfg.threads = threads;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn method_of(method: Option<MethodArg>, no_projection: bool, has_w: bool) -> Method {
    match (method, no_projection) {
        (_, true) => Method::NoProjection,
        (Some(MethodArg::Full), _) => Method::Full,
        (Some(MethodArg::NoProjection), _) => Method::NoProjection,
        (Some(MethodArg::GroundOnly), _) => Method::GroundOnly,
        (None, false) if has_w => Method::Full,
        (None, false) => Method::NoProjection,
    }
}

fn paired<'a>(g: &'a Option<PathBuf>, s: &'a Option<PathBuf>) -> Result<Option<(&'a Path, &'a Path)>> {
    match (g, s) {
        (Some(g), Some(s)) => Ok(Some((g.as_path(), s.as_path()))),
        (None, None) => Ok(None),
        _ => Err(Error::Config("--w-ground and --w-sat must be given together".into())),
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global()
            .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::SynthGen { out } => {
            commands::synth_gen(&cfg, out)?;
            println!("wrote dataset to {}", out.display());
        }
        Command::BuildDict { data, out } => {
            let c = commands::build_dict(&cfg, data, out)?;
            println!(
                "{} entries from {} samples (invalid depth {}, out of range {}, outside satellite {})",
                c.kept, c.samples, c.invalid_depth, c.out_of_range, c.out_of_bounds
            );
        }
        Command::LearnProj { dict, out } => {
            let (g, s) = commands::learn_proj(&cfg, dict, out)?;
            for (view, r) in [("ground", g), ("satellite", s)] {
                println!(
                    "{view}: loss {:.6} -> {:.6} in {} epochs{}",
                    r.loss_history[0],
                    r.loss_history.last().copied().unwrap_or(f64::NAN),
                    r.epochs,
                    if r.converged { ", converged" } else { "" }
                );
            }
        }
        Command::Localize {
            dict,
            data,
            out,
            method,
            no_projection,
            w_ground,
            w_sat,
        } => {
            let w = paired(w_ground, w_sat)?;
            let method = method_of(*method, *no_projection, w.is_some());
            let rows = commands::localize(&cfg, dict, data, method, w, out)?;
            let inliers = rows.iter().filter(|r| r.inlier).count();
            println!("{}: {} queries, {inliers} inliers", method.name(), rows.len());
        }
        Command::Evaluate { estimates, truth, out } => {
            let r = commands::evaluate(&cfg, estimates, truth, out)?;
            println!(
                "median {:.3} m, mean {:.3} m, std {:.3} m, precision {:.3}, recall {:.3}",
                r.median, r.mean, r.std, r.precision, r.recall
            );
        }
        Command::PrSweep { estimates, truth, out } => {
            let c = commands::pr_sweep_file(&cfg, estimates, truth, out)?;
            println!(
                "best tau {} (precision {:.3}, recall {:.3})",
                c.best.tau, c.best.precision, c.best.recall
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
            ExitCode::from(if e.is_validation() { 2 } else { 3 })
        }
    }
}
