//! File-based operations behind each CLI subcommand. Every output file gets a
//! sibling `<name>.manifest.txt` recording the tool version, the command and
//! the effective configuration.

use std::path::{Path, PathBuf};

use crate::dictionary::{build_dictionary_with_counts, BuildCounts, Dictionary};
use crate::error::{Error, Result};
use crate::harness::config::Config;
use crate::harness::eval::{
    evaluate_localization, format_estimates_csv, format_pr_csv, format_report_csv, pr_sweep, read_estimates_csv,
    read_truth_csv, EvalReport, PrCurve, QueryEstimate,
};
use crate::harness::experiment::{localize_dataset, train_projections, Method, Projections};
use crate::harness::synth::{generate_world, load_dataset, write_dataset};
use crate::learning::{Projection, TrainReport};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const W_GROUND_FILE: &str = "w_ground.proj";
pub const W_SAT_FILE: &str = "w_sat.proj";

fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.txt");
    out.with_file_name(name)
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `<out>.manifest.txt` next to `out`.
pub fn write_manifest(out: &Path, command: &str, cfg: &Config, extra: &[(&str, String)]) -> Result<()> {
    let mut text = format!("tool=satloc {TOOL_VERSION}\ncommand={command}\n");
    for (k, v) in extra {
        text.push_str(&format!("{k}={v}\n"));
    }
    text.push_str("[config]\n");
    text.push_str(&cfg.to_text());
    write_file(&manifest_path(out), text)
}

/// Generates a synthetic world from the `world_*` keys and writes it as a dataset.
pub fn synth_gen(cfg: &Config, out_dir: &Path) -> Result<()> {
    let world = generate_world(&cfg.world, cfg.seed)?;
    write_dataset(&world.to_dataset(), out_dir)?;
    write_manifest(&out_dir.join("dataset"), "synth-gen", cfg, &[])
}

pub fn build_dict(cfg: &Config, data_dir: &Path, out: &Path) -> Result<BuildCounts> {
    let data = load_dataset(data_dir, &cfg.ground_features, &cfg.sat_features)?;
    let (dict, counts) = build_dictionary_with_counts(
        &data.database,
        &data.satellite,
        data.georef,
        &data.camera,
        &cfg.dict_grid,
        &cfg.dictionary_options(),
    )?;
    write_file(out, dict.to_bytes())?;
    write_manifest(
        out,
        "build-dict",
        cfg,
        &[
            ("entries", dict.len().to_string()),
            ("samples", counts.samples.to_string()),
            ("rejected_invalid_depth", counts.invalid_depth.to_string()),
            ("rejected_out_of_range", counts.out_of_range.to_string()),
            ("rejected_out_of_bounds", counts.out_of_bounds.to_string()),
            ("feature_config", dict.feature_config().fingerprint()),
        ],
    )?;
    Ok(counts)
}

/// Learns both projections; writes them and a per-epoch loss CSV to `out_dir`.
pub fn learn_proj(cfg: &Config, dict_path: &Path, out_dir: &Path) -> Result<(TrainReport, TrainReport)> {
    let dict = Dictionary::load(dict_path)?;
    let (ground, sat) = train_projections(&dict, cfg)?;
    let hash = dict.feature_config().fingerprint();
    write_file(&out_dir.join(W_GROUND_FILE), ground.projection.to_bytes(&hash))?;
    write_file(&out_dir.join(W_SAT_FILE), sat.projection.to_bytes(&hash))?;
    let mut csv = String::from("view,epoch,loss\n");
    for (view, rep) in [("ground", &ground), ("satellite", &sat)] {
        for (epoch, loss) in rep.loss_history.iter().enumerate() {
            csv.push_str(&format!("{view},{epoch},{loss}\n"));
        }
    }
    let loss_path = out_dir.join("learning.csv");
    write_file(&loss_path, csv)?;
    write_manifest(
        &loss_path,
        "learn-proj",
        cfg,
        &[
            ("feature_config", hash),
            ("ground_epochs", ground.epochs.to_string()),
            ("ground_updates", ground.updates.to_string()),
            ("satellite_epochs", sat.epochs.to_string()),
            ("satellite_updates", sat.updates.to_string()),
        ],
    )?;
    Ok((ground, sat))
}

/// Loads a projection and checks it was learned for this dictionary.
pub fn load_projection(path: &Path, dict: &Dictionary) -> Result<Projection> {
    let (w, hash) = Projection::load(path)?;
    let expected = dict.feature_config().fingerprint();
    if hash != expected {
        return Err(Error::FeatureConfigMismatch(format!(
            "{} was learned for feature config {hash}, dictionary has {expected}",
            path.display()
        )));
    }
    Ok(w)
}

/// Localizes every query of a dataset and writes the estimates CSV.
/// `projections` holds `(w_ground, w_sat)` files and is required for [`Method::Full`].
pub fn localize(
    cfg: &Config,
    dict_path: &Path,
    data_dir: &Path,
    method: Method,
    projections: Option<(&Path, &Path)>,
    out: &Path,
) -> Result<Vec<QueryEstimate>> {
    let dict = Dictionary::load(dict_path)?;
    let data = load_dataset(data_dir, &cfg.ground_features, &cfg.sat_features)?;
    let w = match (method, projections) {
        (Method::Full, Some((g, s))) => Some(Projections {
            ground: load_projection(g, &dict)?,
            sat: load_projection(s, &dict)?,
        }),
        (Method::Full, None) => {
            return Err(Error::Config("the full method needs --w-ground and --w-sat".into()));
        }
        _ => None,
    };
    let rows: Vec<QueryEstimate> = localize_dataset(&data, &dict, method, w.as_ref(), cfg)?
        .into_iter()
        .map(|(e, _)| e)
        .collect();
    write_file(out, format_estimates_csv(&rows))?;
    write_manifest(out, "localize", cfg, &[("method", method.name().to_string())])?;
    Ok(rows)
}

pub fn evaluate(cfg: &Config, estimates: &Path, truth: &Path, out: &Path) -> Result<EvalReport> {
    let report = evaluate_localization(
        &read_estimates_csv(estimates)?,
        &read_truth_csv(truth)?,
        cfg.inlier_radius,
    )?;
    write_file(out, format_report_csv(&report))?;
    write_manifest(out, "evaluate", cfg, &[])?;
    Ok(report)
}

pub fn pr_sweep_file(cfg: &Config, estimates: &Path, truth: &Path, out: &Path) -> Result<PrCurve> {
    let curve = pr_sweep(
        &read_estimates_csv(estimates)?,
        &read_truth_csv(truth)?,
        cfg.inlier_radius,
    )?;
    write_file(out, format_pr_csv(&curve))?;
    write_manifest(out, "pr-sweep", cfg, &[("best_tau", curve.best.tau.to_string())])?;
    Ok(curve)
}
