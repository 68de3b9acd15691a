//! Localization error statistics and precision/recall sweeps.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Pose2D;

/// One localized query as written by `localize`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryEstimate {
    pub query_id: u32,
    pub estimate: Pose2D,
    pub confidence: f64,
    pub inlier: bool,
}

/// Ground truth for one query; `inside` is false for outside-path queries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthRow {
    pub id: u32,
    pub pose: Pose2D,
    pub inside: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// `(query id, position error)` for inside queries, by id.
    pub errors: Vec<(u32, f64)>,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub median: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint {
    pub tau: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrCurve {
    /// One point per distinct confidence, ascending τ.
    pub points: Vec<PrPoint>,
    /// Point with the largest precision × recall; larger τ on ties.
    pub best: PrPoint,
}

pub fn mean_std_median(values: &[f64]) -> (f64, f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    };
    (mean, var.sqrt(), median)
}

/// Pairs estimates with truth by id; both sides must hold the same ids.
fn join<'a>(results: &'a [QueryEstimate], truth: &'a [TruthRow]) -> Result<Vec<(&'a QueryEstimate, &'a TruthRow)>> {
    let mut by_id: BTreeMap<u32, &TruthRow> = BTreeMap::new();
    for t in truth {
        if by_id.insert(t.id, t).is_some() {
            return Err(Error::InvalidInput(format!("duplicate truth id {}", t.id)));
        }
    }
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::with_capacity(results.len());
    for r in results {
        if !seen.insert(r.query_id) {
            return Err(Error::InvalidInput(format!("duplicate query id {}", r.query_id)));
        }
        let t = by_id
            .get(&r.query_id)
            .ok_or_else(|| Error::InvalidInput(format!("query {} has no ground truth", r.query_id)))?;
        out.push((r, *t));
    }
    if out.len() != by_id.len() {
        return Err(Error::InvalidInput(format!(
            "{} truth rows but {} estimates",
            by_id.len(),
            out.len()
        )));
    }
    out.sort_by_key(|(r, _)| r.query_id);
    Ok(out)
}

fn position_error(r: &QueryEstimate, t: &TruthRow) -> f64 {
    (r.estimate.x - t.pose.x).hypot(r.estimate.y - t.pose.y)
}

struct Counts {
    tp: usize,
    fp: usize,
    inside: usize,
}

fn count(
    pairs: &[(&QueryEstimate, &TruthRow)],
    inlier_radius: f64,
    is_inlier: impl Fn(&QueryEstimate) -> bool,
) -> Counts {
    let mut c = Counts {
        tp: 0,
        fp: 0,
        inside: 0,
    };
    for (r, t) in pairs {
        if t.inside {
            c.inside += 1;
        }
        if is_inlier(r) {
            if t.inside && position_error(r, t) <= inlier_radius {
                c.tp += 1;
            } else {
                c.fp += 1;
            }
        }
    }
    c
}

fn precision_recall(c: &Counts) -> (f64, f64) {
    let precision = if c.tp + c.fp == 0 {
        1.0
    } else {
        c.tp as f64 / (c.tp + c.fp) as f64
    };
    let recall = if c.inside == 0 {
        0.0
    } else {
        c.tp as f64 / c.inside as f64
    };
    (precision, recall)
}

/// Error statistics over inside queries and precision/recall of the stored
/// inlier flags. A true positive is an inlier inside query localized within
/// `inlier_radius`; any other inlier is a false positive.
pub fn evaluate_localization(results: &[QueryEstimate], truth: &[TruthRow], inlier_radius: f64) -> Result<EvalReport> {
    let pairs = join(results, truth)?;
    let errors: Vec<(u32, f64)> = pairs
        .iter()
        .filter(|(_, t)| t.inside)
        .map(|(r, t)| (r.query_id, position_error(r, t)))
        .collect();
    let values: Vec<f64> = errors.iter().map(|e| e.1).collect();
    let (mean, std, median) = mean_std_median(&values);
    let c = count(&pairs, inlier_radius, |r| r.inlier);
    let (precision, recall) = precision_recall(&c);
    Ok(EvalReport {
        errors,
        mean,
        std,
        median,
        true_positives: c.tp,
        false_positives: c.fp,
        false_negatives: c.inside - c.tp,
        precision,
        recall,
    })
}

/// Sweeps τ over every distinct confidence, classifying `confidence ≥ τ` as inlier.
pub fn pr_sweep(results: &[QueryEstimate], truth: &[TruthRow], inlier_radius: f64) -> Result<PrCurve> {
    let pairs = join(results, truth)?;
    let positives = pairs.iter().filter(|(_, t)| t.inside).count();
    if positives == 0 || positives == pairs.len() {
        return Err(Error::InvalidInput(
            "precision/recall sweep needs both inside and outside queries".into(),
        ));
    }
    if let Some((r, _)) = pairs.iter().find(|(r, _)| !r.confidence.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "query {} has non-finite confidence",
            r.query_id
        )));
    }
    let mut taus: Vec<f64> = pairs.iter().map(|(r, _)| r.confidence).collect();
    taus.sort_by(f64::total_cmp);
    taus.dedup();
    let points: Vec<PrPoint> = taus
        .iter()
        .map(|&tau| {
            let c = count(&pairs, inlier_radius, |r| r.confidence >= tau);
            let (precision, recall) = precision_recall(&c);
            PrPoint { tau, precision, recall }
        })
        .collect();
    let mut best = points[0];
    for p in &points[1..] {
        if p.precision * p.recall >= best.precision * best.recall {
            best = *p;
        }
    }
    Ok(PrCurve { points, best })
}

pub fn format_estimates_csv(rows: &[QueryEstimate]) -> String {
    let mut out = String::from("query_id,est_x,est_y,est_theta,confidence,inlier\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.query_id, r.estimate.x, r.estimate.y, r.estimate.theta, r.confidence, r.inlier as u8
        );
    }
    out
}

fn parse_bool(s: &str) -> std::result::Result<bool, String> {
    match s.trim() {
        "1" | "true" => Ok(true),
        "0" | "false" => Ok(false),
        other => Err(format!("expected 0/1, got `{other}`")),
    }
}

/// Splits CSV lines after an optional header starting with `expect_header`.
fn csv_rows<'a>(
    text: &'a str,
    expect_header: &'a str,
    columns: usize,
) -> impl Iterator<Item = std::result::Result<(usize, Vec<&'a str>), String>> + 'a {
    text.lines()
        .enumerate()
        .filter(move |(i, l)| !l.trim().is_empty() && !(*i == 0 && l.starts_with(expect_header)))
        .map(move |(i, l)| {
            let cols: Vec<&str> = l.split(',').map(str::trim).collect();
            if cols.len() != columns {
                return Err(format!(
                    "line {}: expected {columns} columns, got {}",
                    i + 1,
                    cols.len()
                ));
            }
            Ok((i + 1, cols))
        })
}

pub fn parse_estimates_csv(text: &str) -> std::result::Result<Vec<QueryEstimate>, String> {
    csv_rows(text, "query_id", 6)
        .map(|row| {
            let (line, c) = row?;
            let num = |s: &str| s.parse::<f64>().map_err(|_| format!("line {line}: bad number `{s}`"));
            Ok(QueryEstimate {
                query_id: c[0].parse().map_err(|_| format!("line {line}: bad id `{}`", c[0]))?,
                estimate: Pose2D::new(num(c[1])?, num(c[2])?, num(c[3])?),
                confidence: num(c[4])?,
                inlier: parse_bool(c[5]).map_err(|m| format!("line {line}: {m}"))?,
            })
        })
        .collect()
}

pub fn format_truth_csv(rows: &[TruthRow]) -> String {
    let mut out = String::from("id,x,y,theta,inside\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.id, r.pose.x, r.pose.y, r.pose.theta, r.inside as u8
        );
    }
    out
}

pub fn parse_truth_csv(text: &str) -> std::result::Result<Vec<TruthRow>, String> {
    csv_rows(text, "id", 5)
        .map(|row| {
            let (line, c) = row?;
            let num = |s: &str| s.parse::<f64>().map_err(|_| format!("line {line}: bad number `{s}`"));
            Ok(TruthRow {
                id: c[0].parse().map_err(|_| format!("line {line}: bad id `{}`", c[0]))?,
                pose: Pose2D::new(num(c[1])?, num(c[2])?, num(c[3])?),
                inside: parse_bool(c[4]).map_err(|m| format!("line {line}: {m}"))?,
            })
        })
        .collect()
}

pub fn read_estimates_csv(path: &Path) -> Result<Vec<QueryEstimate>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_estimates_csv(&text).map_err(|m| Error::parse(path, m))
}

pub fn read_truth_csv(path: &Path) -> Result<Vec<TruthRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_truth_csv(&text).map_err(|m| Error::parse(path, m))
}

pub fn write_truth_csv(path: &Path, rows: &[TruthRow]) -> Result<()> {
    std::fs::write(path, format_truth_csv(rows)).map_err(|e| Error::io(path, e))
}

/// Summary and per-query errors; standard deviation is the population one.
pub fn format_report_csv(r: &EvalReport) -> String {
    let mut out = String::from("metric,value\n");
    for (k, v) in [
        ("queries_inside", r.errors.len() as f64),
        ("mean_error", r.mean),
        ("std_error_population", r.std),
        ("median_error", r.median),
        ("true_positives", r.true_positives as f64),
        ("false_positives", r.false_positives as f64),
        ("false_negatives", r.false_negatives as f64),
        ("precision", r.precision),
        ("recall", r.recall),
    ] {
        let _ = writeln!(out, "{k},{v}");
    }
    for (id, e) in &r.errors {
        let _ = writeln!(out, "error_query_{id},{e}");
    }
    out
}

pub fn format_pr_csv(c: &PrCurve) -> String {
    let mut out = String::from("tau,precision,recall,best\n");
    for p in &c.points {
        let _ = writeln!(out, "{},{},{},{}", p.tau, p.precision, p.recall, (p == &c.best) as u8);
    }
    out
}
