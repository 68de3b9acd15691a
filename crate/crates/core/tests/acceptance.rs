//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use satloc::dictionary::Dictionary;
use satloc::geometry::WorldPoint;
use satloc::harness::commands;
use satloc::harness::experiment::{build_dataset_dictionary, localize_dataset, train_projections, Method, Projections};
use satloc::harness::{evaluate_localization, generate_world, pr_sweep, Config, QueryEstimate, TruthRow};
use satloc::learning::{build_ranking_samples, location_loss_metric, loss_and_subgradient, Projection, RankingSample};
use satloc::localization::{generate_candidates, posterior_over_candidates, score_from_hits};
use satloc::neighbor_index::{brute_force_knn, NeighborHit, NeighborIndex, SearchMode};
use satloc::LocalizationResult;

const NOISY: &str = include_str!("../../../configs/noisy.conf");
const NOISELESS: &str = include_str!("../../../configs/noiseless.conf");

struct Outcome {
    name: &'static str,
    passed: bool,
    detail: String,
    secs: f64,
}

/// Largest `|Σ posterior − 1|` over every localize result seen so far.
#[derive(Default)]
struct PosteriorLog {
    runs: usize,
    worst: f64,
}

impl PosteriorLog {
    fn record(&mut self, results: &[(QueryEstimate, LocalizationResult)]) {
        for (_, r) in results {
            self.runs += 1;
            self.worst = self.worst.max((r.posterior.iter().sum::<f64>() - 1.0).abs());
        }
    }
}

fn timed(name: &'static str, limit: Option<f64>, f: impl FnOnce() -> (bool, String)) -> Outcome {
    let t = Instant::now();
    let (ok, detail) = f();
    let secs = t.elapsed().as_secs_f64();
    let in_time = limit.is_none_or(|l| secs < l);
    let detail = match limit {
        Some(l) if !in_time => format!("{detail}; took {secs:.1}s, limit {l}s"),
        _ => detail,
    };
    Outcome {
        name,
        passed: ok && in_time,
        detail,
        secs,
    }
}

fn config(text: &str, seed: u64) -> Config {
    let mut cfg = Config::from_text(text).expect("config");
    cfg.seed = seed;
    cfg
}

fn pair_dist(w: &DMatrix<f64>, a: &[f64], b: &[f64]) -> f64 {
    let d = nalgebra::DVector::from_iterator(a.len(), a.iter().zip(b).map(|(x, y)| x - y));
    (w * d).norm()
}

/// Ranking loss written directly from its definition, with the target and the
/// margins recomputed from locations.
fn reference_loss(w: &DMatrix<f64>, feats: &[Vec<f64>], locs: &[WorldPoint], hoods: &[Vec<usize>]) -> f64 {
    let mut total = 0.0;
    for (i, nb) in hoods.iter().enumerate() {
        let dl: Vec<f64> = nb.iter().map(|&k| locs[i].distance(&locs[k])).collect();
        let j_star = (0..nb.len()).min_by(|&a, &b| dl[a].total_cmp(&dl[b])).unwrap();
        let f_star = pair_dist(w, &feats[i], &feats[nb[j_star]]);
        let inner = nb
            .iter()
            .zip(&dl)
            .map(|(&k, d)| pair_dist(w, &feats[i], &feats[k]) - (d - dl[j_star]))
            .fold(f64::INFINITY, f64::min);
        total += (f_star - inner).max(0.0);
    }
    total
}

/// True when no argmin, hinge kink or zero distance lies within `gap` of W.
fn well_separated(w: &DMatrix<f64>, feats: &[Vec<f64>], samples: &[RankingSample], gap: f64) -> bool {
    samples.iter().all(|s| {
        let a = &feats[s.anchor];
        let f: Vec<f64> = s.neighborhood.iter().map(|&k| pair_dist(w, a, &feats[k])).collect();
        if f.iter().any(|&v| v < gap) {
            return false;
        }
        let mut adj: Vec<f64> = f.iter().zip(&s.margins).map(|(f, m)| f - m).collect();
        adj.sort_by(f64::total_cmp);
        let j = s.neighborhood.iter().position(|&k| k == s.k_star).unwrap();
        adj[1] - adj[0] > gap && (f[j] - adj[0]).abs() > gap
    })
}

fn gradient_check() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut accepted, mut worst) = (0usize, 0.0f64);
    let h = 1e-5;
    let mut attempts = 0;
    while accepted < 100 && attempts < 20_000 {
        attempts += 1;
        let dim = rng.random_range(2..=8);
        let rows = rng.random_range(1..=dim);
        let n = rng.random_range(8..=16);
        let feats: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let locs: Vec<WorldPoint> = (0..n)
            .map(|_| WorldPoint::new(rng.random_range(0.0..20.0), rng.random_range(0.0..20.0)))
            .collect();
        let w = DMatrix::from_fn(
            rows,
            dim,
            |r, c| if r == c { 1.0 } else { 0.0 } + rng.random_range(-0.5..0.5),
        );
        let samples = build_ranking_samples(&feats, &locs, 4).unwrap();
        if !well_separated(&w, &feats, &samples, 1e-3) {
            continue;
        }
        let hoods: Vec<Vec<usize>> = samples.iter().map(|s| s.neighborhood.clone()).collect();
        let proj = Projection::from_matrix(w.clone()).unwrap();
        let (loss, grad) = loss_and_subgradient(&samples, &proj, &feats).unwrap();
        let reference = reference_loss(&w, &feats, &locs, &hoods);
        if loss <= 0.0 {
            continue;
        }
        if (loss - reference).abs() > 1e-9 * reference.max(1.0) {
            return (false, format!("loss {loss} differs from reference {reference}"));
        }
        let mut fd = DMatrix::zeros(rows, dim);
        for r in 0..rows {
            for c in 0..dim {
                let (mut plus, mut minus) = (w.clone(), w.clone());
                plus[(r, c)] += h;
                minus[(r, c)] -= h;
                fd[(r, c)] = (reference_loss(&plus, &feats, &locs, &hoods)
                    - reference_loss(&minus, &feats, &locs, &hoods))
                    / (2.0 * h);
            }
        }
        let rel = (&grad - &fd).norm() / fd.norm().max(1e-12);
        worst = worst.max(rel);
        accepted += 1;
    }
    (
        accepted == 100 && worst < 1e-4,
        format!("{accepted} instances, max relative error {worst:.2e}"),
    )
}

fn knn_check() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut queries = 0;
    for instance in 0..500 {
        let dim = rng.random_range(2..=32);
        let n = rng.random_range(1..=2000);
        let vectors: Vec<(u32, Vec<f64>)> = (0..n)
            .map(|i| (i as u32, (0..dim).map(|_| rng.random::<f64>()).collect()))
            .collect();
        let index = NeighborIndex::build(vectors.clone()).unwrap();
        for _ in 0..4 {
            let q: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
            let m = rng.random_range(1..=n.min(25));
            let got: Vec<u32> = index
                .knn(&q, m, SearchMode::Exact)
                .unwrap()
                .iter()
                .map(|h| h.id)
                .collect();
            let oracle: Vec<u32> = brute_force_knn(&vectors, &q, m).unwrap().iter().map(|h| h.id).collect();
            let mut scan: Vec<(f64, u32)> = vectors
                .iter()
                .map(|(id, v)| (v.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), *id))
                .collect();
            scan.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let scanned: Vec<u32> = scan.iter().take(m).map(|p| p.1).collect();
            if got != oracle || got != scanned {
                return (false, format!("instance {instance} (dim {dim}, n {n}, m {m}) differs"));
            }
            queries += 1;
        }
    }
    (true, format!("500 instances, {queries} queries identical"))
}

fn score_hand_case() -> (bool, String) {
    let hit = |id, distance| NeighborHit { id, distance };
    let g = [hit(1, 0.5), hit(2, 1.0), hit(3, 2.0)];
    let s = [hit(2, 0.2), hit(3, 0.4), hit(5, 1.0)];
    let worked = score_from_hits(&g, &s);
    let empty = score_from_hits(&g, &[hit(7, 0.1), hit(8, 0.3)]);
    let exact = score_from_hits(&[hit(4, 0.0)], &[hit(4, 0.0)]);
    let ok = worked == 6.25 && empty == 0.0 && empty.is_sign_positive() && exact == 1e12;
    (ok, format!("worked {worked}, empty {empty}, exact {exact:e}"))
}

fn noiseless(log: &mut PosteriorLog) -> (bool, String) {
    let cfg = config(NOISELESS, 0);
    let world = generate_world(&cfg.world, cfg.seed).unwrap();
    let data = world.to_dataset();
    let dict = build_dataset_dictionary(&data, &cfg).unwrap();
    let candidates = generate_candidates(&data.db_poses(), cfg.candidate_spacing).unwrap();
    let results = localize_dataset(&data, &dict, Method::NoProjection, None, &cfg).unwrap();
    log.record(&results);
    let (mut inside, mut at_max, mut within, mut worst) = (0, 0, 0, 0.0f64);
    for ((est, res), truth) in results.iter().zip(world.truth()) {
        assert_eq!(est.query_id, truth.id);
        if !truth.inside {
            continue;
        }
        inside += 1;
        let true_idx = candidates
            .iter()
            .position(|c| c.pose.position().distance(&truth.pose.position()) < 1e-9)
            .expect("query sits on a candidate");
        let max = res.raw_scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if res.raw_scores[true_idx] == max {
            at_max += 1;
        }
        let err = est.estimate.position().distance(&truth.pose.position());
        worst = worst.max(err);
        if err <= cfg.candidate_spacing / 2.0 {
            within += 1;
        }
    }
    (
        inside == 30 && at_max == inside && within == inside,
        format!("true candidate maximal {at_max}/{inside}, error <= spacing/2 {within}/{inside}, worst {worst:.3} m"),
    )
}

struct SeedRun {
    seed: u64,
    medians: [f64; 3],
    initial_loss: [f64; 2],
    final_loss: [f64; 2],
    metric_before: [f64; 2],
    metric_after: [f64; 2],
    full: Vec<QueryEstimate>,
    truth: Vec<TruthRow>,
}

fn run_noisy_seed(seed: u64, log: &mut PosteriorLog) -> SeedRun {
    let cfg = config(NOISY, seed);
    let world = generate_world(&cfg.world, seed).unwrap();
    let data = world.to_dataset();
    let truth = world.truth();
    let dict = build_dataset_dictionary(&data, &cfg).unwrap();
    let (g, s) = train_projections(&dict, &cfg).unwrap();
    let (mb, ma) = metric_change(&dict, &cfg, &g.projection, &s.projection);
    let w = Projections {
        ground: g.projection.clone(),
        sat: s.projection.clone(),
    };
    let mut medians = [0.0; 3];
    let mut full = Vec::new();
    for (slot, method) in [Method::Full, Method::NoProjection, Method::GroundOnly]
        .into_iter()
        .enumerate()
    {
        let results = localize_dataset(&data, &dict, method, Some(&w), &cfg).unwrap();
        log.record(&results);
        let est: Vec<QueryEstimate> = results.into_iter().map(|r| r.0).collect();
        medians[slot] = evaluate_localization(&est, &truth, cfg.inlier_radius).unwrap().median;
        if method == Method::Full {
            full = est;
        }
    }
    SeedRun {
        seed,
        medians,
        initial_loss: [g.loss_history[0], s.loss_history[0]],
        final_loss: [*g.loss_history.last().unwrap(), *s.loss_history.last().unwrap()],
        metric_before: mb,
        metric_after: ma,
        full,
        truth,
    }
}

fn metric_change(dict: &Dictionary, cfg: &Config, wg: &Projection, ws: &Projection) -> ([f64; 2], [f64; 2]) {
    let locs = dict.locations();
    let mut before = [0.0; 2];
    let mut after = [0.0; 2];
    for (v, (feats, w)) in [(dict.ground_features(), wg), (dict.sat_features(), ws)]
        .into_iter()
        .enumerate()
    {
        let id = Projection::identity(feats[0].len());
        before[v] = location_loss_metric(&feats, &locs, &id, cfg.neighborhood_size).unwrap();
        after[v] = location_loss_metric(&feats, &locs, w, cfg.neighborhood_size).unwrap();
    }
    (before, after)
}

fn noisy_ablation(runs: &[SeedRun]) -> (bool, String) {
    let spacing = config(NOISY, 0).candidate_spacing;
    let ordered = runs
        .iter()
        .filter(|r| r.medians[0] <= r.medians[1] && r.medians[1] <= r.medians[2])
        .count();
    let worst_full = runs.iter().map(|r| r.medians[0]).fold(0.0, f64::max);
    let table: Vec<String> = runs
        .iter()
        .map(|r| format!("{}:{:.2}/{:.2}/{:.2}", r.seed, r.medians[0], r.medians[1], r.medians[2]))
        .collect();
    (
        ordered >= 8 && worst_full <= 2.0 * spacing,
        format!(
            "ordering holds in {ordered}/10 seeds, worst full median {worst_full:.2} m; medians full/np/go {}",
            table.join(" ")
        ),
    )
}

fn training_sanity(runs: &[SeedRun]) -> (bool, String) {
    let loss_ok = runs
        .iter()
        .all(|r| (0..2).all(|v| r.final_loss[v] <= r.initial_loss[v]));
    let ground_ok = runs.iter().filter(|r| r.metric_after[0] <= r.metric_before[0]).count();
    let sat_ok = runs.iter().filter(|r| r.metric_after[1] <= r.metric_before[1]).count();
    (
        loss_ok && ground_ok >= 9,
        format!(
            "ranking loss non-increasing in every run: {loss_ok}; ground location loss not increased {ground_ok}/10 \
             (satellite, informational: {sat_ok}/10)"
        ),
    )
}

/// Sweep recomputed by enumerating every threshold and counting directly.
fn reference_sweep(est: &[QueryEstimate], truth: &[TruthRow], radius: f64) -> Vec<(f64, f64, f64)> {
    let mut taus: Vec<f64> = est.iter().map(|e| e.confidence).collect();
    taus.sort_by(f64::total_cmp);
    taus.dedup();
    let inside = truth.iter().filter(|t| t.inside).count();
    taus.into_iter()
        .map(|tau| {
            let (mut tp, mut positive) = (0usize, 0usize);
            for e in est.iter().filter(|e| e.confidence >= tau) {
                positive += 1;
                let t = truth.iter().find(|t| t.id == e.query_id).unwrap();
                if t.inside && e.estimate.position().distance(&t.pose.position()) <= radius {
                    tp += 1;
                }
            }
            let precision = if positive == 0 {
                1.0
            } else {
                tp as f64 / positive as f64
            };
            (tau, precision, tp as f64 / inside as f64)
        })
        .collect()
}

fn negative_queries(runs: &[SeedRun]) -> (bool, String) {
    let radius = config(NOISY, 0).inlier_radius;
    let separable = |r: &SeedRun| {
        let curve = pr_sweep(&r.full, &r.truth, radius).unwrap();
        let reached = curve.points.iter().any(|p| p.precision >= 0.9 && p.recall >= 0.8);
        let got: Vec<(f64, f64, f64)> = curve.points.iter().map(|p| (p.tau, p.precision, p.recall)).collect();
        (reached, got == reference_sweep(&r.full, &r.truth, radius), curve.best)
    };
    let (reached, oracle_match, best) = separable(&runs[0]);
    let all: Vec<_> = runs.iter().map(separable).collect();
    let reached_all = all.iter().filter(|a| a.0).count();
    let oracle_all = all.iter().all(|a| a.1);
    (
        reached && oracle_match && oracle_all,
        format!(
            "seed 0 best tau {:.4} precision {:.3} recall {:.3}; oracle match {}; precision >= 0.9 at recall >= 0.8 in {reached_all}/10 seeds",
            best.tau, best.precision, best.recall, oracle_match && oracle_all
        ),
    )
}

fn pipeline(root: &Path, cfg: &Config) -> Vec<(String, Vec<u8>)> {
    let data = root.join("data");
    let dict = root.join("dict.gsd");
    let proj = root.join("proj");
    commands::synth_gen(cfg, &data).unwrap();
    commands::build_dict(cfg, &data, &dict).unwrap();
    commands::learn_proj(cfg, &dict, &proj).unwrap();
    let w = (proj.join(commands::W_GROUND_FILE), proj.join(commands::W_SAT_FILE));
    let truth = data.join("queries").join("truth.csv");
    let mut files = vec!["proj/learning.csv".to_string()];
    for method in [Method::Full, Method::NoProjection, Method::GroundOnly] {
        let est = root.join(format!("{}.csv", method.name()));
        let w = (method == Method::Full).then_some((w.0.as_path(), w.1.as_path()));
        commands::localize(cfg, &dict, &data, method, w, &est).unwrap();
        let report = root.join(format!("{}.report.csv", method.name()));
        commands::evaluate(cfg, &est, &truth, &report).unwrap();
        let pr = root.join(format!("{}.pr.csv", method.name()));
        commands::pr_sweep_file(cfg, &est, &truth, &pr).unwrap();
        for f in [&est, &report, &pr] {
            files.push(f.strip_prefix(root).unwrap().display().to_string());
        }
    }
    files
        .into_iter()
        .map(|f| {
            let bytes = std::fs::read(root.join(&f)).unwrap();
            (f, bytes)
        })
        .collect()
}

fn determinism() -> (bool, String) {
    let cfg = config(NOISY, 3);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = pipeline(a.path(), &cfg);
    let second = pipeline(b.path(), &cfg);
    let differing: Vec<&str> = first
        .iter()
        .zip(&second)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.as_str())
        .collect();
    (
        differing.is_empty() && first.len() == second.len(),
        if differing.is_empty() {
            format!("{} CSV files byte-identical", first.len())
        } else {
            format!("differing: {}", differing.join(", "))
        },
    )
}

fn main() {
    let mut log = PosteriorLog::default();
    let mut out = vec![
        timed("gradient matches finite differences", Some(10.0), gradient_check),
        timed("exact kNN equals brute force", Some(30.0), knn_check),
        timed("co-occurrence score hand case", None, score_hand_case),
    ];
    let posterior_slot = out.len();
    out.push(timed("noiseless identity world", Some(120.0), || noiseless(&mut log)));
    let t = Instant::now();
    let runs: Vec<SeedRun> = (0..10).map(|s| run_noisy_seed(s, &mut log)).collect();
    let noisy_secs = t.elapsed().as_secs_f64();
    let mut ablation = timed("noisy world ablation ordering", None, || noisy_ablation(&runs));
    ablation.secs = noisy_secs;
    if noisy_secs >= 600.0 {
        ablation.passed = false;
        ablation
            .detail
            .push_str(&format!("; took {noisy_secs:.1}s, limit 600s"));
    }
    out.push(ablation);
    out.push(timed("training sanity", None, || training_sanity(&runs)));
    out.push(timed("negative queries precision/recall", None, || {
        negative_queries(&runs)
    }));
    out.push(timed("pipeline determinism", None, determinism));
    let posterior = timed("posterior normalization", None, || {
        let uniform = posterior_over_candidates(&[0.0; 4]).unwrap();
        let ok = log.runs > 0 && log.worst <= 1e-9 && uniform == vec![0.25; 4];
        (
            ok,
            format!(
                "{} localize runs, max |sum - 1| {:.1e}, all-zero fallback {:?}",
                log.runs, log.worst, uniform
            ),
        )
    });
    out.insert(posterior_slot, posterior);

    let mut failed = 0;
    for o in &out {
        let tag = if o.passed { "PASS" } else { "FAIL" };
        println!("{tag} {} ({:.1}s): {}", o.name, o.secs, o.detail);
        failed += usize::from(!o.passed);
    }
    println!("{} of {} criteria passed", out.len() - failed, out.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
