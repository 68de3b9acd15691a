//! Scoring pose candidates along the database path by ground–satellite
//! co-occurrence, and the ground-only retrieval ablation.

use std::sync::OnceLock;

use rayon::prelude::*;

use crate::dictionary::{check_view_shapes, Dictionary};
use crate::error::{Error, Result};
use crate::features::{FeatureMap, FeaturePipeline, FeatureVector, GridSpec};
use crate::geometry::{
    interpolate_path, project_to_satellite, CameraIntrinsics, ImageId, PathSample, Pose2D, Projected,
};
use crate::learning::Projection;
use crate::neighbor_index::{NeighborHit, NeighborIndex, SearchMode};

/// Floor applied to retrieval distances before taking reciprocals.
pub const DISTANCE_FLOOR: f64 = 1e-6;

/// Number of best candidates averaged into the final estimate.
pub const TOP_K: usize = 3;

/// A query ground view: raw (unstandardized) features, aligned depth and the
/// camera that took it.
#[derive(Debug, Clone)]
pub struct QueryObservation {
    pub features: FeatureMap,
    pub depth: FeatureMap,
    pub camera: CameraIntrinsics,
    pub pipeline: FeaturePipeline,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalizerConfig {
    /// Neighbors retrieved per view (M).
    pub knn_m: usize,
    pub search_mode: SearchMode,
    /// Grid used to sample query images.
    pub grid: GridSpec,
    /// Confidence threshold for inlier classification.
    pub tau: f64,
}

impl Default for LocalizerConfig {
    fn default() -> Self {
        LocalizerConfig {
            knn_m: 10,
            search_mode: SearchMode::approximate_for(10),
            grid: GridSpec::default(),
            tau: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationResult {
    pub estimate: Pose2D,
    /// Normalized over candidates (or database images for ground-only).
    pub posterior: Vec<f64>,
    pub raw_scores: Vec<f64>,
    /// Surviving feature pairs per candidate.
    pub pair_counts: Vec<usize>,
    /// Indices of the candidates averaged into the estimate, best first.
    pub top: Vec<usize>,
    pub confidence: f64,
    pub inlier: bool,
}

pub fn generate_candidates(db_poses: &[(ImageId, Pose2D)], spacing: f64) -> Result<Vec<PathSample>> {
    interpolate_path(db_poses, spacing)
}

/// Sums `1 / (d_g · d_s)` over ids retrieved by both views. Terms are added
/// in id order so the value does not depend on list order.
pub fn score_from_hits(ground: &[NeighborHit], sat: &[NeighborHit]) -> f64 {
    let mut terms: Vec<(u32, f64)> = Vec::new();
    for g in ground {
        if let Some(s) = sat.iter().find(|s| s.id == g.id) {
            let term = 1.0 / (g.distance.max(DISTANCE_FLOOR) * s.distance.max(DISTANCE_FLOOR));
            terms.push((g.id, term));
        }
    }
    terms.sort_by_key(|t| t.0);
    terms.dedup_by_key(|t| t.0);
    terms.iter().fold(0.0, |acc, t| acc + t.1)
}

/// Normalizes raw scores; all-zero scores give a uniform posterior.
pub fn posterior_over_candidates(raw_scores: &[f64]) -> Result<Vec<f64>> {
    if raw_scores.is_empty() {
        return Err(Error::InvalidInput("no candidates".into()));
    }
    if let Some(bad) = raw_scores.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
        return Err(Error::InvalidInput(format!("invalid raw score {bad}")));
    }
    let total: f64 = raw_scores.iter().sum();
    let n = raw_scores.len() as f64;
    Ok(if total > 0.0 {
        raw_scores.iter().map(|s| s / total).collect()
    } else {
        vec![1.0 / n; raw_scores.len()]
    })
}

/// Indices of the `k` largest weights, ties to the lower index.
pub fn top_indices(weights: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..weights.len()).collect();
    idx.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Weighted mean of poses; heading is the weighted circular mean.
fn weighted_pose(poses: &[Pose2D], weights: &[f64]) -> Pose2D {
    let total: f64 = weights.iter().sum();
    let w: Vec<f64> = if total > 0.0 {
        weights.iter().map(|x| x / total).collect()
    } else {
        vec![1.0 / poses.len() as f64; poses.len()]
    };
    let (mut x, mut y, mut s, mut c) = (0.0, 0.0, 0.0, 0.0);
    for (p, wi) in poses.iter().zip(&w) {
        x += wi * p.x;
        y += wi * p.y;
        s += wi * p.theta.sin();
        c += wi * p.theta.cos();
    }
    let theta = if s.hypot(c) > 1e-12 { s.atan2(c) } else { poses[0].theta };
    Pose2D::new(x, y, theta)
}

/// Posterior-weighted average of the three best candidates.
pub fn estimate_location(posterior: &[f64], candidates: &[Pose2D]) -> Result<Pose2D> {
    if posterior.is_empty() || posterior.len() != candidates.len() {
        return Err(Error::InvalidInput(format!(
            "{} posterior values for {} candidates",
            posterior.len(),
            candidates.len()
        )));
    }
    let top = top_indices(posterior, TOP_K);
    let poses: Vec<Pose2D> = top.iter().map(|&i| candidates[i]).collect();
    let weights: Vec<f64> = top.iter().map(|&i| posterior[i]).collect();
    Ok(weighted_pose(&poses, &weights))
}

pub fn classify_query(result: &LocalizationResult, tau: f64) -> bool {
    result.confidence >= tau
}

/// Mean over the top candidates of raw score per surviving pair.
fn confidence_of(top: &[usize], raw: &[f64], pairs: &[usize]) -> f64 {
    if top.is_empty() {
        return 0.0;
    }
    let sum: f64 = top
        .iter()
        .map(|&i| if pairs[i] > 0 { raw[i] / pairs[i] as f64 } else { 0.0 })
        .sum();
    sum / top.len() as f64
}

/// A query grid sample with valid depth and range.
struct QuerySample {
    u: f64,
    v: f64,
    depth: f64,
    feat: Vec<f64>,
}

fn check_query(obs: &QueryObservation, dict: &Dictionary) -> Result<()> {
    dict.feature_config().check_query_pipeline(&obs.pipeline)?;
    obs.camera.validate()?;
    check_view_shapes(&obs.features, &obs.depth, &obs.camera)?;
    if obs.features.channels() != dict.ground_dim() {
        return Err(Error::DimensionMismatch {
            expected: dict.ground_dim(),
            actual: obs.features.channels(),
        });
    }
    Ok(())
}

/// Standardized grid samples whose depth is valid and within range.
fn query_samples(obs: &QueryObservation, dict: &Dictionary, grid: &GridSpec) -> Vec<QuerySample> {
    let stats = &dict.feature_config().ground_stats;
    let max_range = dict.feature_config().max_range;
    let cam = &obs.camera;
    grid.pixels(obs.features.width(), obs.features.height())
        .into_iter()
        .filter_map(|(u, v)| {
            let depth = obs.depth.pixel(u, v)[0] as f64;
            let (uf, vf) = (u as f64, v as f64);
            // range is pose independent, so probe with the origin pose
            let origin = Pose2D::new(0.0, 0.0, 0.0);
            let p = crate::geometry::pixel_depth_to_world(uf, vf, depth, cam, &origin)?;
            if p.x.hypot(p.y) > max_range {
                return None;
            }
            let mut feat = obs.features.pixel(u, v).to_vec();
            stats.apply_in_place(&mut feat);
            Some(QuerySample {
                u: uf,
                v: vf,
                depth,
                feat: feat.iter().map(|&x| x as f64).collect(),
            })
        })
        .collect()
}

/// Ground/satellite feature pairs for the query seen as if taken at `pose`.
pub fn project_query_pairs(
    obs: &QueryObservation,
    pose: &Pose2D,
    dict: &Dictionary,
    grid: &GridSpec,
) -> Result<Vec<(FeatureVector, FeatureVector)>> {
    check_query(obs, dict)?;
    let stats = &dict.feature_config().ground_stats;
    let max_range = dict.feature_config().max_range;
    let mut out = Vec::new();
    for (u, v) in grid.pixels(obs.features.width(), obs.features.height()) {
        let depth = obs.depth.pixel(u, v)[0] as f64;
        if let Projected::Kept { pixel, .. } =
            project_to_satellite(u as f64, v as f64, depth, &obs.camera, pose, dict.georef(), max_range)
        {
            let mut g = obs.features.pixel(u, v).to_vec();
            stats.apply_in_place(&mut g);
            out.push((FeatureVector(g), dict.sat_map().vector_at(pixel.0, pixel.1)));
        }
    }
    Ok(out)
}

/// Dictionary plus projected indexes, caching satellite retrievals per pixel.
pub struct Localizer<'a> {
    dict: &'a Dictionary,
    w_g: Projection,
    w_s: Projection,
    ground_index: NeighborIndex,
    sat_index: NeighborIndex,
    config: LocalizerConfig,
    sat_cache: Vec<OnceLock<Vec<NeighborHit>>>,
}

impl<'a> Localizer<'a> {
    pub fn new(dict: &'a Dictionary, w_g: Projection, w_s: Projection, config: LocalizerConfig) -> Result<Self> {
        config.grid.validate()?;
        if config.knn_m == 0 || config.knn_m > dict.len() {
            return Err(Error::Config(format!(
                "knn_m must lie in 1..={}, got {}",
                dict.len(),
                config.knn_m
            )));
        }
        for (w, dim, name) in [(&w_g, dict.ground_dim(), "ground"), (&w_s, dict.sat_dim(), "satellite")] {
            if w.cols() != dim {
                return Err(Error::FeatureConfigMismatch(format!(
                    "{name} projection expects {} channels, dictionary has {dim}",
                    w.cols()
                )));
            }
        }
        let project = |feats: Vec<Vec<f64>>, w: &Projection| -> Result<NeighborIndex> {
            let rows = feats
                .iter()
                .enumerate()
                .map(|(i, f)| Ok((dict.entries()[i].id, w.apply(f)?)))
                .collect::<Result<Vec<_>>>()?;
            NeighborIndex::build(rows)
        };
        let ground_index = project(dict.ground_features(), &w_g)?;
        let sat_index = project(dict.sat_features(), &w_s)?;
        let pixels = dict.sat_map().width() * dict.sat_map().height();
        Ok(Localizer {
            dict,
            w_g,
            w_s,
            ground_index,
            sat_index,
            config,
            sat_cache: (0..pixels).map(|_| OnceLock::new()).collect(),
        })
    }

    /// Ours-NP: both projections left at identity.
    pub fn without_projection(dict: &'a Dictionary, config: LocalizerConfig) -> Result<Self> {
        let (g, s) = (dict.ground_dim(), dict.sat_dim());
        Self::new(dict, Projection::identity(g), Projection::identity(s), config)
    }

    pub fn config(&self) -> &LocalizerConfig {
        &self.config
    }

    pub fn dictionary(&self) -> &Dictionary {
        self.dict
    }

    fn ground_hits(&self, g: &[f64]) -> Result<Vec<NeighborHit>> {
        self.ground_index
            .knn(&self.w_g.apply(g)?, self.config.knn_m, self.config.search_mode)
    }

    fn sat_hits_at(&self, col: usize, row: usize) -> &[NeighborHit] {
        let map = self.dict.sat_map();
        self.sat_cache[row * map.width() + col].get_or_init(|| {
            let s: Vec<f64> = map.pixel(col, row).iter().map(|&x| x as f64).collect();
            let ws = self.w_s.apply(&s).expect("satellite projection matches map channels");
            self.sat_index
                .knn(&ws, self.config.knn_m, self.config.search_mode)
                .expect("query dimension matches index")
        })
    }

    /// Co-occurrence score of one standardized ground/satellite feature pair.
    pub fn cooccurrence_score(&self, g: &FeatureVector, s: &FeatureVector) -> Result<f64> {
        let gh = self.ground_hits(&g.to_f64())?;
        let sh = self.sat_index.knn(
            &self.w_s.apply(&s.to_f64())?,
            self.config.knn_m,
            self.config.search_mode,
        )?;
        Ok(score_from_hits(&gh, &sh))
    }

    /// Raw score and pair count for every candidate.
    pub fn score_candidates(&self, obs: &QueryObservation, candidates: &[Pose2D]) -> Result<(Vec<f64>, Vec<usize>)> {
        check_query(obs, self.dict)?;
        let samples = query_samples(obs, self.dict, &self.config.grid);
        let hits = samples
            .iter()
            .map(|s| self.ground_hits(&s.feat))
            .collect::<Result<Vec<_>>>()?;
        let georef = self.dict.georef();
        let max_range = self.dict.feature_config().max_range;
        let scored: Vec<(f64, usize)> = candidates
            .par_iter()
            .map(|pose| {
                let mut raw = 0.0;
                let mut pairs = 0;
                for (s, gh) in samples.iter().zip(&hits) {
                    if let Projected::Kept { pixel, .. } =
                        project_to_satellite(s.u, s.v, s.depth, &obs.camera, pose, georef, max_range)
                    {
                        raw += score_from_hits(gh, self.sat_hits_at(pixel.0, pixel.1));
                        pairs += 1;
                    }
                }
                (raw, pairs)
            })
            .collect();
        Ok(scored.into_iter().unzip())
    }

    pub fn localize(&self, obs: &QueryObservation, candidates: &[PathSample]) -> Result<LocalizationResult> {
        let poses: Vec<Pose2D> = candidates.iter().map(|c| c.pose).collect();
        let (raw_scores, pair_counts) = self.score_candidates(obs, &poses)?;
        let posterior = posterior_over_candidates(&raw_scores)?;
        let estimate = estimate_location(&posterior, &poses)?;
        let top = top_indices(&posterior, TOP_K);
        let confidence = confidence_of(&top, &raw_scores, &pair_counts);
        Ok(LocalizationResult {
            estimate,
            posterior,
            raw_scores,
            pair_counts,
            top,
            confidence,
            inlier: confidence >= self.config.tau,
        })
    }
}

/// Ground-only retrieval: database images ranked by the distance between mean
/// projected ground descriptors. Scores are inverse distances.
pub struct GroundOnlyLocalizer<'a> {
    dict: &'a Dictionary,
    w_g: Projection,
    grid: GridSpec,
    tau: f64,
    /// Database image ids with at least one entry, ascending.
    image_ids: Vec<ImageId>,
    descriptors: Vec<Vec<f64>>,
}

fn mean_of(rows: impl Iterator<Item = Vec<f64>>, dim: usize) -> Option<Vec<f64>> {
    let mut acc = vec![0.0; dim];
    let mut n = 0usize;
    for r in rows {
        for (a, v) in acc.iter_mut().zip(&r) {
            *a += v;
        }
        n += 1;
    }
    (n > 0).then(|| acc.into_iter().map(|a| a / n as f64).collect())
}

impl<'a> GroundOnlyLocalizer<'a> {
    pub fn new(dict: &'a Dictionary, w_g: Projection, grid: GridSpec, tau: f64) -> Result<Self> {
        grid.validate()?;
        if w_g.cols() != dict.ground_dim() {
            return Err(Error::FeatureConfigMismatch(format!(
                "ground projection expects {} channels, dictionary has {}",
                w_g.cols(),
                dict.ground_dim()
            )));
        }
        let mut image_ids: Vec<ImageId> = dict.entries().iter().map(|e| e.source_image).collect();
        image_ids.sort_unstable();
        image_ids.dedup();
        let mut descriptors = Vec::with_capacity(image_ids.len());
        for &id in &image_ids {
            let rows = dict
                .entries()
                .iter()
                .filter(|e| e.source_image == id)
                .map(|e| w_g.apply(&e.ground_feat.to_f64()).expect("checked dimension"));
            descriptors.push(mean_of(rows, w_g.rows()).expect("image has entries"));
        }
        Ok(GroundOnlyLocalizer {
            dict,
            w_g,
            grid,
            tau,
            image_ids,
            descriptors,
        })
    }

    pub fn image_ids(&self) -> &[ImageId] {
        &self.image_ids
    }

    /// `db_poses` must contain a pose for every database image in the dictionary.
    pub fn localize(&self, obs: &QueryObservation, db_poses: &[(ImageId, Pose2D)]) -> Result<LocalizationResult> {
        check_query(obs, self.dict)?;
        let poses: Vec<Pose2D> = self
            .image_ids
            .iter()
            .map(|id| {
                db_poses
                    .iter()
                    .find(|(i, _)| i == id)
                    .map(|p| p.1)
                    .ok_or_else(|| Error::InvalidInput(format!("no pose for database image {id}")))
            })
            .collect::<Result<_>>()?;
        let samples = query_samples(obs, self.dict, &self.grid);
        let rows = samples
            .iter()
            .map(|s| self.w_g.apply(&s.feat).expect("checked dimension"));
        let raw_scores: Vec<f64> = match mean_of(rows, self.w_g.rows()) {
            Some(q) => self
                .descriptors
                .iter()
                .map(|d| {
                    let dist = crate::neighbor_index::squared_distance(d, &q).sqrt();
                    1.0 / dist.max(DISTANCE_FLOOR)
                })
                .collect(),
            None => vec![0.0; poses.len()],
        };
        let posterior = posterior_over_candidates(&raw_scores)?;
        let top = top_indices(&raw_scores, TOP_K);
        let top_poses: Vec<Pose2D> = top.iter().map(|&i| poses[i]).collect();
        let weights: Vec<f64> = top.iter().map(|&i| raw_scores[i]).collect();
        let estimate = weighted_pose(&top_poses, &weights);
        let confidence = if top.is_empty() {
            0.0
        } else {
            weights.iter().sum::<f64>() / top.len() as f64
        };
        Ok(LocalizationResult {
            estimate,
            posterior,
            pair_counts: vec![samples.len(); poses.len()],
            raw_scores,
            top,
            confidence,
            inlier: confidence >= self.tau,
        })
    }
}
