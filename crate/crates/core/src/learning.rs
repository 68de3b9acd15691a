//! Location-discriminative linear projections learned with a ranking hinge
//! loss and per-sample Adam updates.

use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::WorldPoint;
use crate::neighbor_index::{NeighborIndex, SearchMode};

/// A linear map from C-dimensional features to C' dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    matrix: DMatrix<f64>,
}

impl Projection {
    pub fn identity(dim: usize) -> Self {
        Projection {
            matrix: DMatrix::identity(dim, dim),
        }
    }

    /// The first `rows` rows of the `cols`-dimensional identity.
    pub fn truncated_identity(rows: usize, cols: usize) -> Self {
        Projection {
            matrix: DMatrix::identity(rows, cols),
        }
    }

    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() == 0 || matrix.ncols() == 0 {
            return Err(Error::InvalidInput("projection must be non-empty".into()));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("projection has non-finite entries".into()));
        }
        Ok(Projection { matrix })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Output dimension C'.
    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    /// Input dimension C.
    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn is_identity(&self) -> bool {
        self.matrix == DMatrix::identity(self.rows(), self.cols())
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols() {
            return Err(Error::DimensionMismatch {
                expected: self.cols(),
                actual: v.len(),
            });
        }
        let mut out = vec![0.0; self.rows()];
        matvec(&self.matrix, v, &mut out);
        Ok(out)
    }

    pub fn apply_all(&self, feats: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        feats.iter().map(|f| self.apply(f)).collect()
    }

    /// Serializes as `PROJ1 rows=R cols=C config=<hash>` then row-major f32 LE.
    pub fn to_bytes(&self, config_hash: &str) -> Vec<u8> {
        let mut out = format!(
            "PROJ1 rows={} cols={} config={}\n",
            self.rows(),
            self.cols(),
            config_hash
        )
        .into_bytes();
        for r in 0..self.rows() {
            for c in 0..self.cols() {
                out.extend_from_slice(&(self.matrix[(r, c)] as f32).to_le_bytes());
            }
        }
        out
    }

    /// Returns the projection and the config hash recorded with it.
    pub fn from_bytes(bytes: &[u8]) -> Result<(Self, String)> {
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::format(0, "missing projection header"))?;
        let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| Error::format(0, "header is not UTF-8"))?;
        let mut parts = header.split(' ');
        if parts.next() != Some("PROJ1") {
            return Err(Error::format(0, "bad magic, expected `PROJ1`"));
        }
        let (mut rows, mut cols, mut hash) = (None, None, None);
        for p in parts {
            match p.split_once('=') {
                Some(("rows", v)) => rows = v.parse::<usize>().ok(),
                Some(("cols", v)) => cols = v.parse::<usize>().ok(),
                Some(("config", v)) => hash = Some(v.to_string()),
                _ => return Err(Error::format(0, format!("unexpected header field `{p}`"))),
            }
        }
        let (Some(rows), Some(cols), Some(hash)) = (rows, cols, hash) else {
            return Err(Error::format(0, "incomplete projection header"));
        };
        let payload = &bytes[nl + 1..];
        if payload.len() != rows * cols * 4 {
            return Err(Error::format(
                nl + 1,
                format!(
                    "payload size mismatch: expected {} bytes, got {}",
                    rows * cols * 4,
                    payload.len()
                ),
            ));
        }
        let values: Vec<f64> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        let matrix = DMatrix::from_row_slice(rows, cols, &values);
        Ok((Projection::from_matrix(matrix)?, hash))
    }

    pub fn save(&self, path: &Path, config_hash: &str) -> Result<()> {
        std::fs::write(path, self.to_bytes(config_hash)).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<(Self, String)> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn matvec(w: &DMatrix<f64>, d: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    let rows = w.nrows();
    // column-major storage
    for (c, col) in w.as_slice().chunks_exact(rows).enumerate() {
        let dc = d[c];
        for (o, &wv) in out.iter_mut().zip(col) {
            *o += wv * dc;
        }
    }
}

/// Scratch buffers for distance evaluation.
struct Scratch {
    diff: Vec<f64>,
    proj: Vec<f64>,
}

impl Scratch {
    fn new(rows: usize, cols: usize) -> Self {
        Scratch {
            diff: vec![0.0; cols],
            proj: vec![0.0; rows],
        }
    }

    /// ‖W(a − b)‖, leaving `a − b` in `diff` and `W(a − b)` in `proj`.
    fn distance(&mut self, w: &DMatrix<f64>, a: &[f64], b: &[f64]) -> f64 {
        for ((d, x), y) in self.diff.iter_mut().zip(a).zip(b) {
            *d = x - y;
        }
        matvec(w, &self.diff, &mut self.proj);
        self.proj.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Adds `sign · ∂‖W(a − b)‖/∂W` to `grad`; a zero-norm pair adds nothing.
    fn accumulate_gradient(&mut self, w: &DMatrix<f64>, a: &[f64], b: &[f64], sign: f64, grad: &mut DMatrix<f64>) {
        let norm = self.distance(w, a, b);
        if norm <= 0.0 {
            return;
        }
        let scale = sign / norm;
        for c in 0..grad.ncols() {
            let dc = self.diff[c] * scale;
            if dc == 0.0 {
                continue;
            }
            for r in 0..grad.nrows() {
                grad[(r, c)] += self.proj[r] * dc;
            }
        }
    }
}

fn check_dims(w: &Projection, feats: &[Vec<f64>]) -> Result<()> {
    for f in feats {
        if f.len() != w.cols() {
            return Err(Error::DimensionMismatch {
                expected: w.cols(),
                actual: f.len(),
            });
        }
    }
    Ok(())
}

/// Distance between features `i` and `k` after projection.
pub fn feature_distance(i: usize, k: usize, w: &Projection, feats: &[Vec<f64>]) -> Result<f64> {
    let n = feats.len();
    let (a, b) = match (feats.get(i), feats.get(k)) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(Error::InvalidInput(format!(
                "feature index out of range for {n} features"
            )))
        }
    };
    for v in [a, b] {
        if v.len() != w.cols() {
            return Err(Error::DimensionMismatch {
                expected: w.cols(),
                actual: v.len(),
            });
        }
    }
    Ok(Scratch::new(w.rows(), w.cols()).distance(&w.matrix, a, b))
}

/// One ranking constraint: anchor `i`, its feature-space neighbors, the
/// neighbor closest in location and per-neighbor margins.
#[derive(Debug, Clone, PartialEq)]
pub struct RankingSample {
    pub anchor: usize,
    pub neighborhood: Vec<usize>,
    pub k_star: usize,
    /// `margins[j]` belongs to `neighborhood[j]`.
    pub margins: Vec<f64>,
}

impl RankingSample {
    /// Builds a sample from explicit neighbors; `k_star` is the neighbor with
    /// the smallest location difference, lower index on ties.
    pub fn new(anchor: usize, neighborhood: Vec<usize>, locations: &[WorldPoint]) -> Result<Self> {
        if neighborhood.is_empty() {
            return Err(Error::InvalidInput("empty neighborhood".into()));
        }
        let n = locations.len();
        if anchor >= n || neighborhood.iter().any(|&k| k >= n) {
            return Err(Error::InvalidInput(format!("index out of range for {n} locations")));
        }
        let dl: Vec<f64> = neighborhood
            .iter()
            .map(|&k| locations[anchor].distance(&locations[k]))
            .collect();
        let mut best = 0;
        for j in 1..neighborhood.len() {
            if dl[j] < dl[best] || (dl[j] == dl[best] && neighborhood[j] < neighborhood[best]) {
                best = j;
            }
        }
        let margins = dl.iter().map(|d| d - dl[best]).collect();
        Ok(RankingSample {
            anchor,
            k_star: neighborhood[best],
            neighborhood,
            margins,
        })
    }
}

fn nearest_neighborhoods(feats: &[Vec<f64>], size: usize) -> Result<Vec<Vec<usize>>> {
    if size == 0 {
        return Err(Error::InvalidInput("neighborhood size must be >= 1".into()));
    }
    if feats.len() < size + 1 {
        return Err(Error::InvalidInput(format!(
            "need at least {} feature points, got {}",
            size + 1,
            feats.len()
        )));
    }
    let index = NeighborIndex::build(feats.iter().enumerate().map(|(i, f)| (i as u32, f.clone())).collect())?;
    feats
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let hits = index.knn(f, size + 1, SearchMode::Exact)?;
            Ok(hits
                .into_iter()
                .map(|h| h.id as usize)
                .filter(|&k| k != i)
                .take(size)
                .collect())
        })
        .collect()
}

/// Ranking samples with neighborhoods taken under the identity projection.
pub fn build_ranking_samples(
    feats: &[Vec<f64>],
    locations: &[WorldPoint],
    neighborhood_size: usize,
) -> Result<Vec<RankingSample>> {
    if feats.len() != locations.len() {
        return Err(Error::DimensionMismatch {
            expected: feats.len(),
            actual: locations.len(),
        });
    }
    nearest_neighborhoods(feats, neighborhood_size)?
        .into_iter()
        .enumerate()
        .map(|(i, nb)| RankingSample::new(i, nb, locations))
        .collect()
}

/// Returns the hinge value and the neighbor minimizing `f − m`.
fn hinge_parts(sample: &RankingSample, w: &DMatrix<f64>, feats: &[Vec<f64>], s: &mut Scratch) -> (f64, usize) {
    let anchor = &feats[sample.anchor];
    let mut f_star = 0.0;
    let mut best = (f64::INFINITY, usize::MAX);
    for (&k, &m) in sample.neighborhood.iter().zip(&sample.margins) {
        let f = s.distance(w, anchor, &feats[k]);
        if k == sample.k_star {
            f_star = f;
        }
        let adj = f - m;
        if adj < best.0 || (adj == best.0 && k < best.1) {
            best = (adj, k);
        }
    }
    ((f_star - best.0).max(0.0), best.1)
}

/// `max(0, f(i,k*) − min_k (f(i,k) − m(i,k)))`.
pub fn hinge_term(sample: &RankingSample, w: &Projection, feats: &[Vec<f64>]) -> f64 {
    hinge_parts(sample, &w.matrix, feats, &mut Scratch::new(w.rows(), w.cols())).0
}

fn sample_gradient(
    sample: &RankingSample,
    k_hat: usize,
    w: &DMatrix<f64>,
    feats: &[Vec<f64>],
    s: &mut Scratch,
    grad: &mut DMatrix<f64>,
) {
    if k_hat == sample.k_star {
        return;
    }
    let anchor = &feats[sample.anchor];
    s.accumulate_gradient(w, anchor, &feats[sample.k_star], 1.0, grad);
    s.accumulate_gradient(w, anchor, &feats[k_hat], -1.0, grad);
}

/// Total hinge loss and its subgradient with respect to W.
pub fn loss_and_subgradient(
    samples: &[RankingSample],
    w: &Projection,
    feats: &[Vec<f64>],
) -> Result<(f64, DMatrix<f64>)> {
    check_dims(w, feats)?;
    let mut s = Scratch::new(w.rows(), w.cols());
    let mut grad = DMatrix::zeros(w.rows(), w.cols());
    let mut loss = 0.0;
    for sample in samples {
        let (term, k_hat) = hinge_parts(sample, &w.matrix, feats, &mut s);
        if term > 0.0 {
            loss += term;
            sample_gradient(sample, k_hat, &w.matrix, feats, &mut s, &mut grad);
        }
    }
    Ok((loss, grad))
}

fn total_loss(samples: &[RankingSample], w: &DMatrix<f64>, feats: &[Vec<f64>], s: &mut Scratch) -> f64 {
    samples.iter().map(|smp| hinge_parts(smp, w, feats, s).0).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub t: u64,
    pub first_moment: DMatrix<f64>,
    pub second_moment: DMatrix<f64>,
    pub params: AdamParams,
}

impl AdamState {
    pub fn new(rows: usize, cols: usize, params: AdamParams) -> Self {
        AdamState {
            t: 0,
            first_moment: DMatrix::zeros(rows, cols),
            second_moment: DMatrix::zeros(rows, cols),
            params,
        }
    }
}

/// Advances the moments by one gradient and returns ΔW (to be subtracted).
pub fn adam_step(state: &mut AdamState, grad: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if grad.shape() != state.first_moment.shape() {
        return Err(Error::InvalidInput(format!(
            "gradient shape {:?} does not match state {:?}",
            grad.shape(),
            state.first_moment.shape()
        )));
    }
    let p = state.params;
    state.t += 1;
    let bc1 = 1.0 - p.beta1.powf(state.t as f64);
    let bc2 = 1.0 - p.beta2.powf(state.t as f64);
    let mut delta = DMatrix::zeros(grad.nrows(), grad.ncols());
    for (((m, v), &g), d) in state
        .first_moment
        .iter_mut()
        .zip(state.second_moment.iter_mut())
        .zip(grad.iter())
        .zip(delta.iter_mut())
    {
        *m = p.beta1 * *m + (1.0 - p.beta1) * g;
        *v = p.beta2 * *v + (1.0 - p.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *d = p.learning_rate * m_hat / (v_hat.sqrt() + p.epsilon);
    }
    Ok(delta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Maximum number of epochs.
    pub max_iter: usize,
    pub neighborhood_size: usize,
    pub adam: AdamParams,
    /// Stop when the relative change of the epoch loss falls below this.
    pub tolerance: f64,
    pub seed: u64,
    /// Larger training sets are subsampled to this many points.
    pub max_train_points: usize,
    /// Output dimension C'; `None` keeps W square.
    pub output_dim: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_iter: 50,
            neighborhood_size: 20,
            adam: AdamParams::default(),
            tolerance: 1e-4,
            seed: 0,
            max_train_points: 20000,
            output_dim: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.max_iter == 0 {
            return bad("max_iter must be >= 1");
        }
        if self.neighborhood_size == 0 {
            return bad("neighborhood_size must be >= 1");
        }
        if self.max_train_points < 2 {
            return bad("max_train_points must be >= 2");
        }
        if !(self.adam.learning_rate > 0.0 && self.adam.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.adam.beta1) || !(0.0..1.0).contains(&self.adam.beta2) {
            return bad("adam betas must lie in [0, 1)");
        }
        if !(self.adam.epsilon > 0.0) {
            return bad("adam_epsilon must be positive");
        }
        if !(self.tolerance >= 0.0) {
            return bad("tolerance must be >= 0");
        }
        if self.output_dim == Some(0) {
            return bad("projection_dim must be >= 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub projection: Projection,
    /// Loss before training followed by the loss after each epoch.
    pub loss_history: Vec<f64>,
    pub epochs: usize,
    /// Number of Adam updates applied.
    pub updates: u64,
    pub converged: bool,
    /// Points actually used after subsampling.
    pub train_points: usize,
}

/// Seeded uniform subsample of indices, returned in ascending order.
pub fn subsample_indices(n: usize, max: usize, seed: u64) -> Vec<usize> {
    if n <= max {
        return (0..n).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, n, max).into_vec();
    idx.sort_unstable();
    idx
}

pub fn learn_projection(feats: &[Vec<f64>], locations: &[WorldPoint], config: &TrainConfig) -> Result<Projection> {
    learn_projection_with_report(feats, locations, config).map(|r| r.projection)
}

pub fn learn_projection_with_report(
    feats: &[Vec<f64>],
    locations: &[WorldPoint],
    config: &TrainConfig,
) -> Result<TrainReport> {
    config.validate()?;
    if feats.len() != locations.len() {
        return Err(Error::DimensionMismatch {
            expected: feats.len(),
            actual: locations.len(),
        });
    }
    let dim = feats.first().map(Vec::len).unwrap_or(0);
    if dim == 0 {
        return Err(Error::InvalidInput("no training features".into()));
    }
    let out_dim = config.output_dim.unwrap_or(dim);
    if out_dim > dim {
        return Err(Error::Config(format!(
            "projection_dim {out_dim} exceeds feature dimension {dim}"
        )));
    }
    let keep = subsample_indices(feats.len(), config.max_train_points, config.seed);
    let (feats, locations): (Vec<Vec<f64>>, Vec<WorldPoint>) = if keep.len() == feats.len() {
        (feats.to_vec(), locations.to_vec())
    } else {
        keep.iter().map(|&i| (feats[i].clone(), locations[i])).unzip()
    };
    let identity = Projection::identity(dim);
    check_dims(&identity, &feats)?;
    let samples = build_ranking_samples(&feats, &locations, config.neighborhood_size)?;

    let mut w = DMatrix::<f64>::identity(out_dim, dim);
    let mut adam = AdamState::new(out_dim, dim, config.adam);
    let mut s = Scratch::new(out_dim, dim);
    let mut grad = DMatrix::zeros(out_dim, dim);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();

    let mut loss_history = vec![total_loss(&samples, &w, &feats, &mut s)];
    let mut converged = false;
    let mut epochs = 0;
    for epoch in 1..=config.max_iter {
        order.shuffle(&mut rng);
        for &j in &order {
            let (term, k_hat) = hinge_parts(&samples[j], &w, &feats, &mut s);
            if term > 0.0 {
                grad.fill(0.0);
                sample_gradient(&samples[j], k_hat, &w, &feats, &mut s, &mut grad);
                let delta = adam_step(&mut adam, &grad)?;
                w -= delta;
            }
        }
        epochs = epoch;
        let loss = total_loss(&samples, &w, &feats, &mut s);
        if !loss.is_finite() || w.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { epoch });
        }
        let prev = *loss_history.last().unwrap();
        loss_history.push(loss);
        let rel = (prev - loss).abs() / prev.abs().max(f64::MIN_POSITIVE);
        if loss == 0.0 || rel < config.tolerance {
            converged = true;
            break;
        }
    }
    Ok(TrainReport {
        projection: Projection { matrix: w },
        loss_history,
        epochs,
        updates: adam.t,
        converged,
        train_points: feats.len(),
    })
}

/// Sum over points of the location difference to the projected-space nearest
/// neighbor within the identity neighborhood; lower index wins ties.
pub fn location_loss_metric(
    feats: &[Vec<f64>],
    locations: &[WorldPoint],
    w: &Projection,
    neighborhood_size: usize,
) -> Result<f64> {
    if feats.len() != locations.len() {
        return Err(Error::DimensionMismatch {
            expected: feats.len(),
            actual: locations.len(),
        });
    }
    check_dims(w, feats)?;
    let hoods = nearest_neighborhoods(feats, neighborhood_size)?;
    let mut s = Scratch::new(w.rows(), w.cols());
    let mut total = 0.0;
    for (i, nb) in hoods.iter().enumerate() {
        let mut best = (f64::INFINITY, usize::MAX);
        for &k in nb {
            let f = s.distance(&w.matrix, &feats[i], &feats[k]);
            if f < best.0 || (f == best.0 && k < best.1) {
                best = (f, k);
            }
        }
        total += locations[i].distance(&locations[best.1]);
    }
    Ok(total)
}
