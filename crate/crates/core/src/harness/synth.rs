//! Seeded synthetic worlds and the on-disk dataset layout.
//!
//! The world is a smooth multi-channel field (Gaussian blobs over a weak
//! sinusoidal background) sampled at satellite pixel centers. A flat-ground
//! pinhole camera drives along a sine-shaped path; ground features are the
//! satellite value under each pixel, mixed by `A` and perturbed by noise.
//!
//! Dataset layout:
//! ```text
//! satellite.fmap | satellite.png     georef.txt   camera.txt
//! database/poses.csv   database/<id>.fmap | <id>.png   database/<id>.depth.fmap
//! queries/<id>.fmap | <id>.png   queries/<id>.depth.fmap   queries/truth.csv
//! ```

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dictionary::DatabaseView;
use crate::error::{Error, Result};
use crate::features::{load_feature_map, load_rgb, save_feature_map, FeatureMap, FeaturePipeline};
use crate::geometry::{
    interpolate_path, interpolate_pose, read_pose_csv, world_to_sat_pixel, write_pose_csv, CameraIntrinsics, ImageId,
    Pose2D, SatGeoref,
};
use crate::harness::eval::{read_truth_csv, write_truth_csv, TruthRow};

#[derive(Debug, Clone, PartialEq)]
pub struct WorldParams {
    /// Side of the square world (meters).
    pub extent: f64,
    pub meters_per_pixel: f64,
    pub channels: usize,
    /// Gaussian blobs per channel.
    pub blobs: usize,
    pub blob_sigma_min: f64,
    pub blob_sigma_max: f64,
    /// Ground feature noise standard deviation.
    pub noise: f64,
    /// Strength of the off-diagonal channel mixing in `A`.
    pub mixing: f64,
    /// Gain of channel 0 in the ground view.
    pub nuisance_gain: f64,
    /// Arc length between database images (meters).
    pub db_spacing: f64,
    pub queries: usize,
    pub outside_queries: usize,
    /// Maximum lateral offset of query poses from the path (meters).
    pub lateral_offset: f64,
    /// Maximum heading perturbation of query poses (degrees).
    pub heading_jitter: f64,
    /// When positive, inside queries sit exactly on path candidates at this spacing.
    pub query_snap: f64,
    pub image_w: u32,
    pub image_h: u32,
    pub focal: f64,
    /// Image row of the horizon.
    pub horizon: f64,
    pub camera_height: f64,
}

impl Default for WorldParams {
    fn default() -> Self {
        WorldParams {
            extent: 200.0,
            meters_per_pixel: 0.5,
            channels: 6,
            blobs: 80,
            blob_sigma_min: 3.0,
            blob_sigma_max: 10.0,
            noise: 0.05,
            mixing: 0.3,
            nuisance_gain: 0.1,
            db_spacing: 10.0,
            queries: 30,
            outside_queries: 30,
            lateral_offset: 1.0,
            heading_jitter: 5.0,
            query_snap: 0.0,
            image_w: 160,
            image_h: 120,
            focal: 100.0,
            horizon: 40.0,
            camera_height: 1.6,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("bad value for `world_{key}`: `{v}`"))
}

impl WorldParams {
    /// A noise-free world whose ground view equals the satellite view.
    pub fn identity() -> Self {
        WorldParams {
            noise: 0.0,
            mixing: 0.0,
            nuisance_gain: 1.0,
            ..Default::default()
        }
    }

    pub(crate) fn set(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        match key {
            "extent" => self.extent = parse(key, v)?,
            "meters_per_pixel" => self.meters_per_pixel = parse(key, v)?,
            "channels" => self.channels = parse(key, v)?,
            "blobs" => self.blobs = parse(key, v)?,
            "blob_sigma_min" => self.blob_sigma_min = parse(key, v)?,
            "blob_sigma_max" => self.blob_sigma_max = parse(key, v)?,
            "noise" => self.noise = parse(key, v)?,
            "mixing" => self.mixing = parse(key, v)?,
            "nuisance_gain" => self.nuisance_gain = parse(key, v)?,
            "db_spacing" => self.db_spacing = parse(key, v)?,
            "queries" => self.queries = parse(key, v)?,
            "outside_queries" => self.outside_queries = parse(key, v)?,
            "lateral_offset" => self.lateral_offset = parse(key, v)?,
            "heading_jitter" => self.heading_jitter = parse(key, v)?,
            "query_snap" => self.query_snap = parse(key, v)?,
            "image_w" => self.image_w = parse(key, v)?,
            "image_h" => self.image_h = parse(key, v)?,
            "focal" => self.focal = parse(key, v)?,
            "horizon" => self.horizon = parse(key, v)?,
            "camera_height" => self.camera_height = parse(key, v)?,
            _ => return Err(format!("unknown config key `world_{key}`")),
        }
        Ok(())
    }

    pub(crate) fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("extent", self.extent.to_string()),
            ("meters_per_pixel", self.meters_per_pixel.to_string()),
            ("channels", self.channels.to_string()),
            ("blobs", self.blobs.to_string()),
            ("blob_sigma_min", self.blob_sigma_min.to_string()),
            ("blob_sigma_max", self.blob_sigma_max.to_string()),
            ("noise", self.noise.to_string()),
            ("mixing", self.mixing.to_string()),
            ("nuisance_gain", self.nuisance_gain.to_string()),
            ("db_spacing", self.db_spacing.to_string()),
            ("queries", self.queries.to_string()),
            ("outside_queries", self.outside_queries.to_string()),
            ("lateral_offset", self.lateral_offset.to_string()),
            ("heading_jitter", self.heading_jitter.to_string()),
            ("query_snap", self.query_snap.to_string()),
            ("image_w", self.image_w.to_string()),
            ("image_h", self.image_h.to_string()),
            ("focal", self.focal.to_string()),
            ("horizon", self.horizon.to_string()),
            ("camera_height", self.camera_height.to_string()),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("world: {m}")));
        if !(self.extent >= 100.0 && self.extent.is_finite()) {
            return bad("extent must be at least 100 m");
        }
        if !(self.meters_per_pixel > 0.0) {
            return bad("meters_per_pixel must be positive");
        }
        if self.channels == 0 {
            return bad("channels must be >= 1");
        }
        if !(self.blob_sigma_min > 0.0 && self.blob_sigma_max >= self.blob_sigma_min) {
            return bad("blob sigma range is invalid");
        }
        if !(self.noise >= 0.0 && self.mixing >= 0.0 && self.nuisance_gain > 0.0) {
            return bad("noise and mixing must be >= 0 and nuisance_gain > 0");
        }
        if !(self.db_spacing > 0.0
            && self.lateral_offset >= 0.0
            && self.heading_jitter >= 0.0
            && self.query_snap >= 0.0)
        {
            return bad("spacings and perturbations must be non-negative");
        }
        if self.queries == 0 {
            return bad("queries must be >= 1");
        }
        self.camera().validate()
    }

    pub fn camera(&self) -> CameraIntrinsics {
        CameraIntrinsics {
            fx: self.focal,
            fy: self.focal,
            cx: self.image_w as f64 / 2.0,
            cy: self.horizon,
            height: self.camera_height,
            image_w: self.image_w,
            image_h: self.image_h,
        }
    }

    pub fn georef(&self) -> SatGeoref {
        let px = (self.extent / self.meters_per_pixel).round() as u32;
        SatGeoref {
            origin_x: 0.0,
            origin_y: self.extent,
            meters_per_pixel: self.meters_per_pixel,
            image_w: px,
            image_h: px,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Blob {
    x: f64,
    y: f64,
    sigma: f64,
    amplitude: f64,
}

#[derive(Debug, Clone, Copy)]
struct Wave {
    amplitude: f64,
    kx: f64,
    ky: f64,
    phase_x: f64,
    phase_y: f64,
}

/// Smooth field: per channel a sum of blobs on a sinusoidal background.
#[derive(Debug, Clone)]
pub struct Field {
    blobs: Vec<Vec<Blob>>,
    waves: Vec<Wave>,
}

const BLOB_CUTOFF: f64 = 4.0;

impl Field {
    fn generate(p: &WorldParams, rng: &mut ChaCha8Rng) -> Self {
        let margin = 0.1 * p.extent;
        let blobs = (0..p.channels)
            .map(|_| {
                (0..p.blobs)
                    .map(|_| Blob {
                        x: rng.random_range(-margin..p.extent + margin),
                        y: rng.random_range(-margin..p.extent + margin),
                        sigma: rng.random_range(p.blob_sigma_min..=p.blob_sigma_max),
                        amplitude: rng.random_range(-1.0..1.0),
                    })
                    .collect()
            })
            .collect();
        let waves = (0..p.channels)
            .map(|_| Wave {
                amplitude: rng.random_range(0.1..0.3),
                kx: 2.0 * PI / rng.random_range(40.0..120.0),
                ky: 2.0 * PI / rng.random_range(40.0..120.0),
                phase_x: rng.random_range(0.0..2.0 * PI),
                phase_y: rng.random_range(0.0..2.0 * PI),
            })
            .collect();
        Field { blobs, waves }
    }

    pub fn channels(&self) -> usize {
        self.waves.len()
    }

    pub fn value(&self, x: f64, y: f64, channel: usize) -> f64 {
        let w = &self.waves[channel];
        let mut v = w.amplitude * (w.kx * x + w.phase_x).sin() * (w.ky * y + w.phase_y).sin();
        for b in &self.blobs[channel] {
            let d2 = (x - b.x).powi(2) + (y - b.y).powi(2);
            let cut = BLOB_CUTOFF * b.sigma;
            if d2 <= cut * cut {
                v += b.amplitude * (-d2 / (2.0 * b.sigma * b.sigma)).exp();
            }
        }
        v
    }

    /// Samples the field at every pixel center of the georeference.
    pub fn render(&self, geo: &SatGeoref) -> FeatureMap {
        let (w, h, c) = (geo.image_w as usize, geo.image_h as usize, self.channels());
        let mut map = FeatureMap::zeros(w, h, c);
        for row in 0..h {
            for col in 0..w {
                let p = geo.pixel_center(col, row);
                let px = map.pixel_mut(col, row);
                for (ch, out) in px.iter_mut().enumerate() {
                    *out = self.value(p.x, p.y, ch) as f32;
                }
            }
        }
        map
    }
}

/// Ground-view mixing `A = D (I + s R)`; invertible by construction.
fn mixing_matrix(p: &WorldParams, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let c = p.channels;
    let mut d = DMatrix::identity(c, c);
    if c > 1 {
        d[(0, 0)] = p.nuisance_gain;
    }
    if p.mixing == 0.0 {
        return d;
    }
    loop {
        let r = DMatrix::from_fn(c, c, |i, j| if i == j { 0.0 } else { rng.random_range(-1.0..1.0) });
        let m = DMatrix::identity(c, c) + r * p.mixing;
        if m.determinant().abs() > 0.05 {
            return &d * m;
        }
    }
}

/// The main path: a sine curve across the middle of the world.
fn main_path(p: &WorldParams) -> impl Fn(f64) -> (f64, f64) {
    let e = p.extent;
    move |t: f64| {
        let x = 0.1 * e + 0.8 * e * t;
        let y = 0.6 * e + 0.125 * e * (2.0 * PI * t).sin();
        (x, y)
    }
}

/// The outside path, far from the main path's views.
fn outside_path(p: &WorldParams) -> impl Fn(f64) -> (f64, f64) {
    let e = p.extent;
    move |t: f64| {
        let x = 0.15 * e + 0.7 * e * t;
        let y = 0.2 * e + 0.05 * e * (2.0 * PI * t).sin();
        (x, y)
    }
}

/// Poses every `spacing` meters of arc along a parametric curve on t ∈ [0, 1],
/// heading along the tangent.
fn poses_along(curve: impl Fn(f64) -> (f64, f64), spacing: f64) -> Vec<Pose2D> {
    const STEPS: usize = 20_000;
    let pts: Vec<(f64, f64)> = (0..=STEPS).map(|i| curve(i as f64 / STEPS as f64)).collect();
    let mut out = Vec::new();
    let mut next = 0.0;
    let mut arc = 0.0;
    for i in 0..STEPS {
        let (a, b) = (pts[i], pts[i + 1]);
        let seg = (b.0 - a.0).hypot(b.1 - a.1);
        while next <= arc + seg {
            let f = (next - arc) / seg;
            let theta = (b.1 - a.1).atan2(b.0 - a.0);
            out.push(Pose2D::new(a.0 + f * (b.0 - a.0), a.1 + f * (b.1 - a.1), theta));
            next += spacing;
        }
        arc += seg;
    }
    out
}

/// A pose at a uniformly random arc position along a piecewise-linear path,
/// shifted sideways and turned by bounded uniform perturbations.
fn perturbed_pose_on(path: &[Pose2D], p: &WorldParams, rng: &mut ChaCha8Rng) -> Pose2D {
    let lens: Vec<f64> = path
        .windows(2)
        .map(|w| w[0].position().distance(&w[1].position()))
        .collect();
    let total: f64 = lens.iter().sum();
    let mut s = rng.random_range(0.0..total);
    let mut k = 0;
    while k + 1 < lens.len() && s > lens[k] {
        s -= lens[k];
        k += 1;
    }
    let base = interpolate_pose(&path[k], &path[k + 1], (s / lens[k]).clamp(0.0, 1.0));
    let lateral = if p.lateral_offset > 0.0 {
        rng.random_range(-p.lateral_offset..=p.lateral_offset)
    } else {
        0.0
    };
    let jitter = if p.heading_jitter > 0.0 {
        rng.random_range(-p.heading_jitter..=p.heading_jitter).to_radians()
    } else {
        0.0
    };
    let at = base.vehicle_to_world(0.0, lateral);
    Pose2D::new(at.x, at.y, base.theta + jitter)
}

/// Ground-truth record of one synthetic query.
#[derive(Debug, Clone)]
pub struct SynthQuery {
    pub id: u32,
    pub pose: Pose2D,
    pub inside: bool,
    pub features: FeatureMap,
    pub depth: FeatureMap,
}

#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    pub seed: u64,
    pub params: WorldParams,
    pub field: Field,
    pub mixing: DMatrix<f64>,
    pub georef: SatGeoref,
    pub camera: CameraIntrinsics,
    /// Raw satellite features.
    pub satellite: FeatureMap,
    pub database: Vec<DatabaseView>,
    pub queries: Vec<SynthQuery>,
}

struct Renderer<'a> {
    params: &'a WorldParams,
    camera: CameraIntrinsics,
    georef: SatGeoref,
    satellite: &'a FeatureMap,
    mixing: &'a DMatrix<f64>,
    depth: FeatureMap,
}

impl Renderer<'_> {
    /// Features and exact depth for a camera at `pose`.
    fn render(&self, pose: &Pose2D, rng: &mut ChaCha8Rng) -> FeatureMap {
        let cam = &self.camera;
        let c = self.satellite.channels();
        let noise = (self.params.noise > 0.0).then(|| Normal::new(0.0, self.params.noise).expect("finite sigma"));
        let mut out = FeatureMap::zeros(cam.image_w as usize, cam.image_h as usize, c);
        let mut mixed = vec![0.0f64; c];
        for v in 0..cam.image_h as usize {
            let depth = self.depth.pixel(0, v)[0] as f64;
            if depth <= 0.0 {
                continue;
            }
            for u in 0..cam.image_w as usize {
                let Some(p) = crate::geometry::pixel_depth_to_world(u as f64, v as f64, depth, cam, pose) else {
                    continue;
                };
                let Some(sp) = world_to_sat_pixel(&p, &self.georef) else {
                    continue;
                };
                let (col, row) = sp.index();
                let s = self.satellite.pixel(col, row);
                for (i, m) in mixed.iter_mut().enumerate() {
                    *m = (0..c).map(|j| self.mixing[(i, j)] * s[j] as f64).sum();
                }
                if let Some(n) = &noise {
                    for m in mixed.iter_mut() {
                        *m += n.sample(rng);
                    }
                }
                for (o, m) in out.pixel_mut(u, v).iter_mut().zip(&mixed) {
                    *o = *m as f32;
                }
            }
        }
        out
    }
}

fn depth_map(cam: &CameraIntrinsics) -> FeatureMap {
    let mut d = FeatureMap::zeros(cam.image_w as usize, cam.image_h as usize, 1);
    for v in 0..cam.image_h as usize {
        let depth = cam.ground_depth(v as f64).unwrap_or(0.0);
        for u in 0..cam.image_w as usize {
            d.pixel_mut(u, v)[0] = depth as f32;
        }
    }
    d
}

// independent random streams per purpose
const STREAM_FIELD: u64 = 1;
const STREAM_MIXING: u64 = 2;
const STREAM_QUERIES: u64 = 3;
const STREAM_NOISE: u64 = 4;

fn stream(seed: u64, s: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(s);
    rng
}

pub fn generate_world(params: &WorldParams, seed: u64) -> Result<SyntheticWorld> {
    params.validate()?;
    let georef = params.georef();
    let camera = params.camera();
    let field = Field::generate(params, &mut stream(seed, STREAM_FIELD));
    let satellite = field.render(&georef);
    let mixing = mixing_matrix(params, &mut stream(seed, STREAM_MIXING));
    let renderer = Renderer {
        params,
        camera,
        georef,
        satellite: &satellite,
        mixing: &mixing,
        depth: depth_map(&camera),
    };

    let db_poses = poses_along(main_path(params), params.db_spacing);
    let mut noise = stream(seed, STREAM_NOISE);
    let database: Vec<DatabaseView> = db_poses
        .iter()
        .enumerate()
        .map(|(i, pose)| DatabaseView {
            id: i as ImageId,
            pose: *pose,
            features: renderer.render(pose, &mut noise),
            depth: renderer.depth.clone(),
        })
        .collect();

    let mut qrng = stream(seed, STREAM_QUERIES);
    let mut poses: Vec<(Pose2D, bool)> = Vec::new();
    if params.query_snap > 0.0 {
        let path: Vec<(ImageId, Pose2D)> = database.iter().map(|d| (d.id, d.pose)).collect();
        let cands = interpolate_path(&path, params.query_snap)?;
        let picks = rand::seq::index::sample(&mut qrng, cands.len(), params.queries.min(cands.len()));
        poses.extend(picks.into_iter().map(|i| (cands[i].pose, true)));
    } else {
        poses.extend((0..params.queries).map(|_| (perturbed_pose_on(&db_poses, params, &mut qrng), true)));
    }
    let outside = poses_along(outside_path(params), params.db_spacing);
    poses.extend((0..params.outside_queries).map(|_| (perturbed_pose_on(&outside, params, &mut qrng), false)));
    let queries = poses
        .into_iter()
        .enumerate()
        .map(|(i, (pose, inside))| SynthQuery {
            id: i as u32,
            pose,
            inside,
            features: renderer.render(&pose, &mut noise),
            depth: renderer.depth.clone(),
        })
        .collect();

    Ok(SyntheticWorld {
        seed,
        params: params.clone(),
        field,
        mixing,
        georef,
        camera,
        satellite,
        database,
        queries,
    })
}

impl SyntheticWorld {
    pub fn db_poses(&self) -> Vec<(ImageId, Pose2D)> {
        self.database.iter().map(|d| (d.id, d.pose)).collect()
    }

    pub fn truth(&self) -> Vec<TruthRow> {
        self.queries
            .iter()
            .map(|q| TruthRow {
                id: q.id,
                pose: q.pose,
                inside: q.inside,
            })
            .collect()
    }

    /// The world as a loaded dataset with precomputed features.
    pub fn to_dataset(&self) -> Dataset {
        Dataset {
            camera: self.camera,
            georef: self.georef,
            satellite: self.satellite.clone(),
            database: self.database.clone(),
            queries: self
                .queries
                .iter()
                .map(|q| QueryView {
                    id: q.id,
                    features: q.features.clone(),
                    depth: q.depth.clone(),
                })
                .collect(),
            truth: Some(self.truth()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct QueryView {
    pub id: u32,
    pub features: FeatureMap,
    pub depth: FeatureMap,
}

/// Everything needed to build a dictionary and localize queries.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub camera: CameraIntrinsics,
    pub georef: SatGeoref,
    /// Raw satellite features.
    pub satellite: FeatureMap,
    pub database: Vec<DatabaseView>,
    pub queries: Vec<QueryView>,
    pub truth: Option<Vec<TruthRow>>,
}

impl Dataset {
    pub fn db_poses(&self) -> Vec<(ImageId, Pose2D)> {
        self.database.iter().map(|d| (d.id, d.pose)).collect()
    }
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Writes a dataset with precomputed features as FMAP files.
pub fn write_dataset(data: &Dataset, dir: &Path) -> Result<()> {
    let db_dir = dir.join("database");
    let q_dir = dir.join("queries");
    create_dir(&db_dir)?;
    create_dir(&q_dir)?;
    save_feature_map(&data.satellite, &dir.join("satellite.fmap"))?;
    data.georef.save(&dir.join("georef.txt"))?;
    data.camera.save(&dir.join("camera.txt"))?;
    write_pose_csv(&db_dir.join("poses.csv"), &data.db_poses())?;
    for v in &data.database {
        save_feature_map(&v.features, &db_dir.join(format!("{}.fmap", v.id)))?;
        save_feature_map(&v.depth, &db_dir.join(format!("{}.depth.fmap", v.id)))?;
    }
    for q in &data.queries {
        save_feature_map(&q.features, &q_dir.join(format!("{}.fmap", q.id)))?;
        save_feature_map(&q.depth, &q_dir.join(format!("{}.depth.fmap", q.id)))?;
    }
    if let Some(truth) = &data.truth {
        write_truth_csv(&q_dir.join("truth.csv"), truth)?;
    }
    Ok(())
}

fn find_image(dir: &Path, stem: &str) -> Option<PathBuf> {
    ["png", "ppm"]
        .iter()
        .map(|ext| dir.join(format!("{stem}.{ext}")))
        .find(|p| p.exists())
}

/// Runs `pipeline` on the image and/or FMAP stored under `stem`.
fn load_view_features(dir: &Path, stem: &str, pipeline: &FeaturePipeline) -> Result<FeatureMap> {
    let image = if pipeline.needs_image() {
        let path = find_image(dir, stem)
            .ok_or_else(|| Error::InvalidInput(format!("no {stem}.png or {stem}.ppm in {}", dir.display())))?;
        Some(load_rgb(&path)?)
    } else {
        None
    };
    let fmap = if pipeline.needs_fmap() {
        Some(load_feature_map(&dir.join(format!("{stem}.fmap")))?)
    } else {
        None
    };
    pipeline.extract(image.as_ref(), fmap.as_ref())
}

/// Query ids from the `<id>.depth.fmap` files, ascending.
fn query_ids(dir: &Path) -> Result<Vec<u32>> {
    let mut ids = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        if let Some(id) = name
            .to_str()
            .and_then(|n| n.strip_suffix(".depth.fmap"))
            .and_then(|s| s.parse().ok())
        {
            ids.push(id);
        }
    }
    ids.sort_unstable();
    Ok(ids)
}

pub fn load_dataset(dir: &Path, ground: &FeaturePipeline, sat: &FeaturePipeline) -> Result<Dataset> {
    let camera = CameraIntrinsics::load(&dir.join("camera.txt"))?;
    let georef = SatGeoref::load(&dir.join("georef.txt"))?;
    let satellite = load_view_features(dir, "satellite", sat)?;
    let db_dir = dir.join("database");
    let mut database = Vec::new();
    for (id, pose) in read_pose_csv(&db_dir.join("poses.csv"))? {
        database.push(DatabaseView {
            id,
            pose,
            features: load_view_features(&db_dir, &id.to_string(), ground)?,
            depth: load_feature_map(&db_dir.join(format!("{id}.depth.fmap")))?,
        });
    }
    let q_dir = dir.join("queries");
    let mut queries = Vec::new();
    if q_dir.is_dir() {
        for id in query_ids(&q_dir)? {
            queries.push(QueryView {
                id,
                features: load_view_features(&q_dir, &id.to_string(), ground)?,
                depth: load_feature_map(&q_dir.join(format!("{id}.depth.fmap")))?,
            });
        }
    }
    let truth_path = q_dir.join("truth.csv");
    let truth = truth_path.exists().then(|| read_truth_csv(&truth_path)).transpose()?;
    Ok(Dataset {
        camera,
        georef,
        satellite,
        database,
        queries,
        truth,
    })
}
