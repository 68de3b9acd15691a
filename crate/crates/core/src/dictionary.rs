//! The one-to-one ground–satellite feature dictionary and its binary container.
//!
//! Building walks every database image's sample grid, pushes each sample
//! through its depth onto the satellite map and pairs the ground feature with
//! the satellite feature of the pixel it lands on. Samples with invalid depth,
//! beyond `max_range`, or outside the satellite image are dropped.

use std::path::Path;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::{ChannelStats, FeatureMap, FeaturePipeline, FeatureVector, GridSpec};
use crate::geometry::{project_to_satellite, CameraIntrinsics, ImageId, Pose2D, Projected, SatGeoref, WorldPoint};
use crate::kv::KeyValues;
use crate::neighbor_index::{EntryId, NeighborIndex};

const DICT_MAGIC: &[u8; 4] = b"GSDC";
const DICT_VERSION: u32 = 1;

/// How features were produced; stored with the dictionary so that query-time
/// extraction can be checked against it.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    pub ground_pipeline: FeaturePipeline,
    pub sat_pipeline: FeaturePipeline,
    pub standardize: bool,
    /// Samples farther than this from the camera (meters) are rejected.
    pub max_range: f64,
    pub ground_stats: ChannelStats,
    pub sat_stats: ChannelStats,
}

fn join_f64(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn split_f64(text: &str) -> std::result::Result<Vec<f64>, String> {
    text.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("bad number `{t}`")))
        .collect()
}

impl FeatureConfig {
    pub fn to_text(&self) -> String {
        let mut kv = KeyValues::default();
        kv.insert("ground_features", &self.ground_pipeline);
        kv.insert("sat_features", &self.sat_pipeline);
        kv.insert("standardize", self.standardize);
        kv.insert("max_range", self.max_range);
        kv.insert("ground_mean", join_f64(&self.ground_stats.mean));
        kv.insert("ground_std", join_f64(&self.ground_stats.std));
        kv.insert("sat_mean", join_f64(&self.sat_stats.mean));
        kv.insert("sat_std", join_f64(&self.sat_stats.std));
        kv.to_text()
    }

    pub fn from_text(text: &str) -> std::result::Result<Self, String> {
        let kv = KeyValues::parse(text)?;
        let pipeline = |key: &str| -> std::result::Result<FeaturePipeline, String> {
            kv.require::<String>(key)?.parse().map_err(|e: Error| e.to_string())
        };
        let stats = |prefix: &str| -> std::result::Result<ChannelStats, String> {
            Ok(ChannelStats {
                mean: split_f64(&kv.require::<String>(&format!("{prefix}_mean"))?)?,
                std: split_f64(&kv.require::<String>(&format!("{prefix}_std"))?)?,
            })
        };
        Ok(FeatureConfig {
            ground_pipeline: pipeline("ground_features")?,
            sat_pipeline: pipeline("sat_features")?,
            standardize: kv.require("standardize")?,
            max_range: kv.require("max_range")?,
            ground_stats: stats("ground")?,
            sat_stats: stats("sat")?,
        })
    }

    /// Short stable hash of the full configuration text.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Errors unless the query ground features come from the same pipeline.
    pub fn check_query_pipeline(&self, pipeline: &FeaturePipeline) -> Result<()> {
        if pipeline != &self.ground_pipeline {
            return Err(Error::FeatureConfigMismatch(format!(
                "query features `{pipeline}` but dictionary was built with `{}`",
                self.ground_pipeline
            )));
        }
        Ok(())
    }
}

/// Settings for [`build_dictionary`].
#[derive(Debug, Clone, PartialEq)]
pub struct DictionaryOptions {
    pub ground_pipeline: FeaturePipeline,
    pub sat_pipeline: FeaturePipeline,
    pub standardize: bool,
    pub max_range: f64,
}

impl Default for DictionaryOptions {
    fn default() -> Self {
        DictionaryOptions {
            ground_pipeline: FeaturePipeline::precomputed(),
            sat_pipeline: FeaturePipeline::precomputed(),
            standardize: true,
            max_range: 50.0,
        }
    }
}

/// One database ground image with its depth and pose. `features` are raw
/// (not yet standardized) pipeline outputs; `depth` is a 1-channel map.
#[derive(Debug, Clone)]
pub struct DatabaseView {
    pub id: ImageId,
    pub pose: Pose2D,
    pub features: FeatureMap,
    pub depth: FeatureMap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DictEntry {
    pub id: EntryId,
    pub ground_feat: FeatureVector,
    pub sat_feat: FeatureVector,
    /// World position of the projected ground sample.
    pub location: WorldPoint,
    pub source_image: ImageId,
}

#[derive(Debug, Clone)]
pub struct Dictionary {
    entries: Vec<DictEntry>,
    ground_index: NeighborIndex,
    sat_index: NeighborIndex,
    sat_map: FeatureMap,
    georef: SatGeoref,
    feature_config: FeatureConfig,
}

/// Rejection tallies from one build.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BuildCounts {
    pub samples: usize,
    pub invalid_depth: usize,
    pub out_of_range: usize,
    pub out_of_bounds: usize,
    pub kept: usize,
}

struct RawPair {
    ground: Vec<f32>,
    sat: Vec<f32>,
    location: WorldPoint,
    source: ImageId,
}

pub(crate) fn check_view_shapes(features: &FeatureMap, depth: &FeatureMap, cam: &CameraIntrinsics) -> Result<()> {
    if depth.channels() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            actual: depth.channels(),
        });
    }
    if depth.width() != features.width() || depth.height() != features.height() {
        return Err(Error::InvalidInput(format!(
            "depth map {}x{} does not match features {}x{}",
            depth.width(),
            depth.height(),
            features.width(),
            features.height()
        )));
    }
    if features.width() != cam.image_w as usize || features.height() != cam.image_h as usize {
        return Err(Error::InvalidInput(format!(
            "image {}x{} does not match camera {}x{}",
            features.width(),
            features.height(),
            cam.image_w,
            cam.image_h
        )));
    }
    Ok(())
}

fn project_view(
    view: &DatabaseView,
    sat: &FeatureMap,
    georef: &SatGeoref,
    cam: &CameraIntrinsics,
    grid: &GridSpec,
    max_range: f64,
) -> (Vec<RawPair>, BuildCounts) {
    let mut counts = BuildCounts::default();
    let mut pairs = Vec::new();
    for (u, v) in grid.pixels(view.features.width(), view.features.height()) {
        counts.samples += 1;
        let depth = view.depth.pixel(u, v)[0] as f64;
        match project_to_satellite(u as f64, v as f64, depth, cam, &view.pose, georef, max_range) {
            Projected::Kept { pixel, location } => {
                counts.kept += 1;
                pairs.push(RawPair {
                    ground: view.features.pixel(u, v).to_vec(),
                    sat: sat.pixel(pixel.0, pixel.1).to_vec(),
                    location,
                    source: view.id,
                });
            }
            Projected::InvalidDepth => counts.invalid_depth += 1,
            Projected::OutOfRange => counts.out_of_range += 1,
            Projected::OutOfBounds => counts.out_of_bounds += 1,
        }
    }
    (pairs, counts)
}

fn index_over(entries: &[DictEntry], pick: impl Fn(&DictEntry) -> &FeatureVector) -> Result<NeighborIndex> {
    NeighborIndex::build(entries.iter().map(|e| (e.id, pick(e).to_f64())).collect())
}

/// Builds the dictionary from database views and the raw satellite feature map.
pub fn build_dictionary(
    db: &[DatabaseView],
    sat: &FeatureMap,
    georef: SatGeoref,
    cam: &CameraIntrinsics,
    grid: &GridSpec,
    options: &DictionaryOptions,
) -> Result<Dictionary> {
    build_dictionary_with_counts(db, sat, georef, cam, grid, options).map(|(d, _)| d)
}

/// As [`build_dictionary`], also returning how many samples each rule rejected.
pub fn build_dictionary_with_counts(
    db: &[DatabaseView],
    sat: &FeatureMap,
    georef: SatGeoref,
    cam: &CameraIntrinsics,
    grid: &GridSpec,
    options: &DictionaryOptions,
) -> Result<(Dictionary, BuildCounts)> {
    georef.validate()?;
    cam.validate()?;
    grid.validate()?;
    if sat.width() != georef.image_w as usize || sat.height() != georef.image_h as usize {
        return Err(Error::InvalidInput(format!(
            "satellite map {}x{} does not match georeference {}x{}",
            sat.width(),
            sat.height(),
            georef.image_w,
            georef.image_h
        )));
    }
    let ground_dim = match db.first() {
        Some(v) => v.features.channels(),
        None => return Err(Error::EmptyDictionary),
    };
    for view in db {
        check_view_shapes(&view.features, &view.depth, cam)?;
        if view.features.channels() != ground_dim {
            return Err(Error::DimensionMismatch {
                expected: ground_dim,
                actual: view.features.channels(),
            });
        }
    }

    // parallel over views, merged in input order
    let per_view: Vec<(Vec<RawPair>, BuildCounts)> = db
        .par_iter()
        .map(|view| project_view(view, sat, &georef, cam, grid, options.max_range))
        .collect();
    let mut counts = BuildCounts::default();
    let mut raw = Vec::new();
    for (pairs, c) in per_view {
        counts.samples += c.samples;
        counts.invalid_depth += c.invalid_depth;
        counts.out_of_range += c.out_of_range;
        counts.out_of_bounds += c.out_of_bounds;
        counts.kept += c.kept;
        raw.extend(pairs);
    }
    if raw.is_empty() {
        return Err(Error::EmptyDictionary);
    }

    let sat_dim = sat.channels();
    let (ground_stats, sat_stats) = if options.standardize {
        (
            ChannelStats::from_samples(ground_dim, raw.iter().map(|p| p.ground.as_slice())),
            ChannelStats::from_samples(sat_dim, raw.iter().map(|p| p.sat.as_slice())),
        )
    } else {
        (ChannelStats::identity(ground_dim), ChannelStats::identity(sat_dim))
    };

    let entries: Vec<DictEntry> = raw
        .into_iter()
        .enumerate()
        .map(|(i, mut p)| {
            ground_stats.apply_in_place(&mut p.ground);
            sat_stats.apply_in_place(&mut p.sat);
            DictEntry {
                id: i as EntryId,
                ground_feat: FeatureVector(p.ground),
                sat_feat: FeatureVector(p.sat),
                location: p.location,
                source_image: p.source,
            }
        })
        .collect();
    let sat_map = sat.standardized(&sat_stats)?;
    let feature_config = FeatureConfig {
        ground_pipeline: options.ground_pipeline.clone(),
        sat_pipeline: options.sat_pipeline.clone(),
        standardize: options.standardize,
        max_range: options.max_range,
        ground_stats,
        sat_stats,
    };
    let dict = Dictionary::from_parts(entries, sat_map, georef, feature_config)?;
    Ok((dict, counts))
}

impl Dictionary {
    /// Assembles a dictionary from standardized parts and builds both indexes.
    pub fn from_parts(
        entries: Vec<DictEntry>,
        sat_map: FeatureMap,
        georef: SatGeoref,
        feature_config: FeatureConfig,
    ) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyDictionary);
        }
        let gd = entries[0].ground_feat.dim();
        let sd = entries[0].sat_feat.dim();
        for e in &entries {
            if e.ground_feat.dim() != gd {
                return Err(Error::DimensionMismatch {
                    expected: gd,
                    actual: e.ground_feat.dim(),
                });
            }
            if e.sat_feat.dim() != sd {
                return Err(Error::DimensionMismatch {
                    expected: sd,
                    actual: e.sat_feat.dim(),
                });
            }
        }
        if sat_map.channels() != sd {
            return Err(Error::DimensionMismatch {
                expected: sd,
                actual: sat_map.channels(),
            });
        }
        let ground_index = index_over(&entries, |e| &e.ground_feat)?;
        let sat_index = index_over(&entries, |e| &e.sat_feat)?;
        Ok(Dictionary {
            entries,
            ground_index,
            sat_index,
            sat_map,
            georef,
            feature_config,
        })
    }

    pub fn entries(&self) -> &[DictEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ground_index(&self) -> &NeighborIndex {
        &self.ground_index
    }

    pub fn sat_index(&self) -> &NeighborIndex {
        &self.sat_index
    }

    /// Dense standardized satellite features.
    pub fn sat_map(&self) -> &FeatureMap {
        &self.sat_map
    }

    pub fn georef(&self) -> &SatGeoref {
        &self.georef
    }

    pub fn feature_config(&self) -> &FeatureConfig {
        &self.feature_config
    }

    pub fn ground_dim(&self) -> usize {
        self.entries[0].ground_feat.dim()
    }

    pub fn sat_dim(&self) -> usize {
        self.entries[0].sat_feat.dim()
    }

    /// Ground features as f64 rows, in entry order.
    pub fn ground_features(&self) -> Vec<Vec<f64>> {
        self.entries.iter().map(|e| e.ground_feat.to_f64()).collect()
    }

    pub fn sat_features(&self) -> Vec<Vec<f64>> {
        self.entries.iter().map(|e| e.sat_feat.to_f64()).collect()
    }

    pub fn locations(&self) -> Vec<WorldPoint> {
        self.entries.iter().map(|e| e.location).collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(DICT_MAGIC);
        out.extend_from_slice(&DICT_VERSION.to_le_bytes());
        let config = self.feature_config.to_text();
        out.extend_from_slice(&(config.len() as u32).to_le_bytes());
        out.extend_from_slice(config.as_bytes());
        let g = &self.georef;
        out.extend_from_slice(&g.origin_x.to_le_bytes());
        out.extend_from_slice(&g.origin_y.to_le_bytes());
        out.extend_from_slice(&g.meters_per_pixel.to_le_bytes());
        out.extend_from_slice(&g.image_w.to_le_bytes());
        out.extend_from_slice(&g.image_h.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.ground_dim() as u32).to_le_bytes());
        out.extend_from_slice(&(self.sat_dim() as u32).to_le_bytes());
        for e in &self.entries {
            out.extend_from_slice(&e.id.to_le_bytes());
            out.extend_from_slice(&e.location.x.to_le_bytes());
            out.extend_from_slice(&e.location.y.to_le_bytes());
            out.extend_from_slice(&e.source_image.to_le_bytes());
            for v in e.ground_feat.as_slice().iter().chain(e.sat_feat.as_slice()) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let fmap = self.sat_map.to_fmap_bytes();
        out.extend_from_slice(&(fmap.len() as u64).to_le_bytes());
        out.extend_from_slice(&fmap);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != DICT_MAGIC {
            return Err(Error::format(0, "bad magic, expected `GSDC`"));
        }
        let version = r.u32()?;
        if version != DICT_VERSION {
            return Err(Error::format(4, format!("unsupported dictionary version {version}")));
        }
        let config_len = r.u32()? as usize;
        let config_at = r.pos;
        let config_text = std::str::from_utf8(r.take(config_len)?)
            .map_err(|_| Error::format(config_at, "feature config is not UTF-8"))?;
        let feature_config = FeatureConfig::from_text(config_text).map_err(|m| Error::format(config_at, m))?;
        let georef = SatGeoref {
            origin_x: r.f64()?,
            origin_y: r.f64()?,
            meters_per_pixel: r.f64()?,
            image_w: r.u32()?,
            image_h: r.u32()?,
        };
        georef
            .validate()
            .map_err(|e| Error::format(config_at + config_len, e.to_string()))?;
        let count = r.u32()? as usize;
        let gd = r.u32()? as usize;
        let sd = r.u32()? as usize;
        let mut entries = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            let id = r.u32()?;
            let location = WorldPoint::new(r.f64()?, r.f64()?);
            let source_image = r.u32()?;
            let ground = (0..gd).map(|_| r.f32()).collect::<Result<Vec<_>>>()?;
            let sat = (0..sd).map(|_| r.f32()).collect::<Result<Vec<_>>>()?;
            entries.push(DictEntry {
                id,
                ground_feat: FeatureVector(ground),
                sat_feat: FeatureVector(sat),
                location,
                source_image,
            });
        }
        let fmap_len = r.u64()? as usize;
        let fmap_at = r.pos;
        let sat_map = FeatureMap::from_fmap_bytes(r.take(fmap_len)?).map_err(|e| match e {
            Error::Format { offset, message } => Error::format(fmap_at + offset, message),
            other => other,
        })?;
        if r.pos != bytes.len() {
            return Err(Error::format(r.pos, "trailing bytes after dictionary"));
        }
        Dictionary::from_parts(entries, sat_map, georef, feature_config)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

pub fn save_dictionary(dict: &Dictionary, path: &Path) -> Result<()> {
    dict.save(path)
}

pub fn load_dictionary(path: &Path) -> Result<Dictionary> {
    Dictionary::load(path)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                Error::format(
                    self.pos,
                    format!("truncated: need {n} bytes, {} left", self.bytes.len() - self.pos),
                )
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}
