//! Run configuration: plain-text `key = value` files with every key optional.

use std::path::Path;

use crate::dictionary::DictionaryOptions;
use crate::error::{Error, Result};
use crate::features::{FeaturePipeline, GridSpec};
use crate::harness::synth::WorldParams;
use crate::kv::KeyValues;
use crate::learning::{AdamParams, TrainConfig};
use crate::localization::LocalizerConfig;
use crate::neighbor_index::SearchMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KnnMode {
    Exact,
    Approximate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub seed: u64,
    /// Worker threads; 0 lets the pool decide.
    pub threads: usize,
    pub dict_grid: GridSpec,
    pub query_grid: GridSpec,
    pub max_range: f64,
    pub standardize: bool,
    pub ground_features: FeaturePipeline,
    pub sat_features: FeaturePipeline,
    pub knn_m: usize,
    pub knn_mode: KnnMode,
    /// Leaves inspected by approximate search; 0 means `64 * knn_m`.
    pub check_budget: usize,
    pub candidate_spacing: f64,
    pub neighborhood_size: usize,
    pub max_iter: usize,
    pub adam: AdamParams,
    pub tolerance: f64,
    pub max_train_points: usize,
    /// Output rows of the learned projections; 0 keeps them square.
    pub projection_dim: usize,
    pub tau: f64,
    pub inlier_radius: f64,
    pub world: WorldParams,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 0,
            threads: 0,
            dict_grid: GridSpec::default(),
            query_grid: GridSpec::default(),
            max_range: 50.0,
            standardize: true,
            ground_features: FeaturePipeline::precomputed(),
            sat_features: FeaturePipeline::precomputed(),
            knn_m: 10,
            knn_mode: KnnMode::Approximate,
            check_budget: 0,
            candidate_spacing: 1.0,
            neighborhood_size: 20,
            max_iter: 50,
            adam: AdamParams::default(),
            tolerance: 1e-4,
            max_train_points: 20000,
            projection_dim: 0,
            tau: 0.0,
            inlier_radius: 10.0,
            world: WorldParams::default(),
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
    value.parse().map_err(|_| format!("bad value for `{key}`: `{value}`"))
}

impl Config {
    pub fn from_text(text: &str) -> Result<Self> {
        let kv = KeyValues::parse(text).map_err(Error::Config)?;
        Self::from_key_values(&kv)
    }

    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let mut cfg = Config::default();
        for key in kv.keys() {
            cfg.set(key, kv.get_str(key).unwrap_or_default())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    /// Sets one key from its text value. Unknown keys are errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let r: std::result::Result<(), String> = (|| {
            match key {
                "seed" => self.seed = parse_value(key, value)?,
                "threads" => self.threads = parse_value(key, value)?,
                "grid_interval" => self.dict_grid.interval = parse_value(key, value)?,
                "grid_margin" => self.dict_grid.margin = parse_value(key, value)?,
                "query_grid_interval" => self.query_grid.interval = parse_value(key, value)?,
                "query_grid_margin" => self.query_grid.margin = parse_value(key, value)?,
                "max_range" => self.max_range = parse_value(key, value)?,
                "standardize" => self.standardize = parse_value(key, value)?,
                "ground_features" => self.ground_features = value.parse().map_err(|e: Error| e.to_string())?,
                "sat_features" => self.sat_features = value.parse().map_err(|e: Error| e.to_string())?,
                "knn_m" => self.knn_m = parse_value(key, value)?,
                "knn_mode" => {
                    self.knn_mode = match value {
                        "exact" => KnnMode::Exact,
                        "approximate" => KnnMode::Approximate,
                        _ => return Err(format!("knn_mode must be `exact` or `approximate`, got `{value}`")),
                    }
                }
                "check_budget" => self.check_budget = parse_value(key, value)?,
                "candidate_spacing" => self.candidate_spacing = parse_value(key, value)?,
                "neighborhood_size" => self.neighborhood_size = parse_value(key, value)?,
                "max_iter" => self.max_iter = parse_value(key, value)?,
                "learning_rate" => self.adam.learning_rate = parse_value(key, value)?,
                "beta1" => self.adam.beta1 = parse_value(key, value)?,
                "beta2" => self.adam.beta2 = parse_value(key, value)?,
                "adam_epsilon" => self.adam.epsilon = parse_value(key, value)?,
                "tolerance" => self.tolerance = parse_value(key, value)?,
                "max_train_points" => self.max_train_points = parse_value(key, value)?,
                "projection_dim" => self.projection_dim = parse_value(key, value)?,
                "tau" => self.tau = parse_value(key, value)?,
                "inlier_radius" => self.inlier_radius = parse_value(key, value)?,
                _ => match key.strip_prefix("world_") {
                    Some(rest) => self.world.set(rest, value)?,
                    None => return Err(format!("unknown config key `{key}`")),
                },
            }
            Ok(())
        })();
        r.map_err(Error::Config)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.dict_grid.interval == 0 || self.query_grid.interval == 0 {
            return bad("grid intervals must be >= 1".into());
        }
        if !(self.max_range > 0.0) {
            return bad(format!("max_range must be positive, got {}", self.max_range));
        }
        if self.knn_m == 0 {
            return bad("knn_m must be >= 1".into());
        }
        if !(self.candidate_spacing > 0.0 && self.candidate_spacing.is_finite()) {
            return bad(format!(
                "candidate_spacing must be positive, got {}",
                self.candidate_spacing
            ));
        }
        if !(self.tau >= 0.0) {
            return bad(format!("tau must be >= 0, got {}", self.tau));
        }
        if !(self.inlier_radius > 0.0) {
            return bad(format!("inlier_radius must be positive, got {}", self.inlier_radius));
        }
        self.train_config().validate()?;
        self.world.validate()
    }

    pub fn search_mode(&self) -> SearchMode {
        match self.knn_mode {
            KnnMode::Exact => SearchMode::Exact,
            KnnMode::Approximate if self.check_budget > 0 => SearchMode::Approximate {
                check_budget: self.check_budget,
            },
            KnnMode::Approximate => SearchMode::approximate_for(self.knn_m),
        }
    }

    pub fn dictionary_options(&self) -> DictionaryOptions {
        DictionaryOptions {
            ground_pipeline: self.ground_features.clone(),
            sat_pipeline: self.sat_features.clone(),
            standardize: self.standardize,
            max_range: self.max_range,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            max_iter: self.max_iter,
            neighborhood_size: self.neighborhood_size,
            adam: self.adam,
            tolerance: self.tolerance,
            seed: self.seed,
            max_train_points: self.max_train_points,
            output_dim: (self.projection_dim > 0).then_some(self.projection_dim),
        }
    }

    pub fn localizer_config(&self) -> LocalizerConfig {
        LocalizerConfig {
            knn_m: self.knn_m,
            search_mode: self.search_mode(),
            grid: self.query_grid,
            tau: self.tau,
        }
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        kv.insert("seed", self.seed);
        kv.insert("threads", self.threads);
        kv.insert("grid_interval", self.dict_grid.interval);
        kv.insert("grid_margin", self.dict_grid.margin);
        kv.insert("query_grid_interval", self.query_grid.interval);
        kv.insert("query_grid_margin", self.query_grid.margin);
        kv.insert("max_range", self.max_range);
        kv.insert("standardize", self.standardize);
        kv.insert("ground_features", &self.ground_features);
        kv.insert("sat_features", &self.sat_features);
        kv.insert("knn_m", self.knn_m);
        kv.insert(
            "knn_mode",
            match self.knn_mode {
                KnnMode::Exact => "exact",
                KnnMode::Approximate => "approximate",
            },
        );
        kv.insert("check_budget", self.check_budget);
        kv.insert("candidate_spacing", self.candidate_spacing);
        kv.insert("neighborhood_size", self.neighborhood_size);
        kv.insert("max_iter", self.max_iter);
        kv.insert("learning_rate", self.adam.learning_rate);
        kv.insert("beta1", self.adam.beta1);
        kv.insert("beta2", self.adam.beta2);
        kv.insert("adam_epsilon", self.adam.epsilon);
        kv.insert("tolerance", self.tolerance);
        kv.insert("max_train_points", self.max_train_points);
        kv.insert("projection_dim", self.projection_dim);
        kv.insert("tau", self.tau);
        kv.insert("inlier_radius", self.inlier_radius);
        for (k, v) in self.world.to_pairs() {
            kv.insert(&format!("world_{k}"), v);
        }
        kv
    }

    /// Every key with its effective value, one per line in key order.
    pub fn to_text(&self) -> String {
        self.to_key_values().to_text()
    }
}
