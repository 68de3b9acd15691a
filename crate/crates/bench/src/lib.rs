//! Fixtures shared by the criterion benches.

use satloc::harness::experiment::build_dataset_dictionary;
use satloc::harness::{generate_world, Config, Dataset};
use satloc::localization::generate_candidates;
use satloc::{Dictionary, PathSample, QueryObservation};

/// A default-sized noisy world with its dictionary and path candidates.
pub struct Scene {
    pub cfg: Config,
    pub data: Dataset,
    pub dict: Dictionary,
    pub candidates: Vec<PathSample>,
}

impl Scene {
    pub fn new(seed: u64) -> Self {
        let mut cfg = Config::from_text("grid_interval = 8\ngrid_margin = 4\n").expect("bench config");
        cfg.seed = seed;
        let data = generate_world(&cfg.world, seed).expect("world").to_dataset();
        let dict = build_dataset_dictionary(&data, &cfg).expect("dictionary");
        let candidates = generate_candidates(&data.db_poses(), cfg.candidate_spacing).expect("candidates");
        Scene {
            cfg,
            data,
            dict,
            candidates,
        }
    }

    pub fn query(&self, i: usize) -> QueryObservation {
        let q = &self.data.queries[i];
        QueryObservation {
            features: q.features.clone(),
            depth: q.depth.clone(),
            camera: self.data.camera,
            pipeline: self.cfg.ground_features.clone(),
        }
    }
}

/// Uniform random vectors in the unit cube.
pub fn random_vectors(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| (0..dim).map(|_| rng.random::<f64>()).collect())
        .collect()
}
