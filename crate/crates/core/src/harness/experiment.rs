//! In-process pipeline: dictionary, projection learning and localization of
//! every query in a dataset.

use crate::dictionary::{build_dictionary, Dictionary};
use crate::error::{Error, Result};
use crate::harness::config::Config;
use crate::harness::eval::QueryEstimate;
use crate::harness::synth::{Dataset, QueryView};
use crate::learning::{learn_projection_with_report, Projection, TrainReport};
use crate::localization::{generate_candidates, GroundOnlyLocalizer, LocalizationResult, Localizer, QueryObservation};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Learned projections with satellite co-occurrence.
    Full,
    /// Co-occurrence with identity projections.
    NoProjection,
    /// Ground image retrieval only.
    GroundOnly,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Full => "full",
            Method::NoProjection => "no-projection",
            Method::GroundOnly => "ground-only",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projections {
    pub ground: Projection,
    pub sat: Projection,
}

impl Projections {
    pub fn identity(dict: &Dictionary) -> Self {
        Projections {
            ground: Projection::identity(dict.ground_dim()),
            sat: Projection::identity(dict.sat_dim()),
        }
    }
}

pub fn build_dataset_dictionary(data: &Dataset, cfg: &Config) -> Result<Dictionary> {
    build_dictionary(
        &data.database,
        &data.satellite,
        data.georef,
        &data.camera,
        &cfg.dict_grid,
        &cfg.dictionary_options(),
    )
}

/// Learns the ground and the satellite projection from dictionary entries.
pub fn train_projections(dict: &Dictionary, cfg: &Config) -> Result<(TrainReport, TrainReport)> {
    let locations = dict.locations();
    let tc = cfg.train_config();
    let ground = learn_projection_with_report(&dict.ground_features(), &locations, &tc)?;
    let sat = learn_projection_with_report(&dict.sat_features(), &locations, &tc)?;
    Ok((ground, sat))
}

fn observation(q: &QueryView, data: &Dataset, cfg: &Config) -> QueryObservation {
    QueryObservation {
        features: q.features.clone(),
        depth: q.depth.clone(),
        camera: data.camera,
        pipeline: cfg.ground_features.clone(),
    }
}

/// Localizes every query, in id order.
pub fn localize_dataset(
    data: &Dataset,
    dict: &Dictionary,
    method: Method,
    projections: Option<&Projections>,
    cfg: &Config,
) -> Result<Vec<(QueryEstimate, LocalizationResult)>> {
    let identity = Projections::identity(dict);
    let w = match (method, projections) {
        (Method::Full, Some(p)) => p,
        (Method::Full, None) => {
            return Err(Error::InvalidInput("the full method needs learned projections".into()));
        }
        (_, _) => &identity,
    };
    let db_poses = data.db_poses();
    let mut queries: Vec<&QueryView> = data.queries.iter().collect();
    queries.sort_by_key(|q| q.id);
    let results: Vec<LocalizationResult> = match method {
        Method::GroundOnly => {
            let loc = GroundOnlyLocalizer::new(dict, w.ground.clone(), cfg.query_grid, cfg.tau)?;
            queries
                .iter()
                .map(|q| loc.localize(&observation(q, data, cfg), &db_poses))
                .collect::<Result<_>>()?
        }
        Method::Full | Method::NoProjection => {
            let candidates = generate_candidates(&db_poses, cfg.candidate_spacing)?;
            let loc = Localizer::new(dict, w.ground.clone(), w.sat.clone(), cfg.localizer_config())?;
            queries
                .iter()
                .map(|q| loc.localize(&observation(q, data, cfg), &candidates))
                .collect::<Result<_>>()?
        }
    };
    Ok(queries
        .iter()
        .zip(results)
        .map(|(q, r)| {
            (
                QueryEstimate {
                    query_id: q.id,
                    estimate: r.estimate,
                    confidence: r.confidence,
                    inlier: r.inlier,
                },
                r,
            )
        })
        .collect())
}
