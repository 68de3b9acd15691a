//! Cross-view localization of ground images against a georeferenced satellite
//! feature map.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dictionary;
pub mod error;
pub mod features;
pub mod geometry;
pub mod harness;
pub mod kv;
pub mod learning;
pub mod localization;
pub mod neighbor_index;

pub use dictionary::{DatabaseView, DictEntry, Dictionary, FeatureConfig};
pub use error::{Error, Result};
pub use features::{FeatureMap, FeaturePipeline, GridSpec};
pub use geometry::{CameraIntrinsics, ImageId, PathSample, Pose2D, SatGeoref, WorldPoint};
pub use learning::{Projection, TrainConfig, TrainReport};
pub use localization::{GroundOnlyLocalizer, LocalizationResult, Localizer, LocalizerConfig, QueryObservation};
pub use neighbor_index::{NeighborHit, NeighborIndex, SearchMode};
