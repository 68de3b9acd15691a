//! Synthetic worlds, evaluation, the experiment driver and the operations
//! behind the command-line tool.

pub mod commands;
pub mod config;
pub mod eval;
pub mod experiment;
pub mod synth;

pub use config::{Config, KnnMode};
pub use eval::{evaluate_localization, pr_sweep, EvalReport, PrCurve, PrPoint, QueryEstimate, TruthRow};
pub use experiment::{Method, Projections};
pub use synth::{generate_world, load_dataset, write_dataset, Dataset, SyntheticWorld, WorldParams};
