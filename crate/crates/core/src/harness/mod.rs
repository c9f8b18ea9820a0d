//! Seeded trials and Monte Carlo batches over a fixed experiment setup.

pub mod batch;
pub mod config;
pub mod output;
pub mod seed;
pub mod trial;

use thiserror::Error;

use crate::attack::AttackError;
use crate::bounds::BoundError;
use crate::consensus::ConsensusError;
use crate::detection::DetectionError;
use crate::graph::{AssumptionReport, GraphError};
use crate::trust::TrustError;

pub use batch::{empirical_vs_bounds, run_batch, summarize, BatchSummary, ComparisonRow};
pub use config::{ConfigError, ConfigMap, ExperimentConfig, TopologySource};
pub use trial::{run_trial, run_trial_with, ExperimentSetup, TrialOptions, TrialResult};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("setup: {0}")]
    Setup(String),
    #[error("topology: {0}")]
    Graph(#[from] GraphError),
    #[error("trust model: {0}")]
    Trust(#[from] TrustError),
    #[error("standing assumptions violated:\n{0}")]
    Assumption(Box<AssumptionReport>),
    #[error("detection: {0}")]
    Detection(#[from] DetectionError),
    #[error("consensus: {0}")]
    Consensus(#[from] ConsensusError),
    #[error("attack model: {0}")]
    Attack(#[from] AttackError),
    #[error("bounds: {0}")]
    Bound(#[from] BoundError),
    #[error("trial {index}: {source}")]
    Trial {
        index: usize,
        source: Box<HarnessError>,
    },
    #[error("io: {0}")]
    Io(String),
}
