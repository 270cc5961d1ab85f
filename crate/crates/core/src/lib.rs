//! Simulated factoid worlds for studying hallucination in calibrated
//! generative models: fact distributions, calibration metrics, Good-Turing
//! estimators, baseline learners, bound evaluators and a seeded
//! experiment harness.

pub mod bounds;
pub mod calibration;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod io;
pub mod lms;
pub mod prob;
pub mod stats;
pub mod worlds;

pub use bounds::{BoundEvaluation, BoundParams};
pub use calibration::{BinningSpec, Partition};
pub use error::{Error, Result};
pub use estimators::TrainingSample;
pub use harness::{AggregateReport, BoundSettings, ExperimentConfig, TrialRecord};
pub use lms::LmAlgorithm;
pub use prob::{FactoidDist, FactoidSet, FactoidUniverse, SeededRng, BOTTOM};
pub use worlds::{WorldInstance, WorldModel};
