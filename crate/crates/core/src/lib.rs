//! Emotion recognition from wrist-worn motion and heart-rate data.
//!
//! The crate covers the whole offline pipeline: sensor-log ingestion,
//! mean filtering and sliding windows, a 107-dimensional per-window feature
//! vector, three classifiers (majority baseline, L2 logistic regression,
//! random forest), personal-model evaluation protocols with user lift and
//! permutation testing, feature-importance reporting, behavioral statistics
//! and a seeded synthetic-walk generator.

// `!(x > 0.0)` is used on purpose so NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod eval;
pub mod features;
pub mod ingest;
pub mod models;
pub mod pipeline;
pub mod preprocess;
pub mod seed;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
pub use features::{FeatureSet, FeatureVector};
pub use ingest::{Condition, Emotion, HeartRateSeries, SampleSeries, SensorKind, WalkSegment};
pub use models::{ModelKind, ModelSpec, TrainedModel};
