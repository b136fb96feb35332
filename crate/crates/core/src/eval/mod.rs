//! Evaluation protocols, user lift, permutation testing and feature
//! importance aggregation.
//!
//! Randomness is derived per work unit from the master seed (see
//! [`crate::seed`]): the shuffle of repeat `r` for participant `p` uses
//! `derive(master, [fnv1a(p), r])`, and the model trained on fold `f` of that
//! repeat uses `derive(master, [fnv1a(p), r, f, model])`. Reports are
//! identical for any thread count.

pub mod cv;
pub mod importance;
pub mod lift;
pub mod metrics;
pub mod report;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::ingest::{Condition, Emotion};
use crate::models::ModelKind;

pub use cv::{block_cv, louo_cv, stratified_repeated_cv};
pub use importance::{importance_report, ImportanceReport};
pub use lift::{permutation_test_mean_gt_zero, user_lift};
pub use metrics::{accuracy, macro_f1, roc_auc};
pub use report::{aggregate_condition, ConditionReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub folds: usize,
    pub repeats: usize,
    pub stratified: bool,
    pub master_seed: u64,
    /// Sign assignments drawn by the permutation test.
    pub permutations: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            folds: 10,
            repeats: 10,
            stratified: true,
            master_seed: 0,
            permutations: 10_000,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::Config(format!("folds must be >= 2, got {}", self.folds)));
        }
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be >= 1".into()));
        }
        if self.permutations < 1000 {
            return Err(Error::Config(format!(
                "permutations must be >= 1000, got {}",
                self.permutations
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// Stratified k-fold cross-validation, repeated.
    Cv,
    /// Contiguous single-emotion test blocks.
    BlockCv,
    /// Leave one user out.
    Louo,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Cv => "cv",
            Protocol::BlockCv => "block_cv",
            Protocol::Louo => "louo",
        }
    }
}

/// One participant's windows as a design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct UserDataset {
    pub participant_id: String,
    pub condition: Condition,
    pub x: Array2<f64>,
    /// Class ids ([`Emotion::index`]).
    pub y: Vec<usize>,
    /// Temporal position of each window within its segment.
    pub window_index: Vec<usize>,
}

impl UserDataset {
    /// Builds a dataset from one participant's vectors, keeping only the
    /// requested emotions. Rows are ordered by emotion, then window index.
    pub fn from_vectors(vectors: &[FeatureVector], emotions: &[Emotion]) -> Result<Self> {
        let mut rows: Vec<&FeatureVector> =
            vectors.iter().filter(|v| emotions.contains(&v.label)).collect();
        if rows.is_empty() {
            return Err(Error::InvalidData("no windows for the requested emotions".into()));
        }
        rows.sort_by_key(|v| (v.label, v.window_index));
        let first = rows[0];
        if let Some(other) = rows.iter().find(|v| v.participant_id != first.participant_id) {
            return Err(Error::InvalidData(format!(
                "mixed participants {} and {}",
                first.participant_id, other.participant_id
            )));
        }
        let d = first.values.len();
        let mut flat = Vec::with_capacity(rows.len() * d);
        for r in &rows {
            if r.values.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: r.values.len(),
                });
            }
            flat.extend_from_slice(&r.values);
        }
        Ok(UserDataset {
            participant_id: first.participant_id.clone(),
            condition: first.condition,
            x: Array2::from_shape_vec((rows.len(), d), flat).expect("shape checked"),
            y: rows.iter().map(|v| v.label.index()).collect(),
            window_index: rows.iter().map(|v| v.window_index).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn classes(&self) -> Vec<usize> {
        let mut c = self.y.clone();
        c.sort_unstable();
        c.dedup();
        c
    }

    pub fn class_counts(&self) -> Vec<ClassCount> {
        self.classes()
            .into_iter()
            .map(|c| ClassCount {
                class: c,
                label: Emotion::from_index(c).map(|e| e.to_string()),
                count: self.y.iter().filter(|&&l| l == c).count(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCount {
    pub class: usize,
    pub label: Option<String>,
    pub count: usize,
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub std: f64,
}

impl MetricSummary {
    pub fn of(values: &[f64]) -> MetricSummary {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        MetricSummary {
            mean,
            std: var.sqrt(),
        }
    }
}

/// Per-model scores for one user. Standard deviations are across the
/// protocol's fold evaluations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResult {
    pub model: ModelKind,
    pub accuracy: MetricSummary,
    pub macro_f1: MetricSummary,
    /// Binary tasks with both classes in every test fold only.
    pub roc_auc: Option<MetricSummary>,
    /// Accuracy minus the baseline accuracy on the same folds; absent for the baseline.
    pub user_lift: Option<f64>,
    /// Mean forest importance over folds (forest only).
    pub importances: Option<Vec<f64>>,
    pub fold_accuracies: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserResult {
    pub participant_id: String,
    pub condition: Condition,
    pub protocol: Protocol,
    pub n_windows: usize,
    pub class_counts: Vec<ClassCount>,
    pub evaluations: usize,
    pub models: Vec<ModelResult>,
}

impl UserResult {
    pub fn model(&self, kind: ModelKind) -> Option<&ModelResult> {
        self.models.iter().find(|m| m.model == kind)
    }
}
