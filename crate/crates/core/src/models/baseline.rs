use ndarray::Array2;
use serde::{Deserialize, Serialize};

/// Predicts the most frequent training class for every input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MajorityBaseline {
    /// Training class frequencies, indexed like `TrainedModel::classes`.
    pub priors: Vec<f64>,
    /// Index of the majority class (smallest label on ties).
    pub majority: usize,
}

impl MajorityBaseline {
    pub fn fit(y: &[usize], n_classes: usize) -> Self {
        let mut counts = vec![0usize; n_classes];
        for &c in y {
            counts[c] += 1;
        }
        let majority = super::argmax(&counts.iter().map(|&c| c as f64).collect::<Vec<_>>());
        let n = y.len() as f64;
        MajorityBaseline {
            priors: counts.iter().map(|&c| c as f64 / n).collect(),
            majority,
        }
    }

    pub fn predict_proba(&self, n_rows: usize) -> Array2<f64> {
        Array2::from_shape_fn((n_rows, self.priors.len()), |(_, j)| self.priors[j])
    }
}
