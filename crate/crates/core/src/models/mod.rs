//! Classifiers with a common train / predict contract.
//!
//! Labels are class ids (`usize`); when two classes tie, the smaller id wins.
//! For emotions the id is [`Emotion::index`](crate::Emotion::index), which
//! follows the lexicographic order of the label names.

pub mod baseline;
pub mod forest;
pub mod logreg;

use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use forest::{ForestParams, RandomForest};
pub use logreg::{LogisticRegression, LogregParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Baseline,
    Logreg,
    Forest,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Baseline => "baseline",
            ModelKind::Logreg => "logreg",
            ModelKind::Forest => "forest",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(ModelKind::Baseline),
            "logreg" => Ok(ModelKind::Logreg),
            "forest" => Ok(ModelKind::Forest),
            other => Err(Error::Config(format!("unknown model {other:?}"))),
        }
    }
}

/// Classifier configuration. The random seed is passed to [`train`]
/// separately so evaluation code can derive one per fold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Baseline,
    Logreg(LogregParams),
    Forest(ForestParams),
}

impl ModelSpec {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelSpec::Baseline => ModelKind::Baseline,
            ModelSpec::Logreg(_) => ModelKind::Logreg,
            ModelSpec::Forest(_) => ModelKind::Forest,
        }
    }

    pub fn default_for(kind: ModelKind) -> ModelSpec {
        match kind {
            ModelKind::Baseline => ModelSpec::Baseline,
            ModelKind::Logreg => ModelSpec::Logreg(LogregParams::default()),
            ModelKind::Forest => ModelSpec::Forest(ForestParams::default()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::Baseline => Ok(()),
            ModelSpec::Logreg(p) => p.validate(),
            ModelSpec::Forest(p) => p.validate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelState {
    Baseline(baseline::MajorityBaseline),
    Logreg(LogisticRegression),
    Forest(RandomForest),
}

/// A fitted classifier. Immutable after training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    /// Distinct training labels, ascending. Probability columns follow this order.
    pub classes: Vec<usize>,
    pub n_features: usize,
    pub state: ModelState,
}

/// Model file format version written by [`TrainedModel::to_json`].
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct PersistedModel {
    format_version: u32,
    model: TrainedModel,
}

pub(crate) fn check_finite(x: &ArrayView2<f64>) -> Result<()> {
    if let Some((idx, _)) = x.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::InvalidData(format!(
            "non-finite feature at row {}, column {}",
            idx.0, idx.1
        )));
    }
    Ok(())
}

/// Sorted distinct labels and the per-sample index into that list.
pub(crate) fn encode_labels(y: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut classes = y.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let encoded = y
        .iter()
        .map(|l| classes.binary_search(l).expect("label present"))
        .collect();
    (classes, encoded)
}

/// Index of the largest value; earliest index wins ties.
pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn train(spec: &ModelSpec, x: ArrayView2<f64>, y: &[usize], seed: u64) -> Result<TrainedModel> {
    spec.validate()?;
    if x.nrows() != y.len() {
        return Err(Error::InvalidData(format!(
            "{} feature rows but {} labels",
            x.nrows(),
            y.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::DegenerateTraining("no training samples".into()));
    }
    check_finite(&x)?;
    let (classes, encoded) = encode_labels(y);
    let state = match spec {
        ModelSpec::Baseline => ModelState::Baseline(baseline::MajorityBaseline::fit(&encoded, classes.len())),
        ModelSpec::Logreg(p) => {
            require_two_classes(&classes, y.len())?;
            ModelState::Logreg(LogisticRegression::fit(p, x, &encoded, classes.len())?)
        }
        ModelSpec::Forest(p) => {
            require_two_classes(&classes, y.len())?;
            ModelState::Forest(RandomForest::fit(p, x, &encoded, classes.len(), seed)?)
        }
    };
    Ok(TrainedModel {
        classes,
        n_features: x.ncols(),
        state,
    })
}

fn require_two_classes(classes: &[usize], n: usize) -> Result<()> {
    if n < 2 || classes.len() < 2 {
        return Err(Error::DegenerateTraining(format!(
            "need at least two classes, got {} over {n} samples",
            classes.len()
        )));
    }
    Ok(())
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        match self.state {
            ModelState::Baseline(_) => ModelKind::Baseline,
            ModelState::Logreg(_) => ModelKind::Logreg,
            ModelState::Forest(_) => ModelKind::Forest,
        }
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: x.ncols(),
            });
        }
        check_finite(x)
    }

    /// Class probabilities, one column per entry of `classes`.
    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        Ok(match &self.state {
            ModelState::Baseline(m) => m.predict_proba(x.nrows()),
            ModelState::Logreg(m) => m.predict_proba(x),
            ModelState::Forest(m) => m.predict_proba(x),
        })
    }

    /// Most probable label per row; ties go to the smallest label.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<usize>> {
        let proba = self.predict_proba(x)?;
        Ok(proba
            .rows()
            .into_iter()
            .map(|row| self.classes[argmax(row.as_slice().expect("contiguous row"))])
            .collect())
    }

    /// Forest feature importances (non-negative, summing to 1).
    pub fn feature_importances(&self) -> Option<&[f64]> {
        match &self.state {
            ModelState::Forest(f) => Some(&f.importances),
            _ => None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&PersistedModel {
            format_version: MODEL_FORMAT_VERSION,
            model: self.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<TrainedModel> {
        let p: PersistedModel = serde_json::from_str(text)?;
        if p.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::InvalidData(format!(
                "unsupported model format version {}",
                p.format_version
            )));
        }
        Ok(p.model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<TrainedModel> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        TrainedModel::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    fn two_blobs() -> (Array2<f64>, Vec<usize>) {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..30 {
            let t = i as f64 * 0.1;
            rows.push([1.0 + t.sin() * 0.3, 2.0 + t.cos() * 0.3]);
            y.push(0);
            rows.push([-1.0 + t.cos() * 0.3, -2.0 + t.sin() * 0.3]);
            y.push(2);
        }
        let x = Array2::from_shape_vec((rows.len(), 2), rows.concat()).unwrap();
        (x, y)
    }

    #[test]
    fn argmax_consistent_with_predict_for_all_kinds() {
        let (x, y) = two_blobs();
        for kind in [ModelKind::Baseline, ModelKind::Logreg, ModelKind::Forest] {
            let m = train(&ModelSpec::default_for(kind), x.view(), &y, 11).unwrap();
            let p = m.predict_proba(x.view()).unwrap();
            let pred = m.predict(x.view()).unwrap();
            for (row, label) in p.rows().into_iter().zip(&pred) {
                assert!((row.sum() - 1.0).abs() < 1e-9);
                assert_eq!(m.classes[argmax(row.as_slice().unwrap())], *label);
            }
        }
    }

    #[test]
    fn single_class_rejected() {
        let x = array![[0.0], [1.0], [2.0]];
        for kind in [ModelKind::Logreg, ModelKind::Forest] {
            let err = train(&ModelSpec::default_for(kind), x.view(), &[1, 1, 1], 0).unwrap_err();
            assert!(matches!(err, Error::DegenerateTraining(_)));
        }
        assert!(train(&ModelSpec::Baseline, x.view(), &[1, 1, 1], 0).is_ok());
    }

    #[test]
    fn non_finite_and_dimension_errors() {
        let x = array![[0.0, f64::NAN], [1.0, 1.0]];
        assert!(train(&ModelSpec::Baseline, x.view(), &[0, 1], 0).is_err());
        let (x, y) = two_blobs();
        let m = train(&ModelSpec::Baseline, x.view(), &y, 0).unwrap();
        let wrong = Array2::<f64>::zeros((2, 3));
        assert!(matches!(
            m.predict(wrong.view()),
            Err(Error::DimensionMismatch { expected: 2, got: 3 })
        ));
    }

    #[test]
    fn persistence_round_trip() {
        let (x, y) = two_blobs();
        let dir = tempfile::tempdir().unwrap();
        for kind in [ModelKind::Baseline, ModelKind::Logreg, ModelKind::Forest] {
            let m = train(&ModelSpec::default_for(kind), x.view(), &y, 5).unwrap();
            let path = dir.path().join(format!("{kind}.json"));
            m.save(&path).unwrap();
            let back = TrainedModel::load(&path).unwrap();
            assert_eq!(back, m);
            let probe = x.mapv(|v| v * 0.7 + 0.05);
            assert_eq!(back.predict_proba(probe.view()).unwrap(), m.predict_proba(probe.view()).unwrap());
        }
    }
}
