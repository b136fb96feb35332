use serde::{Deserialize, Serialize};

use super::UserResult;
use crate::error::{Error, Result};
use crate::features::percentile_sorted;
use crate::models::{ModelKind, TrainedModel};

/// Features flagged for plotting, by descending median.
pub const PLOTTED_FEATURES: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDistribution {
    pub feature: String,
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
    pub plotted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserImportance {
    pub participant_id: String,
    /// Mean fold importance divided by its maximum, in feature order.
    pub normalized: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub n_users: usize,
    /// Sorted by median, descending; ties keep feature order.
    pub features: Vec<FeatureDistribution>,
    pub users: Vec<UserImportance>,
}

/// Mean importance over the forests trained on a user's folds.
pub fn mean_fold_importances(models: &[TrainedModel]) -> Result<Vec<f64>> {
    let mut mean: Option<Vec<f64>> = None;
    for m in models {
        let imp = m.feature_importances().ok_or_else(|| {
            Error::Config(format!("feature importances need forest models, got {}", m.kind()))
        })?;
        let acc = mean.get_or_insert_with(|| vec![0.0; imp.len()]);
        if acc.len() != imp.len() {
            return Err(Error::DimensionMismatch {
                expected: acc.len(),
                got: imp.len(),
            });
        }
        for (a, v) in acc.iter_mut().zip(imp) {
            *a += v;
        }
    }
    let mut mean = mean.ok_or_else(|| Error::InvalidData("no models".into()))?;
    let n = models.len() as f64;
    mean.iter_mut().for_each(|v| *v /= n);
    Ok(mean)
}

/// Scales so the most important feature is exactly 1.
pub fn normalize_to_max(importances: &[f64]) -> Result<Vec<f64>> {
    let max = importances.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max > 0.0) {
        return Err(Error::InvalidData("importances have no positive entry".into()));
    }
    Ok(importances.iter().map(|v| v / max).collect())
}

/// Per-feature distribution of max-normalized importances across users.
pub fn importance_report(users: &[UserResult], model: ModelKind, feature_names: &[String]) -> Result<ImportanceReport> {
    if model != ModelKind::Forest {
        return Err(Error::Config(format!(
            "feature importances are only defined for forests, got {model}"
        )));
    }
    if users.is_empty() {
        return Err(Error::InvalidData("importance report over zero users".into()));
    }
    let per_user = users
        .iter()
        .map(|u| {
            let imp = u
                .model(ModelKind::Forest)
                .and_then(|m| m.importances.as_ref())
                .ok_or_else(|| {
                    Error::InvalidData(format!("participant {} has no forest importances", u.participant_id))
                })?;
            if imp.len() != feature_names.len() {
                return Err(Error::DimensionMismatch {
                    expected: feature_names.len(),
                    got: imp.len(),
                });
            }
            Ok(UserImportance {
                participant_id: u.participant_id.clone(),
                normalized: normalize_to_max(imp)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut features: Vec<FeatureDistribution> = feature_names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let mut values: Vec<f64> = per_user.iter().map(|u| u.normalized[j]).collect();
            values.sort_by(f64::total_cmp);
            FeatureDistribution {
                feature: name.clone(),
                min: values[0],
                q25: percentile_sorted(&values, 0.25),
                median: percentile_sorted(&values, 0.5),
                q75: percentile_sorted(&values, 0.75),
                max: values[values.len() - 1],
                plotted: false,
            }
        })
        .collect();
    features.sort_by(|a, b| b.median.total_cmp(&a.median));
    for f in features.iter_mut().take(PLOTTED_FEATURES) {
        f.plotted = true;
    }
    Ok(ImportanceReport {
        n_users: per_user.len(),
        features,
        users: per_user,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{MetricSummary, ModelResult, Protocol};
    use crate::ingest::Condition;
    use crate::models::{train, ModelSpec};
    use ndarray::array;

    fn user(id: &str, imp: Vec<f64>) -> UserResult {
        let summary = MetricSummary { mean: 0.5, std: 0.0 };
        UserResult {
            participant_id: id.into(),
            condition: Condition::new(1).unwrap(),
            protocol: Protocol::Cv,
            n_windows: 10,
            class_counts: vec![],
            evaluations: 1,
            models: vec![ModelResult {
                model: ModelKind::Forest,
                accuracy: summary,
                macro_f1: summary,
                roc_auc: None,
                user_lift: Some(0.0),
                importances: Some(imp),
                fold_accuracies: vec![0.5],
            }],
        }
    }

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("f{i}")).collect()
    }

    #[test]
    fn single_user_max_is_one() {
        let r = importance_report(&[user("a", vec![0.1, 0.6, 0.3])], ModelKind::Forest, &names(3)).unwrap();
        assert_eq!(r.users[0].normalized, vec![0.1 / 0.6, 1.0, 0.3 / 0.6]);
        assert_eq!(r.features[0].feature, "f1");
        assert_eq!(r.features[0].median, 1.0);
        assert!(r.features.iter().all(|f| f.plotted));
    }

    #[test]
    fn uniform_importances_all_one() {
        let r = importance_report(&[user("a", vec![0.25; 4]), user("b", vec![0.25; 4])], ModelKind::Forest, &names(4))
            .unwrap();
        for f in &r.features {
            assert_eq!((f.min, f.median, f.max), (1.0, 1.0, 1.0));
        }
        let order: Vec<&str> = r.features.iter().map(|f| f.feature.as_str()).collect();
        assert_eq!(order, vec!["f0", "f1", "f2", "f3"]);
    }

    #[test]
    fn distribution_across_users_and_top30() {
        let mut users = Vec::new();
        for u in 0..5 {
            let imp: Vec<f64> = (0..40).map(|j| if j == 7 { 1.0 } else { (j + u) as f64 / 100.0 }).collect();
            users.push(user(&format!("u{u}"), imp));
        }
        let r = importance_report(&users, ModelKind::Forest, &names(40)).unwrap();
        assert_eq!(r.features[0].feature, "f7");
        assert_eq!(r.features[0].median, 1.0);
        assert_eq!(r.features.iter().filter(|f| f.plotted).count(), PLOTTED_FEATURES);
        for w in r.features.windows(2) {
            assert!(w[0].median >= w[1].median);
        }
    }

    #[test]
    fn non_forest_rejected() {
        assert!(importance_report(&[user("a", vec![1.0])], ModelKind::Logreg, &names(1)).is_err());
        let x = array![[0.0], [1.0], [2.0], [3.0]];
        let lr = train(&ModelSpec::default_for(ModelKind::Logreg), x.view(), &[0, 0, 1, 1], 0).unwrap();
        assert!(mean_fold_importances(&[lr]).is_err());
        let rf = train(&ModelSpec::default_for(ModelKind::Forest), x.view(), &[0, 0, 1, 1], 0).unwrap();
        let mean = mean_fold_importances(&[rf.clone(), rf]).unwrap();
        assert_eq!(normalize_to_max(&mean).unwrap(), vec![1.0]);
    }
}
