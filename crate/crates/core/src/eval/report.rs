use serde::{Deserialize, Serialize};

use super::lift::permutation_test_mean_gt_zero;
use super::{EvalConfig, MetricSummary, Protocol, UserResult};
use crate::error::{Error, Result};
use crate::features::FeatureSet;
use crate::ingest::Condition;
use crate::models::ModelKind;
use crate::seed;

const PERMUTATION_TAG: u64 = 0x5045_524D;

/// Seed of the lift permutation test for one condition and model.
pub fn lift_test_seed(master_seed: u64, condition: Condition, model: ModelKind) -> u64 {
    seed::derive(master_seed, &[u64::from(condition.get()), model as u64, PERMUTATION_TAG])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserLift {
    pub participant_id: String,
    pub lift: f64,
}

/// One model's scores across a condition's users. Means are unweighted over
/// users; standard deviations are population deviations across users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelAggregate {
    pub model: ModelKind,
    pub accuracy: MetricSummary,
    pub macro_f1: MetricSummary,
    /// Present when every user has an AUC.
    pub roc_auc: Option<MetricSummary>,
    pub mean_user_lift: Option<f64>,
    /// Sign-flip test of mean lift > 0; needs at least two users.
    pub lift_p_value: Option<f64>,
    pub user_lifts: Vec<UserLift>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub condition: Condition,
    pub feature_set: FeatureSet,
    pub protocol: Protocol,
    pub n_users: usize,
    pub models: Vec<ModelAggregate>,
}

/// Aggregates the users of one condition. `users` may hold other conditions;
/// they are skipped.
pub fn aggregate_condition(
    users: &[UserResult],
    condition: Condition,
    feature_set: FeatureSet,
    config: &EvalConfig,
) -> Result<ConditionReport> {
    let members: Vec<&UserResult> = users.iter().filter(|u| u.condition == condition).collect();
    let first = members
        .first()
        .ok_or_else(|| Error::InvalidData(format!("no users in condition {condition}")))?;
    let protocol = first.protocol;
    if let Some(u) = members.iter().find(|u| u.protocol != protocol) {
        return Err(Error::InvalidData(format!(
            "participant {} was evaluated with {} but the condition uses {}",
            u.participant_id,
            u.protocol.as_str(),
            protocol.as_str()
        )));
    }
    let kinds: Vec<ModelKind> = first.models.iter().map(|m| m.model).collect();

    let models = kinds
        .iter()
        .map(|&kind| {
            let results = members
                .iter()
                .map(|u| {
                    u.model(kind).ok_or_else(|| {
                        Error::InvalidData(format!("participant {} lacks model {kind}", u.participant_id))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let acc: Vec<f64> = results.iter().map(|r| r.accuracy.mean).collect();
            let f1: Vec<f64> = results.iter().map(|r| r.macro_f1.mean).collect();
            let auc: Option<Vec<f64>> = results.iter().map(|r| r.roc_auc.map(|a| a.mean)).collect();
            let user_lifts: Vec<UserLift> = members
                .iter()
                .zip(&results)
                .filter_map(|(u, r)| {
                    r.user_lift.map(|lift| UserLift {
                        participant_id: u.participant_id.clone(),
                        lift,
                    })
                })
                .collect();
            let lifts: Vec<f64> = user_lifts.iter().map(|l| l.lift).collect();
            let mean_user_lift = (!lifts.is_empty()).then(|| lifts.iter().sum::<f64>() / lifts.len() as f64);
            let lift_p_value = if lifts.len() >= 2 {
                let s = lift_test_seed(config.master_seed, condition, kind);
                Some(permutation_test_mean_gt_zero(&lifts, config.permutations, s)?)
            } else {
                None
            };
            Ok(ModelAggregate {
                model: kind,
                accuracy: MetricSummary::of(&acc),
                macro_f1: MetricSummary::of(&f1),
                roc_auc: auc.filter(|a| !a.is_empty()).map(|a| MetricSummary::of(&a)),
                mean_user_lift,
                lift_p_value,
                user_lifts,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ConditionReport {
        condition,
        feature_set,
        protocol,
        n_users: members.len(),
        models,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::ModelResult;

    fn result(kind: ModelKind, acc: f64, lift: Option<f64>) -> ModelResult {
        ModelResult {
            model: kind,
            accuracy: MetricSummary { mean: acc, std: 0.0 },
            macro_f1: MetricSummary { mean: acc, std: 0.0 },
            roc_auc: Some(MetricSummary { mean: acc, std: 0.0 }),
            user_lift: lift,
            importances: None,
            fold_accuracies: vec![acc],
        }
    }

    fn user(id: &str, cond: u8, base: f64, forest: f64) -> UserResult {
        UserResult {
            participant_id: id.into(),
            condition: Condition::new(cond).unwrap(),
            protocol: Protocol::Cv,
            n_windows: 100,
            class_counts: vec![],
            evaluations: 100,
            models: vec![
                result(ModelKind::Baseline, base, None),
                result(ModelKind::Forest, forest, Some(forest - base)),
            ],
        }
    }

    #[test]
    fn unweighted_means_over_condition() {
        let users = vec![
            user("a", 1, 0.5, 0.9),
            user("b", 1, 0.5, 0.7),
            user("c", 2, 0.5, 0.1),
        ];
        let c1 = Condition::new(1).unwrap();
        let r = aggregate_condition(&users, c1, FeatureSet::AccGyroHr, &EvalConfig::default()).unwrap();
        assert_eq!(r.n_users, 2);
        let rf = &r.models[1];
        assert!((rf.accuracy.mean - 0.8).abs() < 1e-12);
        assert!((rf.accuracy.std - 0.1).abs() < 1e-12);
        assert!((rf.mean_user_lift.unwrap() - 0.3).abs() < 1e-12);
        assert_eq!(rf.user_lifts.len(), 2);
        assert!(rf.lift_p_value.unwrap() > 0.0);
        assert!(r.models[0].mean_user_lift.is_none());
        assert_eq!(r.models[0].accuracy.std, 0.0);
    }

    #[test]
    fn empty_condition_is_error() {
        let users = vec![user("a", 1, 0.5, 0.9)];
        let c3 = Condition::new(3).unwrap();
        assert!(aggregate_condition(&users, c3, FeatureSet::AccGyroHr, &EvalConfig::default()).is_err());
    }
}
