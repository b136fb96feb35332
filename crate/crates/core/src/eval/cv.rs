use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::metrics::{accuracy, macro_f1, roc_auc};
use super::{EvalConfig, MetricSummary, ModelResult, Protocol, UserDataset, UserResult};
use crate::error::{Error, Result};
use crate::models::{train, ModelKind, ModelSpec};
use crate::seed;

/// Contiguous blocks per class in [`block_cv`].
pub const BLOCKS_PER_CLASS: usize = 5;

/// Stream tag separating leave-one-user-out seeds from repeat indices.
const LOUO_TAG: u64 = 0x4C4F_554F;
const BLOCK_TAG: u64 = 0x424C_4F43;

/// Baseline first, then the requested models in order. Each kind may appear once.
pub fn model_lineup(models: &[ModelSpec]) -> Result<Vec<ModelSpec>> {
    let mut lineup = vec![ModelSpec::Baseline];
    for m in models {
        if m.kind() == ModelKind::Baseline {
            continue;
        }
        if lineup.iter().any(|l| l.kind() == m.kind()) {
            return Err(Error::Config(format!("model {} listed twice", m.kind())));
        }
        m.validate()?;
        lineup.push(*m);
    }
    Ok(lineup)
}

/// Fold id per sample for one repeat.
///
/// Each class's members are shuffled (classes in ascending order, one RNG
/// stream), the shuffled lists are concatenated and position `i` goes to fold
/// `i % folds`. Every fold then holds `floor` or `ceil` of `n_c / folds` of
/// each class `c`.
pub fn stratified_assignment(labels: &[usize], folds: usize, shuffle_seed: u64) -> Vec<usize> {
    let mut rng = seed::rng(shuffle_seed);
    let mut classes = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let mut order = Vec::with_capacity(labels.len());
    for c in classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        members.shuffle(&mut rng);
        order.extend(members);
    }
    let mut fold_of = vec![0; labels.len()];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % folds;
    }
    fold_of
}

/// Sizes of `parts` contiguous blocks covering `n` items; earlier blocks take
/// the remainder.
pub fn block_sizes(n: usize, parts: usize) -> Vec<usize> {
    let base = n / parts;
    let extra = n % parts;
    (0..parts).map(|b| base + usize::from(b < extra)).collect()
}

struct FoldScore {
    accuracy: f64,
    macro_f1: f64,
    auc: Option<f64>,
    importances: Option<Vec<f64>>,
}

struct Split<'a> {
    train_x: ArrayView2<'a, f64>,
    train_y: &'a [usize],
    test_x: ArrayView2<'a, f64>,
    test_y: &'a [usize],
}

/// Trains and scores every model of the lineup on one split.
///
/// `auc_positive` names the positive class when ROC AUC applies.
fn score_split(
    split: &Split<'_>,
    lineup: &[ModelSpec],
    f1_classes: &[usize],
    auc_positive: Option<usize>,
    fold_seed: u64,
) -> Result<Vec<FoldScore>> {
    lineup
        .iter()
        .map(|spec| {
            let model_seed = seed::derive(fold_seed, &[spec.kind() as u64]);
            let model = train(spec, split.train_x, split.train_y, model_seed)?;
            let proba = model.predict_proba(split.test_x)?;
            let pred = model.predict(split.test_x)?;
            let auc = match auc_positive {
                Some(pos) => {
                    let truth: Vec<bool> = split.test_y.iter().map(|&l| l == pos).collect();
                    let scores: Vec<f64> = match model.classes.iter().position(|&c| c == pos) {
                        Some(col) => proba.column(col).to_vec(),
                        None => vec![0.0; pred.len()],
                    };
                    Some(roc_auc(&truth, &scores)?)
                }
                None => None,
            };
            Ok(FoldScore {
                accuracy: accuracy(split.test_y, &pred)?,
                macro_f1: macro_f1(split.test_y, &pred, f1_classes)?,
                auc,
                importances: model.feature_importances().map(<[f64]>::to_vec),
            })
        })
        .collect()
}

fn summarize(lineup: &[ModelSpec], folds: Vec<Vec<FoldScore>>) -> Vec<ModelResult> {
    let mut results: Vec<ModelResult> = lineup
        .iter()
        .enumerate()
        .map(|(m, spec)| {
            let scores: Vec<&FoldScore> = folds.iter().map(|f| &f[m]).collect();
            let acc: Vec<f64> = scores.iter().map(|s| s.accuracy).collect();
            let f1: Vec<f64> = scores.iter().map(|s| s.macro_f1).collect();
            let auc: Option<Vec<f64>> = scores.iter().map(|s| s.auc).collect();
            let importances = scores[0].importances.as_ref().map(|first| {
                let mut mean = vec![0.0; first.len()];
                for s in &scores {
                    for (acc, v) in mean.iter_mut().zip(s.importances.as_ref().expect("forest")) {
                        *acc += v;
                    }
                }
                let n = scores.len() as f64;
                mean.iter_mut().for_each(|v| *v /= n);
                mean
            });
            ModelResult {
                model: spec.kind(),
                accuracy: MetricSummary::of(&acc),
                macro_f1: MetricSummary::of(&f1),
                roc_auc: auc.map(|a| MetricSummary::of(&a)),
                user_lift: None,
                importances,
                fold_accuracies: acc,
            }
        })
        .collect();
    let baseline = results[0].accuracy.mean;
    for r in results.iter_mut().skip(1) {
        r.user_lift = Some(super::lift::user_lift(r.accuracy.mean, baseline));
    }
    results
}

fn take_rows(x: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    x.select(Axis(0), idx)
}

fn take_labels(y: &[usize], idx: &[usize]) -> Vec<usize> {
    idx.iter().map(|&i| y[i]).collect()
}

fn user_stream(config: &EvalConfig, participant: &str) -> u64 {
    seed::derive(config.master_seed, &[seed::fnv1a(participant)])
}

/// Personal-model evaluation by stratified k-fold cross-validation repeated
/// `config.repeats` times. The baseline is always evaluated, on the same
/// folds as every other model.
pub fn stratified_repeated_cv(
    data: &UserDataset,
    models: &[ModelSpec],
    config: &EvalConfig,
) -> Result<UserResult> {
    config.validate()?;
    let lineup = model_lineup(models)?;
    let classes = data.classes();
    for cc in data.class_counts() {
        if cc.count < config.folds {
            return Err(Error::Protocol(format!(
                "participant {}: class {} has {} windows, fewer than {} folds",
                data.participant_id, cc.class, cc.count, config.folds
            )));
        }
    }
    if classes.len() < 2 {
        return Err(Error::Protocol(format!(
            "participant {} has a single class",
            data.participant_id
        )));
    }
    let auc_positive = (classes.len() == 2).then(|| classes[1]);
    let user_seed = user_stream(config, &data.participant_id);

    let assignments: Vec<Vec<usize>> = (0..config.repeats)
        .map(|r| {
            if config.stratified {
                stratified_assignment(&data.y, config.folds, seed::derive(user_seed, &[r as u64]))
            } else {
                let mut rng = seed::rng(seed::derive(user_seed, &[r as u64]));
                let mut order: Vec<usize> = (0..data.len()).collect();
                order.shuffle(&mut rng);
                let mut fold_of = vec![0; data.len()];
                for (pos, &i) in order.iter().enumerate() {
                    fold_of[i] = pos % config.folds;
                }
                fold_of
            }
        })
        .collect();

    let units: Vec<(usize, usize)> = (0..config.repeats)
        .flat_map(|r| (0..config.folds).map(move |f| (r, f)))
        .collect();
    let folds = units
        .par_iter()
        .map(|&(r, f)| {
            let fold_of = &assignments[r];
            let (test_idx, train_idx): (Vec<usize>, Vec<usize>) =
                (0..data.len()).partition(|&i| fold_of[i] == f);
            let train_x = take_rows(&data.x, &train_idx);
            let test_x = take_rows(&data.x, &test_idx);
            let train_y = take_labels(&data.y, &train_idx);
            let test_y = take_labels(&data.y, &test_idx);
            let split = Split {
                train_x: train_x.view(),
                train_y: &train_y,
                test_x: test_x.view(),
                test_y: &test_y,
            };
            let fold_seed = seed::derive(user_seed, &[r as u64, f as u64]);
            score_split(&split, &lineup, &classes, auc_positive, fold_seed)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(UserResult {
        participant_id: data.participant_id.clone(),
        condition: data.condition,
        protocol: Protocol::Cv,
        n_windows: data.len(),
        class_counts: data.class_counts(),
        evaluations: units.len(),
        models: summarize(&lineup, folds),
    })
}

/// Test folds of [`block_cv`]: for each class in ascending order, its windows
/// in temporal order cut into [`BLOCKS_PER_CLASS`] contiguous blocks.
pub fn emotion_blocks(data: &UserDataset) -> Result<Vec<Vec<usize>>> {
    let classes = data.classes();
    if classes.len() != 2 {
        return Err(Error::Protocol(format!(
            "block cross-validation needs exactly two classes, participant {} has {}",
            data.participant_id,
            classes.len()
        )));
    }
    let mut blocks = Vec::with_capacity(2 * BLOCKS_PER_CLASS);
    for c in classes {
        let mut members: Vec<usize> = (0..data.len()).filter(|&i| data.y[i] == c).collect();
        if members.len() < BLOCKS_PER_CLASS {
            return Err(Error::Protocol(format!(
                "participant {}: class {c} has {} windows, fewer than {BLOCKS_PER_CLASS} blocks",
                data.participant_id,
                members.len()
            )));
        }
        members.sort_by_key(|&i| data.window_index[i]);
        let mut start = 0;
        for size in block_sizes(members.len(), BLOCKS_PER_CLASS) {
            blocks.push(members[start..start + size].to_vec());
            start += size;
        }
    }
    Ok(blocks)
}

/// Cross-validation whose test folds are contiguous single-emotion blocks.
///
/// Ten folds for a binary task; F1 is taken over the test block's class and
/// ROC AUC is not reported since every test fold holds one class.
pub fn block_cv(data: &UserDataset, models: &[ModelSpec], config: &EvalConfig) -> Result<UserResult> {
    config.validate()?;
    let lineup = model_lineup(models)?;
    let blocks = emotion_blocks(data)?;
    let user_seed = user_stream(config, &data.participant_id);
    let folds = blocks
        .par_iter()
        .enumerate()
        .map(|(f, test_idx)| {
            let mut in_test = vec![false; data.len()];
            for &i in test_idx {
                in_test[i] = true;
            }
            let train_idx: Vec<usize> = (0..data.len()).filter(|&i| !in_test[i]).collect();
            let train_x = take_rows(&data.x, &train_idx);
            let test_x = take_rows(&data.x, test_idx);
            let train_y = take_labels(&data.y, &train_idx);
            let test_y = take_labels(&data.y, test_idx);
            let split = Split {
                train_x: train_x.view(),
                train_y: &train_y,
                test_x: test_x.view(),
                test_y: &test_y,
            };
            let fold_seed = seed::derive(user_seed, &[BLOCK_TAG, f as u64]);
            score_split(&split, &lineup, &[test_y[0]], None, fold_seed)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(UserResult {
        participant_id: data.participant_id.clone(),
        condition: data.condition,
        protocol: Protocol::BlockCv,
        n_windows: data.len(),
        class_counts: data.class_counts(),
        evaluations: blocks.len(),
        models: summarize(&lineup, folds),
    })
}

/// Leave-one-user-out: each user is scored by models trained on all other
/// users. Returns one result per held-out user (a single evaluation each,
/// so fold standard deviations are 0).
pub fn louo_cv(users: &[UserDataset], models: &[ModelSpec], config: &EvalConfig) -> Result<Vec<UserResult>> {
    config.validate()?;
    if users.len() < 2 {
        return Err(Error::Protocol(format!(
            "leave-one-user-out needs at least 2 users, got {}",
            users.len()
        )));
    }
    let lineup = model_lineup(models)?;
    let mut classes: Vec<usize> = users.iter().flat_map(|u| u.y.iter().copied()).collect();
    classes.sort_unstable();
    classes.dedup();

    users
        .par_iter()
        .enumerate()
        .map(|(u, held_out)| {
            let others: Vec<_> = users
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != u)
                .map(|(_, d)| d)
                .collect();
            let views: Vec<_> = others.iter().map(|d| d.x.view()).collect();
            let train_x = concatenate(Axis(0), &views).map_err(|e| {
                Error::InvalidData(format!("users disagree on feature dimension: {e}"))
            })?;
            let train_y: Vec<usize> = others.iter().flat_map(|d| d.y.iter().copied()).collect();
            let split = Split {
                train_x: train_x.view(),
                train_y: &train_y,
                test_x: held_out.x.view(),
                test_y: &held_out.y,
            };
            let test_classes = held_out.classes();
            let auc_positive = (classes.len() == 2 && test_classes.len() == 2).then(|| classes[1]);
            let fold_seed = seed::derive(
                config.master_seed,
                &[seed::fnv1a(&held_out.participant_id), LOUO_TAG],
            );
            let scores = score_split(&split, &lineup, &classes, auc_positive, fold_seed)?;
            Ok(UserResult {
                participant_id: held_out.participant_id.clone(),
                condition: held_out.condition,
                protocol: Protocol::Louo,
                n_windows: held_out.len(),
                class_counts: held_out.class_counts(),
                evaluations: 1,
                models: summarize(&lineup, vec![scores]),
            })
        })
        .collect()
}
