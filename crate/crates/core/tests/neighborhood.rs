//! Windows whose features carry no class information but are correlated with
//! their temporal neighbours. Random folds reward memorizing neighbours; block
//! folds do not.

use gaitmood::eval::{block_cv, stratified_repeated_cv, EvalConfig, UserDataset};
use gaitmood::models::{ForestParams, ModelKind, ModelSpec};
use gaitmood::synth::standard_normal;
use gaitmood::{seed, Condition};
use ndarray::Array2;

const PER_CLASS: usize = 200;
const DIMS: usize = 3;

/// Each class segment is an independent stationary AR(1) walk.
fn autocorrelated_user(phi: f64, seed_value: u64) -> UserDataset {
    let mut rng = seed::rng(seed_value);
    let n = 2 * PER_CLASS;
    let mut x = Array2::zeros((n, DIMS));
    for segment in 0..2 {
        let mut state = [0.0; DIMS];
        for s in &mut state {
            *s = standard_normal(&mut rng);
        }
        for t in 0..PER_CLASS {
            for (d, s) in state.iter_mut().enumerate() {
                *s = phi * *s + (1.0 - phi * phi).sqrt() * standard_normal(&mut rng);
                x[[segment * PER_CLASS + t, d]] = *s;
            }
        }
    }
    UserDataset {
        participant_id: "ar".into(),
        condition: Condition::new(1).unwrap(),
        x,
        y: (0..n).map(|i| if i < PER_CLASS { 0 } else { 2 }).collect(),
        window_index: (0..n).map(|i| i % PER_CLASS).collect(),
    }
}

fn forest() -> Vec<ModelSpec> {
    vec![ModelSpec::Forest(ForestParams {
        n_trees: 30,
        ..ForestParams::default()
    })]
}

fn config() -> EvalConfig {
    EvalConfig {
        repeats: 2,
        permutations: 1000,
        ..EvalConfig::default()
    }
}

fn forest_accuracy(r: &gaitmood::eval::UserResult) -> f64 {
    r.model(ModelKind::Forest).unwrap().accuracy.mean
}

#[test]
fn random_folds_reward_neighbours() {
    let (mut random, mut blocks) = (0.0, 0.0);
    for s in 1..=3 {
        let user = autocorrelated_user(0.9, s);
        random += forest_accuracy(&stratified_repeated_cv(&user, &forest(), &config()).unwrap()) / 3.0;
        blocks += forest_accuracy(&block_cv(&user, &forest(), &config()).unwrap()) / 3.0;
    }
    assert!(random > 0.7, "random folds {random}");
    assert!(random - blocks > 0.15, "random {random} vs blocks {blocks}");
}

#[test]
fn independent_windows_stay_at_chance() {
    let user = autocorrelated_user(0.0, 2);
    let random = forest_accuracy(&stratified_repeated_cv(&user, &forest(), &config()).unwrap());
    assert!((0.4..=0.6).contains(&random), "random folds {random}");
}
