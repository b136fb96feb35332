use rand::Rng;

use crate::error::{Error, Result};
use crate::seed;

/// Personal-model accuracy minus personal-baseline accuracy. May be negative.
pub fn user_lift(model_accuracy: f64, baseline_accuracy: f64) -> f64 {
    model_accuracy - baseline_accuracy
}

/// One-sided sign-flip permutation test of `mean(lifts) > 0`.
///
/// Draws `permutations` random sign assignments and returns
/// `(1 + #{flipped mean >= observed mean}) / (permutations + 1)`. The lifts are
/// sorted first, so the result does not depend on their input order.
pub fn permutation_test_mean_gt_zero(lifts: &[f64], permutations: usize, seed_value: u64) -> Result<f64> {
    if lifts.len() < 2 {
        return Err(Error::InvalidData(format!(
            "permutation test needs at least 2 lifts, got {}",
            lifts.len()
        )));
    }
    if permutations == 0 {
        return Err(Error::Config("permutation count must be positive".into()));
    }
    if lifts.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("non-finite lift".into()));
    }
    let mut sorted = lifts.to_vec();
    sorted.sort_by(f64::total_cmp);
    let observed: f64 = sorted.iter().sum();
    // Sums that equal the observed one in exact arithmetic can differ in the
    // last bits; count them as ties.
    let slack = 1e-12 * sorted.iter().map(|v| v.abs()).sum::<f64>();

    let mut rng = seed::rng(seed_value);
    let mut at_least = 0usize;
    for _ in 0..permutations {
        let flipped: f64 = sorted
            .iter()
            .map(|&v| if rng.random::<bool>() { v } else { -v })
            .sum();
        if flipped >= observed - slack {
            at_least += 1;
        }
    }
    Ok((1 + at_least) as f64 / (permutations + 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lift_examples() {
        assert!((user_lift(0.854, 0.513) - 0.341).abs() < 1e-12);
        assert_eq!(user_lift(0.6, 0.6), 0.0);
        assert!((user_lift(0.4, 0.5) + 0.1).abs() < 1e-12);
    }

    #[test]
    fn zero_lifts_give_one() {
        assert_eq!(permutation_test_mean_gt_zero(&[0.0; 16], 10_000, 3).unwrap(), 1.0);
    }

    #[test]
    fn constant_positive_lifts() {
        let p = permutation_test_mean_gt_zero(&[0.3; 16], 10_000, 3).unwrap();
        assert!(p < 0.001, "{p}");
        assert!(p >= 1.0 / 10_001.0);
    }

    #[test]
    fn order_invariant() {
        let lifts = [0.2, -0.05, 0.31, 0.02, 0.14, -0.11, 0.4, 0.05];
        let mut rev = lifts;
        rev.reverse();
        let a = permutation_test_mean_gt_zero(&lifts, 5000, 11).unwrap();
        assert_eq!(a, permutation_test_mean_gt_zero(&rev, 5000, 11).unwrap());
        assert!(a > 0.0 && a <= 1.0);
    }

    #[test]
    fn needs_two_lifts() {
        assert!(permutation_test_mean_gt_zero(&[0.3], 1000, 0).is_err());
    }
}
