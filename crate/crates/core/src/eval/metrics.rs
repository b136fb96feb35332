use crate::error::{Error, Result};

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::InvalidData(format!("length mismatch: {a} vs {b}")));
    }
    if a == 0 {
        return Err(Error::InvalidData("empty label list".into()));
    }
    Ok(())
}

/// Fraction of exact matches.
pub fn accuracy(y_true: &[usize], y_pred: &[usize]) -> Result<f64> {
    check_lengths(y_true.len(), y_pred.len())?;
    let hits = y_true.iter().zip(y_pred).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / y_true.len() as f64)
}

/// Unweighted mean of per-class F1 over `classes`. A class with no true
/// positives scores 0.
pub fn macro_f1(y_true: &[usize], y_pred: &[usize], classes: &[usize]) -> Result<f64> {
    check_lengths(y_true.len(), y_pred.len())?;
    if classes.is_empty() {
        return Err(Error::InvalidData("macro F1 over an empty class list".into()));
    }
    if let Some(l) = y_true.iter().find(|l| !classes.contains(l)) {
        return Err(Error::InvalidData(format!("label {l} missing from class list")));
    }
    let total: f64 = classes
        .iter()
        .map(|&c| {
            let mut tp = 0usize;
            let mut fp = 0usize;
            let mut fn_ = 0usize;
            for (&t, &p) in y_true.iter().zip(y_pred) {
                match (t == c, p == c) {
                    (true, true) => tp += 1,
                    (false, true) => fp += 1,
                    (true, false) => fn_ += 1,
                    (false, false) => {}
                }
            }
            if tp == 0 {
                0.0
            } else {
                2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
            }
        })
        .sum();
    Ok(total / classes.len() as f64)
}

/// Area under the ROC curve as the Mann-Whitney probability
/// `P(score+ > score-) + P(tie) / 2`, computed from mid-ranks.
pub fn roc_auc(y_true: &[bool], scores: &[f64]) -> Result<f64> {
    check_lengths(y_true.len(), scores.len())?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidData("NaN score".into()));
    }
    let n_pos = y_true.iter().filter(|&&p| p).count();
    let n_neg = y_true.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedAuc(format!(
            "{n_pos} positive and {n_neg} negative samples"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let mid_rank = (i + j) as f64 / 2.0 + 1.0;
        let positives = order[i..=j].iter().filter(|&&k| y_true[k]).count();
        rank_sum_pos += mid_rank * positives as f64;
        i = j + 1;
    }
    let (p, q) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn accuracy_counts() {
        assert_eq!(accuracy(&[0, 1, 2], &[0, 1, 2]).unwrap(), 1.0);
        assert_eq!(accuracy(&[0, 1, 2], &[1, 2, 0]).unwrap(), 0.0);
        let t = vec![0; 100];
        let mut p = vec![1; 100];
        p[..51].fill(0);
        assert_eq!(accuracy(&t, &p).unwrap(), 0.51);
        assert!(accuracy(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn baseline_macro_f1_closed_forms() {
        // majority baseline on prevalence p scores p / (1 + p) over two classes
        let n = 1000;
        let p = 0.513;
        let n_major = 513;
        let y: Vec<usize> = (0..n).map(|i| usize::from(i >= n_major)).collect();
        let pred = vec![0; n];
        let f1 = macro_f1(&y, &pred, &[0, 1]).unwrap();
        assert!((f1 - p / (1.0 + p)).abs() < 1e-12);
        assert!((f1 - 0.339).abs() < 1e-3);

        let y: Vec<usize> = (0..1000).map(|i| if i < 343 { 0 } else if i < 672 { 1 } else { 2 }).collect();
        let f1 = macro_f1(&y, &[0; 1000], &[0, 1, 2]).unwrap();
        let p = 0.343;
        assert!((f1 - 2.0 * p / (1.0 + p) / 3.0).abs() < 1e-12);
        assert!((f1 - 0.170).abs() < 1e-3);
    }

    #[test]
    fn perfect_f1() {
        assert_eq!(macro_f1(&[0, 1, 1, 2], &[0, 1, 1, 2], &[0, 1, 2]).unwrap(), 1.0);
        assert!(macro_f1(&[3], &[3], &[0, 1]).is_err());
    }

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&[false, false, true, true], &[0.1, 0.2, 0.8, 0.9]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[true, false, true, false], &[0.5; 4]).unwrap(), 0.5);
        assert_eq!(roc_auc(&[true, false, true], &[0.9, 0.8, 0.3]).unwrap(), 0.5);
        assert!(matches!(roc_auc(&[true, true], &[0.1, 0.2]), Err(Error::UndefinedAuc(_))));
    }

    fn pair_count_auc(y: &[bool], s: &[f64]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..y.len() {
            for j in 0..y.len() {
                if y[i] && !y[j] {
                    den += 1.0;
                    if s[i] > s[j] {
                        num += 1.0;
                    } else if s[i] == s[j] {
                        num += 0.5;
                    }
                }
            }
        }
        num / den
    }

    proptest! {
        #[test]
        fn auc_matches_exhaustive_pairs(rows in prop::collection::vec((any::<bool>(), 0u8..6), 2..60)) {
            let y: Vec<bool> = rows.iter().map(|r| r.0).collect();
            let s: Vec<f64> = rows.iter().map(|r| f64::from(r.1) / 5.0).collect();
            prop_assume!(y.iter().any(|&v| v) && y.iter().any(|&v| !v));
            let fast = roc_auc(&y, &s).unwrap();
            prop_assert!((fast - pair_count_auc(&y, &s)).abs() < 1e-12);
        }
    }
}
