//! Per-window feature extraction.
//!
//! Canonical order of the full 107-dimensional vector:
//!
//! 1. the 17 statistics of [`AXIS_STAT_NAMES`] for `acc_x`, `acc_y`, `acc_z`,
//!    then `gyro_x`, `gyro_y`, `gyro_z` (102 values);
//! 2. `acc_angle_x`, `acc_angle_y`, `acc_angle_z`;
//! 3. `acc_magnitude_std`;
//! 4. `hr`.
//!
//! Reduced feature sets drop the gyroscope block and/or the heart rate but
//! keep the remaining order.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Condition, Emotion};
use crate::preprocess::{WindowBundle, WindowMatrix};

pub const AXIS_STAT_COUNT: usize = 17;

pub const AXIS_STAT_NAMES: [&str; AXIS_STAT_COUNT] = [
    "mean", "std", "max", "min", "energy", "kurtosis", "skewness", "rms", "rss", "sum", "sum_abs",
    "mean_abs", "range", "median", "q75", "q25", "mad",
];

const ACC_AXES: [&str; 3] = ["acc_x", "acc_y", "acc_z"];
const GYRO_AXES: [&str; 3] = ["gyro_x", "gyro_y", "gyro_z"];
const ANGLE_NAMES: [&str; 3] = ["acc_angle_x", "acc_angle_y", "acc_angle_z"];
const MAGNITUDE_STD_NAME: &str = "acc_magnitude_std";
pub const HEART_RATE_NAME: &str = "hr";

/// Mean vectors shorter than this have no direction; their angles are 0.
const MIN_MEAN_NORM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    #[default]
    AccGyroHr,
    AccHr,
    AccOnly,
}

impl FeatureSet {
    pub fn includes_gyro(self) -> bool {
        matches!(self, FeatureSet::AccGyroHr)
    }

    pub fn includes_hr(self) -> bool {
        !matches!(self, FeatureSet::AccOnly)
    }

    pub fn dim(self) -> usize {
        let gyro = if self.includes_gyro() { 3 * AXIS_STAT_COUNT } else { 0 };
        3 * AXIS_STAT_COUNT + gyro + ANGLE_NAMES.len() + 1 + usize::from(self.includes_hr())
    }

    pub fn names(self) -> Vec<String> {
        let mut axes: Vec<&str> = ACC_AXES.to_vec();
        if self.includes_gyro() {
            axes.extend(GYRO_AXES);
        }
        let mut names: Vec<String> = axes
            .iter()
            .flat_map(|axis| AXIS_STAT_NAMES.iter().map(move |s| format!("{axis}_{s}")))
            .collect();
        names.extend(ANGLE_NAMES.iter().map(|s| s.to_string()));
        names.push(MAGNITUDE_STD_NAME.to_string());
        if self.includes_hr() {
            names.push(HEART_RATE_NAME.to_string());
        }
        names
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureSet::AccGyroHr => "acc_gyro_hr",
            FeatureSet::AccHr => "acc_hr",
            FeatureSet::AccOnly => "acc_only",
        }
    }
}

impl std::str::FromStr for FeatureSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "acc_gyro_hr" => Ok(FeatureSet::AccGyroHr),
            "acc_hr" => Ok(FeatureSet::AccHr),
            "acc_only" => Ok(FeatureSet::AccOnly),
            other => Err(Error::Config(format!("unknown feature set {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub label: Emotion,
    pub participant_id: String,
    pub condition: Condition,
    pub window_index: usize,
}

/// Percentile by linear interpolation at position `q * (n - 1)` of the
/// sorted values.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

fn sorted_copy(x: &[f64]) -> Vec<f64> {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// The 17 per-axis statistics in [`AXIS_STAT_NAMES`] order.
///
/// Standard deviation, skewness and kurtosis use population (biased)
/// moments; kurtosis is excess kurtosis. A constant input has skewness and
/// kurtosis 0.
pub fn axis_stats(x: &[f64]) -> Result<[f64; AXIS_STAT_COUNT]> {
    if x.is_empty() {
        return Err(Error::InvalidData("axis statistics of an empty window".into()));
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidData(format!("non-finite value at row {i}")));
    }
    let n = x.len() as f64;
    let sum: f64 = x.iter().sum();
    let mean = sum / n;
    let sum_sq: f64 = x.iter().map(|v| v * v).sum();
    let sum_abs: f64 = x.iter().map(|v| v.abs()).sum();

    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &v in x {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;

    let sorted = sorted_copy(x);
    let min = sorted[0];
    let max = sorted[sorted.len() - 1];
    let (skewness, kurtosis) = if max == min || m2 == 0.0 {
        (0.0, 0.0)
    } else {
        (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    };
    let median = percentile_sorted(&sorted, 0.5);
    let abs_dev = sorted_copy(&x.iter().map(|v| (v - median).abs()).collect::<Vec<_>>());

    Ok([
        mean,
        m2.sqrt(),
        max,
        min,
        sum_sq / n,
        kurtosis,
        skewness,
        (sum_sq / n).sqrt(),
        sum_sq.sqrt(),
        sum,
        sum_abs,
        sum_abs / n,
        max - min,
        median,
        percentile_sorted(&sorted, 0.75),
        percentile_sorted(&sorted, 0.25),
        percentile_sorted(&abs_dev, 0.5),
    ])
}

fn column(m: &[[f64; 3]], axis: usize) -> Vec<f64> {
    m.iter().map(|r| r[axis]).collect()
}

fn check_finite(m: &[[f64; 3]]) -> Result<()> {
    if m.iter().flatten().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidData("non-finite value in window".into()))
    }
}

/// Angles in radians between the window's mean acceleration vector and the
/// x, y and z axes.
pub fn angle_features(acc: &[[f64; 3]]) -> Result<[f64; 3]> {
    check_finite(acc)?;
    let n = acc.len() as f64;
    let mut mean = [0.0; 3];
    for row in acc {
        for k in 0..3 {
            mean[k] += row[k];
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let norm = (mean[0] * mean[0] + mean[1] * mean[1] + mean[2] * mean[2]).sqrt();
    if norm < MIN_MEAN_NORM {
        return Ok([0.0; 3]);
    }
    Ok(mean.map(|m| (m / norm).clamp(-1.0, 1.0).acos()))
}

/// Population standard deviation of the per-row Euclidean norm.
pub fn magnitude_std(acc: &[[f64; 3]]) -> Result<f64> {
    check_finite(acc)?;
    let mags: Vec<f64> = acc
        .iter()
        .map(|r| (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt())
        .collect();
    let n = mags.len() as f64;
    let mean = mags.iter().sum::<f64>() / n;
    Ok((mags.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / n).sqrt())
}

fn matrix_stats(m: &WindowMatrix, out: &mut Vec<f64>) -> Result<()> {
    for axis in 0..3 {
        out.extend_from_slice(&axis_stats(&column(m, axis))?);
    }
    Ok(())
}

pub fn extract_features(bundle: &WindowBundle, set: FeatureSet) -> Result<FeatureVector> {
    let with_context = |e: Error| Error::Window {
        window_index: bundle.window_index,
        reason: format!("{} {}: {e}", bundle.participant_id, bundle.emotion),
    };
    let mut values = Vec::with_capacity(set.dim());
    matrix_stats(&bundle.acc, &mut values).map_err(with_context)?;
    if set.includes_gyro() {
        matrix_stats(&bundle.gyro, &mut values).map_err(with_context)?;
    }
    values.extend_from_slice(&angle_features(&bundle.acc).map_err(with_context)?);
    values.push(magnitude_std(&bundle.acc).map_err(with_context)?);
    if set.includes_hr() {
        if !bundle.hr_bpm.is_finite() {
            return Err(with_context(Error::InvalidData("non-finite heart rate".into())));
        }
        values.push(bundle.hr_bpm);
    }
    debug_assert_eq!(values.len(), set.dim());
    Ok(FeatureVector {
        values,
        label: bundle.emotion,
        participant_id: bundle.participant_id.clone(),
        condition: bundle.condition,
        window_index: bundle.window_index,
    })
}

/// Column indices of `subset` within the full 107-feature layout.
pub fn projection(subset: FeatureSet) -> Vec<usize> {
    let full = FeatureSet::AccGyroHr.names();
    subset
        .names()
        .iter()
        .map(|n| full.iter().position(|f| f == n).expect("subset of full layout"))
        .collect()
}

pub fn write_feature_csv<W: Write>(writer: W, set: FeatureSet, rows: &[FeatureVector]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = ["participant", "condition", "emotion", "window_index"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(set.names());
    w.write_record(&header)?;
    for r in rows {
        if r.values.len() != set.dim() {
            return Err(Error::DimensionMismatch {
                expected: set.dim(),
                got: r.values.len(),
            });
        }
        let mut rec = vec![
            r.participant_id.clone(),
            r.condition.to_string(),
            r.label.to_string(),
            r.window_index.to_string(),
        ];
        rec.extend(r.values.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn stat(name: &str, s: &[f64; AXIS_STAT_COUNT]) -> f64 {
        s[AXIS_STAT_NAMES.iter().position(|n| *n == name).unwrap()]
    }

    #[test]
    fn feature_dimensions() {
        assert_eq!(FeatureSet::AccGyroHr.dim(), 107);
        assert_eq!(FeatureSet::AccHr.dim(), 56);
        assert_eq!(FeatureSet::AccOnly.dim(), 55);
        for set in [FeatureSet::AccGyroHr, FeatureSet::AccHr, FeatureSet::AccOnly] {
            assert_eq!(set.names().len(), set.dim());
            assert_eq!(projection(set).len(), set.dim());
        }
        let names = FeatureSet::AccGyroHr.names();
        assert_eq!(names[0], "acc_x_mean");
        assert_eq!(names[16], "acc_x_mad");
        assert_eq!(names[51], "gyro_x_mean");
        assert_eq!(&names[102..], &["acc_angle_x", "acc_angle_y", "acc_angle_z", "acc_magnitude_std", "hr"]);
    }

    #[test]
    fn constant_window() {
        let s = axis_stats(&[2.0; 24]).unwrap();
        assert_eq!(stat("mean", &s), 2.0);
        assert_eq!(stat("std", &s), 0.0);
        assert_eq!(stat("energy", &s), 4.0);
        assert_eq!(stat("rms", &s), 2.0);
        assert_eq!(stat("range", &s), 0.0);
        assert_eq!(stat("mad", &s), 0.0);
        assert_eq!(stat("skewness", &s), 0.0);
        assert_eq!(stat("kurtosis", &s), 0.0);
        // 0.1 does not average back to itself exactly
        let s = axis_stats(&[0.1; 24]).unwrap();
        assert_eq!(stat("skewness", &s), 0.0);
        assert_eq!(stat("kurtosis", &s), 0.0);
    }

    #[test]
    fn ramp_window() {
        let ramp: Vec<f64> = (0..24).map(f64::from).collect();
        let s = axis_stats(&ramp).unwrap();
        assert_eq!(stat("mean", &s), 11.5);
        assert!((stat("std", &s) - 6.922186552431729).abs() < 1e-12);
        assert_eq!(stat("sum", &s), 276.0);
        assert_eq!(stat("median", &s), 11.5);
        assert_eq!(stat("range", &s), 23.0);
        assert_eq!(stat("q25", &s), 5.75);
        assert_eq!(stat("q75", &s), 17.25);
        assert_eq!(stat("mad", &s), 6.0);
        assert!(stat("skewness", &s).abs() < 1e-12);
    }

    #[test]
    fn alternating_window() {
        let x: Vec<f64> = (0..24).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let s = axis_stats(&x).unwrap();
        assert_eq!(stat("mean", &s), 0.0);
        assert_eq!(stat("rms", &s), 1.0);
        assert_eq!(stat("sum_abs", &s), 24.0);
        assert_eq!(stat("skewness", &s), 0.0);
        // two-point symmetric distribution: excess kurtosis is -2
        assert!((stat("kurtosis", &s) + 2.0).abs() < 1e-12);
    }

    #[test]
    fn non_finite_rejected() {
        let mut x = [0.0; 24];
        x[3] = f64::NAN;
        assert!(axis_stats(&x).is_err());
    }

    #[test]
    fn angles() {
        let a = angle_features(&[[1.0, 0.0, 0.0]; 24]).unwrap();
        assert_eq!(a, [0.0, FRAC_PI_2, FRAC_PI_2]);
        let a = angle_features(&[[1.0, 1.0, 1.0]; 24]).unwrap();
        let expected = (1.0 / 3f64.sqrt()).acos();
        for v in a {
            assert!((v - expected).abs() < 1e-12);
            assert!((v - 0.9553).abs() < 1e-4);
        }
        assert_eq!(angle_features(&[[0.0; 3]; 24]).unwrap(), [0.0; 3]);
    }

    #[test]
    fn magnitude() {
        assert_eq!(magnitude_std(&[[3.0, 4.0, 0.0]; 24]).unwrap(), 0.0);
        let alt: Vec<[f64; 3]> = (0..24)
            .map(|i| if i % 2 == 0 { [1.0, 0.0, 0.0] } else { [0.0, 3.0, 0.0] })
            .collect();
        assert!((magnitude_std(&alt).unwrap() - 1.0).abs() < 1e-15);
        let ramp: Vec<[f64; 3]> = (0..24).map(|i| [0.0, 0.0, i as f64]).collect();
        assert!((magnitude_std(&ramp).unwrap() - 6.922186552431729).abs() < 1e-12);
    }

    fn bundle(seed: f64) -> WindowBundle {
        let mut acc = [[0.0; 3]; 24];
        let mut gyro = [[0.0; 3]; 24];
        for i in 0..24 {
            for k in 0..3 {
                acc[i][k] = (seed + i as f64 * 0.7 + k as f64).sin();
                gyro[i][k] = (seed * 2.0 + i as f64 * 0.3 - k as f64).cos();
            }
        }
        WindowBundle {
            window_index: 4,
            acc,
            gyro,
            hr_bpm: 97.5,
            emotion: Emotion::Happy,
            participant_id: "p9".into(),
            condition: Condition::new(3).unwrap(),
            start_ms: 0,
            end_ms: 1000,
        }
    }

    #[test]
    fn extract_lengths_and_determinism() {
        let b = bundle(0.3);
        let full = extract_features(&b, FeatureSet::AccGyroHr).unwrap();
        assert_eq!(full.values.len(), 107);
        assert_eq!(full.values[106], 97.5);
        assert_eq!(extract_features(&b, FeatureSet::AccOnly).unwrap().values.len(), 55);
        let hr = extract_features(&b, FeatureSet::AccHr).unwrap();
        assert_eq!(hr.values.len(), 56);
        assert_eq!(extract_features(&b, FeatureSet::AccGyroHr).unwrap(), full);
        let proj: Vec<f64> = projection(FeatureSet::AccHr).iter().map(|&i| full.values[i]).collect();
        assert_eq!(proj, hr.values);
    }

    #[test]
    fn feature_csv_header_is_stable() {
        let rows = vec![extract_features(&bundle(1.0), FeatureSet::AccOnly).unwrap()];
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_feature_csv(&mut a, FeatureSet::AccOnly, &rows).unwrap();
        write_feature_csv(&mut b, FeatureSet::AccOnly, &rows).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with("participant,condition,emotion,window_index,acc_x_mean,acc_x_std,"));
    }

    proptest! {
        #[test]
        fn scaling_laws(xs in prop::collection::vec(-50.0f64..50.0, 24), s in 0.1f64..20.0) {
            let base = axis_stats(&xs).unwrap();
            let scaled: Vec<f64> = xs.iter().map(|v| v * s).collect();
            let sc = axis_stats(&scaled).unwrap();
            let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()));
            for name in ["mean", "std", "max", "min", "rms", "rss", "range", "median", "q25", "q75", "mad", "sum", "sum_abs", "mean_abs"] {
                prop_assert!(close(stat(name, &sc), s * stat(name, &base)), "{name}");
            }
            prop_assert!(close(stat("energy", &sc), s * s * stat("energy", &base)));
            if stat("std", &base) > 1e-6 {
                prop_assert!(close(stat("skewness", &sc), stat("skewness", &base)));
                prop_assert!(close(stat("kurtosis", &sc), stat("kurtosis", &base)));
            }
            let m: Vec<[f64; 3]> = xs.chunks(3).cycle().take(24).map(|c| [c[0], c[1], c[2]]).collect();
            let ms: Vec<[f64; 3]> = m.iter().map(|r| r.map(|v| v * s)).collect();
            let a = angle_features(&m).unwrap();
            let b = angle_features(&ms).unwrap();
            for k in 0..3 {
                prop_assert!((a[k] - b[k]).abs() < 1e-9);
            }
        }
    }
}
