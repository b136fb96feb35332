//! Brute-force reference implementations used to check the optimized code.
//!
//! Each quantity is computed by a formula different from the library's:
//! variance from all pairwise differences, order statistics by counting
//! instead of sorting, angles through `atan2`.

/// Population variance as the mean squared pairwise difference over two.
pub fn pairwise_variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mut acc = 0.0;
    for a in x {
        for b in x {
            acc += (a - b) * (a - b);
        }
    }
    acc / (2.0 * n * n)
}

/// The `k`-th smallest value (0-based), found by counting.
pub fn order_statistic(x: &[f64], k: usize) -> f64 {
    for &candidate in x {
        let below = x.iter().filter(|&&v| v < candidate).count();
        let equal = x.iter().filter(|&&v| v == candidate).count();
        if below <= k && k < below + equal {
            return candidate;
        }
    }
    unreachable!("k out of range")
}

/// Linear-interpolation quantile at position `q * (n - 1)`.
pub fn quantile(x: &[f64], q: f64) -> f64 {
    let pos = q * (x.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let a = order_statistic(x, lo);
    let b = order_statistic(x, hi);
    a + (pos - lo as f64) * (b - a)
}

fn central_moment(x: &[f64], mean: f64, k: i32) -> f64 {
    x.iter().map(|v| (v - mean).powi(k)).sum::<f64>() / x.len() as f64
}

/// The 17 axis statistics: mean, std, max, min, energy, kurtosis, skewness,
/// rms, rss, sum, sum_abs, mean_abs, range, median, q75, q25, mad.
pub fn axis_stats(x: &[f64]) -> [f64; 17] {
    let n = x.len() as f64;
    let mut sum = 0.0;
    let mut sum_abs = 0.0;
    let mut sum_sq = 0.0;
    let mut max = f64::NEG_INFINITY;
    let mut min = f64::INFINITY;
    for &v in x {
        sum += v;
        sum_abs += v.abs();
        sum_sq += v * v;
        max = max.max(v);
        min = min.min(v);
    }
    let mean = sum / n;
    let var = pairwise_variance(x);
    let constant = x.iter().all(|&v| v == x[0]);
    let (kurtosis, skewness) = if constant {
        (0.0, 0.0)
    } else {
        let m2 = central_moment(x, mean, 2);
        (
            central_moment(x, mean, 4) / m2.powi(2) - 3.0,
            central_moment(x, mean, 3) / m2.powf(1.5),
        )
    };
    let median = quantile(x, 0.5);
    let deviations: Vec<f64> = x.iter().map(|v| (v - median).abs()).collect();
    [
        mean,
        var.sqrt(),
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
        quantile(x, 0.75),
        quantile(x, 0.25),
        quantile(&deviations, 0.5),
    ]
}

/// Angles between the mean acceleration vector and each axis.
pub fn angles(rows: &[[f64; 3]]) -> [f64; 3] {
    let n = rows.len() as f64;
    let m: Vec<f64> = (0..3).map(|k| rows.iter().map(|r| r[k]).sum::<f64>() / n).collect();
    let norm_sq: f64 = m.iter().map(|v| v * v).sum();
    if norm_sq.sqrt() < 1e-12 {
        return [0.0; 3];
    }
    let mut out = [0.0; 3];
    for k in 0..3 {
        let orth = (norm_sq - m[k] * m[k]).max(0.0).sqrt();
        out[k] = orth.atan2(m[k]);
    }
    out
}

pub fn magnitude_std(rows: &[[f64; 3]]) -> f64 {
    let mags: Vec<f64> = rows.iter().map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    pairwise_variance(&mags).sqrt()
}

/// Two-sided standard normal tail `P(|Z| > z)` from the Taylor series of erf.
pub fn normal_two_sided(z: f64) -> f64 {
    let x = z.abs() / std::f64::consts::SQRT_2;
    let mut term = x;
    let mut sum = x;
    let mut n = 0.0;
    loop {
        n += 1.0;
        term *= -x * x / n;
        let add = term / (2.0 * n + 1.0);
        sum += add;
        if add.abs() < 1e-18 {
            break;
        }
    }
    1.0 - 2.0 / std::f64::consts::PI.sqrt() * sum
}

/// Two-sided Student t tail with 3 degrees of freedom, in closed form.
pub fn student_t3_two_sided(t: f64) -> f64 {
    let u = t.abs() / 3f64.sqrt();
    let cdf = 0.5 + (u / (1.0 + u * u) + u.atan()) / std::f64::consts::PI;
    2.0 * (1.0 - cdf)
}

/// Upper tail of F(2, m): `(1 + 2F/m)^(-m/2)`.
pub fn f2_upper(f: f64, m: f64) -> f64 {
    (1.0 + 2.0 * f / m).powf(-m / 2.0)
}
