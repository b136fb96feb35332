//! L2-regularized logistic regression.
//!
//! Each binary problem minimizes
//!
//! ```text
//! f(w, b) = (1/n) Σ softplus(z_i) - y_i z_i  +  (λ / 2n) ‖w‖²,   z_i = x_i·w + b
//! ```
//!
//! with the intercept unpenalized, on inputs standardized with training
//! statistics. The solver is damped Newton with Armijo backtracking and stops
//! once the gradient norm is at most `tol`. Two classes use a single model
//! for the larger label; more classes use one-vs-rest with the per-class
//! sigmoid scores normalized to sum to one.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogregParams {
    /// Regularization strength λ.
    pub l2: f64,
    /// Gradient-norm tolerance.
    pub tol: f64,
    pub max_iter: usize,
    pub standardize: bool,
}

impl Default for LogregParams {
    fn default() -> Self {
        LogregParams {
            l2: 1.0,
            tol: 1e-6,
            max_iter: 1000,
            standardize: true,
        }
    }
}

impl LogregParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::Config(format!("l2 must be >= 0, got {}", self.l2)));
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::Config("logreg tol must be > 0 and max_iter >= 1".into()));
        }
        Ok(())
    }
}

/// One fitted binary problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryLogit {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub iterations: usize,
    pub converged: bool,
    pub grad_norm: f64,
}

impl BinaryLogit {
    fn decision(&self, x: ArrayView1<f64>) -> f64 {
        x.iter().zip(&self.weights).map(|(a, w)| a * w).sum::<f64>() + self.intercept
    }
}

/// Result of [`fit_binary`], including the objective after every accepted step.
#[derive(Debug, Clone)]
pub struct BinaryFit {
    pub model: BinaryLogit,
    pub objective_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticRegression {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    /// One model when there are two classes, otherwise one per class.
    pub models: Vec<BinaryLogit>,
    pub n_classes: usize,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Objective value and gradient (weights first, intercept last) for labels
/// in {0, 1}.
pub fn objective_and_gradient(
    x: ArrayView2<f64>,
    y: &[f64],
    weights: ArrayView1<f64>,
    intercept: f64,
    l2: f64,
) -> (f64, Array1<f64>) {
    let n = x.nrows() as f64;
    let z = x.dot(&weights) + intercept;
    let mut loss = 0.0;
    let mut resid = Array1::<f64>::zeros(z.len());
    for i in 0..z.len() {
        loss += softplus(z[i]) - y[i] * z[i];
        resid[i] = sigmoid(z[i]) - y[i];
    }
    let penalty = 0.5 * l2 / n * weights.dot(&weights);
    let mut grad = Array1::<f64>::zeros(x.ncols() + 1);
    let gw = x.t().dot(&resid) / n + &weights * (l2 / n);
    grad.slice_mut(s![..x.ncols()]).assign(&gw);
    grad[x.ncols()] = resid.sum() / n;
    (loss / n + penalty, grad)
}

fn objective(x: ArrayView2<f64>, y: &[f64], theta: &Array1<f64>, l2: f64) -> f64 {
    let d = x.ncols();
    let w = theta.slice(s![..d]);
    let b = theta[d];
    let n = x.nrows() as f64;
    let z = x.dot(&w) + b;
    let loss: f64 = z.iter().zip(y).map(|(&zi, &yi)| softplus(zi) - yi * zi).sum();
    loss / n + 0.5 * l2 / n * w.dot(&w)
}

/// Solves `a x = b` for symmetric positive-definite `a`.
fn cholesky_solve(a: &Array2<f64>, b: &Array1<f64>) -> Option<Array1<f64>> {
    let n = a.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut diag = a[[j, j]];
        for k in 0..j {
            diag -= l[[j, k]] * l[[j, k]];
        }
        if !(diag > 0.0) {
            return None;
        }
        let ljj = diag.sqrt();
        l[[j, j]] = ljj;
        for i in j + 1..n {
            let mut v = a[[i, j]];
            for k in 0..j {
                v -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = v / ljj;
        }
    }
    let mut y = Array1::<f64>::zeros(n);
    for i in 0..n {
        let mut v = b[i];
        for k in 0..i {
            v -= l[[i, k]] * y[k];
        }
        y[i] = v / l[[i, i]];
    }
    let mut x = Array1::<f64>::zeros(n);
    for i in (0..n).rev() {
        let mut v = y[i];
        for k in i + 1..n {
            v -= l[[k, i]] * x[k];
        }
        x[i] = v / l[[i, i]];
    }
    Some(x)
}

/// Fits one binary problem; `positive[i]` marks the positive class.
pub fn fit_binary(x: ArrayView2<f64>, positive: &[bool], params: &LogregParams) -> Result<BinaryFit> {
    let (n, d) = x.dim();
    if n == 0 {
        return Err(Error::DegenerateTraining("no samples".into()));
    }
    let y: Vec<f64> = positive.iter().map(|&p| f64::from(u8::from(p))).collect();
    let l2 = params.l2;
    let nf = n as f64;

    let mut augmented = Array2::<f64>::ones((n, d + 1));
    augmented.slice_mut(s![.., ..d]).assign(&x);

    let mut theta = Array1::<f64>::zeros(d + 1);
    let (mut f, mut grad) = objective_and_gradient(x, &y, theta.slice(s![..d]), 0.0, l2);
    let mut trace = vec![f];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < params.max_iter {
        if grad.dot(&grad).sqrt() <= params.tol {
            converged = true;
            break;
        }
        iterations += 1;

        let z = augmented.dot(&theta);
        let sqrt_w = z.mapv(|zi| {
            let p = sigmoid(zi);
            (p * (1.0 - p)).sqrt()
        });
        let weighted = &augmented * &sqrt_w.view().insert_axis(Axis(1));
        let mut hessian = weighted.t().dot(&weighted) / nf;
        for j in 0..d {
            hessian[[j, j]] += l2 / nf;
        }
        let neg_grad = -&grad;
        let mut step = cholesky_solve(&hessian, &neg_grad);
        let mut jitter = 1e-10;
        while step.is_none() && jitter < 1e3 {
            let mut h = hessian.clone();
            for j in 0..=d {
                h[[j, j]] += jitter;
            }
            step = cholesky_solve(&h, &neg_grad);
            jitter *= 100.0;
        }
        let step = step.unwrap_or_else(|| neg_grad.clone());

        let slope = grad.dot(&step);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let candidate = &theta + &(&step * t);
            let fc = objective(x, &y, &candidate, l2);
            if fc <= f + 1e-4 * t * slope && fc < f {
                accepted = Some((candidate, fc));
                break;
            }
            t *= 0.5;
        }
        match accepted {
            Some((candidate, _)) => {
                theta = candidate;
                let (fv, g) = objective_and_gradient(x, &y, theta.slice(s![..d]), theta[d], l2);
                f = fv;
                grad = g;
                trace.push(f);
            }
            // No decrease representable in floating point: at the optimum.
            None => break,
        }
    }
    let grad_norm = grad.dot(&grad).sqrt();
    converged |= grad_norm <= params.tol;
    if !converged {
        log::warn!(
            "logistic regression stopped after {iterations} iterations with gradient norm {grad_norm:e}"
        );
    }
    Ok(BinaryFit {
        model: BinaryLogit {
            weights: theta.slice(s![..d]).to_vec(),
            intercept: theta[d],
            iterations,
            converged,
            grad_norm,
        },
        objective_trace: trace,
    })
}

impl LogisticRegression {
    pub fn fit(params: &LogregParams, x: ArrayView2<f64>, y: &[usize], n_classes: usize) -> Result<Self> {
        let d = x.ncols();
        let n = x.nrows() as f64;
        let (mean, scale) = if params.standardize {
            let mean = x.mean_axis(Axis(0)).expect("non-empty");
            let scale: Vec<f64> = (0..d)
                .map(|j| {
                    let m = mean[j];
                    let var = x.column(j).iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
                    let sd = var.sqrt();
                    if sd <= 1e-12 * m.abs().max(1.0) {
                        1.0
                    } else {
                        sd
                    }
                })
                .collect();
            (mean.to_vec(), scale)
        } else {
            (vec![0.0; d], vec![1.0; d])
        };
        let xs = standardize(x, &mean, &scale);
        let targets: Vec<usize> = if n_classes == 2 { vec![1] } else { (0..n_classes).collect() };
        let models = targets
            .iter()
            .map(|&c| {
                let positive: Vec<bool> = y.iter().map(|&l| l == c).collect();
                fit_binary(xs.view(), &positive, params).map(|f| f.model)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LogisticRegression {
            mean,
            scale,
            models,
            n_classes,
        })
    }

    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let xs = standardize(x, &self.mean, &self.scale);
        let mut out = Array2::<f64>::zeros((x.nrows(), self.n_classes));
        for (i, row) in xs.rows().into_iter().enumerate() {
            if self.n_classes == 2 {
                let p = sigmoid(self.models[0].decision(row));
                out[[i, 0]] = 1.0 - p;
                out[[i, 1]] = p;
            } else {
                let scores: Vec<f64> = self.models.iter().map(|m| sigmoid(m.decision(row))).collect();
                let total: f64 = scores.iter().sum();
                for (j, s) in scores.iter().enumerate() {
                    out[[i, j]] = if total > 0.0 { s / total } else { 1.0 / self.n_classes as f64 };
                }
            }
        }
        out
    }
}

fn standardize(x: ArrayView2<f64>, mean: &[f64], scale: &[f64]) -> Array2<f64> {
    let mut xs = x.to_owned();
    for mut row in xs.rows_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (*v - mean[j]) / scale[j];
        }
    }
    xs
}
