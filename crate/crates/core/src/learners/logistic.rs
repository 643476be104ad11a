//! Multinomial logistic regression trained by full-batch gradient descent.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::{log_sum_exp, softmax_in_place, Scalar};

/// Non-zero entries of each row; TF-IDF and one-hot features are sparse.
pub(crate) struct SparseRows<T> {
    pub(crate) rows: Vec<Vec<(usize, T)>>,
}

impl<T: Scalar> SparseRows<T> {
    pub(crate) fn new(x: &Matrix<T>) -> Self {
        SparseRows {
            rows: x
                .iter_rows()
                .map(|r| {
                    r.iter()
                        .enumerate()
                        .filter(|(_, v)| !v.is_zero())
                        .map(|(j, &v)| (j, v))
                        .collect()
                })
                .collect(),
        }
    }
}

/// Weights are stored class-major (`classes × features`), followed by one
/// bias per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
pub struct LogisticRegression<T: Scalar> {
    n_features: usize,
    n_classes: usize,
    params: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticOptions {
    /// Inverse L2 strength.
    pub c: f64,
    pub max_iter: usize,
    /// Stop once the gradient's max-norm drops below this.
    pub tol: f64,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        LogisticOptions {
            c: 1.0,
            max_iter: 500,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitTrace {
    pub losses: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl<T: Scalar> LogisticRegression<T> {
    pub fn zeros(n_features: usize, n_classes: usize) -> Self {
        LogisticRegression {
            n_features,
            n_classes,
            params: vec![T::zero(); n_classes * (n_features + 1)],
        }
    }

    pub fn from_params(n_features: usize, n_classes: usize, params: Vec<T>) -> Result<Self> {
        if params.len() != n_classes * (n_features + 1) {
            return Err(Error::invalid("parameter vector has the wrong length"));
        }
        Ok(LogisticRegression {
            n_features,
            n_classes,
            params,
        })
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn weight_norm(&self) -> f64 {
        self.params[..self.n_classes * self.n_features]
            .iter()
            .map(|w| w.as_f64().powi(2))
            .sum::<f64>()
            .sqrt()
    }

    fn logits_sparse(&self, row: &[(usize, T)], out: &mut [T]) {
        let d = self.n_features;
        let bias = &self.params[self.n_classes * d..];
        for (c, z) in out.iter_mut().enumerate() {
            let w = &self.params[c * d..(c + 1) * d];
            *z = bias[c] + row.iter().map(|&(j, v)| w[j] * v).sum::<T>();
        }
    }

    fn logits(&self, row: &[T], out: &mut [T]) {
        let d = self.n_features;
        let bias = &self.params[self.n_classes * d..];
        for (c, z) in out.iter_mut().enumerate() {
            let w = &self.params[c * d..(c + 1) * d];
            *z = bias[c]
                + w.iter()
                    .zip(row)
                    .filter(|(_, v)| !v.is_zero())
                    .map(|(&a, &b)| a * b)
                    .sum::<T>();
        }
    }

    /// Mean cross-entropy plus `‖W‖² / (2C)` and its gradient with respect
    /// to the parameter vector. Biases are not penalized.
    pub fn objective(&self, x: &Matrix<T>, y: &[usize], c: f64) -> (f64, Vec<T>) {
        self.objective_sparse(&SparseRows::new(x), y, c)
    }

    pub(crate) fn objective_sparse(&self, x: &SparseRows<T>, y: &[usize], c: f64) -> (f64, Vec<T>) {
        let d = self.n_features;
        let k = self.n_classes;
        let n = y.len();
        let inv_n = T::one() / T::of_usize(n);
        let mut grad = vec![T::zero(); self.params.len()];
        let mut loss = T::zero();
        let mut z = vec![T::zero(); k];
        for (row, &label) in x.rows.iter().zip(y) {
            self.logits_sparse(row, &mut z);
            loss = loss + log_sum_exp(&z) - z[label];
            softmax_in_place(&mut z);
            z[label] = z[label] - T::one();
            for (cls, &delta) in z.iter().enumerate() {
                let delta = delta * inv_n;
                let gw = &mut grad[cls * d..(cls + 1) * d];
                for &(j, v) in row {
                    gw[j] = gw[j] + delta * v;
                }
                grad[k * d + cls] = grad[k * d + cls] + delta;
            }
        }
        let lambda = T::of(1.0 / c);
        let mut penalty = T::zero();
        for (g, &w) in grad.iter_mut().zip(&self.params).take(k * d) {
            *g = *g + lambda * w;
            penalty = penalty + w * w;
        }
        let loss = (loss * inv_n + lambda * penalty / T::of(2.0)).as_f64();
        (loss, grad)
    }

    pub fn fit(x: &Matrix<T>, y: &[usize], n_classes: usize, options: &LogisticOptions) -> Result<Self> {
        Ok(Self::fit_with_trace(x, y, n_classes, options)?.0)
    }

    /// Gradient descent with Armijo backtracking; the step may double after
    /// each accepted iteration. The loss trace is non-increasing.
    pub fn fit_with_trace(
        x: &Matrix<T>,
        y: &[usize],
        n_classes: usize,
        options: &LogisticOptions,
    ) -> Result<(Self, FitTrace)> {
        if !(options.c > 0.0) {
            return Err(Error::invalid("LR_c must be positive"));
        }
        if !x.all_finite() {
            return Err(Error::invalid("non-finite feature values"));
        }
        if x.rows() != y.len() || y.is_empty() {
            return Err(Error::invalid("feature rows and labels must be non-empty and aligned"));
        }
        let sparse = SparseRows::new(x);
        let mut model = Self::zeros(x.cols(), n_classes);
        let (mut loss, mut grad) = model.objective_sparse(&sparse, y, options.c);
        let mean_sq = x.iter_rows().map(|r| r.iter().map(|v| v.as_f64().powi(2)).sum::<f64>() + 1.0).sum::<f64>()
            / y.len() as f64;
        let mut step = 1.0 / (0.5 * mean_sq + 1.0 / options.c);
        let mut trace = FitTrace {
            losses: vec![loss],
            iterations: 0,
            converged: false,
        };
        for _ in 0..options.max_iter {
            let gmax = grad.iter().map(|g| g.as_f64().abs()).fold(0.0, f64::max);
            if gmax < options.tol {
                trace.converged = true;
                break;
            }
            let gsq: f64 = grad.iter().map(|g| g.as_f64().powi(2)).sum();
            let mut t = step * 2.0;
            let accepted = loop {
                let candidate = LogisticRegression {
                    n_features: model.n_features,
                    n_classes,
                    params: model
                        .params
                        .iter()
                        .zip(&grad)
                        .map(|(&w, &g)| w - T::of(t) * g)
                        .collect(),
                };
                let (l, g) = candidate.objective_sparse(&sparse, y, options.c);
                if l.is_finite() && l <= loss - 0.5 * t * gsq {
                    break Some((candidate, l, g));
                }
                t *= 0.5;
                if t < 1e-20 {
                    break None;
                }
            };
            let Some((candidate, l, g)) = accepted else {
                break;
            };
            model = candidate;
            loss = l;
            grad = g;
            step = t;
            trace.iterations += 1;
            trace.losses.push(loss);
        }
        Ok((model, trace))
    }

    pub fn predict_proba_row(&self, row: &[T]) -> Vec<T> {
        let mut z = vec![T::zero(); self.n_classes];
        self.logits(row, &mut z);
        softmax_in_place(&mut z);
        z
    }
}
