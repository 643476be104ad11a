//! One-hidden-layer network: input → tanh hidden layer with inverted
//! dropout → softmax, trained by shuffled mini-batch gradient descent.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::logistic::SparseRows;
use crate::matrix::Matrix;
use crate::scalar::{log_sum_exp, softmax_in_place, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeuralOptions {
    /// L2 strength on both weight matrices.
    pub alpha: f64,
    pub dropout: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub hidden: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for NeuralOptions {
    fn default() -> Self {
        NeuralOptions {
            alpha: 1e-4,
            dropout: 0.5,
            epochs: 25,
            learning_rate: 1e-3,
            hidden: 128,
            batch_size: 32,
            seed: 0,
        }
    }
}

/// Parameters laid out as `[W1 (hidden×in), b1, W2 (classes×hidden), b2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
pub struct NeuralNetwork<T: Scalar> {
    n_features: usize,
    hidden: usize,
    n_classes: usize,
    params: Vec<T>,
}

struct Offsets {
    b1: usize,
    w2: usize,
    b2: usize,
}

impl<T: Scalar> NeuralNetwork<T> {
    fn offsets(&self) -> Offsets {
        let b1 = self.hidden * self.n_features;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.n_classes * self.hidden;
        Offsets { b1, w2, b2 }
    }

    pub fn param_count(n_features: usize, hidden: usize, n_classes: usize) -> usize {
        hidden * n_features + hidden + n_classes * hidden + n_classes
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(n_features: usize, hidden: usize, n_classes: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut params = vec![T::zero(); Self::param_count(n_features, hidden, n_classes)];
        let l1 = (6.0 / (n_features + hidden) as f64).sqrt();
        let l2 = (6.0 / (hidden + n_classes) as f64).sqrt();
        let b1 = hidden * n_features;
        let w2 = b1 + hidden;
        for p in &mut params[..b1] {
            *p = T::of(rng.gen_range(-l1..l1));
        }
        for p in &mut params[w2..w2 + n_classes * hidden] {
            *p = T::of(rng.gen_range(-l2..l2));
        }
        NeuralNetwork {
            n_features,
            hidden,
            n_classes,
            params,
        }
    }

    pub fn from_params(n_features: usize, hidden: usize, n_classes: usize, params: Vec<T>) -> Result<Self> {
        if params.len() != Self::param_count(n_features, hidden, n_classes) {
            return Err(Error::invalid("parameter vector has the wrong length"));
        }
        Ok(NeuralNetwork {
            n_features,
            hidden,
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

    fn hidden_pre(&self, row: &[(usize, T)], out: &mut [T]) {
        let o = self.offsets();
        let d = self.n_features;
        for (h, z) in out.iter_mut().enumerate() {
            let w = &self.params[h * d..(h + 1) * d];
            *z = self.params[o.b1 + h] + row.iter().map(|&(j, v)| w[j] * v).sum::<T>();
        }
    }

    fn output_logits(&self, hidden: &[T], out: &mut [T]) {
        let o = self.offsets();
        let hd = self.hidden;
        for (c, z) in out.iter_mut().enumerate() {
            let w = &self.params[o.w2 + c * hd..o.w2 + (c + 1) * hd];
            *z = self.params[o.b2 + c] + w.iter().zip(hidden).map(|(&a, &b)| a * b).sum::<T>();
        }
    }

    /// Mean cross-entropy over `batch` plus `alpha·(‖W1‖² + ‖W2‖²)/2`, and
    /// its gradient. `masks` holds one already-scaled dropout mask per batch
    /// row; `None` disables dropout.
    fn batch_objective(
        &self,
        x: &SparseRows<T>,
        y: &[usize],
        batch: &[usize],
        alpha: f64,
        masks: Option<&[Vec<T>]>,
    ) -> (f64, Vec<T>) {
        let o = self.offsets();
        let (d, hd, k) = (self.n_features, self.hidden, self.n_classes);
        let inv_n = T::one() / T::of_usize(batch.len());
        let mut grad = vec![T::zero(); self.params.len()];
        let mut loss = T::zero();
        let mut pre = vec![T::zero(); hd];
        let mut act = vec![T::zero(); hd];
        let mut z = vec![T::zero(); k];
        let mut dh = vec![T::zero(); hd];
        for (b, &i) in batch.iter().enumerate() {
            let row = &x.rows[i];
            self.hidden_pre(row, &mut pre);
            for h in 0..hd {
                act[h] = pre[h].tanh();
                if let Some(m) = masks {
                    act[h] = act[h] * m[b][h];
                }
            }
            self.output_logits(&act, &mut z);
            loss = loss + log_sum_exp(&z) - z[y[i]];
            softmax_in_place(&mut z);
            z[y[i]] = z[y[i]] - T::one();
            dh.iter_mut().for_each(|v| *v = T::zero());
            for c in 0..k {
                let delta = z[c] * inv_n;
                let w2 = o.w2 + c * hd;
                for h in 0..hd {
                    dh[h] = dh[h] + delta * self.params[w2 + h];
                    grad[w2 + h] = grad[w2 + h] + delta * act[h];
                }
                grad[o.b2 + c] = grad[o.b2 + c] + delta;
            }
            for h in 0..hd {
                let mut g = dh[h];
                if let Some(m) = masks {
                    g = g * m[b][h];
                }
                let tanh = pre[h].tanh();
                g = g * (T::one() - tanh * tanh);
                if g.is_zero() {
                    continue;
                }
                for &(j, v) in row {
                    grad[h * d + j] = grad[h * d + j] + g * v;
                }
                grad[o.b1 + h] = grad[o.b1 + h] + g;
            }
        }
        let a = T::of(alpha);
        let mut penalty = T::zero();
        for range in [0..o.b1, o.w2..o.b2] {
            for idx in range {
                let w = self.params[idx];
                grad[idx] = grad[idx] + a * w;
                penalty = penalty + w * w;
            }
        }
        ((loss * inv_n + a * penalty / T::of(2.0)).as_f64(), grad)
    }

    /// Full-data objective without dropout.
    pub fn objective(&self, x: &Matrix<T>, y: &[usize], alpha: f64) -> (f64, Vec<T>) {
        let sparse = SparseRows::new(x);
        let all: Vec<usize> = (0..y.len()).collect();
        self.batch_objective(&sparse, y, &all, alpha, None)
    }

    pub fn fit(x: &Matrix<T>, y: &[usize], n_classes: usize, options: &NeuralOptions) -> Result<Self> {
        if options.epochs == 0 {
            return Err(Error::invalid("NN_e must be at least 1"));
        }
        if !(0.0..1.0).contains(&options.dropout) {
            return Err(Error::invalid("NN_dp must be in [0, 1)"));
        }
        if !(options.learning_rate > 0.0) {
            return Err(Error::invalid("NN_lr must be positive"));
        }
        if x.rows() != y.len() || y.is_empty() {
            return Err(Error::invalid("feature rows and labels must be non-empty and aligned"));
        }
        if !x.all_finite() {
            return Err(Error::invalid("non-finite feature values"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
        let mut net = Self::init(x.cols(), options.hidden.max(1), n_classes, &mut rng);
        let sparse = SparseRows::new(x);
        let mut order: Vec<usize> = (0..y.len()).collect();
        let keep = 1.0 - options.dropout;
        let scale = T::of(1.0 / keep);
        let lr = T::of(options.learning_rate);
        let batch_size = options.batch_size.max(1);
        for epoch in 1..=options.epochs {
            order.shuffle(&mut rng);
            let mut epoch_loss = 0.0;
            for batch in order.chunks(batch_size) {
                let masks: Option<Vec<Vec<T>>> = (options.dropout > 0.0).then(|| {
                    batch
                        .iter()
                        .map(|_| {
                            (0..net.hidden)
                                .map(|_| if rng.gen::<f64>() < keep { scale } else { T::zero() })
                                .collect()
                        })
                        .collect()
                });
                let (loss, grad) = net.batch_objective(&sparse, y, batch, options.alpha, masks.as_deref());
                epoch_loss += loss;
                for (p, g) in net.params.iter_mut().zip(grad) {
                    *p = *p - lr * g;
                }
            }
            if !epoch_loss.is_finite() || net.params.iter().any(|p| !p.is_finite()) {
                return Err(Error::TrainingDiverged { epoch });
            }
        }
        Ok(net)
    }

    pub fn predict_proba_row(&self, row: &[T]) -> Vec<T> {
        let sparse: Vec<(usize, T)> = row
            .iter()
            .enumerate()
            .filter(|(_, v)| !v.is_zero())
            .map(|(j, &v)| (j, v))
            .collect();
        let mut pre = vec![T::zero(); self.hidden];
        self.hidden_pre(&sparse, &mut pre);
        pre.iter_mut().for_each(|v| *v = v.tanh());
        let mut z = vec![T::zero(); self.n_classes];
        self.output_logits(&pre, &mut z);
        softmax_in_place(&mut z);
        z
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs(n: usize, seed: u64) -> (Matrix<f64>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let c = i % 3;
            let centre = [(-3.0, 0.0), (3.0, 0.0), (0.0, 3.0)][c];
            rows.push([centre.0 + rng.gen_range(-1.0..1.0), centre.1 + rng.gen_range(-1.0..1.0)]);
            y.push(c);
        }
        (Matrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = Matrix::from_vec(5, 4, (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let y = vec![0, 1, 2, 1, 0];
        let net = NeuralNetwork::<f64>::init(4, 6, 3, &mut rng);
        let (_, grad) = net.objective(&x, &y, 0.01);
        let h = 1e-6;
        for k in 0..net.params.len() {
            let mut p = net.params.clone();
            p[k] += h;
            let up = NeuralNetwork::from_params(4, 6, 3, p.clone()).unwrap().objective(&x, &y, 0.01).0;
            p[k] -= 2.0 * h;
            let down = NeuralNetwork::from_params(4, 6, 3, p).unwrap().objective(&x, &y, 0.01).0;
            let fd = (up - down) / (2.0 * h);
            assert!((fd - grad[k]).abs() <= 1e-4 * fd.abs().max(1e-3), "{k}: {fd} vs {}", grad[k]);
        }
    }

    #[test]
    fn inference_is_deterministic() {
        let (x, y) = blobs(30, 1);
        let opts = NeuralOptions {
            dropout: 0.0,
            epochs: 3,
            learning_rate: 0.01,
            ..Default::default()
        };
        let net = NeuralNetwork::fit(&x, &y, 3, &opts).unwrap();
        assert_eq!(net.predict_proba_row(x.row(0)), net.predict_proba_row(x.row(0)));
    }

    #[test]
    fn separable_blobs_train_well() {
        let (x, y) = blobs(90, 2);
        let opts = NeuralOptions {
            learning_rate: 1e-2,
            epochs: 100,
            ..Default::default()
        };
        let net = NeuralNetwork::fit(&x, &y, 3, &opts).unwrap();
        let correct = (0..90)
            .filter(|&i| crate::learners::forest::argmax(&net.predict_proba_row(x.row(i))) == y[i])
            .count();
        assert!(correct as f64 / 90.0 >= 0.95, "{correct}/90");
    }

    #[test]
    fn argument_validation() {
        let (x, y) = blobs(6, 3);
        let bad = [
            NeuralOptions { epochs: 0, ..Default::default() },
            NeuralOptions { dropout: 1.0, ..Default::default() },
            NeuralOptions { learning_rate: 0.0, ..Default::default() },
        ];
        for opts in bad {
            assert!(NeuralNetwork::fit(&x, &y, 3, &opts).is_err());
        }
    }

    #[test]
    fn overshooting_weight_decay_diverges() {
        let (x, y) = blobs(40, 4);
        let opts = NeuralOptions {
            alpha: 100.0,
            learning_rate: 1.0,
            dropout: 0.0,
            epochs: 125,
            ..Default::default()
        };
        assert!(matches!(
            NeuralNetwork::fit(&x, &y, 3, &opts),
            Err(Error::TrainingDiverged { .. })
        ));
    }
}
