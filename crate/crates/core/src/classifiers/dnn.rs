//! Two-hidden-layer fully connected network (64 neurons per layer, ReLU,
//! dropout after each activation, 2 output logits), trained with Adam and
//! softmax cross-entropy.
//!
//! The network is generic over the float type: training runs in `f32` as in
//! the hardware evaluation it models, while the gradient-check tests
//! instantiate the identical code path in `f64`.

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{split_train_val, Model, TrainConfig};
use crate::error::{CochleaError, Result};

pub const DNN_INPUT_DIM: usize = 152;
pub const DNN_HIDDEN: usize = 64;
pub const DNN_OUTPUT_DIM: usize = 2;
/// 152·64+64 + 64·64+64 + 64·2+2 = 14,082
pub const DNN_PARAM_COUNT: usize =
    DNN_INPUT_DIM * DNN_HIDDEN + DNN_HIDDEN + DNN_HIDDEN * DNN_HIDDEN + DNN_HIDDEN
        + DNN_HIDDEN * DNN_OUTPUT_DIM + DNN_OUTPUT_DIM;

/// All parameters live in one flat vector; the layout below gives each
/// layer its slice. Weights are row-major `[out][in]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dnn<T> {
    pub input_dim: usize,
    pub params: Vec<T>,
}

pub type DnnF32 = Dnn<f32>;

struct Layout {
    w1: std::ops::Range<usize>,
    b1: std::ops::Range<usize>,
    w2: std::ops::Range<usize>,
    b2: std::ops::Range<usize>,
    w3: std::ops::Range<usize>,
    b3: std::ops::Range<usize>,
}

fn layout(input_dim: usize) -> Layout {
    let h = DNN_HIDDEN;
    let o = DNN_OUTPUT_DIM;
    let w1 = 0..h * input_dim;
    let b1 = w1.end..w1.end + h;
    let w2 = b1.end..b1.end + h * h;
    let b2 = w2.end..w2.end + h;
    let w3 = b2.end..b2.end + o * h;
    let b3 = w3.end..w3.end + o;
    Layout { w1, b1, w2, b2, w3, b3 }
}

pub fn param_count(input_dim: usize) -> usize {
    layout(input_dim).b3.end
}

fn t<T: Float>(x: f64) -> T {
    T::from(x).expect("float conversion")
}

impl<T: Float> Dnn<T> {
    /// Kaiming-style uniform init scaled by fan-in; zero biases.
    pub fn new(input_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lay = layout(input_dim);
        let mut params = vec![T::zero(); lay.b3.end];
        let mut init = |range: std::ops::Range<usize>, fan_in: usize, rng: &mut ChaCha8Rng| {
            let bound = (6.0 / fan_in as f64).sqrt();
            for p in &mut params[range] {
                *p = t(rng.gen_range(-bound..bound));
            }
        };
        init(lay.w1.clone(), input_dim, &mut rng);
        init(lay.w2.clone(), DNN_HIDDEN, &mut rng);
        init(lay.w3.clone(), DNN_HIDDEN, &mut rng);
        Self { input_dim, params }
    }

    fn affine(w: &[T], b: &[T], x: &[T], out: &mut [T]) {
        let d = x.len();
        for (o, (row, bi)) in out.iter_mut().zip(w.chunks_exact(d).zip(b)) {
            let mut acc = *bi;
            for (wi, xi) in row.iter().zip(x) {
                acc = acc + *wi * *xi;
            }
            *o = acc;
        }
    }

    /// Inference forward pass (no dropout). Returns the two logits.
    pub fn forward(&self, x: &[T]) -> [T; 2] {
        debug_assert_eq!(x.len(), self.input_dim);
        let lay = layout(self.input_dim);
        let mut h1 = [T::zero(); DNN_HIDDEN];
        let mut h2 = [T::zero(); DNN_HIDDEN];
        let mut logits = [T::zero(); DNN_OUTPUT_DIM];
        Self::affine(&self.params[lay.w1], &self.params[lay.b1], x, &mut h1);
        for v in &mut h1 {
            *v = v.max(T::zero());
        }
        Self::affine(&self.params[lay.w2], &self.params[lay.b2], &h1, &mut h2);
        for v in &mut h2 {
            *v = v.max(T::zero());
        }
        Self::affine(&self.params[lay.w3], &self.params[lay.b3], &h2, &mut logits);
        [logits[0], logits[1]]
    }

    pub fn predict_class(&self, x: &[T]) -> u8 {
        let l = self.forward(x);
        (l[1] > l[0]) as u8
    }

    /// Mean cross-entropy loss and gradients over a batch. Dropout masks,
    /// when given, hold the inverted-dropout scale (0 or 1/keep) for each
    /// sample and hidden layer.
    pub fn loss_and_grad(
        &self,
        xs: &[Vec<T>],
        ys: &[u8],
        dropout_masks: Option<&[(Vec<T>, Vec<T>)]>,
        grad: &mut [T],
    ) -> T {
        let lay = layout(self.input_dim);
        for g in grad.iter_mut() {
            *g = T::zero();
        }
        let n = t::<T>(xs.len() as f64);
        let inv_n = T::one() / n;
        let mut loss = T::zero();
        let mut h1 = [T::zero(); DNN_HIDDEN];
        let mut h2 = [T::zero(); DNN_HIDDEN];
        let mut logits = [T::zero(); DNN_OUTPUT_DIM];
        for (si, (x, &y)) in xs.iter().zip(ys).enumerate() {
            Self::affine(&self.params[lay.w1.clone()], &self.params[lay.b1.clone()], x, &mut h1);
            for v in &mut h1 {
                *v = v.max(T::zero());
            }
            if let Some(masks) = dropout_masks {
                for (v, m) in h1.iter_mut().zip(&masks[si].0) {
                    *v = *v * *m;
                }
            }
            Self::affine(&self.params[lay.w2.clone()], &self.params[lay.b2.clone()], &h1, &mut h2);
            for v in &mut h2 {
                *v = v.max(T::zero());
            }
            if let Some(masks) = dropout_masks {
                for (v, m) in h2.iter_mut().zip(&masks[si].1) {
                    *v = *v * *m;
                }
            }
            Self::affine(&self.params[lay.w3.clone()], &self.params[lay.b3.clone()], &h2, &mut logits);

            // Softmax cross-entropy, numerically stable.
            let m = logits[0].max(logits[1]);
            let e0 = (logits[0] - m).exp();
            let e1 = (logits[1] - m).exp();
            let z = e0 + e1;
            let log_p_y = logits[y as usize] - m - z.ln();
            loss = loss - log_p_y * inv_n;

            // d loss / d logits
            let mut dl = [e0 / z, e1 / z];
            dl[y as usize] = dl[y as usize] - T::one();
            dl[0] = dl[0] * inv_n;
            dl[1] = dl[1] * inv_n;

            // Layer 3 grads and back into h2.
            let mut dh2 = [T::zero(); DNN_HIDDEN];
            {
                let w3 = &self.params[lay.w3.clone()];
                let gw3 = &mut grad[lay.w3.clone()];
                for (o, dlo) in dl.iter().enumerate() {
                    let row = &mut gw3[o * DNN_HIDDEN..(o + 1) * DNN_HIDDEN];
                    let wrow = &w3[o * DNN_HIDDEN..(o + 1) * DNN_HIDDEN];
                    for j in 0..DNN_HIDDEN {
                        row[j] = row[j] + *dlo * h2[j];
                        dh2[j] = dh2[j] + *dlo * wrow[j];
                    }
                }
                let gb3 = &mut grad[lay.b3.clone()];
                gb3[0] = gb3[0] + dl[0];
                gb3[1] = gb3[1] + dl[1];
            }
            // Through dropout and ReLU of layer 2.
            if let Some(masks) = dropout_masks {
                for (d, m) in dh2.iter_mut().zip(&masks[si].1) {
                    *d = *d * *m;
                }
            }
            for (d, v) in dh2.iter_mut().zip(&h2) {
                // h2 already includes the dropout scale, but zero stays zero
                // either way and positive stays positive.
                if *v <= T::zero() {
                    *d = T::zero();
                }
            }

            // Layer 2 grads and back into h1.
            let mut dh1 = [T::zero(); DNN_HIDDEN];
            {
                let w2 = &self.params[lay.w2.clone()];
                let gw2 = &mut grad[lay.w2.clone()];
                for (o, d2) in dh2.iter().enumerate() {
                    if *d2 == T::zero() {
                        continue;
                    }
                    let row = &mut gw2[o * DNN_HIDDEN..(o + 1) * DNN_HIDDEN];
                    let wrow = &w2[o * DNN_HIDDEN..(o + 1) * DNN_HIDDEN];
                    for j in 0..DNN_HIDDEN {
                        row[j] = row[j] + *d2 * h1[j];
                        dh1[j] = dh1[j] + *d2 * wrow[j];
                    }
                }
                let gb2 = &mut grad[lay.b2.clone()];
                for (g, d2) in gb2.iter_mut().zip(&dh2) {
                    *g = *g + *d2;
                }
            }
            // Through dropout and ReLU of layer 1.
            if let Some(masks) = dropout_masks {
                for (d, m) in dh1.iter_mut().zip(&masks[si].0) {
                    *d = *d * *m;
                }
            }
            for (d, v) in dh1.iter_mut().zip(&h1) {
                if *v <= T::zero() {
                    *d = T::zero();
                }
            }

            // Layer 1 grads.
            {
                let din = self.input_dim;
                let gw1 = &mut grad[lay.w1.clone()];
                for (o, d1) in dh1.iter().enumerate() {
                    if *d1 == T::zero() {
                        continue;
                    }
                    let row = &mut gw1[o * din..(o + 1) * din];
                    for (g, xi) in row.iter_mut().zip(x) {
                        *g = *g + *d1 * *xi;
                    }
                }
                let gb1 = &mut grad[lay.b1.clone()];
                for (g, d1) in gb1.iter_mut().zip(&dh1) {
                    *g = *g + *d1;
                }
            }
        }
        loss
    }
}

impl Model for Dnn<f32> {
    fn predict(&self, x: &[f64]) -> u8 {
        let xf: Vec<f32> = x.iter().map(|&v| v as f32).collect();
        self.predict_class(&xf)
    }
}

/// Training outcome: the best-validation snapshot plus the per-epoch
/// validation history.
#[derive(Debug, Clone)]
pub struct DnnTrainResult {
    pub model: Dnn<f32>,
    pub best_val_accuracy: f64,
    pub val_accuracy_history: Vec<f64>,
}

fn accuracy_f32(model: &Dnn<f32>, xs: &[Vec<f32>], ys: &[u8], idx: &[usize]) -> f64 {
    let correct = idx
        .iter()
        .filter(|&&i| model.predict_class(&xs[i]) == ys[i])
        .count();
    correct as f64 / idx.len() as f64
}

/// Trains the network per the configuration and returns the parameter
/// snapshot with the highest validation accuracy.
pub fn dnn_train(features: &[Vec<f64>], labels: &[u8], config: &TrainConfig) -> Result<DnnTrainResult> {
    if features.is_empty() || features.len() != labels.len() {
        return Err(CochleaError::InvalidArgument(
            "features and labels must be non-empty and equal length".into(),
        ));
    }
    let first = labels[0];
    if labels.iter().all(|&y| y == first) {
        return Err(CochleaError::Training(
            "training data contains a single class".into(),
        ));
    }
    let input_dim = features[0].len();
    let xs: Vec<Vec<f32>> = features
        .iter()
        .map(|r| r.iter().map(|&v| v as f32).collect())
        .collect();

    let (train_idx, val_idx) = split_train_val(xs.len(), config.val_fraction, config.seed);
    if train_idx.is_empty() || val_idx.is_empty() {
        return Err(CochleaError::InsufficientData(
            "not enough frames for a train/validation split".into(),
        ));
    }

    let mut model: Dnn<f32> = Dnn::new(input_dim, config.seed);
    let n_params = model.params.len();
    let mut grad = vec![0.0f32; n_params];
    let mut m = vec![0.0f32; n_params];
    let mut v = vec![0.0f32; n_params];
    let (beta1, beta2, eps) = (0.9f32, 0.999f32, 1e-8f32);
    let lr = config.learning_rate as f32;
    let keep = 1.0 - config.dropout;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0xD0_77));
    let mut step = 0u32;

    let mut best = DnnTrainResult {
        model: model.clone(),
        best_val_accuracy: accuracy_f32(&model, &xs, labels, &val_idx),
        val_accuracy_history: Vec::with_capacity(config.epochs),
    };

    let mut order = train_idx.clone();
    for _epoch in 0..config.epochs {
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let bx: Vec<Vec<f32>> = batch.iter().map(|&i| xs[i].clone()).collect();
            let by: Vec<u8> = batch.iter().map(|&i| labels[i]).collect();
            let masks: Vec<(Vec<f32>, Vec<f32>)> = (0..bx.len())
                .map(|_| {
                    let mk = |rng: &mut ChaCha8Rng| {
                        (0..DNN_HIDDEN)
                            .map(|_| {
                                if rng.gen::<f64>() < keep {
                                    (1.0 / keep) as f32
                                } else {
                                    0.0
                                }
                            })
                            .collect::<Vec<f32>>()
                    };
                    (mk(&mut rng), mk(&mut rng))
                })
                .collect();
            let dropout = if config.dropout > 0.0 { Some(&masks[..]) } else { None };
            model.loss_and_grad(&bx, &by, dropout, &mut grad);
            step += 1;
            let bc1 = 1.0 - beta1.powi(step as i32);
            let bc2 = 1.0 - beta2.powi(step as i32);
            for i in 0..n_params {
                m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                model.params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        let val_acc = accuracy_f32(&model, &xs, labels, &val_idx);
        best.val_accuracy_history.push(val_acc);
        if val_acc > best.best_val_accuracy {
            best.best_val_accuracy = val_acc;
            best.model = model.clone();
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::super::test_support::blobs;
    use super::*;

    #[test]
    fn parameter_count_matches_structure() {
        // 152·64+64 + 64·64+64 + 64·2+2
        assert_eq!(DNN_PARAM_COUNT, 14_082);
        let model: Dnn<f32> = Dnn::new(DNN_INPUT_DIM, 0);
        assert_eq!(model.params.len(), DNN_PARAM_COUNT);
        assert_eq!(param_count(DNN_INPUT_DIM), DNN_PARAM_COUNT);
    }

    #[test]
    fn separable_blobs_reach_99_percent_validation() {
        let (xs, ys) = blobs(152, 400, 21);
        let config = TrainConfig {
            learning_rate: 1e-3,
            ..TrainConfig::default()
        };
        let result = dnn_train(&xs, &ys, &config).unwrap();
        assert!(
            result.best_val_accuracy >= 0.99,
            "val acc {}",
            result.best_val_accuracy
        );
    }

    #[test]
    fn gradients_match_central_finite_differences() {
        // Same code path as f32 training, instantiated in f64, dropout off.
        let input_dim = 9;
        let mut model: Dnn<f64> = Dnn::new(input_dim, 3);
        let (xs64, ys) = blobs(input_dim, 6, 17);
        let xs: Vec<Vec<f64>> = xs64;
        let mut grad = vec![0.0; model.params.len()];
        model.loss_and_grad(&xs, &ys, None, &mut grad);
        let analytic = grad.clone();
        let h = 1e-6;
        let mut scratch = vec![0.0; model.params.len()];
        for i in 0..model.params.len() {
            let orig = model.params[i];
            model.params[i] = orig + h;
            let lp = model.loss_and_grad(&xs, &ys, None, &mut scratch);
            model.params[i] = orig - h;
            let lm = model.loss_and_grad(&xs, &ys, None, &mut scratch);
            model.params[i] = orig;
            let fd = (lp - lm) / (2.0 * h);
            let denom = fd.abs().max(analytic[i].abs()).max(1e-8);
            assert!(
                (fd - analytic[i]).abs() / denom <= 1e-3,
                "param {i}: fd {fd}, analytic {}",
                analytic[i]
            );
        }
    }

    #[test]
    fn inference_is_deterministic() {
        let (xs, ys) = blobs(20, 80, 5);
        let result = dnn_train(&xs, &ys, &TrainConfig::default()).unwrap();
        let x: Vec<f32> = xs[0].iter().map(|&v| v as f32).collect();
        let a = result.model.forward(&x);
        let b = result.model.forward(&x);
        assert_eq!(a, b);
    }

    #[test]
    fn seeded_training_is_reproducible() {
        let (xs, ys) = blobs(20, 80, 5);
        let config = TrainConfig {
            epochs: 3,
            ..TrainConfig::default()
        };
        let r1 = dnn_train(&xs, &ys, &config).unwrap();
        let r2 = dnn_train(&xs, &ys, &config).unwrap();
        assert_eq!(r1.model.params, r2.model.params);
        let mut other = config;
        other.seed = 1;
        let r3 = dnn_train(&xs, &ys, &other).unwrap();
        assert_ne!(r1.model.params, r3.model.params);
    }

    #[test]
    fn early_stopping_returns_best_snapshot() {
        let (xs, ys) = blobs(20, 120, 9);
        let config = TrainConfig {
            epochs: 10,
            learning_rate: 1e-3,
            ..TrainConfig::default()
        };
        let result = dnn_train(&xs, &ys, &config).unwrap();
        for &acc in &result.val_accuracy_history {
            assert!(result.best_val_accuracy >= acc);
        }
    }

    #[test]
    fn single_class_rejected() {
        let xs = vec![vec![0.0; 4]; 8];
        assert!(dnn_train(&xs, &[1; 8], &TrainConfig::default()).is_err());
    }
}
