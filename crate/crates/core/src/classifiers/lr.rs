//! Logistic-regression classifier, trained in double precision with
//! full-batch gradient descent, L2 regularization and backtracking line
//! search. Deterministic: zero initialization, no data shuffling.

use serde::{Deserialize, Serialize};

use super::Model;
use crate::error::{CochleaError, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LrModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LrTrainOptions {
    pub l2_lambda: f64,
    pub grad_tolerance: f64,
    pub max_iterations: usize,
}

impl Default for LrTrainOptions {
    fn default() -> Self {
        Self {
            l2_lambda: 1e-4,
            grad_tolerance: 1e-6,
            max_iterations: 2000,
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl LrModel {
    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        let z: f64 = self
            .weights
            .iter()
            .zip(x)
            .map(|(w, v)| w * v)
            .sum::<f64>()
            + self.bias;
        sigmoid(z)
    }
}

impl Model for LrModel {
    fn predict(&self, x: &[f64]) -> u8 {
        (self.predict_proba(x) >= 0.5) as u8
    }
}

/// Mean cross-entropy plus L2 penalty, with its gradient.
fn loss_and_grad(
    w: &[f64],
    b: f64,
    xs: &[Vec<f64>],
    ys: &[u8],
    lambda: f64,
) -> (f64, Vec<f64>, f64) {
    let n = xs.len() as f64;
    let dim = w.len();
    let mut loss = 0.0;
    let mut gw = vec![0.0; dim];
    let mut gb = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        let z: f64 = w.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>() + b;
        let p = sigmoid(z);
        let t = y as f64;
        // Numerically stable BCE via log-sum-exp.
        loss += z.max(0.0) - z * t + (-z.abs()).exp().ln_1p();
        let err = p - t;
        for (g, xi) in gw.iter_mut().zip(x) {
            *g += err * xi;
        }
        gb += err;
    }
    loss /= n;
    gb /= n;
    let mut penalty = 0.0;
    for (g, wi) in gw.iter_mut().zip(w) {
        *g = *g / n + lambda * wi;
        penalty += wi * wi;
    }
    loss += 0.5 * lambda * penalty;
    (loss, gw, gb)
}

/// Trains an LR model to the gradient tolerance or iteration cap.
pub fn lr_train(features: &[Vec<f64>], labels: &[u8], opts: &LrTrainOptions) -> Result<LrModel> {
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
    let dim = features[0].len();
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut step = 1.0f64;
    let (mut loss, mut gw, mut gb) = loss_and_grad(&w, b, features, labels, opts.l2_lambda);
    for _ in 0..opts.max_iterations {
        let grad_norm = (gw.iter().map(|g| g * g).sum::<f64>() + gb * gb).sqrt();
        if grad_norm <= opts.grad_tolerance {
            break;
        }
        // Backtracking line search on the descent direction -grad.
        let mut accepted = false;
        for _ in 0..40 {
            let w_try: Vec<f64> = w.iter().zip(&gw).map(|(wi, gi)| wi - step * gi).collect();
            let b_try = b - step * gb;
            let (loss_try, gw_try, gb_try) =
                loss_and_grad(&w_try, b_try, features, labels, opts.l2_lambda);
            // Armijo condition.
            if loss_try <= loss - 0.5 * step * grad_norm * grad_norm {
                w = w_try;
                b = b_try;
                loss = loss_try;
                gw = gw_try;
                gb = gb_try;
                // Allow the step to grow back after successful moves.
                step *= 2.0;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break; // step underflowed; gradient is numerically flat
        }
    }
    Ok(LrModel { weights: w, bias: b })
}
