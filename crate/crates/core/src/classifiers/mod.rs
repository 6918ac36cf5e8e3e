//! Evaluation models for the speech-vs-noise task: a double-precision
//! logistic-regression classifier and a small fully connected network.

mod dnn;
mod lr;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{CochleaError, Result};

pub use dnn::{
    dnn_train, param_count, Dnn, DnnF32, DnnTrainResult, DNN_HIDDEN, DNN_INPUT_DIM,
    DNN_OUTPUT_DIM, DNN_PARAM_COUNT,
};
pub use lr::{lr_train, LrModel, LrTrainOptions};

/// Shared training configuration (paper defaults for the DNN).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub dropout: f64,
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 64,
            learning_rate: 5e-5,
            dropout: 0.3,
            val_fraction: 0.25,
            seed: 0,
        }
    }
}

/// Anything that can classify a feature vector into class 0 or 1.
pub trait Model {
    fn predict(&self, x: &[f64]) -> u8;
}

/// Accuracy report with a per-amplitude breakdown. Amplitudes are keyed in
/// microvolt-equivalent integer units to keep the grouping exact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub overall_accuracy: f64,
    /// (amplitude in mV, accuracy), ascending by amplitude.
    pub per_amplitude: Vec<(f64, f64)>,
    /// Unweighted mean of the per-amplitude accuracies.
    pub mean_across_amplitudes: f64,
}

/// Evaluates a model on labeled frames carrying amplitude metadata.
pub fn evaluate(
    model: &dyn Model,
    features: &[Vec<f64>],
    labels: &[u8],
    amplitudes_mv: &[f64],
) -> Result<EvalReport> {
    if features.is_empty() || features.len() != labels.len() || labels.len() != amplitudes_mv.len()
    {
        return Err(CochleaError::InvalidArgument(
            "features, labels and amplitudes must be non-empty and equal length".into(),
        ));
    }
    let mut total_correct = 0usize;
    let mut by_amp: BTreeMap<i64, (usize, usize)> = BTreeMap::new();
    for ((x, &y), &amp) in features.iter().zip(labels).zip(amplitudes_mv) {
        let correct = model.predict(x) == y;
        total_correct += correct as usize;
        let key = (amp * 1000.0).round() as i64;
        let slot = by_amp.entry(key).or_insert((0, 0));
        slot.0 += correct as usize;
        slot.1 += 1;
    }
    let per_amplitude: Vec<(f64, f64)> = by_amp
        .iter()
        .map(|(&k, &(c, n))| (k as f64 / 1000.0, c as f64 / n as f64))
        .collect();
    let mean_across_amplitudes =
        per_amplitude.iter().map(|(_, a)| a).sum::<f64>() / per_amplitude.len() as f64;
    Ok(EvalReport {
        overall_accuracy: total_correct as f64 / labels.len() as f64,
        per_amplitude,
        mean_across_amplitudes,
    })
}

/// Relative decrease of the error rate when AGC is enabled, in percent:
/// `100 * ((1 - acc_non) - (1 - acc_agc)) / (1 - acc_non)`.
pub fn relative_error_decrease(acc_agc: f64, acc_non_agc: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&acc_agc) || !(0.0..=1.0).contains(&acc_non_agc) {
        return Err(CochleaError::InvalidArgument(
            "accuracies must lie in [0, 1]".into(),
        ));
    }
    if acc_non_agc >= 1.0 {
        return Err(CochleaError::InvalidArgument(
            "relative error decrease undefined at zero baseline error".into(),
        ));
    }
    Ok(100.0 * ((1.0 - acc_non_agc) - (1.0 - acc_agc)) / (1.0 - acc_non_agc))
}

/// Deterministic train/validation split: shuffles indices with the seed and
/// holds out the trailing `val_fraction`.
pub(crate) fn split_train_val(
    n: usize,
    val_fraction: f64,
    seed: u64,
) -> (Vec<usize>, Vec<usize>) {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_5711);
    idx.shuffle(&mut rng);
    let n_val = ((n as f64) * val_fraction).round() as usize;
    let n_train = n - n_val;
    let val = idx.split_off(n_train);
    (idx, val)
}
