//! Synthetic labeled corpus: speech-like clips (harmonic stacks with a
//! syllabic amplitude envelope and pauses) versus noise clips (filtered
//! noise, tones, chirps). Stands in for hardware recordings of real speech
//! corpora; generation is fully determined by the seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::audio::SAMPLE_RATE_HZ;
use crate::error::{CochleaError, Result};
use crate::features::Label;
use crate::filterbank::BiquadSection;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusSpec {
    /// Total duration of the split in seconds.
    pub duration_s: f64,
    /// Duration of one clip in seconds.
    pub clip_s: f64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            duration_s: 600.0,
            clip_s: 4.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Recording {
    pub id: String,
    pub label: Label,
    /// Samples at 44.1 kHz, normalized to RMS 1.0 full-scale; the playback
    /// amplitude is applied later by `normalize_rms`.
    pub samples: Vec<f64>,
}

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

fn speech_like(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let pitch = rng.gen_range(100.0..300.0);
    let syllabic_hz = rng.gen_range(2.0..8.0);
    let syllabic_phase = rng.gen_range(0.0..TWO_PI);
    // Random spectral envelope over the harmonics (a crude formant shape).
    let n_harm = ((4000.0 / pitch) as usize).clamp(3, 16);
    let weights: Vec<f64> = (1..=n_harm)
        .map(|k| rng.gen_range(0.2..1.0) / k as f64)
        .collect();
    // Pauses: a slow gate with random period and ~70% duty cycle.
    let pause_period_s = rng.gen_range(0.6..1.2);
    let pause_phase = rng.gen_range(0.0..1.0);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / SAMPLE_RATE_HZ;
        let gate_pos = (t / pause_period_s + pause_phase).fract();
        let gate = if gate_pos < 0.7 { 1.0 } else { 0.0 };
        let env = {
            let s = 0.5 + 0.5 * (TWO_PI * syllabic_hz * t + syllabic_phase).sin();
            s * s
        };
        let mut v = 0.0;
        for (k, w) in weights.iter().enumerate() {
            v += w * (TWO_PI * pitch * (k + 1) as f64 * t).sin();
        }
        out.push(v * env * gate);
    }
    out
}

fn noise_like(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    match rng.gen_range(0..3u32) {
        0 => {
            // Band-filtered white noise.
            let center = rng.gen_range(150.0..3500.0);
            let q = rng.gen_range(0.8..3.0);
            let mut filt = BiquadSection::bandpass(center, q, SAMPLE_RATE_HZ);
            (0..n)
                .map(|_| filt.process(rng.gen_range(-1.0..1.0)))
                .collect()
        }
        1 => {
            // Steady tone.
            let f = rng.gen_range(100.0..4000.0);
            let phase = rng.gen_range(0.0..TWO_PI);
            (0..n)
                .map(|i| (TWO_PI * f * i as f64 / SAMPLE_RATE_HZ + phase).sin())
                .collect()
        }
        _ => {
            // Linear chirp across part of the band.
            let f0 = rng.gen_range(100.0..1000.0);
            let f1 = rng.gen_range(1000.0..4000.0);
            let dur = n as f64 / SAMPLE_RATE_HZ;
            (0..n)
                .map(|i| {
                    let t = i as f64 / SAMPLE_RATE_HZ;
                    let f = f0 + (f1 - f0) * t / dur;
                    (TWO_PI * (f0 * t + 0.5 * (f - f0) * t)).sin()
                })
                .collect()
        }
    }
}

/// Generates a balanced corpus: clips alternate speech/noise so the class
/// balance is exactly 50/50 by duration. Different seeds give disjoint
/// streams, which is how train and test splits are kept disjoint.
pub fn synth_corpus(spec: &CorpusSpec, seed: u64) -> Result<Vec<Recording>> {
    if spec.duration_s <= 0.0 || spec.clip_s <= 0.0 {
        return Err(CochleaError::InvalidArgument(
            "corpus durations must be positive".into(),
        ));
    }
    let mut n_clips = (spec.duration_s / spec.clip_s).round().max(2.0) as usize;
    if n_clips % 2 == 1 {
        n_clips += 1;
    }
    let clip_samples = (spec.clip_s * SAMPLE_RATE_HZ).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_clips);
    for c in 0..n_clips {
        let label = if c % 2 == 0 { Label::Speech } else { Label::Noise };
        let raw = match label {
            Label::Speech => speech_like(clip_samples, &mut rng),
            Label::Noise => noise_like(clip_samples, &mut rng),
        };
        // Normalize each clip to RMS 1.0; zero-RMS cannot happen by
        // construction but guard anyway.
        let r = super::audio::rms(&raw);
        if r == 0.0 {
            return Err(CochleaError::InvalidArgument(
                "generated clip is silent".into(),
            ));
        }
        let samples = raw.iter().map(|v| v / r).collect();
        out.push(Recording {
            id: format!("s{seed}-c{c:03}"),
            label,
            samples,
        });
    }
    Ok(out)
}

/// Signal power at one frequency via the Goertzel recurrence.
pub fn goertzel_power(samples: &[f64], freq_hz: f64, sample_rate_hz: f64) -> f64 {
    let w = TWO_PI * freq_hz / sample_rate_hz;
    let coeff = 2.0 * w.cos();
    let (mut s1, mut s2) = (0.0f64, 0.0f64);
    for &x in samples {
        let s0 = x + coeff * s1 - s2;
        s2 = s1;
        s1 = s0;
    }
    (s1 * s1 + s2 * s2 - coeff * s1 * s2) / (samples.len() as f64).powi(2)
}
