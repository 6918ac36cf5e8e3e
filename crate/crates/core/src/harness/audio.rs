//! WAV ingestion, resampling and RMS normalization.
//!
//! Amplitude convention: digital full-scale 1.0 corresponds to a
//! 100 mV_RMS-equivalent signal, so the millivolt amplitude grids used
//! throughout map into [0.02, 0.8] full-scale.

use std::path::Path;

use hound::{SampleFormat, WavSpec, WavWriter};

use crate::error::{CochleaError, Result};

/// Simulator sample rate (board ADC rate).
pub const SAMPLE_RATE_HZ: f64 = 44_100.0;

/// Full-scale 1.0 in millivolt-equivalents.
pub const FULL_SCALE_MV: f64 = 100.0;

pub fn mv_to_full_scale(mv: f64) -> f64 {
    mv / FULL_SCALE_MV
}

/// Loads a PCM WAV file as a mono stream at 44.1 kHz. Stereo is averaged to
/// mono; other rates are linearly resampled.
pub fn load_audio(path: &Path) -> Result<Vec<f64>> {
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 || channels > 2 {
        return Err(CochleaError::UnsupportedEncoding(format!(
            "{} channels (mono or stereo only)",
            channels
        )));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, bits @ 1..=32) => {
            let scale = (1i64 << (bits - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<std::result::Result<_, _>>()?
        }
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()?,
        (fmt, bits) => {
            return Err(CochleaError::UnsupportedEncoding(format!(
                "{fmt:?} at {bits} bits"
            )))
        }
    };
    let mono: Vec<f64> = if channels == 2 {
        interleaved
            .chunks_exact(2)
            .map(|p| 0.5 * (p[0] + p[1]))
            .collect()
    } else {
        interleaved
    };
    if spec.sample_rate as f64 == SAMPLE_RATE_HZ {
        Ok(mono)
    } else {
        Ok(resample_linear(&mono, spec.sample_rate as f64, SAMPLE_RATE_HZ))
    }
}

/// Writes a mono 16-bit PCM WAV at 44.1 kHz; samples are clamped to ±1.
pub fn write_wav(path: &Path, samples: &[f64]) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE_HZ as u32,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut writer = WavWriter::create(path, spec)?;
    for &s in samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        writer.write_sample(v)?;
    }
    writer.finalize()?;
    Ok(())
}

/// Linear-interpolation resampler.
pub fn resample_linear(input: &[f64], from_hz: f64, to_hz: f64) -> Vec<f64> {
    if input.is_empty() {
        return Vec::new();
    }
    let ratio = from_hz / to_hz;
    let n_out = ((input.len() as f64) / ratio).floor() as usize;
    (0..n_out)
        .map(|i| {
            let pos = i as f64 * ratio;
            let k = pos.floor() as usize;
            let frac = pos - k as f64;
            let a = input[k];
            let b = *input.get(k + 1).unwrap_or(&input[k]);
            a + frac * (b - a)
        })
        .collect()
}

pub fn rms(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    (samples.iter().map(|s| s * s).sum::<f64>() / samples.len() as f64).sqrt()
}

/// Scales the stream so its RMS equals `target_mv` under the 100 mV
/// full-scale convention. Silent input is an error.
pub fn normalize_rms(samples: &[f64], target_mv: f64) -> Result<Vec<f64>> {
    if target_mv <= 0.0 {
        return Err(CochleaError::InvalidArgument(
            "target amplitude must be positive".into(),
        ));
    }
    let current = rms(samples);
    if current == 0.0 {
        return Err(CochleaError::InvalidArgument(
            "cannot normalize silent input".into(),
        ));
    }
    let scale = mv_to_full_scale(target_mv) / current;
    Ok(samples.iter().map(|s| s * scale).collect())
}

/// A sine test tone with the given RMS amplitude in mV-equivalents.
pub fn sine_mv(freq_hz: f64, amplitude_mv: f64, duration_s: f64) -> Vec<f64> {
    let n = (duration_s * SAMPLE_RATE_HZ).round() as usize;
    let peak = mv_to_full_scale(amplitude_mv) * std::f64::consts::SQRT_2;
    (0..n)
        .map(|i| peak * (2.0 * std::f64::consts::PI * freq_hz * i as f64 / SAMPLE_RATE_HZ).sin())
        .collect()
}
