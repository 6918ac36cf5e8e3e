//! 152-dimensional frame features from event streams: an 80-bin
//! inter-spike-interval histogram pooled across channels, per-channel spike
//! counts for the 36 active channels, and per-channel average gain.

use serde::{Deserialize, Serialize};

use crate::adm::SpikeEvent;
use crate::error::{CochleaError, Result};
use crate::filterbank::{FilterbankConfig, MAX_GAIN_INDEX};

pub const ISI_BINS: usize = 80;
pub const MAX_ISI_MS: f64 = 150.0;
pub const FEATURE_DIM: usize = 152;
pub const DEFAULT_FRAME_MS: u64 = 400;

/// Class label of a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    Speech,
    Noise,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        match self {
            Label::Noise => 0,
            Label::Speech => 1,
        }
    }

    pub fn from_u8(v: u8) -> Option<Label> {
        match v {
            0 => Some(Label::Noise),
            1 => Some(Label::Speech),
            _ => None,
        }
    }
}

/// One frame's feature vector plus its provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameFeature {
    pub isi_hist: Vec<f64>,
    pub channel_counts: Vec<f64>,
    pub channel_gains: Vec<f64>,
    pub frame_start_us: u64,
    pub frame_len_us: u64,
    pub label: Option<Label>,
}

impl FrameFeature {
    /// Flattened 152-dimensional vector: histogram, counts, gains.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(FEATURE_DIM);
        v.extend_from_slice(&self.isi_hist);
        v.extend_from_slice(&self.channel_counts);
        v.extend_from_slice(&self.channel_gains);
        v
    }

    pub fn dim(&self) -> usize {
        self.isi_hist.len() + self.channel_counts.len() + self.channel_gains.len()
    }
}

/// Piecewise-constant per-channel gain-index history of a simulation.
///
/// Stores the initial index per channel plus the change points, and can
/// integrate the time-weighted mean over an interval.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct GainTrace {
    /// (channel -> initial gain index at t = 0)
    pub initial: Vec<u8>,
    /// Change points, time-ordered: (time_us, channel, new gain index).
    pub changes: Vec<(u64, u8, u8)>,
}

impl GainTrace {
    pub fn constant(num_channels: usize, gain_index: u8) -> Self {
        Self {
            initial: vec![gain_index; num_channels],
            changes: Vec::new(),
        }
    }

    pub fn push(&mut self, time_us: u64, channel: u8, gain_index: u8) {
        self.changes.push((time_us, channel, gain_index));
    }

    /// Time-weighted mean gain index of `channel` over `[start, end)`.
    pub fn mean_gain(&self, channel: u8, start_us: u64, end_us: u64) -> f64 {
        let mut current = self.initial[channel as usize] as f64;
        let mut t = start_us;
        let mut acc = 0.0;
        for &(ct, ch, gi) in &self.changes {
            if ch != channel {
                continue;
            }
            if ct <= start_us {
                current = gi as f64;
                continue;
            }
            if ct >= end_us {
                break;
            }
            acc += current * (ct - t) as f64;
            current = gi as f64;
            t = ct;
        }
        acc += current * (end_us - t) as f64;
        acc / (end_us - start_us) as f64
    }
}

fn isi_bin(isi_us: u64) -> Option<usize> {
    let isi_ms = isi_us as f64 / 1000.0;
    if isi_ms > MAX_ISI_MS {
        return None;
    }
    let width = MAX_ISI_MS / ISI_BINS as f64; // 1.875 ms
    Some(((isi_ms / width) as usize).min(ISI_BINS - 1))
}

/// 80-bin ISI histogram over one frame. ISIs are consecutive event spacings
/// per channel (both polarities pooled), intervals above 150 ms are dropped,
/// and the per-channel intervals are pooled into one histogram of raw
/// counts. Events must be time-ordered.
pub fn isi_histogram(events: &[SpikeEvent], active_channels: &[u8]) -> Vec<f64> {
    let mut hist = vec![0.0; ISI_BINS];
    for &ch in active_channels {
        let mut last: Option<u64> = None;
        for ev in events.iter().filter(|e| e.channel == ch) {
            if let Some(prev) = last {
                if let Some(bin) = isi_bin(ev.timestamp_us - prev) {
                    hist[bin] += 1.0;
                }
            }
            last = Some(ev.timestamp_us);
        }
    }
    hist
}

/// Event count per active channel within the frame, in active-channel order.
/// Events from inactive channels are ignored.
pub fn bin_spike_counts(events: &[SpikeEvent], active_channels: &[u8]) -> Vec<f64> {
    let mut counts = vec![0.0; active_channels.len()];
    for ev in events {
        if let Some(slot) = active_channels.iter().position(|&c| c == ev.channel) {
            counts[slot] += 1.0;
        }
    }
    counts
}

/// Per-channel average gain feature. With AGC the time-weighted mean gain
/// index over the frame is used; without AGC every value is the constant
/// maximum index (non-AGC recordings use the maximal gain setting).
pub fn average_channel_gain(
    gain_trace: Option<&GainTrace>,
    active_channels: &[u8],
    frame_start_us: u64,
    frame_end_us: u64,
    agc_enabled: bool,
) -> Result<Vec<f64>> {
    if !agc_enabled {
        return Ok(vec![MAX_GAIN_INDEX as f64; active_channels.len()]);
    }
    let trace = gain_trace.ok_or_else(|| {
        CochleaError::InvalidArgument("AGC mode requires a gain trace".into())
    })?;
    Ok(active_channels
        .iter()
        .map(|&ch| trace.mean_gain(ch, frame_start_us, frame_end_us))
        .collect())
}

/// Splits a recording into consecutive non-overlapping frames and computes
/// the 152-dim feature of each. Frames are half-open `[k*L, (k+1)*L)`; the
/// trailing partial frame is discarded. ISIs spanning a frame boundary are
/// dropped (both events must fall in the frame).
pub fn frame_stream(
    events: &[SpikeEvent],
    gain_trace: Option<&GainTrace>,
    recording_len_us: u64,
    frame_len_ms: u64,
    cfg: &FilterbankConfig,
    agc_enabled: bool,
    label: Option<Label>,
) -> Result<Vec<FrameFeature>> {
    let frame_len_us = frame_len_ms * 1000;
    let n_frames = recording_len_us / frame_len_us;
    let active = cfg.active_channels();
    let mut out = Vec::with_capacity(n_frames as usize);
    let mut cursor = 0usize;
    for k in 0..n_frames {
        let start = k * frame_len_us;
        let end = start + frame_len_us;
        while cursor < events.len() && events[cursor].timestamp_us < start {
            cursor += 1;
        }
        let mut hi = cursor;
        while hi < events.len() && events[hi].timestamp_us < end {
            hi += 1;
        }
        let frame_events = &events[cursor..hi];
        cursor = hi;
        out.push(FrameFeature {
            isi_hist: isi_histogram(frame_events, &active),
            channel_counts: bin_spike_counts(frame_events, &active),
            channel_gains: average_channel_gain(gain_trace, &active, start, end, agc_enabled)?,
            frame_start_us: start,
            frame_len_us,
            label,
        });
    }
    Ok(out)
}

/// Per-dimension z-scoring transform fitted on training data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    /// Population standard deviation; zero-variance dimensions are flagged
    /// with 0 here and map to 0 on transform.
    pub std: Vec<f64>,
}

impl Normalizer {
    /// Fits mean and population standard deviation per dimension.
    pub fn fit(train: &[Vec<f64>]) -> Result<Self> {
        if train.len() < 2 {
            return Err(CochleaError::InsufficientData(
                "need at least 2 training frames to fit a normalizer".into(),
            ));
        }
        let dim = train[0].len();
        let n = train.len() as f64;
        let mut mean = vec![0.0; dim];
        for row in train {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0; dim];
        for row in train {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                let d = v - m;
                *s += d * d;
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    0.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| if *s > 0.0 { (v - m) / s } else { 0.0 })
            .collect()
    }

    pub fn transform(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        rows.iter().map(|r| self.transform_row(r)).collect()
    }
}

/// Fits a normalizer on the training set and returns it with the
/// transformed training set.
pub fn normalize_features(train: &[Vec<f64>]) -> Result<(Normalizer, Vec<Vec<f64>>)> {
    let norm = Normalizer::fit(train)?;
    let transformed = norm.transform(train);
    Ok((norm, transformed))
}
