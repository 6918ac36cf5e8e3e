//! Event-driven step-wise gain controller.
//!
//! Mirrors the FPGA implementation it models: per channel, a 12-bit window
//! length in 0.1 ms ticks, a 12-bit time counter, a 6-bit saturating spike
//! counter and a 4-bit gain index. At the end of each averaging window the
//! spike count is compared against two thresholds and the gain index steps
//! by one in the direction opposite to the exceeded threshold. Gain updates
//! are serialized through a 128-entry FIFO because loading a new gain into
//! a channel takes 0.5 ms and only one channel can be loaded at a time.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::adm::SpikeEvent;
use crate::error::{CochleaError, Result};
use crate::filterbank::{channel_center_freq, FilterbankConfig, MAX_GAIN_INDEX};

/// Controller parameters. Defaults follow the hardware register widths:
/// 12-bit window registers (0.1 ms .. 409.5 ms) and a 6-bit spike counter.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AgcParams {
    /// Averaging window length in periods of the channel center frequency.
    pub n_periods: u32,
    /// Gain increases when the window's spike count is below this.
    pub t_lower: u8,
    /// Gain decreases when the window's spike count reaches this.
    pub t_upper: u8,
    pub tick_us: u64,
    pub window_max_ticks: u16,
    pub counter_max: u8,
    pub settle_time_us: u64,
    pub queue_capacity: usize,
}

impl Default for AgcParams {
    fn default() -> Self {
        Self {
            n_periods: 8,
            t_lower: 1,
            t_upper: 16,
            tick_us: 100,
            window_max_ticks: 4095,
            counter_max: 63,
            settle_time_us: 500,
            queue_capacity: 128,
        }
    }
}

impl AgcParams {
    pub fn validate(&self) -> Result<()> {
        if self.t_lower >= self.t_upper {
            return Err(CochleaError::InvalidArgument(
                "t_lower must be below t_upper".into(),
            ));
        }
        if self.t_upper > self.counter_max {
            return Err(CochleaError::InvalidArgument(
                "t_upper must fit in the saturating counter".into(),
            ));
        }
        if self.n_periods == 0 || self.tick_us == 0 {
            return Err(CochleaError::InvalidArgument(
                "n_periods and tick_us must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Length of a channel's averaging window in controller ticks:
/// `round(n_periods / F_ch / tick)`, clamped to the 12-bit register range.
pub fn averaging_window_ticks(ch: u8, params: &AgcParams, cfg: &FilterbankConfig) -> Result<u16> {
    let f_ch = channel_center_freq(ch, cfg)?;
    let tick_s = params.tick_us as f64 * 1e-6;
    let ticks = (params.n_periods as f64 / f_ch / tick_s).round();
    Ok((ticks.max(1.0).min(params.window_max_ticks as f64)) as u16)
}

/// Per-channel controller registers (bit-width constrained).
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct AgcChannelRegs {
    pub channel: u8,
    pub window_len_ticks: u16,
    pub time_counter: u16,
    pub spike_count: u8,
    pub gain_index: u8,
    pub enabled: bool,
    pub window_end: bool,
}

impl AgcChannelRegs {
    pub fn new(channel: u8, window_len_ticks: u16, enabled: bool) -> Self {
        Self {
            channel,
            window_len_ticks: window_len_ticks.max(1),
            time_counter: 0,
            spike_count: 0,
            gain_index: MAX_GAIN_INDEX,
            enabled,
            window_end: false,
        }
    }

    /// Counts one spike at this channel's address. Both polarities count;
    /// the 6-bit counter saturates and never wraps.
    pub fn on_spike(&mut self, ev: &SpikeEvent, counter_max: u8) {
        debug_assert_eq!(ev.channel, self.channel);
        if !self.enabled {
            return;
        }
        if self.spike_count < counter_max {
            self.spike_count += 1;
        }
    }
}

/// Window-end outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GainDecision {
    Increase,
    Decrease,
}

/// One entry of the gain-update FIFO: 6-bit channel address plus the 6-bit
/// gain-setting pattern from the lookup table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GainUpdateRequest {
    pub channel: u8,
    pub gain_pattern: u8,
    pub enqueue_time_us: u64,
}

/// A dequeued update scheduled against a channel, effective after settling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GainApplication {
    pub channel: u8,
    pub gain_pattern: u8,
    pub apply_time_us: u64,
}

// The hardware pattern encodes an attenuator/PGA combination; only the
// composite table is modeled, so the pattern carries the index in its low
// four bits with a fixed bank-select prefix.
const GAIN_PATTERN_BASE: u8 = 0x30;

/// Translates a gain index into its 6-bit setting pattern and dB value.
pub fn gain_lookup(gain_index: u8, cfg: &FilterbankConfig) -> Result<(u8, f64)> {
    if gain_index > MAX_GAIN_INDEX {
        return Err(CochleaError::InvalidArgument(format!(
            "gain index {gain_index} > {MAX_GAIN_INDEX}"
        )));
    }
    Ok((
        GAIN_PATTERN_BASE | gain_index,
        cfg.gain_table_db[gain_index as usize],
    ))
}

/// Inverse of the pattern half of [`gain_lookup`].
pub fn pattern_to_gain_index(pattern: u8) -> Result<u8> {
    let gi = pattern & 0x0F;
    if pattern & 0xF0 != GAIN_PATTERN_BASE || gi > MAX_GAIN_INDEX {
        return Err(CochleaError::InvalidArgument(format!(
            "unknown gain pattern {pattern:#x}"
        )));
    }
    Ok(gi)
}

/// FIFO for serialized gain updates. Overflow drops the newest request and
/// counts it; order is never disturbed.
#[derive(Debug, Clone, Default)]
pub struct GainUpdateQueue {
    queue: VecDeque<GainUpdateRequest>,
    capacity: usize,
    pub dropped: u64,
    busy_until_us: u64,
}

impl GainUpdateQueue {
    pub fn new(capacity: usize) -> Self {
        Self {
            queue: VecDeque::with_capacity(capacity),
            capacity,
            dropped: 0,
            busy_until_us: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn enqueue(&mut self, req: GainUpdateRequest) {
        if self.queue.len() >= self.capacity {
            self.dropped += 1;
            return;
        }
        self.queue.push_back(req);
    }

    /// Services pending requests up to `now_us`. Each dequeue occupies the
    /// loader for `settle_time_us`, so consecutive applications are at least
    /// that far apart; the application time is dequeue + settle.
    pub fn service(&mut self, now_us: u64, params: &AgcParams) -> Vec<GainApplication> {
        let mut out = Vec::new();
        while let Some(head) = self.queue.front() {
            let start = self.busy_until_us.max(head.enqueue_time_us);
            if start > now_us {
                break;
            }
            let req = self.queue.pop_front().expect("head checked above");
            self.busy_until_us = start + params.settle_time_us;
            out.push(GainApplication {
                channel: req.channel,
                gain_pattern: req.gain_pattern,
                apply_time_us: start + params.settle_time_us,
            });
        }
        out
    }
}

/// One per-window trace record, enough to redraw the gain-change events and
/// spike-count bars of a transient response plot.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct WindowRecord {
    pub time_us: u64,
    pub channel: u8,
    pub spike_count: u8,
    pub decision: Option<GainDecision>,
    pub gain_index: u8,
}

/// The full 64-channel controller: registers, update queue and window trace.
///
/// A deterministic state machine advanced by `on_event` and `tick` inputs; a
/// single global tick drives all channels in ascending channel order.
#[derive(Debug, Clone)]
pub struct AgcController {
    pub params: AgcParams,
    pub regs: Vec<AgcChannelRegs>,
    pub queue: GainUpdateQueue,
    pub window_trace: Vec<WindowRecord>,
    gain_table_db: Vec<f64>,
    record_trace: bool,
}

impl AgcController {
    /// Builds a controller with windows from the channel center frequencies.
    /// Only channels in the config's active range are enabled.
    pub fn new(params: AgcParams, cfg: &FilterbankConfig) -> Result<Self> {
        params.validate()?;
        let mut regs = Vec::with_capacity(cfg.num_channels);
        for ch in 0..cfg.num_channels as u8 {
            let enabled =
                ch >= cfg.active_channel_range.0 && ch <= cfg.active_channel_range.1;
            let window = averaging_window_ticks(ch, &params, cfg)?;
            regs.push(AgcChannelRegs::new(ch, window, enabled));
        }
        let queue = GainUpdateQueue::new(params.queue_capacity);
        Ok(Self {
            params,
            regs,
            queue,
            window_trace: Vec::new(),
            gain_table_db: cfg.gain_table_db.clone(),
            record_trace: true,
        })
    }

    pub fn set_record_trace(&mut self, on: bool) {
        self.record_trace = on;
    }

    /// Feeds one spike event into the channel's saturating counter.
    pub fn on_event(&mut self, ev: &SpikeEvent) {
        let counter_max = self.params.counter_max;
        if let Some(regs) = self.regs.get_mut(ev.channel as usize) {
            regs.on_spike(ev, counter_max);
        }
    }

    /// Current gain index register of a channel (what events are tagged with).
    pub fn gain_index(&self, ch: u8) -> u8 {
        self.regs[ch as usize].gain_index
    }

    /// Advances every enabled channel by one 100 us tick and services the
    /// update queue. Returns the gain applications that became due.
    pub fn tick(&mut self, now_us: u64) -> Vec<GainApplication> {
        for i in 0..self.regs.len() {
            self.tick_channel(i, now_us);
        }
        self.queue.service(now_us, &self.params)
    }

    fn tick_channel(&mut self, idx: usize, now_us: u64) {
        let regs = &mut self.regs[idx];
        if !regs.enabled {
            return;
        }
        regs.window_end = false;
        regs.time_counter += 1;
        if regs.time_counter < regs.window_len_ticks {
            return;
        }
        regs.window_end = true;
        let count = regs.spike_count;
        let mut decision = None;
        if count >= self.params.t_upper && regs.gain_index > 0 {
            regs.gain_index -= 1;
            decision = Some(GainDecision::Decrease);
        } else if count < self.params.t_lower && regs.gain_index < MAX_GAIN_INDEX {
            regs.gain_index += 1;
            decision = Some(GainDecision::Increase);
        }
        let gain_index = regs.gain_index;
        let channel = regs.channel;
        regs.time_counter = 0;
        regs.spike_count = 0;
        if decision.is_some() {
            let pattern = GAIN_PATTERN_BASE | gain_index;
            self.queue.enqueue(GainUpdateRequest {
                channel,
                gain_pattern: pattern,
                enqueue_time_us: now_us,
            });
        }
        if self.record_trace {
            self.window_trace.push(WindowRecord {
                time_us: now_us,
                channel,
                spike_count: count,
                decision,
                gain_index,
            });
        }
    }

    /// dB value behind a gain pattern, from the shared lookup table.
    pub fn pattern_db(&self, pattern: u8) -> Result<f64> {
        let gi = pattern_to_gain_index(pattern)?;
        Ok(self.gain_table_db[gi as usize])
    }
}

/// Eq. 5: relative input-amplitude estimate from the frequency-normalized
/// spike rate and the channel gain.
pub fn estimate_input_amplitude(norm_rate: f64, gain_db: f64) -> f64 {
    norm_rate * 10f64.powf(-gain_db / 20.0)
}

/// Eq. 6: gain-adjusted spike rate, comparable to the fixed-max-gain case.
pub fn gain_adjusted_rate(norm_rate: f64, gain_db: f64, gmax_db: f64) -> f64 {
    norm_rate * 10f64.powf((gmax_db - gain_db) / 20.0)
}
