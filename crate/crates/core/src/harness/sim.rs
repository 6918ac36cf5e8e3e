//! End-to-end simulation: gain stage, filter bank, ADM encoders and the
//! gain controller on one merged virtual-time loop. Samples advance at the
//! audio rate (22.68 us at 44.1 kHz); controller ticks fire at exact
//! multiples of 100 us.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::audio::mv_to_full_scale;
use crate::adm::{AdmState, SpikeEvent, DEFAULT_DELTA, DEFAULT_MAX_EVENTS_PER_SAMPLE};
use crate::agc::{pattern_to_gain_index, AgcController, AgcParams, WindowRecord};
use crate::error::Result;
use crate::features::GainTrace;
use crate::filterbank::{
    channel_center_freq, design_channel, BiquadSection, ChannelFilter, FilterbankConfig,
    MAX_GAIN_INDEX,
};

/// Whether and how gain control runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AgcMode {
    /// Controller active, gains follow Algorithm 1.
    On,
    /// No controller; every channel fixed at the maximum gain.
    Off,
    /// Controller state machine runs but its outputs are discarded and the
    /// filters stay at maximum gain. Exists to verify that the AGC and
    /// non-AGC paths share the same filter/ADM code bit-exactly.
    ForcedMax,
}

impl AgcMode {
    pub fn agc_enabled(self) -> bool {
        self == AgcMode::On
    }
}

/// Full simulation configuration. Omitted JSON fields take the defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub filterbank: FilterbankConfig,
    pub agc: AgcParams,
    /// ADM threshold in full-scale units of the filter output.
    pub delta: f64,
    pub max_events_per_sample: u32,
    /// Noise floor at the ADM input (filter output), mV-equivalent RMS under
    /// the 100 mV full-scale convention. Models the measured analog noise of
    /// the channel, independent of the gain setting; it is also what keeps
    /// the spike count of a steady tone from quantizing onto multiples of
    /// the per-period crossing count.
    pub noise_rms_mv: f64,
    /// Q of the bandpass shaping the noise around the channel center
    /// frequency; low Q keeps the correlation time short against the
    /// averaging window.
    pub noise_q: f64,
    pub noise_seed: u64,
    /// Keep the controller's per-window trace (needed for transient
    /// analysis; costs memory on long runs).
    pub record_window_trace: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            filterbank: FilterbankConfig::default(),
            agc: AgcParams::default(),
            delta: DEFAULT_DELTA,
            max_events_per_sample: DEFAULT_MAX_EVENTS_PER_SAMPLE,
            noise_rms_mv: 60.0,
            noise_q: 0.7,
            noise_seed: 0,
            record_window_trace: false,
        }
    }
}

/// Everything a simulation produces.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub events: Vec<SpikeEvent>,
    /// Piecewise-constant register gain-index history (constant 11 without
    /// AGC).
    pub gain_trace: GainTrace,
    /// Per-window controller records, if requested.
    pub window_trace: Vec<WindowRecord>,
    /// Updates dropped by the full FIFO.
    pub dropped_updates: u64,
    pub duration_us: u64,
}

fn sample_time_us(n: usize, sample_rate_hz: f64) -> u64 {
    let fs = sample_rate_hz.round() as u128;
    ((n as u128 * 1_000_000) / fs) as u64
}

fn channel_noise_rng(seed: u64, ch: u8) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (ch as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Band-limited Gaussian noise source for one channel: unit white noise
/// through a bandpass at the channel center, rescaled so the output RMS is
/// exactly the configured value.
struct ChannelNoise {
    rng: ChaCha8Rng,
    shaper: BiquadSection,
    scale: f64,
}

impl ChannelNoise {
    fn new(ch: u8, cfg: &SimConfig) -> Result<Self> {
        let fs = cfg.filterbank.sample_rate_hz;
        let f0 = channel_center_freq(ch, &cfg.filterbank)?;
        let shaper = BiquadSection::bandpass(f0, cfg.noise_q, fs);
        // RMS gain of the shaper for unit white noise: average |H|^2 over
        // the band.
        let n_grid = 2048;
        let power: f64 = (1..n_grid)
            .map(|k| {
                let f = k as f64 * (fs / 2.0) / n_grid as f64;
                let m = shaper.magnitude_at(f, fs);
                m * m
            })
            .sum::<f64>()
            / (n_grid - 1) as f64;
        let target = mv_to_full_scale(cfg.noise_rms_mv);
        let scale = if target > 0.0 && power > 0.0 {
            target / power.sqrt()
        } else {
            0.0
        };
        Ok(Self {
            rng: channel_noise_rng(cfg.noise_seed, ch),
            shaper,
            scale,
        })
    }

    fn next(&mut self) -> f64 {
        let white: f64 = StandardNormal.sample(&mut self.rng);
        self.shaper.process(white) * self.scale
    }
}

/// Runs the full pipeline over one recording.
pub fn simulate(samples: &[f64], cfg: &SimConfig, mode: AgcMode) -> Result<SimOutput> {
    cfg.filterbank.validate()?;
    cfg.agc.validate()?;
    let fb = &cfg.filterbank;
    let active = fb.active_channels();
    let max_gain = fb.gain_linear(MAX_GAIN_INDEX)?;

    let mut filters: Vec<ChannelFilter> = active
        .iter()
        .map(|&ch| design_channel(ch, fb))
        .collect::<Result<_>>()?;
    for f in &mut filters {
        f.set_gain_linear(max_gain);
    }
    let mut adm: Vec<AdmState> = active
        .iter()
        .map(|_| AdmState::new(cfg.delta, cfg.max_events_per_sample))
        .collect::<Result<_>>()?;
    // Per-channel noise streams advance once per sample regardless of AGC
    // state, so On/Off/ForcedMax see identical noise.
    let mut noise: Vec<ChannelNoise> = active
        .iter()
        .map(|&ch| ChannelNoise::new(ch, cfg))
        .collect::<Result<_>>()?;

    let mut controller = match mode {
        AgcMode::Off => None,
        AgcMode::On | AgcMode::ForcedMax => {
            let mut c = AgcController::new(cfg.agc.clone(), fb)?;
            c.set_record_trace(cfg.record_window_trace);
            Some(c)
        }
    };

    let mut events: Vec<SpikeEvent> = Vec::new();
    let mut gain_trace = GainTrace::constant(fb.num_channels, MAX_GAIN_INDEX);
    let mut prev_gain: Vec<u8> = vec![MAX_GAIN_INDEX; fb.num_channels];
    let tick_us = cfg.agc.tick_us;
    let mut next_tick = tick_us;
    let duration_us = sample_time_us(samples.len(), fb.sample_rate_hz);

    for (n, &x) in samples.iter().enumerate() {
        let t = sample_time_us(n, fb.sample_rate_hz);
        while next_tick <= t {
            if let Some(ctrl) = controller.as_mut() {
                let apps = ctrl.tick(next_tick);
                if mode == AgcMode::On {
                    for app in apps {
                        let gi = pattern_to_gain_index(app.gain_pattern)?;
                        if let Some(slot) = active.iter().position(|&c| c == app.channel) {
                            filters[slot].schedule_gain(fb.gain_linear(gi)?, app.apply_time_us);
                        }
                    }
                    // Record register changes (what events are tagged with).
                    for regs in &ctrl.regs {
                        let idx = regs.channel as usize;
                        if regs.gain_index != prev_gain[idx] {
                            prev_gain[idx] = regs.gain_index;
                            gain_trace.push(next_tick, regs.channel, regs.gain_index);
                        }
                    }
                }
            }
            next_tick += tick_us;
        }
        for (slot, &ch) in active.iter().enumerate() {
            let y = filters[slot].process_sample(x, t)? + noise[slot].next();
            let gi = match (mode, controller.as_ref()) {
                (AgcMode::On, Some(ctrl)) => ctrl.gain_index(ch),
                _ => MAX_GAIN_INDEX,
            };
            let before = events.len();
            adm[slot].step(y, t, ch, gi, &mut events)?;
            if let Some(ctrl) = controller.as_mut() {
                for ev in &events[before..] {
                    ctrl.on_event(ev);
                }
            }
        }
    }

    let (window_trace, dropped_updates) = match controller {
        Some(ctrl) => (ctrl.window_trace, ctrl.queue.dropped),
        None => (Vec::new(), 0),
    };
    Ok(SimOutput {
        events,
        gain_trace,
        window_trace,
        dropped_updates,
        duration_us,
    })
}
