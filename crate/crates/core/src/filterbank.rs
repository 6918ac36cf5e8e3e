//! 64-channel geometrically spaced bandpass filter bank with 12 programmable
//! gain levels.
//!
//! Each channel is a fourth-order bandpass built from two identical
//! second-order sections (bilinear-transform design), preceded by a single
//! gain multiplier that folds the hardware's attenuator and PGA stages into
//! one programmable value, and an optional tanh soft limiter that stands in
//! for analog headroom compression. Channel center frequencies follow
//! `F_ch = f_min * sf^(63 - ch)`.

use serde::{Deserialize, Serialize};

use crate::error::{CochleaError, Result};

/// Number of filter channels in the bank.
pub const NUM_CHANNELS: usize = 64;
/// Number of programmable gain levels.
pub const NUM_GAIN_LEVELS: usize = 12;
/// Highest gain index (`G_max`).
pub const MAX_GAIN_INDEX: u8 = 11;

/// Geometric channel spacing factor.
pub const DEFAULT_SCALE_FACTOR: f64 = 1.13224;

/// Optional soft limiter between the gain multiplier and the filter.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct SaturationConfig {
    pub enabled: bool,
    /// Output level (full-scale units) the limiter bends towards.
    pub knee: f64,
}

impl Default for SaturationConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            knee: 0.35,
        }
    }
}

/// Static configuration of the filter bank.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FilterbankConfig {
    pub sample_rate_hz: f64,
    pub num_channels: usize,
    pub f_min_hz: f64,
    pub f_max_hz: f64,
    pub q_factor: f64,
    pub scale_factor_sf: f64,
    /// Inclusive range of active channel indices. The default covers the 36
    /// mid channels (56 Hz - 4 kHz band), excluding the 12 highest-frequency
    /// and 16 lowest-frequency channels.
    pub active_channel_range: (u8, u8),
    /// 12-entry gain table, ascending, 0 dB .. 32.5 dB.
    pub gain_table_db: Vec<f64>,
    pub saturation: SaturationConfig,
}

/// Default gain table: 12 equal steps from 0 dB to 32.5 dB (~2.954 dB each).
pub fn default_gain_table_db() -> Vec<f64> {
    (0..NUM_GAIN_LEVELS)
        .map(|i| i as f64 * 32.5 / 11.0)
        .collect()
}

impl Default for FilterbankConfig {
    fn default() -> Self {
        Self {
            sample_rate_hz: 44_100.0,
            num_channels: NUM_CHANNELS,
            f_min_hz: 8.0,
            f_max_hz: 20_000.0,
            q_factor: 4.0,
            scale_factor_sf: DEFAULT_SCALE_FACTOR,
            active_channel_range: (12, 47),
            gain_table_db: default_gain_table_db(),
            saturation: SaturationConfig::default(),
        }
    }
}

impl FilterbankConfig {
    /// Checks the structural invariants of the configuration.
    pub fn validate(&self) -> Result<()> {
        if self.sample_rate_hz <= 0.0 {
            return Err(CochleaError::InvalidArgument(
                "sample_rate_hz must be positive".into(),
            ));
        }
        if self.f_min_hz >= self.f_max_hz {
            return Err(CochleaError::InvalidArgument(
                "f_min_hz must be below f_max_hz".into(),
            ));
        }
        if self.q_factor <= 0.0 || self.scale_factor_sf <= 1.0 {
            return Err(CochleaError::InvalidArgument(
                "q_factor must be positive and scale_factor_sf > 1".into(),
            ));
        }
        if self.gain_table_db.len() != NUM_GAIN_LEVELS {
            return Err(CochleaError::InvalidArgument(format!(
                "gain table must have {NUM_GAIN_LEVELS} entries, got {}",
                self.gain_table_db.len()
            )));
        }
        if (self.gain_table_db[0]).abs() > 1e-12 {
            return Err(CochleaError::InvalidArgument(
                "first gain table entry must be 0 dB".into(),
            ));
        }
        if (self.gain_table_db[NUM_GAIN_LEVELS - 1] - 32.5).abs() > 1e-9 {
            return Err(CochleaError::InvalidArgument(
                "last gain table entry must be 32.5 dB".into(),
            ));
        }
        for pair in self.gain_table_db.windows(2) {
            let step = pair[1] - pair[0];
            if !(2.5..=3.5).contains(&step) {
                return Err(CochleaError::InvalidArgument(format!(
                    "gain table step {step:.3} dB outside [2.5, 3.5] dB"
                )));
            }
        }
        if self.active_channel_range.0 > self.active_channel_range.1
            || self.active_channel_range.1 as usize >= self.num_channels
        {
            return Err(CochleaError::InvalidArgument(
                "invalid active channel range".into(),
            ));
        }
        // Top channel must stay below Nyquist.
        let f0 = channel_center_freq(self.active_channel_range.0, self)?;
        if f0 >= self.sample_rate_hz / 2.0 {
            return Err(CochleaError::InvalidArgument(format!(
                "active channel {} at {f0:.0} Hz is at or above Nyquist",
                self.active_channel_range.0
            )));
        }
        Ok(())
    }

    /// Linear gain for a gain index.
    pub fn gain_linear(&self, gain_index: u8) -> Result<f64> {
        let db = *self
            .gain_table_db
            .get(gain_index as usize)
            .ok_or_else(|| CochleaError::InvalidArgument(format!("gain index {gain_index} > 11")))?;
        Ok(10f64.powf(db / 20.0))
    }

    /// Indices of the active channels, ascending.
    pub fn active_channels(&self) -> Vec<u8> {
        (self.active_channel_range.0..=self.active_channel_range.1).collect()
    }

    pub fn num_active_channels(&self) -> usize {
        (self.active_channel_range.1 - self.active_channel_range.0) as usize + 1
    }
}

/// Center frequency of a channel: `f_min * sf^(63 - ch)`. Monotonically
/// decreasing in the channel index (channel 0 is the highest frequency).
pub fn channel_center_freq(ch: u8, cfg: &FilterbankConfig) -> Result<f64> {
    if ch as usize >= cfg.num_channels {
        return Err(CochleaError::InvalidArgument(format!(
            "channel index {ch} out of range (0..{})",
            cfg.num_channels
        )));
    }
    let exp = (cfg.num_channels - 1 - ch as usize) as i32;
    Ok(cfg.f_min_hz * cfg.scale_factor_sf.powi(exp))
}

/// One second-order bandpass section (direct form I).
///
/// Designed so that the gain at the center frequency is exactly unity, which
/// also makes the cascade's peak sit at the center frequency with 0 dB gain
/// before the programmable gain stage.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BiquadSection {
    b0: f64,
    b2: f64,
    a1: f64,
    a2: f64,
    x1: f64,
    x2: f64,
    y1: f64,
    y2: f64,
}

impl BiquadSection {
    /// Bandpass section with unity peak gain at `center_hz` and the given Q.
    pub fn bandpass(center_hz: f64, q: f64, sample_rate_hz: f64) -> Self {
        let w0 = 2.0 * std::f64::consts::PI * center_hz / sample_rate_hz;
        let alpha = w0.sin() / (2.0 * q);
        let a0 = 1.0 + alpha;
        Self {
            b0: alpha / a0,
            b2: -alpha / a0,
            a1: -2.0 * w0.cos() / a0,
            a2: (1.0 - alpha) / a0,
            x1: 0.0,
            x2: 0.0,
            y1: 0.0,
            y2: 0.0,
        }
    }

    #[inline]
    pub fn process(&mut self, x: f64) -> f64 {
        let y = self.b0 * x + self.b2 * self.x2 - self.a1 * self.y1 - self.a2 * self.y2;
        self.x2 = self.x1;
        self.x1 = x;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }

    pub fn reset(&mut self) {
        self.x1 = 0.0;
        self.x2 = 0.0;
        self.y1 = 0.0;
        self.y2 = 0.0;
    }

    /// Magnitude response at `freq_hz` evaluated from the transfer function.
    pub fn magnitude_at(&self, freq_hz: f64, sample_rate_hz: f64) -> f64 {
        let w = 2.0 * std::f64::consts::PI * freq_hz / sample_rate_hz;
        let (re1, im1) = (w.cos(), -w.sin());
        let (re2, im2) = ((2.0 * w).cos(), -(2.0 * w).sin());
        let num_re = self.b0 + self.b2 * re2;
        let num_im = self.b2 * im2;
        let den_re = 1.0 + self.a1 * re1 + self.a2 * re2;
        let den_im = self.a1 * im1 + self.a2 * im2;
        ((num_re * num_re + num_im * num_im) / (den_re * den_re + den_im * den_im)).sqrt()
    }
}

/// A gain change waiting for the analog bias settle to complete.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct PendingGain {
    pub gain_linear: f64,
    pub activation_time_us: u64,
}

/// One channel of the bank: programmable gain, optional soft limiter, and
/// two cascaded second-order bandpass sections.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ChannelFilter {
    pub channel_index: u8,
    pub center_freq_hz: f64,
    sections: [BiquadSection; 2],
    pub applied_gain_linear: f64,
    pub pending_gain: Option<PendingGain>,
    saturation: Option<f64>,
}

/// Designs the fourth-order bandpass for one channel. Each of the two
/// identical sections uses the configured Q; the cascade peak at the center
/// frequency is exactly 0 dB before the programmable gain.
pub fn design_channel(ch: u8, cfg: &FilterbankConfig) -> Result<ChannelFilter> {
    let fc = channel_center_freq(ch, cfg)?;
    // Channels at or above 0.45 * fs are outside the usable digital band.
    if fc >= 0.45 * cfg.sample_rate_hz {
        return Err(CochleaError::FilterDesign(format!(
            "channel {ch} center frequency {fc:.0} Hz >= 0.45 * sample rate"
        )));
    }
    let section = BiquadSection::bandpass(fc, cfg.q_factor, cfg.sample_rate_hz);
    Ok(ChannelFilter {
        channel_index: ch,
        center_freq_hz: fc,
        sections: [section.clone(), section],
        applied_gain_linear: 1.0,
        pending_gain: None,
        saturation: if cfg.saturation.enabled {
            Some(cfg.saturation.knee)
        } else {
            None
        },
    })
}

impl ChannelFilter {
    /// Sets the applied gain immediately (no settling).
    pub fn set_gain_linear(&mut self, g: f64) {
        self.applied_gain_linear = g;
        self.pending_gain = None;
    }

    /// Schedules a gain change that becomes effective at `activation_time_us`.
    pub fn schedule_gain(&mut self, gain_linear: f64, activation_time_us: u64) {
        self.pending_gain = Some(PendingGain {
            gain_linear,
            activation_time_us,
        });
    }

    /// Advances the filter by one sample. A pending gain whose activation
    /// time has passed is applied before the sample is processed.
    #[inline]
    pub fn process_sample(&mut self, x: f64, now_us: u64) -> Result<f64> {
        if !x.is_finite() {
            return Err(CochleaError::NonFiniteSample(x));
        }
        if let Some(p) = self.pending_gain {
            if now_us >= p.activation_time_us {
                self.applied_gain_linear = p.gain_linear;
                self.pending_gain = None;
            }
        }
        let mut v = self.applied_gain_linear * x;
        if let Some(knee) = self.saturation {
            v = knee * (v / knee).tanh();
        }
        let v = self.sections[0].process(v);
        Ok(self.sections[1].process(v))
    }

    pub fn reset_state(&mut self) {
        self.sections[0].reset();
        self.sections[1].reset();
    }

    /// Small-signal cascade magnitude (before the programmable gain).
    pub fn cascade_magnitude_at(&self, freq_hz: f64, sample_rate_hz: f64) -> f64 {
        self.sections[0].magnitude_at(freq_hz, sample_rate_hz)
            * self.sections[1].magnitude_at(freq_hz, sample_rate_hz)
    }
}

/// Noise-adjusted output amplitude: `sqrt(max(v_out^2 - v_noise^2, 0))`.
pub fn noise_adjusted_amplitude(v_out: f64, v_noise: f64) -> Result<f64> {
    if v_out < 0.0 || v_noise < 0.0 {
        return Err(CochleaError::InvalidArgument(
            "RMS amplitudes must be non-negative".into(),
        ));
    }
    Ok((v_out * v_out - v_noise * v_noise).max(0.0).sqrt())
}

/// Measured channel gain. A signal fully buried in the noise floor is a
/// distinct value rather than a non-finite float.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub enum GainDb {
    Db(f64),
    BelowNoiseFloor,
}

impl GainDb {
    pub fn db(&self) -> Option<f64> {
        match self {
            GainDb::Db(v) => Some(*v),
            GainDb::BelowNoiseFloor => None,
        }
    }
}

/// Channel gain in dB: `20 * log10(v_na / v_in)`.
pub fn channel_gain_db(v_na: f64, v_in: f64) -> Result<GainDb> {
    if v_in <= 0.0 {
        return Err(CochleaError::InvalidArgument(
            "input RMS must be positive".into(),
        ));
    }
    if v_na < 0.0 {
        return Err(CochleaError::InvalidArgument(
            "noise-adjusted RMS must be non-negative".into(),
        ));
    }
    if v_na == 0.0 {
        return Ok(GainDb::BelowNoiseFloor);
    }
    Ok(GainDb::Db(20.0 * (v_na / v_in).log10()))
}

/// Steady-state gain grid of one channel: for each (amplitude, frequency)
/// pair a sine is played through the channel, settling is discarded, and the
/// gain is computed from output vs input RMS.
pub fn frequency_response(
    ch: u8,
    gain_index: u8,
    amplitudes_rms: &[f64],
    freqs_hz: &[f64],
    cfg: &FilterbankConfig,
) -> Result<Vec<Vec<GainDb>>> {
    if amplitudes_rms.is_empty() || freqs_hz.is_empty() {
        return Err(CochleaError::InvalidArgument(
            "amplitude and frequency grids must be non-empty".into(),
        ));
    }
    let nyquist = cfg.sample_rate_hz / 2.0;
    for &f in freqs_hz {
        if f >= nyquist {
            return Err(CochleaError::InvalidArgument(format!(
                "frequency {f} Hz at or above Nyquist"
            )));
        }
    }
    let gain = cfg.gain_linear(gain_index)?;
    let template = design_channel(ch, cfg)?;
    let mut grid = Vec::with_capacity(amplitudes_rms.len());
    for &amp in amplitudes_rms {
        let mut row = Vec::with_capacity(freqs_hz.len());
        for &f in freqs_hz {
            let mut filt = template.clone();
            filt.set_gain_linear(gain);
            // Settle for 50 periods or 50 ms, whichever is longer, then
            // measure over 20 periods.
            let period_samples = cfg.sample_rate_hz / f;
            let settle = ((50.0 * period_samples).max(0.05 * cfg.sample_rate_hz)) as usize;
            let measure = (20.0 * period_samples).ceil() as usize;
            let peak = amp * std::f64::consts::SQRT_2;
            let w = 2.0 * std::f64::consts::PI * f / cfg.sample_rate_hz;
            let mut sum_sq = 0.0;
            for n in 0..settle + measure {
                let x = peak * (w * n as f64).sin();
                let y = filt.process_sample(x, 0)?;
                if n >= settle {
                    sum_sq += y * y;
                }
            }
            let v_out = (sum_sq / measure as f64).sqrt();
            let v_na = noise_adjusted_amplitude(v_out, 0.0)?;
            row.push(channel_gain_db(v_na, amp)?);
        }
        grid.push(row);
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> FilterbankConfig {
        FilterbankConfig::default()
    }

    #[test]
    fn default_config_is_valid() {
        cfg().validate().unwrap();
        assert_eq!(cfg().num_active_channels(), 36);
    }

    #[test]
    fn center_freq_channel_63_is_8_hz() {
        assert_eq!(channel_center_freq(63, &cfg()).unwrap(), 8.0);
    }

    #[test]
    fn center_freq_channel_0_is_20_khz() {
        let f = channel_center_freq(0, &cfg()).unwrap();
        assert!((f - 20_000.0).abs() / 20_000.0 < 1e-3, "got {f}");
    }

    #[test]
    fn center_freq_channel_30() {
        // 8 * 1.13224^33, computed directly.
        let expected = 8.0 * 1.13224f64.powi(33);
        let f = channel_center_freq(30, &cfg()).unwrap();
        assert!((f - expected).abs() < 1e-9);
        assert!((f - 482.3).abs() < 0.5, "got {f}");
    }

    #[test]
    fn center_freq_out_of_range_errors() {
        assert!(channel_center_freq(64, &cfg()).is_err());
    }

    #[test]
    fn geometric_spacing_invariant() {
        let c = cfg();
        for ch in 0..63u8 {
            let f_hi = channel_center_freq(ch, &c).unwrap();
            let f_lo = channel_center_freq(ch + 1, &c).unwrap();
            assert!((f_hi / f_lo - c.scale_factor_sf).abs() < 1e-9 * c.scale_factor_sf);
        }
    }

    #[test]
    fn design_rejects_channel_0_at_44100() {
        assert!(design_channel(0, &cfg()).is_err());
    }

    /// Naive DFT magnitude of an impulse response, used as an independent
    /// check of the designed transfer function.
    fn impulse_response_magnitude(filt: &ChannelFilter, freq_hz: f64, fs: f64, n: usize) -> f64 {
        let mut f = filt.clone();
        f.reset_state();
        let mut re = 0.0;
        let mut im = 0.0;
        let w = 2.0 * std::f64::consts::PI * freq_hz / fs;
        for k in 0..n {
            let x = if k == 0 { 1.0 } else { 0.0 };
            let y = f.process_sample(x, 0).unwrap();
            re += y * (w * k as f64).cos();
            im -= y * (w * k as f64).sin();
        }
        (re * re + im * im).sqrt()
    }

    #[test]
    fn design_channel_30_peaks_near_center() {
        let c = cfg();
        let filt = design_channel(30, &c).unwrap();
        let fc = filt.center_freq_hz;
        // Scan the impulse-response spectrum around the center.
        let n = 1 << 16;
        let mut best_f = 0.0;
        let mut best_mag = 0.0;
        let mut f = 0.5 * fc;
        while f < 2.0 * fc {
            let m = impulse_response_magnitude(&filt, f, c.sample_rate_hz, n);
            if m > best_mag {
                best_mag = m;
                best_f = f;
            }
            f += fc / 200.0;
        }
        assert!(
            (best_f - fc).abs() / fc < 0.02,
            "peak at {best_f}, center {fc}"
        );
        // Peak gain normalized to 0 dB.
        assert!((best_mag - 1.0).abs() < 0.02, "peak mag {best_mag}");
    }

    #[test]
    fn design_channel_30_skirt_attenuation() {
        let c = cfg();
        let filt = design_channel(30, &c).unwrap();
        let fc = filt.center_freq_hz;
        let peak = filt.cascade_magnitude_at(fc, c.sample_rate_hz);
        for f in [0.5 * fc, 2.0 * fc] {
            let m = filt.cascade_magnitude_at(f, c.sample_rate_hz);
            let att_db = 20.0 * (peak / m).log10();
            assert!(att_db >= 12.0, "attenuation at {f} Hz only {att_db:.1} dB");
        }
    }

    #[test]
    fn zero_input_zero_output() {
        let mut filt = design_channel(30, &cfg()).unwrap();
        for _ in 0..1000 {
            assert_eq!(filt.process_sample(0.0, 0).unwrap(), 0.0);
        }
    }

    #[test]
    fn non_finite_input_errors() {
        let mut filt = design_channel(30, &cfg()).unwrap();
        assert!(filt.process_sample(f64::NAN, 0).is_err());
        assert!(filt.process_sample(f64::INFINITY, 0).is_err());
        // State stays clean afterwards.
        assert_eq!(filt.process_sample(0.0, 0).unwrap(), 0.0);
    }

    fn steady_rms_at_center(filt: &mut ChannelFilter, amp_rms: f64, fs: f64) -> f64 {
        let fc = filt.center_freq_hz;
        let w = 2.0 * std::f64::consts::PI * fc / fs;
        let peak = amp_rms * std::f64::consts::SQRT_2;
        let settle = (50.0 * fs / fc) as usize;
        let measure = (20.0 * fs / fc).ceil() as usize;
        let mut sum_sq = 0.0;
        for n in 0..settle + measure {
            let y = filt.process_sample(peak * (w * n as f64).sin(), 0).unwrap();
            if n >= settle {
                sum_sq += y * y;
            }
        }
        (sum_sq / measure as f64).sqrt()
    }

    #[test]
    fn max_gain_amplifies_by_32_5_db() {
        let c = cfg();
        let mut filt = design_channel(30, &c).unwrap();
        filt.set_gain_linear(c.gain_linear(11).unwrap());
        let out = steady_rms_at_center(&mut filt, 0.01, c.sample_rate_hz);
        let expected = 0.01 * 10f64.powf(32.5 / 20.0);
        assert!(
            (out - expected).abs() / expected < 0.05,
            "out {out}, expected {expected}"
        );
    }

    #[test]
    fn off_center_sine_attenuated() {
        let c = cfg();
        let mut at_center = design_channel(30, &c).unwrap();
        let fc = at_center.center_freq_hz;
        let rms_center = steady_rms_at_center(&mut at_center, 0.1, c.sample_rate_hz);

        let mut off = design_channel(30, &c).unwrap();
        let f = fc / 8.0;
        let w = 2.0 * std::f64::consts::PI * f / c.sample_rate_hz;
        let peak = 0.1 * std::f64::consts::SQRT_2;
        let settle = (50.0 * c.sample_rate_hz / f) as usize;
        let measure = (20.0 * c.sample_rate_hz / f).ceil() as usize;
        let mut sum_sq = 0.0;
        for n in 0..settle + measure {
            let y = off.process_sample(peak * (w * n as f64).sin(), 0).unwrap();
            if n >= settle {
                sum_sq += y * y;
            }
        }
        let rms_off = (sum_sq / measure as f64).sqrt();
        let att_db = 20.0 * (rms_center / rms_off).log10();
        assert!(att_db >= 20.0, "only {att_db:.1} dB down at F_ch/8");
    }

    #[test]
    fn linearity_without_saturation() {
        let c = cfg();
        let mut f1 = design_channel(30, &c).unwrap();
        let mut f2 = design_channel(30, &c).unwrap();
        let a = 3.7;
        let mut x = 0.123;
        for n in 0..2000 {
            // Deterministic pseudo-signal.
            x = (x * 1.9 + (n as f64 * 0.01).sin()).sin();
            let y1 = f1.process_sample(a * x, 0).unwrap();
            let y2 = f2.process_sample(x, 0).unwrap();
            let err = (y1 - a * y2).abs();
            assert!(err <= 1e-9 * (y1.abs().max(1.0)), "err {err} at n={n}");
        }
    }

    #[test]
    fn gain_table_step_changes_output_rms() {
        let c = cfg();
        let mut rms = Vec::new();
        for gi in [3u8, 7u8] {
            let mut filt = design_channel(30, &c).unwrap();
            filt.set_gain_linear(c.gain_linear(gi).unwrap());
            rms.push(steady_rms_at_center(&mut filt, 0.01, c.sample_rate_hz));
        }
        let delta_db = 20.0 * (rms[1] / rms[0]).log10();
        let expected = c.gain_table_db[7] - c.gain_table_db[3];
        assert!((delta_db - expected).abs() < 0.1, "got {delta_db} dB");
    }

    #[test]
    fn pending_gain_not_applied_early() {
        let c = cfg();
        let mut filt = design_channel(30, &c).unwrap();
        filt.schedule_gain(10.0, 1000);
        filt.process_sample(0.0, 999).unwrap();
        assert_eq!(filt.applied_gain_linear, 1.0);
        assert!(filt.pending_gain.is_some());
        filt.process_sample(0.0, 1000).unwrap();
        assert_eq!(filt.applied_gain_linear, 10.0);
        assert!(filt.pending_gain.is_none());
    }

    #[test]
    fn noise_adjustment_345_triple() {
        assert_eq!(noise_adjusted_amplitude(5.0, 3.0).unwrap(), 4.0);
        assert_eq!(noise_adjusted_amplitude(3.0, 3.0).unwrap(), 0.0);
        assert_eq!(noise_adjusted_amplitude(4.5e-3, 4.5e-3).unwrap(), 0.0);
        // v_noise > v_out clamps to zero rather than going imaginary.
        assert_eq!(noise_adjusted_amplitude(1.0, 2.0).unwrap(), 0.0);
        assert!(noise_adjusted_amplitude(-1.0, 0.0).is_err());
    }

    #[test]
    fn gain_db_basics() {
        assert_eq!(channel_gain_db(1.0, 1.0).unwrap(), GainDb::Db(0.0));
        match channel_gain_db(10.0, 1.0).unwrap() {
            GainDb::Db(v) => assert!((v - 20.0).abs() < 1e-12),
            _ => panic!(),
        }
        assert_eq!(channel_gain_db(0.0, 1.0).unwrap(), GainDb::BelowNoiseFloor);
        assert!(channel_gain_db(1.0, 0.0).is_err());
    }

    #[test]
    fn simulated_channel_gain_near_32_5_db() {
        let c = cfg();
        let fc = channel_center_freq(30, &c).unwrap();
        let grid = frequency_response(30, 11, &[0.01], &[fc], &c).unwrap();
        let g = grid[0][0].db().unwrap();
        assert!((g - 32.5).abs() < 1.0, "gain {g} dB");
    }

    #[test]
    fn frequency_response_linear_mode_amplitude_independent() {
        let c = cfg();
        let fc = channel_center_freq(30, &c).unwrap();
        let grid =
            frequency_response(30, 5, &[0.001, 0.01, 0.1], &[fc * 0.8, fc, fc * 1.25], &c).unwrap();
        for col in 0..3 {
            let g0 = grid[0][col].db().unwrap();
            for row in 1..3 {
                let g = grid[row][col].db().unwrap();
                assert!((g - g0).abs() < 0.1, "col {col}: {g} vs {g0}");
            }
        }
        // Bandpass shape: center response above 2 * F_ch response.
        let grid2 = frequency_response(30, 5, &[0.01], &[fc, 2.0 * fc], &c).unwrap();
        assert!(grid2[0][0].db().unwrap() >= grid2[0][1].db().unwrap());
    }

    #[test]
    fn saturation_compresses_large_signals() {
        let mut c = cfg();
        c.saturation = SaturationConfig {
            enabled: true,
            knee: 0.35,
        };
        let fc = channel_center_freq(30, &c).unwrap();
        let grid = frequency_response(30, 11, &[0.001, 0.5], &[fc], &c).unwrap();
        let small = grid[0][0].db().unwrap();
        let large = grid[1][0].db().unwrap();
        assert!(large < small, "saturated gain {large} !< linear gain {small}");
    }

    #[test]
    fn frequency_response_empty_grid_errors() {
        let c = cfg();
        assert!(frequency_response(30, 5, &[], &[100.0], &c).is_err());
        assert!(frequency_response(30, 5, &[0.01], &[], &c).is_err());
    }

    #[test]
    fn gain_table_validation() {
        let mut c = cfg();
        c.gain_table_db[5] = c.gain_table_db[4]; // zero step
        assert!(c.validate().is_err());
        let mut c2 = cfg();
        c2.gain_table_db.pop();
        assert!(c2.validate().is_err());
    }
}
