//! Asynchronous delta modulation spike generation.
//!
//! Each channel's filter output is tracked by a staircase level; whenever the
//! signal moves a full `delta` above or below the previously encoded level an
//! ON or OFF event is emitted and the level steps by `delta`. Events carry
//! the channel address and the channel's current gain index.

use serde::{Deserialize, Serialize};

use crate::error::{CochleaError, Result};

/// Event polarity: ON for upward threshold crossings, OFF for downward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarity {
    On,
    Off,
}

/// One address-event: timestamp, 6-bit channel address, polarity and the
/// 4-bit gain index of the channel at emission time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpikeEvent {
    pub timestamp_us: u64,
    pub channel: u8,
    pub polarity: Polarity,
    pub gain_index: u8,
}

/// Per-channel modulator state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdmState {
    pub last_encoded_level: f64,
    pub delta: f64,
    pub max_events_per_sample: u32,
}

/// Default threshold, in full-scale units of the filter output. Calibrated
/// together with the simulated noise floor so that the AGC's compensable
/// input range covers roughly 1-30 mV-equivalent RMS: spiking onset for a
/// noiseless sine at maximum gain sits near a 2.7 mV-equivalent input.
pub const DEFAULT_DELTA: f64 = 1.6;

/// Default cap on events emitted for a single input sample.
pub const DEFAULT_MAX_EVENTS_PER_SAMPLE: u32 = 8;

impl Default for AdmState {
    fn default() -> Self {
        Self {
            last_encoded_level: 0.0,
            delta: DEFAULT_DELTA,
            max_events_per_sample: DEFAULT_MAX_EVENTS_PER_SAMPLE,
        }
    }
}

impl AdmState {
    pub fn new(delta: f64, max_events_per_sample: u32) -> Result<Self> {
        if delta <= 0.0 || !delta.is_finite() {
            return Err(CochleaError::InvalidArgument(
                "ADM delta must be positive and finite".into(),
            ));
        }
        if max_events_per_sample == 0 {
            return Err(CochleaError::InvalidArgument(
                "max_events_per_sample must be at least 1".into(),
            ));
        }
        Ok(Self {
            last_encoded_level: 0.0,
            delta,
            max_events_per_sample,
        })
    }

    /// Encodes one sample, appending events to `out`. All events emitted for
    /// this sample share its timestamp. At most `max_events_per_sample`
    /// events are produced; the level tracks each emitted step, so the
    /// staircase stays within `delta` of the signal whenever the cap was not
    /// hit.
    #[inline]
    pub fn step(
        &mut self,
        y: f64,
        t_us: u64,
        channel: u8,
        gain_index: u8,
        out: &mut Vec<SpikeEvent>,
    ) -> Result<()> {
        if !y.is_finite() {
            return Err(CochleaError::NonFiniteSample(y));
        }
        let mut emitted = 0u32;
        while y - self.last_encoded_level >= self.delta && emitted < self.max_events_per_sample {
            self.last_encoded_level += self.delta;
            out.push(SpikeEvent {
                timestamp_us: t_us,
                channel,
                polarity: Polarity::On,
                gain_index,
            });
            emitted += 1;
        }
        while self.last_encoded_level - y >= self.delta && emitted < self.max_events_per_sample {
            self.last_encoded_level -= self.delta;
            out.push(SpikeEvent {
                timestamp_us: t_us,
                channel,
                polarity: Polarity::Off,
                gain_index,
            });
            emitted += 1;
        }
        Ok(())
    }
}

/// Convenience wrapper over [`AdmState::step`] returning the events.
pub fn adm_step(
    state: &mut AdmState,
    y: f64,
    t_us: u64,
    channel: u8,
    gain_index: u8,
) -> Result<Vec<SpikeEvent>> {
    let mut out = Vec::new();
    state.step(y, t_us, channel, gain_index, &mut out)?;
    Ok(out)
}

/// Rebuilds the staircase from an event stream:
/// `level(t) = initial + delta * (#ON - #OFF up to t)`.
pub fn reconstruct(
    events: &[SpikeEvent],
    delta: f64,
    initial_level: f64,
) -> Result<Vec<(u64, f64)>> {
    let mut level = initial_level;
    let mut out = Vec::with_capacity(events.len());
    let mut last_t = 0u64;
    for (i, ev) in events.iter().enumerate() {
        if i > 0 && ev.timestamp_us < last_t {
            return Err(CochleaError::InvalidArgument(format!(
                "events out of order at index {i}"
            )));
        }
        last_t = ev.timestamp_us;
        match ev.polarity {
            Polarity::On => level += delta,
            Polarity::Off => level -= delta,
        }
        out.push((ev.timestamp_us, level));
    }
    Ok(out)
}

/// Average number of ON events per signal period for a steady periodic
/// stream, rounded to the nearest integer. Needs at least two full periods
/// of data.
pub fn count_on_per_rising_slope(events: &[SpikeEvent], period_us: u64) -> Result<u64> {
    if period_us == 0 {
        return Err(CochleaError::InvalidArgument("period must be positive".into()));
    }
    let span = match (events.first(), events.last()) {
        (Some(a), Some(b)) => b.timestamp_us - a.timestamp_us,
        _ => 0,
    };
    // The stream must cover at least 2 periods; an empty or short stream is
    // not enough to call it steady-state.
    if span < 2 * period_us {
        return Err(CochleaError::InsufficientData(format!(
            "need at least two periods ({} us), have {} us",
            2 * period_us,
            span
        )));
    }
    let periods = span as f64 / period_us as f64;
    let on_count = events.iter().filter(|e| e.polarity == Polarity::On).count();
    Ok((on_count as f64 / periods).round() as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_signal_no_events() {
        let mut s = AdmState::new(1.0, 8).unwrap();
        s.last_encoded_level = 2.0;
        for t in 0..1000 {
            assert!(adm_step(&mut s, 2.0, t, 0, 11).unwrap().is_empty());
        }
    }

    #[test]
    fn step_of_3_2_emits_three_on() {
        let mut s = AdmState::new(1.0, 8).unwrap();
        let evs = adm_step(&mut s, 3.2, 0, 5, 7).unwrap();
        assert_eq!(evs.len(), 3);
        assert!(evs.iter().all(|e| e.polarity == Polarity::On));
        assert!(evs.iter().all(|e| e.channel == 5 && e.gain_index == 7));
        assert_eq!(s.last_encoded_level, 3.0);
    }

    #[test]
    fn cap_limits_events_per_sample() {
        let mut s = AdmState::new(1.0, 4).unwrap();
        let evs = adm_step(&mut s, 100.0, 0, 0, 0).unwrap();
        assert_eq!(evs.len(), 4);
        assert_eq!(s.last_encoded_level, 4.0);
    }

    #[test]
    fn non_finite_sample_errors() {
        let mut s = AdmState::default();
        assert!(adm_step(&mut s, f64::NAN, 0, 0, 0).is_err());
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(AdmState::new(0.0, 8).is_err());
        assert!(AdmState::new(-1.0, 8).is_err());
        assert!(AdmState::new(1.0, 0).is_err());
    }

    /// Brute-force oracle: densely resample by linear interpolation and
    /// apply the level-crossing rule point by point. Events are attributed
    /// to the real sample at the right edge of each interval.
    fn dense_oracle(signal: &[f64], delta: f64, cap: u32, upsample: usize) -> Vec<SpikeEvent> {
        let mut level = 0.0f64;
        let mut out = Vec::new();
        let mut prev = 0.0f64;
        for (k, &y) in signal.iter().enumerate() {
            let mut emitted = 0u32;
            for j in 1..=upsample {
                let frac = j as f64 / upsample as f64;
                let v = prev + (y - prev) * frac;
                while v - level >= delta && emitted < cap {
                    level += delta;
                    out.push(SpikeEvent {
                        timestamp_us: k as u64,
                        channel: 0,
                        polarity: Polarity::On,
                        gain_index: 11,
                    });
                    emitted += 1;
                }
                while level - v >= delta && emitted < cap {
                    level -= delta;
                    out.push(SpikeEvent {
                        timestamp_us: k as u64,
                        channel: 0,
                        polarity: Polarity::Off,
                        gain_index: 11,
                    });
                    emitted += 1;
                }
            }
            prev = y;
        }
        out
    }

    fn encode(signal: &[f64], delta: f64, cap: u32) -> Vec<SpikeEvent> {
        let mut s = AdmState::new(delta, cap).unwrap();
        let mut out = Vec::new();
        for (k, &y) in signal.iter().enumerate() {
            s.step(y, k as u64, 0, 11, &mut out).unwrap();
        }
        out
    }

    #[test]
    fn sine_event_count_matches_crossing_rule() {
        // Steady-state period of a sine with peak-to-peak 2A: total events
        // within +-1 of 2 * floor(2A / delta). The amplitude keeps the
        // extremes away from the level grid so the count is well defined.
        let delta = 0.3;
        let amp = 1.6; // pk-pk = 3.2, 2A/delta = 10.67
        let n = 4410; // samples per period
        let periods = 11usize;
        let signal: Vec<f64> = (0..n * periods)
            .map(|k| amp * (2.0 * std::f64::consts::PI * k as f64 / n as f64).sin())
            .collect();
        let evs = encode(&signal, delta, 64);
        // Skip the first (transient) period.
        let steady = evs
            .iter()
            .filter(|e| e.timestamp_us >= n as u64)
            .count() as f64
            / (periods - 1) as f64;
        let expected = 2.0 * (2.0 * amp / delta).floor();
        assert!(
            (steady - expected).abs() <= 1.0,
            "{steady} events/period, expected ~{expected}"
        );
    }

    #[test]
    fn oracle_equivalence_on_band_limited_signals() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            // Random band-limited signal: a few sinusoids.
            let n = 2000;
            let terms: Vec<(f64, f64, f64)> = (0..4)
                .map(|_| {
                    (
                        rng.gen_range(0.2..2.0),
                        rng.gen_range(0.001..0.05),
                        rng.gen_range(0.0..std::f64::consts::TAU),
                    )
                })
                .collect();
            let signal: Vec<f64> = (0..n)
                .map(|k| {
                    terms
                        .iter()
                        .map(|(a, f, p)| a * (std::f64::consts::TAU * f * k as f64 + p).sin())
                        .sum()
                })
                .collect();
            let delta = rng.gen_range(0.1..0.8);
            let fast = encode(&signal, delta, 8);
            let slow = dense_oracle(&signal, delta, 8, 16);
            assert_eq!(fast, slow);
        }
    }

    #[test]
    fn reconstruction_error_below_delta() {
        let delta = 0.25;
        let n = 3000;
        let signal: Vec<f64> = (0..n)
            .map(|k| (k as f64 * 0.013).sin() * 2.0 + (k as f64 * 0.004).cos())
            .collect();
        let mut s = AdmState::new(delta, 64).unwrap();
        let mut out = Vec::new();
        for (k, &y) in signal.iter().enumerate() {
            s.step(y, k as u64, 0, 11, &mut out).unwrap();
            // Invariant holds after every fully-encoded sample.
            assert!(
                (y - s.last_encoded_level).abs() < delta,
                "tracking error at {k}"
            );
        }
        // Reconstruction agrees with the tracked level.
        let recon = reconstruct(&out, delta, 0.0).unwrap();
        assert!((recon.last().unwrap().1 - s.last_encoded_level).abs() < 1e-12);
    }

    #[test]
    fn reconstruct_basics() {
        assert!(reconstruct(&[], 1.0, 5.0).unwrap().is_empty());
        let on = SpikeEvent {
            timestamp_us: 0,
            channel: 0,
            polarity: Polarity::On,
            gain_index: 0,
        };
        let off = SpikeEvent {
            timestamp_us: 1,
            polarity: Polarity::Off,
            ..on
        };
        let r = reconstruct(&[on, off], 1.0, 5.0).unwrap();
        assert_eq!(r, vec![(0, 6.0), (1, 5.0)]);
        // Unordered events rejected.
        assert!(reconstruct(&[off, on], 1.0, 5.0).is_err());
    }

    #[test]
    fn polarity_balance_over_closed_loop() {
        // Signal returns to its start value: #ON - #OFF in {-1, 0, 1}.
        let n = 5000;
        let signal: Vec<f64> = (0..n)
            .map(|k| {
                let t = k as f64 / n as f64;
                3.0 * (std::f64::consts::TAU * 3.0 * t).sin()
                    + 1.5 * (std::f64::consts::TAU * 7.0 * t).sin()
            })
            .collect();
        let evs = encode(&signal, 0.2, 64);
        let on = evs.iter().filter(|e| e.polarity == Polarity::On).count() as i64;
        let off = evs.len() as i64 - on;
        assert!((on - off).abs() <= 1, "on {on} off {off}");
    }

    #[test]
    fn on_count_per_period() {
        // Sine with pk-pk 3 * delta, offset so its swing straddles three
        // full level steps -> 3 ON per rising slope.
        let delta = 1.0;
        let amp = 1.5 + 1e-6;
        let offset = 0.5f64;
        let fs = 44_100.0;
        let f = 441.0;
        let period_us = (1e6 / f) as u64;
        let n = (fs / f) as usize * 20;
        let mut s = AdmState::new(delta, 64).unwrap();
        s.last_encoded_level = offset.floor();
        let mut evs = Vec::new();
        for k in 0..n {
            let t_us = (k as f64 * 1e6 / fs) as u64;
            let y = offset + amp * (std::f64::consts::TAU * f * k as f64 / fs).sin();
            s.step(y, t_us, 0, 11, &mut evs).unwrap();
        }
        assert_eq!(count_on_per_rising_slope(&evs, period_us).unwrap(), 3);

        // Doubling the amplitude roughly doubles the count.
        let mut s2 = AdmState::new(delta, 64).unwrap();
        s2.last_encoded_level = offset.floor();
        let mut evs2 = Vec::new();
        for k in 0..n {
            let t_us = (k as f64 * 1e6 / fs) as u64;
            let y = offset + 2.0 * amp * (std::f64::consts::TAU * f * k as f64 / fs).sin();
            s2.step(y, t_us, 0, 11, &mut evs2).unwrap();
        }
        let c2 = count_on_per_rising_slope(&evs2, period_us).unwrap() as i64;
        assert!((c2 - 6).abs() <= 1, "got {c2}");
    }

    #[test]
    fn sub_threshold_amplitude_never_spikes() {
        // Peak-to-peak below delta / 2: no crossings at all from rest.
        let delta = 1.0;
        let mut s = AdmState::new(delta, 8).unwrap();
        let mut out = Vec::new();
        for k in 0..10_000 {
            let y = 0.2 * (k as f64 * 0.01).sin();
            s.step(y, k, 0, 11, &mut out).unwrap();
        }
        assert!(out.is_empty());
    }

    #[test]
    fn insufficient_data_error() {
        let evs = vec![SpikeEvent {
            timestamp_us: 0,
            channel: 0,
            polarity: Polarity::On,
            gain_index: 0,
        }];
        assert!(count_on_per_rising_slope(&evs, 1000).is_err());
    }

    #[test]
    fn first_on_spacing_encodes_frequency() {
        // Interval between the first ON events of consecutive rising slopes
        // equals one signal period within one sample period.
        let fs = 44_100.0;
        let f = 500.0;
        let delta = 0.5;
        let n = (fs / f) as usize * 30;
        let mut s = AdmState::new(delta, 64).unwrap();
        let mut evs = Vec::new();
        for k in 0..n {
            let t_us = (k as f64 * 1e6 / fs) as u64;
            // Peak kept off the level grid so the trough level is stable
            // from period to period.
            let y = 1.1 * (std::f64::consts::TAU * f * k as f64 / fs).sin();
            s.step(y, t_us, 0, 11, &mut evs).unwrap();
        }
        // First ON after each OFF run marks a new rising slope.
        let mut firsts = Vec::new();
        let mut prev_was_off = true;
        for e in &evs {
            match e.polarity {
                Polarity::On => {
                    if prev_was_off {
                        firsts.push(e.timestamp_us);
                    }
                    prev_was_off = false;
                }
                Polarity::Off => prev_was_off = true,
            }
        }
        let period_us = 1e6 / f;
        let sample_us = 1e6 / fs;
        // The first rising slope starts from the unlocked initial level;
        // judge spacing from steady state only.
        let firsts = &firsts[2..];
        for pair in firsts.windows(2) {
            let dt = (pair[1] - pair[0]) as f64;
            assert!(
                (dt - period_us).abs() <= sample_us + 1.0,
                "spacing {dt} us, period {period_us} us"
            );
        }
    }
}
