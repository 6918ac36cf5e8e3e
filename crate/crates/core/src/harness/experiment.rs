//! Experiment matrix runner and steady-state rate analysis, plus the CSV
//! plumbing for feature matrices and reports.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::audio::{normalize_rms, sine_mv};
use super::corpus::{synth_corpus, CorpusSpec, Recording};
use super::sim::{simulate, AgcMode, SimConfig};
use crate::agc::{estimate_input_amplitude, gain_adjusted_rate};
use crate::classifiers::{
    dnn_train, evaluate, lr_train, relative_error_decrease, LrTrainOptions, Model, TrainConfig,
};
use crate::error::{CochleaError, Result};
use crate::features::{frame_stream, normalize_features, DEFAULT_FRAME_MS, FEATURE_DIM};
use crate::filterbank::channel_center_freq;

/// One labeled frame with its provenance, the unit of the feature CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabeledFrame {
    pub features: Vec<f64>,
    pub label: u8,
    pub amplitude_mv: f64,
    pub agc_on: bool,
    pub recording_id: String,
    pub frame_start_us: u64,
}

/// Simulates a recording set at one playback amplitude and extracts frames.
pub fn extract_frames(
    recordings: &[Recording],
    amplitude_mv: f64,
    mode: AgcMode,
    sim_cfg: &SimConfig,
    frame_ms: u64,
) -> Result<Vec<LabeledFrame>> {
    let per_recording: Vec<Result<Vec<LabeledFrame>>> = recordings
        .par_iter()
        .map(|rec| {
            let audio = normalize_rms(&rec.samples, amplitude_mv)?;
            let out = simulate(&audio, sim_cfg, mode)?;
            let frames = frame_stream(
                &out.events,
                Some(&out.gain_trace),
                out.duration_us,
                frame_ms,
                &sim_cfg.filterbank,
                mode.agc_enabled(),
                Some(rec.label),
            )?;
            Ok(frames
                .into_iter()
                .map(|f| LabeledFrame {
                    features: f.to_vec(),
                    label: rec.label.as_u8(),
                    amplitude_mv,
                    agc_on: mode.agc_enabled(),
                    recording_id: rec.id.clone(),
                    frame_start_us: f.frame_start_us,
                })
                .collect())
        })
        .collect();
    let mut out = Vec::new();
    for r in per_recording {
        out.extend(r?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgcChoice {
    On,
    Off,
    Both,
}

impl AgcChoice {
    pub fn modes(self) -> Vec<bool> {
        match self {
            AgcChoice::On => vec![true],
            AgcChoice::Off => vec![false],
            AgcChoice::Both => vec![true, false],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierChoice {
    Lr,
    Dnn,
    Both,
}

impl ClassifierChoice {
    pub fn names(self) -> Vec<&'static str> {
        match self {
            ClassifierChoice::Lr => vec!["lr"],
            ClassifierChoice::Dnn => vec!["dnn"],
            ClassifierChoice::Both => vec!["lr", "dnn"],
        }
    }
}

/// The full experiment matrix definition.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    pub corpus: CorpusSpec,
    pub train_amplitudes_mv: Vec<f64>,
    pub test_amplitudes_mv: Vec<f64>,
    /// Add an "all" training condition pooling every training amplitude.
    pub include_all_condition: bool,
    pub agc: AgcChoice,
    pub classifier: ClassifierChoice,
    pub seeds: Vec<u64>,
    pub frame_ms: u64,
    pub train_corpus_seed: u64,
    pub test_corpus_seed: u64,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            corpus: CorpusSpec::default(),
            train_amplitudes_mv: vec![5.0, 10.0, 15.0, 50.0, 80.0],
            test_amplitudes_mv: vec![2.0, 2.5, 5.0, 7.0, 10.0, 15.0, 20.0, 30.0, 50.0, 80.0],
            include_all_condition: true,
            agc: AgcChoice::Both,
            classifier: ClassifierChoice::Both,
            seeds: (0..6).collect(),
            frame_ms: DEFAULT_FRAME_MS,
            train_corpus_seed: 101,
            test_corpus_seed: 202,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, amps) in [
            ("train", &self.train_amplitudes_mv),
            ("test", &self.test_amplitudes_mv),
        ] {
            if amps.is_empty() || amps.iter().any(|&a| a <= 0.0) {
                return Err(CochleaError::InvalidArgument(format!(
                    "{name} amplitudes must be non-empty and positive"
                )));
            }
        }
        if self.seeds.is_empty() {
            return Err(CochleaError::InvalidArgument("need at least one seed".into()));
        }
        if self.train_corpus_seed == self.test_corpus_seed {
            return Err(CochleaError::InvalidArgument(
                "train and test corpus seeds must differ".into(),
            ));
        }
        Ok(())
    }
}

/// One (training condition, AGC, classifier, seed) cell of the matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellResult {
    /// Single amplitude in mV rendered as a number, or "all".
    pub train_condition: String,
    pub agc_on: bool,
    pub classifier: String,
    pub seed: u64,
    /// (test amplitude mV, accuracy), ascending.
    pub per_amplitude: Vec<(f64, f64)>,
    pub mean_accuracy: f64,
    pub overall_accuracy: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub spec: ExperimentSpec,
    pub cells: Vec<CellResult>,
}

fn amp_key(a: f64) -> i64 {
    (a * 1000.0).round() as i64
}

fn train_cell(
    classifier: &str,
    seed: u64,
    train: &[LabeledFrame],
    test: &[LabeledFrame],
) -> Result<(Vec<(f64, f64)>, f64, f64)> {
    let train_x: Vec<Vec<f64>> = train.iter().map(|f| f.features.clone()).collect();
    let train_y: Vec<u8> = train.iter().map(|f| f.label).collect();
    let (norm, train_x) = normalize_features(&train_x)?;
    let test_x: Vec<Vec<f64>> = test.iter().map(|f| norm.transform_row(&f.features)).collect();
    let test_y: Vec<u8> = test.iter().map(|f| f.label).collect();
    let test_amp: Vec<f64> = test.iter().map(|f| f.amplitude_mv).collect();
    let model: Box<dyn Model> = match classifier {
        "lr" => Box::new(lr_train(&train_x, &train_y, &LrTrainOptions::default())?),
        "dnn" => {
            let cfg = TrainConfig {
                seed,
                ..TrainConfig::default()
            };
            Box::new(dnn_train(&train_x, &train_y, &cfg)?.model)
        }
        other => {
            return Err(CochleaError::InvalidArgument(format!(
                "unknown classifier {other}"
            )))
        }
    };
    let rep = evaluate(model.as_ref(), &test_x, &test_y, &test_amp)?;
    Ok((rep.per_amplitude, rep.mean_across_amplitudes, rep.overall_accuracy))
}

/// Runs the complete matrix. Partial failures are recorded in the cell and
/// the run continues.
pub fn run_experiment(spec: &ExperimentSpec, sim_cfg: &SimConfig) -> Result<ExperimentReport> {
    spec.validate()?;
    let train_corpus = synth_corpus(&spec.corpus, spec.train_corpus_seed)?;
    let test_corpus = synth_corpus(&spec.corpus, spec.test_corpus_seed)?;

    // Simulate every (split, amplitude, agc) combination once; the expensive
    // part is shared across classifiers and seeds.
    let mut jobs: Vec<(bool, f64, bool)> = Vec::new();
    for agc_on in spec.agc.modes() {
        for &a in &spec.train_amplitudes_mv {
            jobs.push((true, a, agc_on));
        }
        for &a in &spec.test_amplitudes_mv {
            jobs.push((false, a, agc_on));
        }
    }
    jobs.sort_by_key(|&(tr, a, g)| (tr, amp_key(a), g));
    jobs.dedup();
    let frames: Vec<Result<Vec<LabeledFrame>>> = jobs
        .iter()
        .map(|&(is_train, amp, agc_on)| {
            let corpus = if is_train { &train_corpus } else { &test_corpus };
            let mode = if agc_on { AgcMode::On } else { AgcMode::Off };
            extract_frames(corpus, amp, mode, sim_cfg, spec.frame_ms)
        })
        .collect();
    let mut cache: BTreeMap<(bool, i64, bool), Vec<LabeledFrame>> = BTreeMap::new();
    for (&(is_train, amp, agc_on), frames) in jobs.iter().zip(frames) {
        cache.insert((is_train, amp_key(amp), agc_on), frames?);
    }

    // Training conditions: each single amplitude, plus "all".
    let mut conditions: Vec<(String, Vec<f64>)> = spec
        .train_amplitudes_mv
        .iter()
        .map(|&a| (format!("{a}"), vec![a]))
        .collect();
    if spec.include_all_condition {
        conditions.push(("all".into(), spec.train_amplitudes_mv.clone()));
    }

    let mut cells = Vec::new();
    for (cond_name, cond_amps) in &conditions {
        for agc_on in spec.agc.modes() {
            let train: Vec<LabeledFrame> = cond_amps
                .iter()
                .flat_map(|&a| cache[&(true, amp_key(a), agc_on)].iter().cloned())
                .collect();
            let test: Vec<LabeledFrame> = spec
                .test_amplitudes_mv
                .iter()
                .flat_map(|&a| cache[&(false, amp_key(a), agc_on)].iter().cloned())
                .collect();
            for classifier in spec.classifier.names() {
                for &seed in &spec.seeds {
                    let cell = match train_cell(classifier, seed, &train, &test) {
                        Ok((per_amplitude, mean_accuracy, overall_accuracy)) => CellResult {
                            train_condition: cond_name.clone(),
                            agc_on,
                            classifier: classifier.into(),
                            seed,
                            per_amplitude,
                            mean_accuracy,
                            overall_accuracy,
                            error: None,
                        },
                        Err(e) => CellResult {
                            train_condition: cond_name.clone(),
                            agc_on,
                            classifier: classifier.into(),
                            seed,
                            per_amplitude: Vec::new(),
                            mean_accuracy: f64::NAN,
                            overall_accuracy: f64::NAN,
                            error: Some(e.to_string()),
                        },
                    };
                    cells.push(cell);
                }
            }
        }
    }
    Ok(ExperimentReport {
        spec: spec.clone(),
        cells,
    })
}

impl ExperimentReport {
    /// Mean accuracy per (condition, agc, classifier), averaged over seeds.
    pub fn mean_table(&self) -> Vec<(String, bool, String, f64)> {
        let mut acc: BTreeMap<(String, bool, String), (f64, usize)> = BTreeMap::new();
        for c in &self.cells {
            if c.error.is_some() {
                continue;
            }
            let slot = acc
                .entry((c.train_condition.clone(), c.agc_on, c.classifier.clone()))
                .or_insert((0.0, 0));
            slot.0 += c.mean_accuracy;
            slot.1 += 1;
        }
        acc.into_iter()
            .map(|((cond, agc, cls), (sum, n))| (cond, agc, cls, sum / n as f64))
            .collect()
    }

    /// Relative error decrease of AGC over non-AGC per (condition,
    /// classifier, seed); needs both modes in the report.
    pub fn relative_error_rows(&self) -> Vec<(String, String, u64, f64, f64, f64)> {
        let mut by_key: BTreeMap<(String, String, u64), (Option<f64>, Option<f64>)> =
            BTreeMap::new();
        for c in &self.cells {
            if c.error.is_some() {
                continue;
            }
            let slot = by_key
                .entry((c.train_condition.clone(), c.classifier.clone(), c.seed))
                .or_default();
            if c.agc_on {
                slot.0 = Some(c.mean_accuracy);
            } else {
                slot.1 = Some(c.mean_accuracy);
            }
        }
        by_key
            .into_iter()
            .filter_map(|((cond, cls, seed), (agc, non))| match (agc, non) {
                (Some(a), Some(n)) => relative_error_decrease(a, n)
                    .ok()
                    .map(|red| (cond, cls, seed, a, n, red)),
                _ => None,
            })
            .collect()
    }

    pub fn write_accuracy_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(
            w,
            "train_condition,agc,classifier,seed,test_amplitude_mv,accuracy"
        )?;
        for c in &self.cells {
            for &(amp, acc) in &c.per_amplitude {
                writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    c.train_condition, c.agc_on as u8, c.classifier, c.seed, amp, acc
                )?;
            }
        }
        Ok(())
    }

    pub fn write_mean_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "train_condition,agc,classifier,mean_accuracy")?;
        for (cond, agc, cls, mean) in self.mean_table() {
            writeln!(w, "{cond},{},{cls},{mean}", agc as u8)?;
        }
        Ok(())
    }

    pub fn write_relative_error_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(
            w,
            "train_condition,classifier,seed,mean_acc_agc,mean_acc_non_agc,relative_error_decrease_pct"
        )?;
        for (cond, cls, seed, a, n, red) in self.relative_error_rows() {
            writeln!(w, "{cond},{cls},{seed},{a},{n},{red}")?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Feature CSV I/O
// ---------------------------------------------------------------------------

pub fn write_frames_csv(path: &Path, frames: &[LabeledFrame]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    let cols: Vec<String> = (0..FEATURE_DIM).map(|i| format!("f{i}")).collect();
    writeln!(
        w,
        "{},label,amplitude_mv,agc,recording_id,frame_start_us",
        cols.join(",")
    )?;
    for f in frames {
        let vals: Vec<String> = f.features.iter().map(|v| format!("{v}")).collect();
        writeln!(
            w,
            "{},{},{},{},{},{}",
            vals.join(","),
            f.label,
            f.amplitude_mv,
            f.agc_on as u8,
            f.recording_id,
            f.frame_start_us
        )?;
    }
    Ok(())
}

pub fn read_frames_csv(path: &Path) -> Result<Vec<LabeledFrame>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| CochleaError::MalformedEventFile("empty feature CSV".into()))?;
    let n_cols = header.split(',').count();
    if n_cols != FEATURE_DIM + 5 {
        return Err(CochleaError::MalformedEventFile(format!(
            "expected {} columns, found {n_cols}",
            FEATURE_DIM + 5
        )));
    }
    let mut out = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != n_cols {
            return Err(CochleaError::MalformedEventFile(format!(
                "line {}: {} fields",
                lineno + 2,
                fields.len()
            )));
        }
        let parse_f = |s: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|_| {
                CochleaError::MalformedEventFile(format!("line {}: bad number {s}", lineno + 2))
            })
        };
        let features: Vec<f64> = fields[..FEATURE_DIM]
            .iter()
            .map(|s| parse_f(s))
            .collect::<Result<_>>()?;
        out.push(LabeledFrame {
            features,
            label: parse_f(fields[FEATURE_DIM])? as u8,
            amplitude_mv: parse_f(fields[FEATURE_DIM + 1])?,
            agc_on: fields[FEATURE_DIM + 2] == "1",
            recording_id: fields[FEATURE_DIM + 3].to_string(),
            frame_start_us: parse_f(fields[FEATURE_DIM + 4])? as u64,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Rate analysis (steady-state tone sweeps)
// ---------------------------------------------------------------------------

/// Steady-state statistics at one input amplitude.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RatePoint {
    pub amplitude_mv: f64,
    /// ON spikes per period of the channel center frequency, AGC on.
    pub norm_rate_on: f64,
    pub mean_gain_index: f64,
    pub mean_gain_db: f64,
    /// Eq. 6 gain-adjusted rate.
    pub r_ga: f64,
    /// Eq. 5 relative input-amplitude estimate.
    pub est_amplitude: f64,
    /// Total event rates (both polarities), in events/s.
    pub rate_agc_hz: f64,
    pub rate_fixed_hz: f64,
    /// Fraction of post-settling windows with spike count in [1, 16).
    pub in_band_fraction: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateAnalysis {
    pub channel: u8,
    pub freq_hz: f64,
    pub settle_s: f64,
    pub points: Vec<RatePoint>,
    pub mean_rate_agc_hz: f64,
    pub mean_rate_fixed_hz: f64,
    /// mean_rate_fixed / mean_rate_agc.
    pub compression_factor: f64,
}

/// Linear interpolation of the gain table at a fractional index.
fn gain_db_at_index(table: &[f64], gi: f64) -> f64 {
    let gi = gi.clamp(0.0, (table.len() - 1) as f64);
    let lo = gi.floor() as usize;
    let hi = (lo + 1).min(table.len() - 1);
    let frac = gi - lo as f64;
    table[lo] + frac * (table[hi] - table[lo])
}

/// Runs a tone sweep at the channel's center frequency and reports the
/// per-amplitude steady-state statistics with and without AGC.
pub fn rate_analysis(
    channel: u8,
    amplitudes_mv: &[f64],
    duration_s: f64,
    settle_s: f64,
    sim_cfg: &SimConfig,
) -> Result<RateAnalysis> {
    if amplitudes_mv.is_empty() || duration_s <= settle_s {
        return Err(CochleaError::InvalidArgument(
            "need amplitudes and duration > settle time".into(),
        ));
    }
    let freq = channel_center_freq(channel, &sim_cfg.filterbank)?;
    let mut cfg = sim_cfg.clone();
    cfg.record_window_trace = true;
    let gmax_db = *cfg.filterbank.gain_table_db.last().expect("12 entries");
    let settle_us = (settle_s * 1e6) as u64;

    let points: Vec<Result<RatePoint>> = amplitudes_mv
        .par_iter()
        .map(|&amp| {
            let audio = sine_mv(freq, amp, duration_s);
            let on = simulate(&audio, &cfg, AgcMode::On)?;
            let off = simulate(&audio, &cfg, AgcMode::Off)?;
            let span_s = (on.duration_us.saturating_sub(settle_us)) as f64 / 1e6;
            let count_after = |out: &super::sim::SimOutput, only_on: bool| {
                out.events
                    .iter()
                    .filter(|e| {
                        e.channel == channel
                            && e.timestamp_us >= settle_us
                            && (!only_on || e.polarity == crate::adm::Polarity::On)
                    })
                    .count() as f64
            };
            let on_spikes = count_after(&on, true);
            let norm_rate_on = on_spikes / (span_s * freq);
            let mean_gain_index = on.gain_trace.mean_gain(channel, settle_us, on.duration_us);
            let mean_gain_db = gain_db_at_index(&cfg.filterbank.gain_table_db, mean_gain_index);
            let windows: Vec<_> = on
                .window_trace
                .iter()
                .filter(|w| w.channel == channel && w.time_us >= settle_us)
                .collect();
            let in_band = windows
                .iter()
                .filter(|w| (1..16).contains(&w.spike_count))
                .count();
            let in_band_fraction = if windows.is_empty() {
                0.0
            } else {
                in_band as f64 / windows.len() as f64
            };
            Ok(RatePoint {
                amplitude_mv: amp,
                norm_rate_on,
                mean_gain_index,
                mean_gain_db,
                r_ga: gain_adjusted_rate(norm_rate_on, mean_gain_db, gmax_db),
                est_amplitude: estimate_input_amplitude(norm_rate_on, mean_gain_db),
                rate_agc_hz: count_after(&on, false) / span_s,
                rate_fixed_hz: count_after(&off, false) / span_s,
                in_band_fraction,
            })
        })
        .collect();
    let points: Vec<RatePoint> = points.into_iter().collect::<Result<_>>()?;
    let n = points.len() as f64;
    let mean_rate_agc_hz = points.iter().map(|p| p.rate_agc_hz).sum::<f64>() / n;
    let mean_rate_fixed_hz = points.iter().map(|p| p.rate_fixed_hz).sum::<f64>() / n;
    let compression_factor = if mean_rate_agc_hz > 0.0 {
        mean_rate_fixed_hz / mean_rate_agc_hz
    } else {
        f64::INFINITY
    };
    Ok(RateAnalysis {
        channel,
        freq_hz: freq,
        settle_s,
        points,
        mean_rate_agc_hz,
        mean_rate_fixed_hz,
        compression_factor,
    })
}

pub fn write_rate_csv(path: &Path, analysis: &RateAnalysis) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        w,
        "amplitude_mv,norm_rate_on,mean_gain_index,mean_gain_db,r_ga,est_amplitude,rate_agc_hz,rate_fixed_hz,in_band_fraction"
    )?;
    for p in &analysis.points {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            p.amplitude_mv,
            p.norm_rate_on,
            p.mean_gain_index,
            p.mean_gain_db,
            p.r_ga,
            p.est_amplitude,
            p.rate_agc_hz,
            p.rate_fixed_hz,
            p.in_band_fraction
        )?;
    }
    Ok(())
}
