//! Command-line front end: simulation, feature extraction, training,
//! evaluation, the experiment matrix, steady-state rate analysis and filter
//! frequency-response sweeps. Each verb takes an optional JSON config plus
//! flag overrides; outputs are event files, CSV reports and JSON models.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use cochlea::classifiers::{
    dnn_train, evaluate, lr_train, Dnn, LrModel, LrTrainOptions, Model, TrainConfig,
};
use cochlea::error::{CochleaError, Result};
use cochlea::features::{frame_stream, normalize_features, Label, Normalizer, DEFAULT_FRAME_MS};
use cochlea::filterbank::{channel_center_freq, frequency_response};
use cochlea::harness::{
    self, load_audio, normalize_rms, rate_analysis, read_events, read_frames_csv, run_experiment,
    sine_mv, write_events, write_frames_csv, write_rate_csv, AgcMode, EventFileHeader,
    ExperimentSpec, LabeledFrame, SimConfig,
};

#[derive(Parser)]
#[command(name = "cochlea", about = "Spiking cochlea simulator with channel-local AGC")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run audio through the cochlea and write an event file.
    Simulate(SimulateArgs),
    /// Extract frame features from event files into a CSV.
    Features(FeaturesArgs),
    /// Train a classifier on a feature CSV.
    Train(TrainArgs),
    /// Evaluate a trained model on a feature CSV.
    Evaluate(EvaluateArgs),
    /// Run the full train/test amplitude matrix on a synthetic corpus.
    Experiment(ExperimentArgs),
    /// Steady-state tone sweep: spike rates, mean gain, Eq. 5/6 statistics.
    RateAnalysis(RateArgs),
    /// Filter-bank gain vs frequency grid for one channel.
    FreqResponse(FreqArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Input WAV file; mutually exclusive with --sine-hz.
    #[arg(long)]
    wav: Option<PathBuf>,
    /// Generate a sine test tone at this frequency instead of reading a file.
    #[arg(long)]
    sine_hz: Option<f64>,
    /// Tone duration in seconds (with --sine-hz).
    #[arg(long, default_value_t = 1.0)]
    dur_s: f64,
    /// RMS amplitude in mV-equivalents the input is normalized to.
    #[arg(long)]
    amp_mv: Option<f64>,
    /// Simulator configuration JSON (defaults when omitted).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "on", value_parser = parse_agc_mode)]
    agc: AgcMode,
    /// Noise seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Label stored in the event-file header (speech|noise).
    #[arg(long)]
    label: Option<String>,
    #[arg(long, default_value = "cli")]
    id: String,
    /// Output event file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FeaturesArgs {
    /// Input event files.
    #[arg(long, required = true, num_args = 1..)]
    events: Vec<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_FRAME_MS)]
    frame_ms: u64,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Feature CSV written by `features` or `experiment`.
    #[arg(long)]
    features: PathBuf,
    /// lr | dnn
    #[arg(long, default_value = "lr")]
    model: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output model JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment spec JSON (defaults when omitted).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Simulator configuration JSON.
    #[arg(long)]
    sim_config: Option<PathBuf>,
    /// Override the AGC matrix axis: on | off | both.
    #[arg(long)]
    agc: Option<String>,
    /// Replace the seed list with a single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for report.json and the CSVs.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RateArgs {
    #[arg(long, default_value_t = 30)]
    channel: u8,
    /// Comma-separated amplitude sweep in mV.
    #[arg(long, value_delimiter = ',', default_values_t = vec![2.0, 5.0, 10.0, 20.0, 50.0, 80.0])]
    amps_mv: Vec<f64>,
    #[arg(long, default_value_t = 2.0)]
    dur_s: f64,
    #[arg(long, default_value_t = 1.0)]
    settle_s: f64,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FreqArgs {
    #[arg(long, default_value_t = 30)]
    channel: u8,
    #[arg(long, default_value_t = 11)]
    gain_index: u8,
    #[arg(long, value_delimiter = ',', default_values_t = vec![10.0])]
    amps_mv: Vec<f64>,
    /// Comma-separated frequency grid in Hz; defaults to a log sweep around
    /// the channel center.
    #[arg(long, value_delimiter = ',')]
    freqs_hz: Option<Vec<f64>>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn parse_agc_mode(s: &str) -> std::result::Result<AgcMode, String> {
    match s {
        "on" => Ok(AgcMode::On),
        "off" => Ok(AgcMode::Off),
        other => Err(format!("unknown AGC mode {other:?} (use on|off)")),
    }
}

fn load_json<T: serde::de::DeserializeOwned + Default>(path: &Option<PathBuf>) -> Result<T> {
    match path {
        Some(p) => Ok(serde_json::from_str(&std::fs::read_to_string(p)?)?),
        None => Ok(T::default()),
    }
}

/// Serialized model checkpoint: the fitted normalizer plus the parameters.
#[derive(serde::Serialize, serde::Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum ModelFile {
    Lr {
        normalizer: Normalizer,
        model: LrModel,
    },
    Dnn {
        normalizer: Normalizer,
        input_dim: usize,
        seed: u64,
        config: TrainConfig,
        params: Vec<f32>,
    },
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let mut cfg: SimConfig = load_json(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.noise_seed = seed;
    }
    let samples = match (&args.wav, args.sine_hz) {
        (Some(path), None) => {
            let raw = load_audio(path)?;
            match args.amp_mv {
                Some(mv) => normalize_rms(&raw, mv)?,
                None => raw,
            }
        }
        (None, Some(freq)) => sine_mv(freq, args.amp_mv.unwrap_or(10.0), args.dur_s),
        _ => {
            return Err(CochleaError::InvalidArgument(
                "pass exactly one of --wav or --sine-hz".into(),
            ))
        }
    };
    let out = harness::simulate(&samples, &cfg, args.agc)?;
    let label = match args.label.as_deref() {
        None => None,
        Some("speech") => Some(Label::Speech.as_u8()),
        Some("noise") => Some(Label::Noise.as_u8()),
        Some(other) => {
            return Err(CochleaError::InvalidArgument(format!(
                "unknown label {other:?}"
            )))
        }
    };
    let header = EventFileHeader {
        sample_rate_hz: cfg.filterbank.sample_rate_hz,
        num_channels: cfg.filterbank.num_channels as u8,
        agc_on: args.agc.agc_enabled(),
        delta: cfg.delta,
        gain_table_db: cfg.filterbank.gain_table_db.clone(),
        amplitude_mv: args.amp_mv.unwrap_or(0.0),
        label,
        source_id: args.id,
    };
    write_events(&args.out, &header, &out.events)?;
    eprintln!(
        "wrote {} events ({} dropped updates) to {}",
        out.events.len(),
        out.dropped_updates,
        args.out.display()
    );
    Ok(())
}

fn cmd_features(args: FeaturesArgs) -> Result<()> {
    let cfg: SimConfig = load_json(&args.config)?;
    let mut frames: Vec<LabeledFrame> = Vec::new();
    for path in &args.events {
        let (header, events) = read_events(path)?;
        let duration_us = events.last().map(|e| e.timestamp_us + 1).unwrap_or(0);
        // Event files carry the register gain on each event; rebuild a
        // piecewise trace from the tags for the gain feature.
        let trace = gain_trace_from_events(&events, header.num_channels as usize);
        let fs = frame_stream(
            &events,
            Some(&trace),
            duration_us,
            args.frame_ms,
            &cfg.filterbank,
            header.agc_on,
            header.label.and_then(Label::from_u8),
        )?;
        frames.extend(fs.into_iter().map(|f| LabeledFrame {
            features: f.to_vec(),
            label: header.label.unwrap_or(0),
            amplitude_mv: header.amplitude_mv,
            agc_on: header.agc_on,
            recording_id: header.source_id.clone(),
            frame_start_us: f.frame_start_us,
        }));
    }
    write_frames_csv(&args.out, &frames)?;
    eprintln!("wrote {} frames to {}", frames.len(), args.out.display());
    Ok(())
}

/// Reconstructs a gain-index trace from the per-event register tags.
fn gain_trace_from_events(
    events: &[cochlea::adm::SpikeEvent],
    num_channels: usize,
) -> cochlea::features::GainTrace {
    let mut trace = cochlea::features::GainTrace::constant(num_channels, 11);
    let mut current = vec![11u8; num_channels];
    for ev in events {
        let ch = ev.channel as usize;
        if ev.gain_index != current[ch] {
            current[ch] = ev.gain_index;
            trace.push(ev.timestamp_us, ev.channel, ev.gain_index);
        }
    }
    trace
}

fn split_xy(frames: &[LabeledFrame]) -> (Vec<Vec<f64>>, Vec<u8>, Vec<f64>) {
    (
        frames.iter().map(|f| f.features.clone()).collect(),
        frames.iter().map(|f| f.label).collect(),
        frames.iter().map(|f| f.amplitude_mv).collect(),
    )
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let frames = read_frames_csv(&args.features)?;
    let (x, y, _) = split_xy(&frames);
    let (normalizer, xn) = normalize_features(&x)?;
    let file = match args.model.as_str() {
        "lr" => ModelFile::Lr {
            normalizer,
            model: lr_train(&xn, &y, &LrTrainOptions::default())?,
        },
        "dnn" => {
            let config = TrainConfig {
                seed: args.seed,
                ..TrainConfig::default()
            };
            let trained = dnn_train(&xn, &y, &config)?;
            eprintln!("best validation accuracy {:.4}", trained.best_val_accuracy);
            ModelFile::Dnn {
                normalizer,
                input_dim: trained.model.input_dim,
                seed: args.seed,
                config,
                params: trained.model.params,
            }
        }
        other => {
            return Err(CochleaError::InvalidArgument(format!(
                "unknown model {other:?} (use lr|dnn)"
            )))
        }
    };
    std::fs::write(&args.out, serde_json::to_vec_pretty(&file)?)?;
    eprintln!("wrote model to {}", args.out.display());
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let frames = read_frames_csv(&args.features)?;
    let (x, y, amps) = split_xy(&frames);
    let file: ModelFile = serde_json::from_str(&std::fs::read_to_string(&args.model)?)?;
    let (normalizer, model): (Normalizer, Box<dyn Model>) = match file {
        ModelFile::Lr { normalizer, model } => (normalizer, Box::new(model)),
        ModelFile::Dnn {
            normalizer,
            input_dim,
            params,
            ..
        } => (
            normalizer,
            Box::new(Dnn::<f32> { input_dim, params }),
        ),
    };
    let xn = normalizer.transform(&x);
    let report = evaluate(model.as_ref(), &xn, &y, &amps)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn cmd_experiment(args: ExperimentArgs) -> Result<()> {
    let mut spec: ExperimentSpec = load_json(&args.config)?;
    let sim_cfg: SimConfig = load_json(&args.sim_config)?;
    if let Some(agc) = &args.agc {
        spec.agc = serde_json::from_value(serde_json::Value::String(agc.clone()))?;
    }
    if let Some(seed) = args.seed {
        spec.seeds = vec![seed];
    }
    std::fs::create_dir_all(&args.out)?;
    let report = run_experiment(&spec, &sim_cfg)?;
    report.write_accuracy_csv(&args.out.join("accuracy.csv"))?;
    report.write_mean_csv(&args.out.join("mean_accuracy.csv"))?;
    report.write_relative_error_csv(&args.out.join("relative_error.csv"))?;
    std::fs::write(
        args.out.join("report.json"),
        serde_json::to_vec_pretty(&report)?,
    )?;
    for cell in report.cells.iter().filter(|c| c.error.is_some()) {
        eprintln!(
            "cell ({}, agc={}, {}, seed {}) failed: {}",
            cell.train_condition,
            cell.agc_on,
            cell.classifier,
            cell.seed,
            cell.error.as_deref().unwrap_or("")
        );
    }
    eprintln!("wrote {} cells to {}", report.cells.len(), args.out.display());
    Ok(())
}

fn cmd_rate(args: RateArgs) -> Result<()> {
    let cfg: SimConfig = load_json(&args.config)?;
    let analysis = rate_analysis(args.channel, &args.amps_mv, args.dur_s, args.settle_s, &cfg)?;
    write_rate_csv(&args.out, &analysis)?;
    eprintln!(
        "channel {} at {:.1} Hz: mean rate {:.1} ev/s with AGC, {:.1} ev/s fixed ({:.2}x compression)",
        analysis.channel,
        analysis.freq_hz,
        analysis.mean_rate_agc_hz,
        analysis.mean_rate_fixed_hz,
        analysis.compression_factor
    );
    Ok(())
}

fn cmd_freq(args: FreqArgs) -> Result<()> {
    let cfg: SimConfig = load_json(&args.config)?;
    let fb = &cfg.filterbank;
    let freqs = match args.freqs_hz {
        Some(f) => f,
        None => {
            // Two decades around the channel center, 40 points.
            let fc = channel_center_freq(args.channel, fb)?;
            (0..40)
                .map(|i| fc * 10f64.powf(-1.0 + 2.0 * i as f64 / 39.0))
                .filter(|&f| f < fb.sample_rate_hz / 2.0)
                .collect()
        }
    };
    let amps_fs: Vec<f64> = args
        .amps_mv
        .iter()
        .map(|&mv| mv / harness::FULL_SCALE_MV)
        .collect();
    let grid = frequency_response(args.channel, args.gain_index, &amps_fs, &freqs, fb)?;
    let mut w = String::from("amplitude_mv,freq_hz,gain_db\n");
    for (ai, row) in grid.iter().enumerate() {
        for (fi, g) in row.iter().enumerate() {
            let gain = g
                .db()
                .map(|v| format!("{v}"))
                .unwrap_or_else(|| "below_noise_floor".into());
            w.push_str(&format!("{},{},{gain}\n", args.amps_mv[ai], freqs[fi]));
        }
    }
    std::fs::write(Path::new(&args.out), w)?;
    eprintln!("wrote {} rows to {}", grid.len() * freqs.len(), args.out.display());
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Features(a) => cmd_features(a),
        Command::Train(a) => cmd_train(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Experiment(a) => cmd_experiment(a),
        Command::RateAnalysis(a) => cmd_rate(a),
        Command::FreqResponse(a) => cmd_freq(a),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
