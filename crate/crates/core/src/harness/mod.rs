//! End-to-end plumbing: audio ingestion, the synthetic corpus, the merged
//! virtual-time simulation loop, event-file I/O and the experiment runner.

pub mod audio;
pub mod corpus;
pub mod eventfile;
pub mod experiment;
pub mod sim;

pub use audio::{load_audio, normalize_rms, sine_mv, write_wav, FULL_SCALE_MV, SAMPLE_RATE_HZ};
pub use corpus::{synth_corpus, CorpusSpec, Recording};
pub use eventfile::{read_events, write_events, EventFileHeader};
pub use experiment::{
    extract_frames, rate_analysis, read_frames_csv, run_experiment, write_frames_csv,
    write_rate_csv, AgcChoice, CellResult, ClassifierChoice, ExperimentReport, ExperimentSpec,
    LabeledFrame, RateAnalysis, RatePoint,
};
pub use sim::{simulate, AgcMode, SimConfig, SimOutput};
