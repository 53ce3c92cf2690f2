//! Experiment driver: corpus ingestion, labeled subsets, baselines, trials,
//! reports and vector export.

mod corpus;
mod export;
mod split;
pub mod synthetic;
mod trials;
mod vectorize;

pub use corpus::{Corpus, CorpusFormat};
pub use export::{export_vectors, read_vectors, write_vectors, VectorRow};
pub use split::{split_labeled, Split, SPLIT_RETRIES};
pub use trials::{
    run_trial, run_trials, CorpusSummary, EncoderSettings, ExperimentConfig, ExperimentReport, Method,
    Precision, Summary, Timing, TrialResult, TrialRun,
};
pub use vectorize::{vectorize_average, vectorize_bow, vectorize_tfidf, vocabulary};
