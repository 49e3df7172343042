//! Experiment configuration, the staged pipeline and its on-disk artifacts.

pub mod config;
pub mod pipeline;
pub mod plot;
pub mod store;

pub use config::{
    ClustererKind, ClusteringConfig, DataConfig, ExperimentConfig, MetricsConfig, SynthSource, SCHEMA_VERSION,
};
pub use pipeline::{
    build_report, effective_runs, evaluate, load_splits, run_cluster, run_propose, run_rank, run_seed, run_train,
    score_run, ClusterArtifact, Evaluation, ModelArtifact, RankedSample, SampleProposals, Splits,
};
pub use store::{OutDir, Timing};
