//! End-to-end orchestration: learning, personalized inference and the
//! alpha-sweep experiment with seeded repetitions.

mod config;
mod experiment;
mod inference;
mod learning;

pub use config::{derive_seed, CohortSource, ExperimentConfig, FirstStage, SplitConfig};
pub use experiment::{
    evaluate_alphas, evaluate_pspi_stage, experiment_report, person_seed, repetition_seed, run_alpha_experiment,
    split_cohort, summarize, write_experiment, AlphaSummary, CellReport, ExperimentOutcome, ExperimentReport,
    PersonMae, RunManifest,
};
pub use inference::{run_inference, PersonInference, SequencePrediction, StageCache};
pub use learning::{run_learning, Artifacts, LambdaScore, LearningSeeds, Regressor};
