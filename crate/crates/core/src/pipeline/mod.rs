//! Orchestration: one config file in, a mutant corpus plus manifest out,
//! with statistics and vocabulary-closure checks over the result.

pub mod closure;
pub mod config;
pub mod mutate;
pub mod stats;

pub use closure::{
    train_answer_vocabulary, vocabulary_closure_check, ClosureReport, ClosureViolation,
};
pub use config::{HookConfig, MixWeights, ObjectiveWeights, PipelineConfig};
pub use mutate::{run_mutate, RunManifest};
pub use stats::{build_stats, classify_answer, run_stats, AnswerShare, AnswerTypeRow, StatsReport, TypeDistribution};
