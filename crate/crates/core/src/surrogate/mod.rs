//! Per-skill neural surrogates and their composition into differentiable
//! surrogate programs.

mod checkpoint;
mod mlp;
mod model;
mod program;
mod train;

use thiserror::Error;

use crate::dsl::SkillType;

pub use checkpoint::{load_checkpoint, load_library, save_checkpoint, save_library, Checkpoint};
pub use mlp::{Mlp, MlpCache};
pub use model::{
    encode_input, encode_target, logistic, Arch, ModelCache, Norm, SurrogateModel, DEFAULT_HIDDEN, DURATION,
    CONSTANT_SPREAD, INPUT_DIM, LOGIT, OUTPUT_DIM, STD_FLOOR,
};
pub use program::{build_surrogate_program, Library, Rollout, SurrogateProgram};
pub use train::{
    evaluate, finetune, train_skill_surrogate, FinetuneConfig, Metrics, TrainConfig, TrainReport, MIN_RECORDS,
};

#[derive(Debug, Error)]
pub enum SurrogateError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("inconsistent model: {0}")]
    Inconsistent(String),
    #[error("insufficient data: {found} records, need at least {needed}")]
    InsufficientData { found: usize, needed: usize },
    #[error("records of {found} mixed into {expected} training set")]
    MixedSkillTypes { expected: SkillType, found: SkillType },
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("no surrogate for skill type(s): {}", .0.iter().map(|t| t.as_str()).collect::<Vec<_>>().join(", "))]
    MissingModel(Vec<SkillType>),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}
