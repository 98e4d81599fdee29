//! Tensors, reverse-mode autodiff and the transformer encoder.

pub mod graph;
pub mod model;
pub mod pretrain;
mod scalar;
pub mod tensor;
pub mod train;

pub use graph::{cosine, Graph, ParamStore, Var};
pub use model::{argmax, marked_instruction, random_embedding, EmbedMode, Model, ModelConfig};
pub use scalar::Scalar;
pub use tensor::Tensor;
pub use train::{
    finetune_classifier_step, finetune_siamese_step, finetune_token_step, pretrain_loss, pretrain_step, Adam,
    PretrainExample, StepStats, TrainConfig, Trainer,
};

use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NeuralError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("bad model config: {0}")]
    BadConfig(String),
    #[error("non-finite loss at step {step}: {detail}")]
    NonFiniteLoss { step: usize, detail: String },
    #[error("sample has no [MARK]-surrounded instruction")]
    MarkMissing,
    #[error("model has no head named `{0}`")]
    MissingHead(String),
}
