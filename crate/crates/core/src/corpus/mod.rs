//! Pre-training and task datasets built from strands.

mod exec;
mod mask;
mod split;
mod ssm;

pub use exec::{build_exec_dataset, exec_sample, ExecSample, EXEC_INPUT_MAX, EXEC_LABEL_MAX};
pub use mask::{mask_tokens, MaskBranch, MaskConfig, MaskedSample, IGNORE};
pub use split::{split_by_text, Splits};
pub use ssm::{assign_text, build_ssm_corpus, finish_ssm, ssm_pairs_for, SsmPair, SsmSource};

use alloc::string::String;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CorpusError {
    #[error("need at least 2 distinct representative sets, found {0}")]
    CorpusTooSmall(usize),
    #[error("strand and representative set lists differ: {0}")]
    Mismatch(String),
}
