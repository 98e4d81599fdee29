//! Benchmark datasets and scoring: outlier detection, retrieval, and the
//! fine-tuning task splits.

mod metrics;
mod outlier;
mod tasks;

pub use metrics::{
    auc, average_scores, cosine64, evaluate, ndcg, precision_at, recall_at, topk_search, DbEntry, QueryScore, SimilarityDb,
};
pub use outlier::{
    class_indicator, class_pool, generate_outlier_sets, instruction_class, mean_std, outlier_accuracy,
    predict_outlier, OutlierBasis, OutlierSet,
};
pub use tasks::{
    build_task_datasets, encode_exec, encode_unit, function_strands, qualified_id, recovery_samples,
    BenchCorpus, DbUnit, Level, Task, TaskConfig, TaskData, TaskItem, Unit,
    FUNCTION_MAX_INSTRUCTIONS, RECOVERY_MIN_STRANDS,
};

use alloc::string::String;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BenchError {
    #[error("query `{0}` is not in the database")]
    QueryNotInDb(String),
    #[error("query `{0}` has no similar entry in the database")]
    NoSimilar(String),
    #[error("duplicate database id `{0}`")]
    DuplicateEntry(String),
    #[error("{task}: need at least {needed}, found {found}")]
    InsufficientData { task: String, needed: usize, found: usize },
}
