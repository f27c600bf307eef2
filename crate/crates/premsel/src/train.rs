//! Training and evaluation: the contrastive objective, corpus splitting,
//! the optimization loop, and the ranking metrics.

pub mod loss;
pub mod metrics;
pub mod split;
pub mod trainer;

pub use loss::{info_nce_loss, LossReport};
pub use metrics::{
    average_precision, r_precision, rank_by_score, standardize_scores, Aggregate, MetricsError,
    StandardizedScores,
};
pub use split::{split_corpus, CorpusSplit};
pub use trainer::{
    evaluate, train, EpochLog, EvalSummary, HoleReport, RankingReport, TrainError, TrainOutcome,
};
