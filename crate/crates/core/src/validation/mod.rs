//! Prediction and validation heads, the consistency decision, the loss and
//! the soft-score metric.

pub mod decision;
pub mod heads;
pub mod loss;
pub mod metric;

pub use decision::{
    consistency_decision, consistent_candidates, DecisionRecord, DecisionRule, FallbackScope,
};
pub use heads::{
    answer_embedding, fuse_predictions, fuse_validation, predict_source, validation_score,
    SourcePrediction,
};
pub use loss::{auxiliary_vqa_loss_node, mavex_loss, mavex_loss_node, BCE_EPS};
pub use metric::{
    normalize_answer, soft_score_from_matches, vqa_soft_score, ANNOTATIONS_PER_QUESTION,
};
