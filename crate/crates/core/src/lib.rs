//! Post-hoc out-of-distribution scoring for frozen classifiers.
//!
//! The pipeline works on exported penultimate features and the final linear
//! layer: clamp activations ([`react`]), apply the head and average logits
//! over augmented views, score with temperature-scaled maximum softmax
//! probability ([`score`]), and evaluate with AUROC / FPR@95TPR / accuracy
//! ([`metrics`]). Arrays move between stages as `.oodt` files ([`tensor`]).

pub mod cli;
pub mod error;
pub mod metrics;
pub mod react;
pub mod score;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
pub use metrics::{auroc, evaluate, fpr_at_tpr, id_accuracy, EvalReport, RunEcho};
pub use react::{apply_react, calibrate_threshold, coverage_fraction, ReactConfig, EVA_CLIP_CLAMP};
pub use score::{
    classify, compute_logits, ensemble_logits, msp_score, predict_class, score_views, Decision,
    ScoreConfig, DEFAULT_TEMPERATURE,
};
pub use tensor::{
    read_tensor, write_tensor, ClassifierHead, DType, FeatureMatrix, LabelVector, LogitMatrix,
    ScoreVector, Tensor, TensorData,
};
