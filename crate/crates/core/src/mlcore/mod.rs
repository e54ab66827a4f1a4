//! Splitting, classifiers, metrics and significance testing.

pub mod folds;
pub mod knn;
pub mod metrics;
pub mod standardize;
pub mod svm;
pub mod wilcoxon;

pub use folds::{make_folds, unit_labels, FoldMode, FoldPlan, Split, Unit};
pub use knn::knn_classify;
pub use metrics::{subject_vote, ConfusionMatrix, Metrics, VOTE_THRESHOLD};
pub use standardize::Standardizer;
pub use svm::{grid_search, svm_predict, svm_train, SvmModel, SvmParams};
pub use wilcoxon::{wilcoxon_signed_rank, WilcoxonMethod, WilcoxonResult};
