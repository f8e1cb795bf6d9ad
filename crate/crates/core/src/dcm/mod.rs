//! Multinomial logit route-choice models: utilities, probabilities, sampling,
//! maximum-likelihood estimation and cross-validated accuracy.

mod cv;
mod estimate;
pub mod io;
mod likelihood;
mod model;

pub use cv::{assign_folds, group_labels, k_fold_cv, CvReport, FoldResult, Grouping};
pub use estimate::{estimate, predict_accuracy, ConvergenceReport, Estimate, EstimateOptions, StepKind};
pub use likelihood::{ll_gradient, log_likelihood, LogLikelihood};
pub use model::{
    log_sum_exp, sample_index, softmax, ChoiceModel, ChoiceObservation, FeatureMatrix, ParameterVector, UtilitySpec,
};

#[derive(Debug, thiserror::Error)]
pub enum DcmError {
    #[error("invalid utility specification: {0}")]
    InvalidSpec(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite {0}")]
    NonFinite(String),
    #[error("no observations")]
    NoObservations,
    #[error("cross-validation: {0}")]
    InvalidCv(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<csv::Error> for DcmError {
    fn from(e: csv::Error) -> Self {
        DcmError::Format(e.to_string())
    }
}

impl From<std::io::Error> for DcmError {
    fn from(e: std::io::Error) -> Self {
        DcmError::Io(e.to_string())
    }
}
