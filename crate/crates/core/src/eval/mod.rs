//! Scoring predictions against gold labels and measuring annotator agreement.

mod agreement;
mod metrics;
mod report;
mod tripod;

pub use agreement::{
    agreement_report, annotator_distance, class_kappa, fleiss_kappa, label_kappa, percentage_agreement, AgreementReport,
    AnnotatedNarrative, ClassAgreement,
};
pub use metrics::{mean_annotation_distance, per_class_f1, set_distance, ClassScore};
pub use report::{
    config_hash, evaluate, evaluate_predictions, ClassResult, EvaluationReport, NarrativeBreakdown, Stat, System,
};
pub use tripod::{evaluate_turning_points, load_synopses, read_synopses, Synopsis, TurningPointReport};

use crate::corpus::{CorpusError, Label};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("misaligned sequences: {0}")]
    Misaligned(String),
    #[error("narrative `{narrative_id}` has {count} annotators; at least 2 are needed")]
    TooFewAnnotators { narrative_id: String, count: usize },
    #[error("inconsistent rater counts: {0}")]
    VaryingRaters(String),
    #[error("`{0}` is not a scored class")]
    NotAClass(Label),
    #[error("nothing to evaluate")]
    Empty,
    #[error("system failed on `{narrative_id}`: {message}")]
    System { narrative_id: String, message: String },
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
