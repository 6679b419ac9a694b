//! Per-user privacy risk over post sequences.
//!
//! A user's privacy probability is the product of a linkability prior,
//! taken from a separate model over PII-bearing posts, and one factor per
//! post:
//!
//! ```text
//! factor = [w_T · p(X_t | X_{t-1})] · [1 − w_O · p(u | X_t)]
//! ```
//!
//! with `w_T = 1 / count(X_t | X_{t-1})` and `w_O = 1 / count(u | X_t)`.
//! The first post uses sequence-start counts in place of a transition.
//! Risk is `1 − probability`.
//!
//! Scoring policies for inputs the counts cannot cover:
//!
//! * a test post matching no node is a fresh node seen once by this user,
//!   so its factor is 0;
//! * a transition (or start) never observed in training has a transition
//!   part of 0;
//! * a user never observed at a node has an observation part of 1.

mod cohort;
mod hmm;
mod pii;
mod score;
mod split;

use std::path::PathBuf;

pub use cohort::{
    cohort_report, CdfPoint, CohortReport, CohortSummary, RiskAtLength, ScoredSequence, TestSequence, ALL_TOPICS,
};
pub use hmm::{build_hmm, match_node, EventNode, HmmSet, NodeId, PiiHmm, PrivacyHmm, TrainingPost, HMM_FORMAT_VERSION};
pub use pii::{detect_pii, strip_pii, Gazetteers, PiiAnnotation, PiiKind};
pub use score::{
    linkability_prior, linkability_prior_with, sequence_privacy, step_factor, step_parts, trace_with_prior,
    write_traces_jsonl,
    PathLimits, Previous, PriorResult, RiskTrace, TraceStep,
};
pub use split::split_train_test;

#[derive(Debug, thiserror::Error)]
pub enum PrivacyError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("split ratio {0} is outside (0, 1)")]
    InvalidRatio(f64),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("model: {0}")]
    Model(String),
}
