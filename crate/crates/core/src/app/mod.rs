//! Configuration, pipeline orchestration and report-bundle emission.
//!
//! A run loads the corpus, filters and classifies it, clusters hashtags,
//! fits topics, aggregates sentiment, trains and scores the privacy
//! models, and scores the shared domains. Every stage adds typed tables
//! to a [`ReportBundle`]; [`emit`] writes them as CSV or JSON together
//! with model artifacts and a metadata file holding the config hash,
//! seeds and the digest of every input read.

mod bundle;
mod config;
mod pipeline;
mod table;

use std::path::PathBuf;

pub use bundle::{
    emit, empty_table, load_tables, schema_of, Format, ReportBundle, RunMetadata, Seeds, BUNDLE_FORMAT_VERSION,
    SCHEMAS,
};
pub use config::{
    validate_config, ConfigErrors, GazetteerPaths, KMeansSection, LdaSection, PipelineConfig, PrivacySection,
    UrlSection,
};
pub use pipeline::{
    collect_report, run_pipeline, run_stage, stage_artifacts, stage_tables, ClassifiedPost, Pipeline, Stage,
    TopicAssignment, DOMAINS_FILE, DOSSIERS_FILE, HMM_FILE, POSTS_FILE, TOPICS_FILE, TRACES_FILE, VOCABULARY_FILE,
};
pub use table::{Cell, Column, ColumnKind, SchemaError, Table};

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error(transparent)]
    Config(#[from] ConfigErrors),
    #[error("stage {stage} failed: {message}")]
    Stage { stage: &'static str, message: String },
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl AppError {
    /// Process exit code: 2 for configuration errors, 3 for everything
    /// that fails while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) => 2,
            _ => 3,
        }
    }
}
