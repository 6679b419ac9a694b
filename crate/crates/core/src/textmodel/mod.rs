//! Text preprocessing, TF-IDF, K-Means clustering and LDA topic models.

mod kmeans;
mod labels;
mod lda;
pub mod metrics;
mod preprocess;
mod sparse;
mod tfidf;

pub use kmeans::{kmeans_fit, top_terms, KMeansModel, KMeansParams};
pub use labels::{apply_label_map, LabelMap, LabelledAssignments, MergeGroup};
pub use lda::{lda_fit, lda_infer, LdaModel, LdaParams};
pub use preprocess::{
    drop_stopwords, explode_by_hashtags, normalize, remove_hashtags, Lemmatizer, Preprocessor,
    StopwordSet, TokenDoc, PANDEMIC_TERMS,
};
pub use sparse::SparseVec;
pub use tfidf::{tfidf_fit, tfidf_transform, TermMatrix, Vocabulary, Weighting};

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum TextError {
    #[error("no features: the vocabulary is empty")]
    NoFeatures,
    #[error("cannot fit {k} clusters to {docs} documents")]
    InvalidClusterCount { k: usize, docs: usize },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("unlabelled ids: {0:?}")]
    UnlabelledIds(Vec<usize>),
    #[error("id {0} appears in more than one merge group")]
    ConflictingMerge(usize),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("model format: {0}")]
    Model(String),
}
