//! Corpus ingestion, filtering, lockdown-phase classification and
//! infection rates.

mod filter;
mod period;
mod record;
mod stats;

pub use filter::{filter_corpus, CorpusFilter, FilterOutcome, FilterReport};
pub use period::{
    classify_period, infection_rate, load_case_series, load_windows, windows_from_stringency,
    CaseSeries, InfectionRate, PeriodLabel, PeriodWindow, Phase, WindowTable,
};
pub use record::{
    load_corpus, write_jsonl, CorpusReader, DateSpan, LoadOptions, LoadedCorpus, PostRecord,
    SchemaMap, SkipReason, SkipReport,
};
pub use stats::{corpus_stats, CorpusStats, StatsAccumulator};

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("schema mismatch: {skipped} of {lines} lines skipped ({summary})")]
    SchemaMismatch {
        skipped: usize,
        lines: usize,
        summary: String,
    },
    #[error("invalid schema map: {0}")]
    SchemaMap(String),
    #[error("{path}:{line}: {message}")]
    Table {
        path: String,
        line: usize,
        message: String,
    },
    #[error("overlapping windows for {country}: {first} and {second}")]
    OverlappingWindows {
        country: String,
        first: String,
        second: String,
    },
    #[error("insufficient case data for {country} between {start} and {end}")]
    InsufficientCaseData {
        country: String,
        start: chrono::NaiveDate,
        end: chrono::NaiveDate,
    },
    #[error("case series for {0} does not match the window's country")]
    CountryMismatch(String),
}
