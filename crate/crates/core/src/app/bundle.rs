use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::hex_digest;
use super::table::{ColumnKind, Table};
use super::AppError;

pub const BUNDLE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub kmeans: u64,
    pub lda: u64,
    pub split: u64,
}

/// Everything needed to reproduce a run. Holds no timestamps, so reruns
/// produce identical metadata.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub tool: String,
    pub version: String,
    pub bundle_format: u32,
    pub stages: Vec<String>,
    pub config_sha256: String,
    pub seeds: Seeds,
    pub threads: usize,
    /// Cluster models are trained independently and merged in cluster
    /// order, so multi-threaded runs reproduce single-threaded output.
    pub bit_reproducible: bool,
    pub offline: bool,
    /// Every input file read, keyed by its path relative to the config
    /// directory where possible.
    pub inputs: BTreeMap<String, String>,
    /// SHA-256 of each emitted table in the requested format.
    pub tables: BTreeMap<String, String>,
    pub artifacts: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportBundle {
    pub tables: BTreeMap<String, Table>,
    /// Model files and traces, keyed by file name.
    pub artifacts: BTreeMap<String, String>,
    pub metadata: RunMetadata,
}

impl ReportBundle {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.get(name)
    }

    /// Every table against its own schema and the pipeline's declared
    /// schema for that name.
    pub fn validate(&self) -> Result<(), AppError> {
        for (name, table) in &self.tables {
            table.validate().map_err(|e| AppError::Schema(e.to_string()))?;
            if let Some(expected) = schema_of(name) {
                let got: Vec<(&str, ColumnKind)> = table.columns.iter().map(|c| (c.name.as_str(), c.kind)).collect();
                if got != expected {
                    return Err(AppError::Schema(format!("table {name} does not match its declared schema")));
                }
            }
        }
        Ok(())
    }
}

use ColumnKind::{Float, Int, Str};

/// Declared schema of every table the pipeline can emit.
pub const SCHEMAS: &[(&str, &[(&str, ColumnKind)])] = &[
    ("corpus_summary", &[("metric", Str), ("value", Int)]),
    ("posts_per_user", &[("posts", Int), ("users", Int)]),
    ("hashtags_per_post", &[("hashtags", Int), ("posts", Int)]),
    ("phase_counts", &[("country", Str), ("phase", Str), ("posts", Int)]),
    (
        "infection_rates",
        &[
            ("country", Str),
            ("phase", Str),
            ("start", Str),
            ("end", Str),
            ("days", Int),
            ("total_cases", Int),
            ("ir", Float),
        ],
    ),
    ("hashtag_clusters", &[("cluster", Str), ("country", Str), ("phase", Str), ("count", Int)]),
    (
        "hashtag_top_terms",
        &[("cluster_id", Int), ("label", Str), ("rank", Int), ("term", Str), ("weight", Float)],
    ),
    ("hashtag_members", &[("cluster_id", Int), ("label", Str), ("hashtag", Str), ("count", Int)]),
    (
        "topic_top_terms",
        &[("topic_id", Int), ("label", Str), ("rank", Int), ("term", Str), ("weight", Float)],
    ),
    ("topic_counts", &[("topic", Str), ("phase", Str), ("posts", Int)]),
    (
        "sentiment",
        &[("topic", Str), ("phase", Str), ("positive", Float), ("neutral", Float), ("negative", Float)],
    ),
    ("hmm_summary", &[("model", Str), ("nodes", Int), ("sequence_starts", Int)]),
    ("risk_cdf", &[("topic", Str), ("risk", Float), ("fraction", Float)]),
    ("risk_vs_posts", &[("topic", Str), ("posts", Int), ("sequences", Int), ("mean_risk", Float)]),
    (
        "risk_by_sequence",
        &[
            ("topic", Str),
            ("phase", Str),
            ("user", Str),
            ("posts", Int),
            ("linkability_prior", Float),
            ("probability", Float),
            ("risk", Float),
            ("probability_without_pii", Float),
            ("unique", Int),
            ("uniform", Int),
        ],
    ),
    ("privacy_summary", &[("metric", Str), ("value", Float)]),
    ("url_summary", &[("metric", Str), ("value", Int)]),
    ("domain_categories", &[("country", Str), ("phase", Str), ("category", Str), ("count", Int)]),
    (
        "domain_scores",
        &[("domain", Str), ("category", Str), ("score", Float), ("reports", Int), ("tier", Float)],
    ),
    ("tier_table", &[("threshold", Float), ("phase", Str), ("total", Int), ("unique", Int)]),
    (
        "suspicious_categories",
        &[("country", Str), ("phase", Str), ("category", Str), ("domains", Int), ("fraction", Float)],
    ),
];

pub fn schema_of(name: &str) -> Option<Vec<(&'static str, ColumnKind)>> {
    SCHEMAS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, cols)| cols.to_vec())
}

/// An empty table with the declared schema of `name`.
pub fn empty_table(name: &str) -> Table {
    let schema = schema_of(name).unwrap_or_else(|| panic!("no schema declared for {name}"));
    Table::new(name, &schema)
}

fn write(path: &Path, content: &str) -> Result<(), AppError> {
    std::fs::write(path, content).map_err(|source| AppError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn metadata_name(stages: &[String]) -> String {
    match stages {
        [only] if only != "run" && only != "report" => format!("metadata.{only}.json"),
        _ => "metadata.json".to_string(),
    }
}

/// Writes one file per table, every artifact, and the run metadata with
/// the digests of what was written. Returns the written paths.
pub fn emit(bundle: &ReportBundle, dir: &Path, format: Format) -> Result<Vec<PathBuf>, AppError> {
    bundle.validate()?;
    std::fs::create_dir_all(dir).map_err(|source| AppError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut written = Vec::new();
    let mut metadata = bundle.metadata.clone();
    for (name, table) in &bundle.tables {
        let content = match format {
            Format::Csv => table.to_csv(),
            Format::Json => table.to_json(),
        };
        let file = format!("{name}.{}", format.extension());
        metadata.tables.insert(file.clone(), hex_digest(content.as_bytes()));
        let path = dir.join(file);
        write(&path, &content)?;
        written.push(path);
    }
    for (name, content) in &bundle.artifacts {
        metadata.artifacts.insert(name.clone(), hex_digest(content.as_bytes()));
        let path = dir.join(name);
        write(&path, content)?;
        written.push(path);
    }
    let mut json = serde_json::to_string_pretty(&metadata).expect("metadata serialises");
    json.push('\n');
    let path = dir.join(metadata_name(&metadata.stages));
    write(&path, &json)?;
    written.push(path);
    Ok(written)
}

/// Reads back every declared table present in `dir`, preferring JSON.
pub fn load_tables(dir: &Path) -> Result<BTreeMap<String, Table>, AppError> {
    let mut out = BTreeMap::new();
    for (name, schema) in SCHEMAS {
        let json = dir.join(format!("{name}.json"));
        let csv = dir.join(format!("{name}.csv"));
        let table = if json.is_file() {
            let raw = std::fs::read_to_string(&json).map_err(|source| AppError::Io { path: json, source })?;
            Table::from_json(&raw).map_err(|e| AppError::Schema(e.to_string()))?
        } else if csv.is_file() {
            let raw = std::fs::read_to_string(&csv).map_err(|source| AppError::Io { path: csv, source })?;
            Table::from_csv(name, schema, &raw).map_err(|e| AppError::Schema(e.to_string()))?
        } else {
            continue;
        };
        out.insert(name.to_string(), table);
    }
    Ok(out)
}
