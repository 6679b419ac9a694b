use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{load_windows, DateSpan};
use crate::textmodel::LabelMap;
use crate::urlsec::{Denominator, ReportWindow, DEFAULT_TIERS, SUSPICIOUS_THRESHOLD};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GazetteerPaths {
    pub names: PathBuf,
    pub locations: PathBuf,
    pub organisations: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KMeansSection {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub top_terms: usize,
}

impl Default for KMeansSection {
    fn default() -> Self {
        Self {
            k: 15,
            seed: 1,
            max_iter: 300,
            top_terms: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LdaSection {
    pub topics: usize,
    pub iterations: usize,
    pub seed: u64,
    pub alpha: Option<f64>,
    pub beta: f64,
    pub top_terms: usize,
}

impl Default for LdaSection {
    fn default() -> Self {
        Self {
            topics: 15,
            iterations: 200,
            seed: 2,
            alpha: None,
            beta: 0.01,
            top_terms: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrivacySection {
    pub ratio: f64,
    pub seed: u64,
    pub sim_threshold: f64,
    pub max_path_length: usize,
    pub max_paths: usize,
    /// Longest prefix reported in the risk-vs-posts curve.
    pub max_posts: usize,
}

impl Default for PrivacySection {
    fn default() -> Self {
        Self {
            ratio: 0.8,
            seed: 3,
            sim_threshold: 0.8,
            max_path_length: 6,
            max_paths: 100_000,
            max_posts: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UrlSection {
    pub category_map: Option<PathBuf>,
    /// Bundled snapshot when absent.
    pub public_suffix_list: Option<PathBuf>,
    pub include_private_suffixes: bool,
    pub report_cache: Option<PathBuf>,
    pub report_window: ReportWindow,
    pub thresholds: Vec<f64>,
    pub denominator: Denominator,
    pub suspicious_threshold: f64,
    pub requests_per_minute: u32,
}

impl Default for UrlSection {
    fn default() -> Self {
        Self {
            category_map: None,
            public_suffix_list: None,
            include_private_suffixes: true,
            report_cache: None,
            report_window: ReportWindow {
                start: NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(),
                end: NaiveDate::from_ymd_opt(2021, 11, 6).unwrap(),
            },
            thresholds: DEFAULT_TIERS.to_vec(),
            denominator: Denominator::AllReports,
            suspicious_threshold: SUSPICIOUS_THRESHOLD,
            requests_per_minute: 4,
        }
    }
}

/// Pipeline configuration as written. Relative paths are resolved against
/// the config file's directory by [`validate_config`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub input: PathBuf,
    #[serde(default)]
    pub schema: Option<PathBuf>,
    #[serde(default)]
    pub span: Option<DateSpan>,
    #[serde(default = "default_countries")]
    pub countries: Vec<String>,
    #[serde(default = "default_language")]
    pub language: String,
    pub windows: PathBuf,
    #[serde(default)]
    pub case_series: Option<PathBuf>,
    pub stopwords: PathBuf,
    pub lemmas: PathBuf,
    pub lexicon: PathBuf,
    pub gazetteers: GazetteerPaths,
    #[serde(default)]
    pub hashtag_labels: Option<PathBuf>,
    #[serde(default)]
    pub topic_labels: Option<PathBuf>,
    #[serde(default)]
    pub kmeans: KMeansSection,
    #[serde(default)]
    pub lda: LdaSection,
    #[serde(default)]
    pub privacy: PrivacySection,
    #[serde(default = "default_sentiment_threshold")]
    pub sentiment_threshold: f64,
    #[serde(default)]
    pub urls: UrlSection,
    pub output: PathBuf,
    #[serde(default = "default_true")]
    pub offline: bool,
    #[serde(default = "default_threads")]
    pub threads: usize,
}

fn default_countries() -> Vec<String> {
    ["AU", "IN", "US", "GB"].map(String::from).to_vec()
}

fn default_language() -> String {
    "en".into()
}

fn default_sentiment_threshold() -> f64 {
    crate::sentiment::DEFAULT_THRESHOLD
}

fn default_true() -> bool {
    true
}

fn default_threads() -> usize {
    1
}

/// Every problem found in a config file.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid configuration:\n  {}", .0.join("\n  "))]
pub struct ConfigErrors(pub Vec<String>);

impl PipelineConfig {
    pub fn from_json(raw: &str) -> Result<Self, ConfigErrors> {
        serde_json::from_str(raw).map_err(|e| ConfigErrors(vec![format!("cannot parse config: {e}")]))
    }

    fn paths_mut(&mut self) -> Vec<&mut PathBuf> {
        let mut paths = vec![
            &mut self.input,
            &mut self.windows,
            &mut self.stopwords,
            &mut self.lemmas,
            &mut self.lexicon,
            &mut self.gazetteers.names,
            &mut self.gazetteers.locations,
            &mut self.gazetteers.organisations,
            &mut self.output,
        ];
        for p in [
            &mut self.schema,
            &mut self.case_series,
            &mut self.hashtag_labels,
            &mut self.topic_labels,
            &mut self.urls.category_map,
            &mut self.urls.public_suffix_list,
            &mut self.urls.report_cache,
        ]
        .into_iter()
        .flatten()
        {
            paths.push(p);
        }
        paths
    }

    /// Makes every relative path relative to `base` instead.
    pub fn resolve_paths(&mut self, base: &Path) {
        for p in self.paths_mut() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    /// Files the pipeline must be able to read. The report cache may be
    /// missing; it then starts empty.
    pub fn required_files(&self) -> Vec<(&'static str, &Path)> {
        let mut files: Vec<(&'static str, &Path)> = vec![
            ("input", &self.input),
            ("windows", &self.windows),
            ("stopwords", &self.stopwords),
            ("lemmas", &self.lemmas),
            ("lexicon", &self.lexicon),
            ("gazetteers.names", &self.gazetteers.names),
            ("gazetteers.locations", &self.gazetteers.locations),
            ("gazetteers.organisations", &self.gazetteers.organisations),
        ];
        let optional: [(&'static str, &Option<PathBuf>); 6] = [
            ("schema", &self.schema),
            ("case_series", &self.case_series),
            ("hashtag_labels", &self.hashtag_labels),
            ("topic_labels", &self.topic_labels),
            ("urls.category_map", &self.urls.category_map),
            ("urls.public_suffix_list", &self.urls.public_suffix_list),
        ];
        for (name, p) in optional {
            if let Some(p) = p {
                files.push((name, p.as_path()));
            }
        }
        files
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serialises");
        hex_digest(&json)
    }

    /// Numeric range and cross-field checks.
    pub fn range_violations(&self) -> Vec<String> {
        let mut errors = Vec::new();
        let mut check = |ok: bool, message: String| {
            if !ok {
                errors.push(message);
            }
        };
        let p = &self.privacy;
        check(
            (0.0..=1.0).contains(&p.sim_threshold),
            format!("privacy.sim_threshold: τ_sim ∈ [0,1] required, got {}", p.sim_threshold),
        );
        check(p.ratio > 0.0 && p.ratio < 1.0, format!("privacy.ratio must be in (0,1), got {}", p.ratio));
        check(p.max_path_length >= 1, "privacy.max_path_length must be at least 1".into());
        check(p.max_paths >= 1, "privacy.max_paths must be at least 1".into());
        check(p.max_posts >= 1, "privacy.max_posts must be at least 1".into());
        check(self.kmeans.k >= 1, "kmeans.k must be at least 1".into());
        check(self.kmeans.max_iter >= 1, "kmeans.max_iter must be at least 1".into());
        check(self.lda.topics >= 1, "lda.topics must be at least 1".into());
        check(self.lda.iterations >= 1, "lda.iterations must be at least 1".into());
        check(self.lda.beta > 0.0, format!("lda.beta must be positive, got {}", self.lda.beta));
        if let Some(alpha) = self.lda.alpha {
            check(alpha > 0.0, format!("lda.alpha must be positive, got {alpha}"));
        }
        check(
            (0.0..1.0).contains(&self.sentiment_threshold),
            format!("sentiment_threshold must be in [0,1), got {}", self.sentiment_threshold),
        );
        check(self.threads >= 1, "threads must be at least 1".into());
        check(!self.countries.is_empty(), "countries must not be empty".into());
        check(!self.language.trim().is_empty(), "language must not be empty".into());
        let u = &self.urls;
        check(!u.thresholds.is_empty(), "urls.thresholds must not be empty".into());
        check(
            u.thresholds.iter().all(|t| t.is_finite() && *t >= 0.0),
            "urls.thresholds must be finite and non-negative".into(),
        );
        check(
            u.thresholds.windows(2).all(|w| w[0] < w[1]),
            "urls.thresholds must be strictly increasing".into(),
        );
        check(u.suspicious_threshold >= 0.0, "urls.suspicious_threshold must be non-negative".into());
        check(u.requests_per_minute >= 1, "urls.requests_per_minute must be at least 1".into());
        check(
            u.report_window.start <= u.report_window.end,
            "urls.report_window starts after it ends".into(),
        );
        if let Some(span) = self.span {
            check(span.start <= span.end, "span starts after it ends".into());
        }
        errors
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Reads, resolves and checks a config file, reporting every violation:
/// unreadable or missing files, out-of-range parameters, overlapping
/// windows and label maps that do not cover their cluster counts.
pub fn validate_config(path: &Path) -> Result<PipelineConfig, ConfigErrors> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| ConfigErrors(vec![format!("cannot read config {}: {e}", path.display())]))?;
    let mut config = PipelineConfig::from_json(&raw)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    config.resolve_paths(base);
    let mut errors = Vec::new();
    let mut missing = std::collections::BTreeSet::new();
    for (name, file) in config.required_files() {
        if !file.is_file() {
            errors.push(format!("{name}: file not found: {}", file.display()));
            missing.insert(name);
        }
    }
    errors.extend(config.range_violations());
    if !missing.contains("windows") {
        if let Err(e) = load_windows(&config.windows) {
            errors.push(format!("windows: {e}"));
        }
    }
    for (name, file, k) in [
        ("hashtag_labels", &config.hashtag_labels, config.kmeans.k),
        ("topic_labels", &config.topic_labels, config.lda.topics),
    ] {
        if let Some(file) = file {
            if missing.contains(name) {
                continue;
            }
            match LabelMap::load(file).and_then(|m| m.resolve(k)) {
                Ok(_) => {}
                Err(e) => errors.push(format!("{name}: {e}")),
            }
        }
    }
    if errors.is_empty() {
        Ok(config)
    } else {
        Err(ConfigErrors(errors))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_minimal(dir: &Path, extra: &str) -> PathBuf {
        for f in ["posts.jsonl", "stop.txt", "lemmas.tsv", "lex.tsv", "n.txt", "l.txt", "o.txt"] {
            std::fs::write(dir.join(f), "").unwrap();
        }
        std::fs::write(dir.join("windows.csv"), "country,phase,start,end\nAU,during,2020-03-21,2020-05-15\n").unwrap();
        let config = format!(
            r#"{{
                "input": "posts.jsonl",
                "windows": "windows.csv",
                "stopwords": "stop.txt",
                "lemmas": "lemmas.tsv",
                "lexicon": "lex.tsv",
                "gazetteers": {{"names": "n.txt", "locations": "l.txt", "organisations": "o.txt"}},
                "output": "out"{extra}
            }}"#
        );
        let path = dir.join("config.json");
        std::fs::write(&path, config).unwrap();
        path
    }

    #[test]
    fn minimal_config_resolves_paths() {
        let dir = tempfile::tempdir().unwrap();
        let config = validate_config(&write_minimal(dir.path(), "")).unwrap();
        assert_eq!(config.input, dir.path().join("posts.jsonl"));
        assert_eq!(config.privacy.sim_threshold, 0.8);
        assert_eq!(config.kmeans.k, 15);
        assert!(config.offline);
    }

    #[test]
    fn similarity_threshold_out_of_range() {
        let dir = tempfile::tempdir().unwrap();
        let err = validate_config(&write_minimal(dir.path(), r#", "privacy": {"sim_threshold": 1.5}"#)).unwrap_err();
        assert_eq!(err.0.len(), 1);
        assert!(err.0[0].contains("τ_sim ∈ [0,1]"), "{err}");
    }

    #[test]
    fn every_error_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_minimal(dir.path(), r#", "privacy": {"ratio": 1.0}"#);
        std::fs::remove_file(dir.path().join("lex.tsv")).unwrap();
        let err = validate_config(&path).unwrap_err();
        assert_eq!(err.0.len(), 2, "{err}");
    }

    #[test]
    fn overlapping_windows_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_minimal(dir.path(), "");
        std::fs::write(
            dir.path().join("windows.csv"),
            "country,phase,start,end\nAU,before,2020-03-01,2020-03-25\nAU,during,2020-03-21,2020-05-15\n",
        )
        .unwrap();
        let err = validate_config(&path).unwrap_err();
        assert!(err.0.iter().any(|e| e.contains("overlapping")), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(validate_config(&write_minimal(dir.path(), r#", "kmeans": {"clusters": 3}"#)).is_err());
    }

    #[test]
    fn hash_changes_with_content() {
        let dir = tempfile::tempdir().unwrap();
        let a = validate_config(&write_minimal(dir.path(), "")).unwrap();
        let mut b = a.clone();
        b.kmeans.seed += 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash(), a.clone().hash());
    }
}
