use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::CorpusError;

/// One anonymised post.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PostRecord {
    pub user_id: String,
    pub post_id: String,
    pub timestamp: DateTime<Utc>,
    pub text: String,
    #[serde(default)]
    pub hashtags: Vec<String>,
    #[serde(default)]
    pub urls: Vec<String>,
    #[serde(default)]
    pub country: Option<String>,
    #[serde(default)]
    pub language: Option<String>,
}

impl PostRecord {
    /// UTC calendar date of the post.
    pub fn date(&self) -> NaiveDate {
        self.timestamp.date_naive()
    }
}

/// Source key for every canonical field. Keys may be dotted paths into
/// nested objects (`"place.country_code"`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemaMap {
    pub user_id: String,
    pub post_id: String,
    pub timestamp: String,
    pub text: String,
    pub hashtags: String,
    pub urls: String,
    pub country: String,
    pub language: String,
}

impl Default for SchemaMap {
    fn default() -> Self {
        Self {
            user_id: "user_id".into(),
            post_id: "post_id".into(),
            timestamp: "timestamp".into(),
            text: "text".into(),
            hashtags: "hashtags".into(),
            urls: "urls".into(),
            country: "country".into(),
            language: "language".into(),
        }
    }
}

impl SchemaMap {
    pub fn from_json_file(path: &Path) -> Result<Self, CorpusError> {
        let raw = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&raw).map_err(|e| CorpusError::SchemaMap(e.to_string()))
    }
}

/// Inclusive UTC date range that every timestamp must fall into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateSpan {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateSpan {
    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    pub schema: SchemaMap,
    pub span: Option<DateSpan>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SkipReason {
    MalformedJson,
    MissingField(&'static str),
    BadTimestamp,
    InvalidHashtag,
    OutOfSpan,
    DuplicatePostId,
}

impl std::fmt::Display for SkipReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SkipReason::MalformedJson => f.write_str("malformed json"),
            SkipReason::MissingField(name) => write!(f, "missing {name}"),
            SkipReason::BadTimestamp => f.write_str("unparseable timestamp"),
            SkipReason::InvalidHashtag => f.write_str("hashtag contains whitespace"),
            SkipReason::OutOfSpan => f.write_str("timestamp outside corpus span"),
            SkipReason::DuplicatePostId => f.write_str("duplicate post_id"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SkipReport {
    pub lines: usize,
    pub accepted: usize,
    pub skipped: usize,
    pub reasons: BTreeMap<String, usize>,
}

impl SkipReport {
    fn record(&mut self, reason: SkipReason) {
        self.skipped += 1;
        *self.reasons.entry(reason.to_string()).or_default() += 1;
    }

    pub fn summary(&self) -> String {
        if self.reasons.is_empty() {
            return "no skips".into();
        }
        self.reasons
            .iter()
            .map(|(reason, n)| format!("{reason}: {n}"))
            .collect::<Vec<_>>()
            .join(", ")
    }
}

/// Streaming JSONL reader. Yields valid records in file order and tallies
/// every skipped line; call [`CorpusReader::finish`] once exhausted to get
/// the skip summary or the fatal schema-mismatch error.
pub struct CorpusReader<R> {
    lines: std::io::Lines<R>,
    options: LoadOptions,
    seen: HashSet<String>,
    report: SkipReport,
    io_error: Option<std::io::Error>,
    origin: String,
}

impl CorpusReader<BufReader<File>> {
    pub fn open(path: &Path, options: LoadOptions) -> Result<Self, CorpusError> {
        let file = File::open(path).map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut reader = Self::new(BufReader::new(file), options);
        reader.origin = path.display().to_string();
        Ok(reader)
    }
}

impl<R: BufRead> CorpusReader<R> {
    pub fn new(reader: R, options: LoadOptions) -> Self {
        Self {
            lines: reader.lines(),
            options,
            seen: HashSet::new(),
            report: SkipReport::default(),
            io_error: None,
            origin: "<stream>".into(),
        }
    }

    pub fn report(&self) -> &SkipReport {
        &self.report
    }

    pub fn finish(self) -> Result<SkipReport, CorpusError> {
        if let Some(source) = self.io_error {
            return Err(CorpusError::Io {
                path: self.origin.into(),
                source,
            });
        }
        let report = self.report;
        if report.lines > 0 && report.skipped * 2 > report.lines {
            return Err(CorpusError::SchemaMismatch {
                skipped: report.skipped,
                lines: report.lines,
                summary: report.summary(),
            });
        }
        Ok(report)
    }

    fn parse_line(&mut self, line: &str) -> Result<PostRecord, SkipReason> {
        let value: Value = serde_json::from_str(line).map_err(|_| SkipReason::MalformedJson)?;
        if !value.is_object() {
            return Err(SkipReason::MalformedJson);
        }
        let schema = &self.options.schema;
        let user_id = scalar_string(lookup(&value, &schema.user_id))
            .ok_or(SkipReason::MissingField("user_id"))?;
        let post_id = scalar_string(lookup(&value, &schema.post_id))
            .ok_or(SkipReason::MissingField("post_id"))?;
        let raw_ts = lookup(&value, &schema.timestamp)
            .filter(|v| !v.is_null())
            .ok_or(SkipReason::MissingField("timestamp"))?;
        let text = lookup(&value, &schema.text)
            .and_then(Value::as_str)
            .ok_or(SkipReason::MissingField("text"))?
            .to_string();
        let timestamp = parse_timestamp(raw_ts).ok_or(SkipReason::BadTimestamp)?;

        let hashtags = string_list(lookup(&value, &schema.hashtags), &["text", "tag"])
            .into_iter()
            .map(|h| h.trim_start_matches('#').to_string())
            .collect::<Vec<_>>();
        if hashtags.iter().any(|h| h.chars().any(char::is_whitespace)) {
            return Err(SkipReason::InvalidHashtag);
        }
        let urls = string_list(
            lookup(&value, &schema.urls),
            &["expanded_url", "expanded", "url"],
        );
        let country = lookup(&value, &schema.country)
            .and_then(Value::as_str)
            .filter(|s| !s.is_empty())
            .map(str::to_string);
        let language = lookup(&value, &schema.language)
            .and_then(Value::as_str)
            .filter(|s| !s.is_empty())
            .map(str::to_string);

        if let Some(span) = self.options.span {
            if !span.contains(timestamp.date_naive()) {
                return Err(SkipReason::OutOfSpan);
            }
        }
        if !self.seen.insert(post_id.clone()) {
            return Err(SkipReason::DuplicatePostId);
        }
        Ok(PostRecord {
            user_id,
            post_id,
            timestamp,
            text,
            hashtags,
            urls,
            country,
            language,
        })
    }
}

impl<R: BufRead> Iterator for CorpusReader<R> {
    type Item = PostRecord;

    fn next(&mut self) -> Option<PostRecord> {
        loop {
            let line = match self.lines.next()? {
                Ok(line) => line,
                Err(e) => {
                    self.io_error = Some(e);
                    return None;
                }
            };
            if line.trim().is_empty() {
                continue;
            }
            self.report.lines += 1;
            match self.parse_line(&line) {
                Ok(record) => {
                    self.report.accepted += 1;
                    return Some(record);
                }
                Err(reason) => self.report.record(reason),
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadedCorpus {
    pub records: Vec<PostRecord>,
    pub report: SkipReport,
}

/// Reads a whole JSONL corpus into memory.
pub fn load_corpus(path: &Path, options: LoadOptions) -> Result<LoadedCorpus, CorpusError> {
    let mut reader = CorpusReader::open(path, options)?;
    let records: Vec<PostRecord> = reader.by_ref().collect();
    let report = reader.finish()?;
    for (reason, n) in &report.reasons {
        log::warn!("skipped {n} lines of {}: {reason}", path.display());
    }
    Ok(LoadedCorpus { records, report })
}

/// Writes records in the canonical JSONL layout read back by
/// [`load_corpus`] with the default schema map.
pub fn write_jsonl<'a, W: Write>(
    records: impl IntoIterator<Item = &'a PostRecord>,
    mut out: W,
) -> std::io::Result<()> {
    for record in records {
        serde_json::to_writer(&mut out, record)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

fn lookup<'v>(value: &'v Value, path: &str) -> Option<&'v Value> {
    path.split('.').try_fold(value, |v, key| v.get(key))
}

fn scalar_string(value: Option<&Value>) -> Option<String> {
    match value? {
        Value::String(s) if !s.is_empty() => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn string_list(value: Option<&Value>, object_keys: &[&str]) -> Vec<String> {
    let Some(Value::Array(items)) = value else {
        return Vec::new();
    };
    items
        .iter()
        .filter_map(|item| match item {
            Value::String(s) => Some(s.clone()),
            Value::Object(map) => object_keys
                .iter()
                .find_map(|k| map.get(*k).and_then(Value::as_str))
                .map(str::to_string),
            _ => None,
        })
        .collect()
}

fn parse_timestamp(value: &Value) -> Option<DateTime<Utc>> {
    match value {
        Value::String(s) => {
            let s = s.trim();
            if let Ok(ts) = DateTime::parse_from_rfc3339(s) {
                return Some(ts.with_timezone(&Utc));
            }
            // Twitter API v1.1 created_at
            if let Ok(ts) = DateTime::parse_from_str(s, "%a %b %d %H:%M:%S %z %Y") {
                return Some(ts.with_timezone(&Utc));
            }
            if let Ok(ts) = NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S") {
                return Some(Utc.from_utc_datetime(&ts));
            }
            None
        }
        Value::Number(n) => {
            let secs = n.as_i64()?;
            // millisecond epochs are common in exported dumps
            if secs.abs() > 100_000_000_000 {
                Utc.timestamp_millis_opt(secs).single()
            } else {
                Utc.timestamp_opt(secs, 0).single()
            }
        }
        _ => None,
    }
}
