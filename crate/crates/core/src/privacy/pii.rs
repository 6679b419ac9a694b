use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PrivacyError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PiiKind {
    Name,
    Location,
    Organisation,
}

impl fmt::Display for PiiKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PiiKind::Name => "name",
            PiiKind::Location => "location",
            PiiKind::Organisation => "organisation",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PiiAnnotation {
    /// Byte offsets into the scanned text, end exclusive.
    pub start: usize,
    pub end: usize,
    pub kind: PiiKind,
    pub surface: String,
}

#[derive(Debug, Clone)]
struct Entry {
    lower: Vec<String>,
    capitalised: Vec<bool>,
    kind: PiiKind,
}

/// Name, location and organisation gazetteers indexed by first word.
#[derive(Debug, Clone, Default)]
pub struct Gazetteers {
    by_first: HashMap<String, Vec<Entry>>,
    len: usize,
}

fn starts_upper(word: &str) -> bool {
    word.chars().next().is_some_and(char::is_uppercase)
}

/// Maximal alphanumeric runs with their byte spans.
fn words(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        match (c.is_alphanumeric(), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                spans.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        spans.push((s, text.len()));
    }
    spans
}

impl Gazetteers {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, kind: PiiKind, entry: &str) {
        let tokens: Vec<&str> = words(entry).into_iter().map(|(s, e)| &entry[s..e]).collect();
        if tokens.is_empty() {
            return;
        }
        let lower: Vec<String> = tokens.iter().map(|t| t.to_lowercase()).collect();
        let capitalised = tokens.iter().map(|t| starts_upper(t)).collect();
        let bucket = self.by_first.entry(lower[0].clone()).or_default();
        if bucket.iter().any(|e| e.lower == lower && e.kind == kind) {
            return;
        }
        bucket.push(Entry {
            lower,
            capitalised,
            kind,
        });
        self.len += 1;
    }

    pub fn extend<I, S>(&mut self, kind: PiiKind, entries: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        for e in entries {
            self.add(kind, e.as_ref());
        }
    }

    /// One entry per line, blank lines and `#` comments ignored.
    pub fn load(names: &Path, locations: &Path, organisations: &Path) -> Result<Self, PrivacyError> {
        let mut g = Self::new();
        for (kind, path) in [
            (PiiKind::Name, names),
            (PiiKind::Location, locations),
            (PiiKind::Organisation, organisations),
        ] {
            let raw = std::fs::read_to_string(path).map_err(|source| PrivacyError::Io {
                path: path.to_path_buf(),
                source,
            })?;
            g.extend(
                kind,
                raw.lines()
                    .map(str::trim)
                    .filter(|l| !l.is_empty() && !l.starts_with('#')),
            );
        }
        Ok(g)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// Gazetteer lookup over word sequences. Matching ignores case except for
/// initial capitals: each matched word must be capitalised exactly where
/// the gazetteer entry is, so `apple pie` never matches `Apple`.
/// Overlapping candidates resolve longest-first, then leftmost.
pub fn detect_pii(text: &str, gazetteers: &Gazetteers) -> Vec<PiiAnnotation> {
    let spans = words(text);
    let lower: Vec<String> = spans.iter().map(|&(s, e)| text[s..e].to_lowercase()).collect();
    let mut candidates: Vec<PiiAnnotation> = Vec::new();
    for i in 0..spans.len() {
        let Some(entries) = gazetteers.by_first.get(&lower[i]) else {
            continue;
        };
        for entry in entries {
            let n = entry.lower.len();
            if i + n > spans.len() {
                continue;
            }
            let matched = (0..n).all(|j| {
                let (s, e) = spans[i + j];
                lower[i + j] == entry.lower[j] && starts_upper(&text[s..e]) == entry.capitalised[j]
            });
            if matched {
                let (start, end) = (spans[i].0, spans[i + n - 1].1);
                candidates.push(PiiAnnotation {
                    start,
                    end,
                    kind: entry.kind,
                    surface: text[start..end].to_string(),
                });
            }
        }
    }
    candidates.sort_by(|a, b| {
        (b.end - b.start)
            .cmp(&(a.end - a.start))
            .then(a.start.cmp(&b.start))
            .then(a.kind.cmp(&b.kind))
    });
    let mut chosen: Vec<PiiAnnotation> = Vec::new();
    for c in candidates {
        if chosen.iter().all(|k| c.end <= k.start || c.start >= k.end) {
            chosen.push(c);
        }
    }
    chosen.sort_by_key(|a| a.start);
    chosen
}

/// Text with every annotated span removed.
pub fn strip_pii(text: &str, annotations: &[PiiAnnotation]) -> String {
    let mut out = String::with_capacity(text.len());
    let mut cursor = 0;
    for a in annotations {
        out.push_str(&text[cursor..a.start]);
        cursor = a.end;
    }
    out.push_str(&text[cursor..]);
    out
}
