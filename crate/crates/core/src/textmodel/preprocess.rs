use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::TextError;
use crate::corpus::PostRecord;

/// Pandemic synonyms that carry no signal in a pandemic-only corpus. Always
/// part of a loaded stopword set.
pub const PANDEMIC_TERMS: &[&str] = &[
    "covid",
    "covid-19",
    "covid19",
    "covid_19",
    "coronavirus",
    "corona",
    "sarscov2",
    "sars-cov-2",
    "ncov",
    "2019ncov",
];

fn url_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\b[a-z][a-z0-9+.\-]*://\S*").unwrap())
}

fn mention_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"@\w+").unwrap())
}

fn hashtag_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"#\w+").unwrap())
}

/// Removes URLs, @-mentions and punctuation, lowercases and collapses
/// whitespace. Hashtag words survive with their `#` marker dropped.
pub fn normalize(text: &str) -> String {
    let text = url_pattern().replace_all(text, " ");
    let text = mention_pattern().replace_all(&text, " ");
    let mut cleaned = String::with_capacity(text.len());
    for c in text.chars() {
        if c.is_alphanumeric() {
            cleaned.extend(c.to_lowercase());
        } else if c.is_whitespace() {
            cleaned.push(' ');
        }
    }
    cleaned.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Drops whole `#tag` spans, for analyses that represent a hashtag by the
/// rest of the post.
pub fn remove_hashtags(text: &str) -> String {
    hashtag_pattern().replace_all(text, " ").into_owned()
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StopwordSet {
    words: HashSet<String>,
}

impl StopwordSet {
    /// The given words plus [`PANDEMIC_TERMS`].
    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut set: HashSet<String> = words
            .into_iter()
            .map(|w| w.as_ref().trim().to_lowercase())
            .filter(|w| !w.is_empty())
            .collect();
        set.extend(PANDEMIC_TERMS.iter().map(|w| w.to_string()));
        Self { words: set }
    }

    /// One word per line; blank lines and `#` comments ignored.
    pub fn load(path: &Path) -> Result<Self, TextError> {
        let raw = read(path)?;
        Ok(Self::from_words(
            raw.lines().filter(|l| !l.trim_start().starts_with('#')),
        ))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Order-preserving stopword removal.
pub fn drop_stopwords(tokens: Vec<String>, stopwords: &StopwordSet) -> Vec<String> {
    tokens.into_iter().filter(|t| !stopwords.contains(t)).collect()
}

/// Dictionary-first lemmatiser with a conservative suffix-stripping
/// fallback.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lemmatizer {
    dictionary: HashMap<String, String>,
}

impl Lemmatizer {
    pub fn from_pairs<I, A, B>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (A, B)>,
        A: Into<String>,
        B: Into<String>,
    {
        Self {
            dictionary: pairs
                .into_iter()
                .map(|(a, b)| (a.into(), b.into()))
                .collect(),
        }
    }

    /// TSV `inflected<TAB>lemma`, `#` comments allowed.
    pub fn load(path: &Path) -> Result<Self, TextError> {
        let raw = read(path)?;
        let mut dictionary = HashMap::new();
        for (i, line) in raw.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((form, lemma)) = line.split_once('\t') else {
                return Err(TextError::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: "expected `form<TAB>lemma`".into(),
                });
            };
            dictionary.insert(form.trim().to_lowercase(), lemma.trim().to_lowercase());
        }
        Ok(Self { dictionary })
    }

    pub fn lemma(&self, token: &str) -> String {
        if let Some(lemma) = self.dictionary.get(token) {
            return lemma.clone();
        }
        strip_suffix(token).unwrap_or_else(|| token.to_string())
    }

    pub fn lemmatize(&self, tokens: Vec<String>) -> Vec<String> {
        tokens.into_iter().map(|t| self.lemma(&t)).collect()
    }
}

fn has_vowel(s: &str) -> bool {
    s.chars().any(|c| matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y'))
}

fn strip_suffix(token: &str) -> Option<String> {
    if !token.chars().all(|c| c.is_ascii_lowercase()) {
        return None;
    }
    let n = token.len();
    if n > 4 && token.ends_with("ies") {
        return Some(format!("{}y", &token[..n - 3]));
    }
    if token.ends_with("sses") {
        return Some(token[..n - 2].to_string());
    }
    for suffix in ["ing", "ed"] {
        if let Some(stem) = token.strip_suffix(suffix) {
            if stem.len() >= 3 && has_vowel(stem) && !stem.ends_with('e') {
                return Some(undouble(stem));
            }
        }
    }
    if n > 3
        && token.ends_with('s')
        && !["ss", "us", "is"].iter().any(|s| token.ends_with(s))
    {
        return Some(token[..n - 1].to_string());
    }
    None
}

// "stopped" -> "stopp" -> "stop"
fn undouble(stem: &str) -> String {
    let bytes = stem.as_bytes();
    let n = bytes.len();
    if n >= 2 && bytes[n - 1] == bytes[n - 2] && !matches!(bytes[n - 1], b'l' | b's' | b'z') {
        stem[..n - 1].to_string()
    } else {
        stem.to_string()
    }
}

/// Tokenised, lemmatised, stopword-free document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenDoc {
    pub doc_id: usize,
    pub tokens: Vec<String>,
    pub source_post_id: String,
}

/// The full text pipeline: normalise, split, drop stopwords, lemmatise,
/// then drop stopwords again so lemmata that are stopwords disappear too.
#[derive(Debug, Clone, Default)]
pub struct Preprocessor {
    pub stopwords: StopwordSet,
    pub lemmatizer: Lemmatizer,
    pub strip_hashtags: bool,
}

impl Preprocessor {
    pub fn new(stopwords: StopwordSet, lemmatizer: Lemmatizer) -> Self {
        Self {
            stopwords,
            lemmatizer,
            strip_hashtags: false,
        }
    }

    pub fn without_hashtags(mut self) -> Self {
        self.strip_hashtags = true;
        self
    }

    pub fn tokens(&self, text: &str) -> Vec<String> {
        let normalized = if self.strip_hashtags {
            normalize(&remove_hashtags(text))
        } else {
            normalize(text)
        };
        let raw = normalized.split(' ').filter(|t| !t.is_empty()).map(str::to_string).collect();
        let kept = drop_stopwords(raw, &self.stopwords);
        drop_stopwords(self.lemmatizer.lemmatize(kept), &self.stopwords)
    }

    pub fn token_doc(&self, doc_id: usize, record: &PostRecord) -> TokenDoc {
        TokenDoc {
            doc_id,
            tokens: self.tokens(&record.text),
            source_post_id: record.post_id.clone(),
        }
    }
}

/// One copy of the record per hashtag, each carrying only that hashtag.
/// Copies keep the source `post_id`.
pub fn explode_by_hashtags(record: &PostRecord) -> Vec<PostRecord> {
    record
        .hashtags
        .iter()
        .map(|tag| PostRecord {
            hashtags: vec![tag.clone()],
            ..record.clone()
        })
        .collect()
}

fn read(path: &Path) -> Result<String, TextError> {
    std::fs::read_to_string(path).map_err(|source| TextError::Io {
        path: path.to_path_buf(),
        source,
    })
}
