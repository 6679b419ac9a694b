//! Lexicon valence scoring and per-group sentiment distributions.
//!
//! The scorer sums the valence of every lexicon hit and squashes the sum
//! with `s / sqrt(s² + 15)`; there are no booster, negation or emoji rules.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::PeriodLabel;
use crate::textmodel::normalize;

/// Normalisation constant of the compound score.
pub const COMPOUND_ALPHA: f64 = 15.0;
pub const DEFAULT_THRESHOLD: f64 = 0.05;

#[derive(Debug, thiserror::Error)]
pub enum SentimentError {
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
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Lexicon {
    valences: HashMap<String, f64>,
}

impl Lexicon {
    pub fn from_entries<I, S>(entries: I) -> Self
    where
        I: IntoIterator<Item = (S, f64)>,
        S: AsRef<str>,
    {
        Self {
            valences: entries
                .into_iter()
                .map(|(t, v)| (t.as_ref().to_lowercase(), v))
                .collect(),
        }
    }

    /// `term<TAB>valence[<TAB>...]`; extra columns (as in the VADER
    /// distribution) are ignored. Valences must be finite and within ±4.
    pub fn load(path: &Path) -> Result<Self, SentimentError> {
        let raw = std::fs::read_to_string(path).map_err(|source| SentimentError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut valences = HashMap::new();
        for (i, line) in raw.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split('\t');
            let term = cols.next().unwrap_or_default().trim().to_lowercase();
            let parse_err = |message: String| SentimentError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            };
            let valence: f64 = cols
                .next()
                .ok_or_else(|| parse_err("missing valence column".into()))?
                .trim()
                .parse()
                .map_err(|e| parse_err(format!("bad valence: {e}")))?;
            if !valence.is_finite() || valence.abs() > 4.0 {
                return Err(parse_err(format!("valence {valence} outside [-4, 4]")));
            }
            valences.insert(term, valence);
        }
        Ok(Self { valences })
    }

    pub fn valence(&self, term: &str) -> Option<f64> {
        self.valences.get(term).copied()
    }

    pub fn len(&self) -> usize {
        self.valences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.valences.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarityScore {
    pub raw_sum: f64,
    pub compound: f64,
}

impl PolarityScore {
    pub fn from_raw(raw_sum: f64) -> Self {
        Self {
            raw_sum,
            compound: compound(raw_sum),
        }
    }
}

pub fn compound(raw_sum: f64) -> f64 {
    if raw_sum == 0.0 {
        return 0.0;
    }
    raw_sum / (raw_sum * raw_sum + COMPOUND_ALPHA).sqrt()
}

pub fn score_tokens<S: AsRef<str>>(tokens: &[S], lexicon: &Lexicon) -> PolarityScore {
    let raw_sum = tokens
        .iter()
        .filter_map(|t| lexicon.valence(t.as_ref()))
        .sum();
    PolarityScore::from_raw(raw_sum)
}

/// Scores text after the shared normalisation (lowercase, no URLs,
/// mentions or punctuation).
pub fn score(text: &str, lexicon: &Lexicon) -> PolarityScore {
    let normalized = normalize(text);
    let tokens: Vec<&str> = normalized.split_whitespace().collect();
    score_tokens(&tokens, lexicon)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SentimentLabel {
    Positive,
    Neutral,
    Negative,
}

/// `compound ≥ τ` is positive, `compound ≤ −τ` negative, anything between
/// neutral. With `τ = 0` a zero compound counts as positive.
pub fn label(score: PolarityScore, threshold: f64) -> SentimentLabel {
    if score.compound >= threshold {
        SentimentLabel::Positive
    } else if score.compound <= -threshold {
        SentimentLabel::Negative
    } else {
        SentimentLabel::Neutral
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub positive: u64,
    pub neutral: u64,
    pub negative: u64,
}

impl LabelCounts {
    pub fn add(&mut self, label: SentimentLabel) {
        match label {
            SentimentLabel::Positive => self.positive += 1,
            SentimentLabel::Neutral => self.neutral += 1,
            SentimentLabel::Negative => self.negative += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.positive + self.neutral + self.negative
    }

    pub fn merge(&mut self, other: &LabelCounts) {
        self.positive += other.positive;
        self.neutral += other.neutral;
        self.negative += other.negative;
    }

    pub fn fractions(&self) -> Option<SentimentDistribution> {
        let total = self.total();
        if total == 0 {
            return None;
        }
        let n = total as f64;
        Some(SentimentDistribution {
            positive: self.positive as f64 / n,
            neutral: self.neutral as f64 / n,
            negative: self.negative as f64 / n,
            count: total,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SentimentDistribution {
    pub positive: f64,
    pub neutral: f64,
    pub negative: f64,
    pub count: u64,
}

pub type GroupKey = (String, PeriodLabel);

/// Normalised label distribution per (topic, phase). Groups without labels
/// never appear; groups named in `expected` but empty are logged.
pub fn aggregate<'a, I>(labels: I, expected: &[GroupKey]) -> BTreeMap<GroupKey, SentimentDistribution>
where
    I: IntoIterator<Item = (&'a str, PeriodLabel, SentimentLabel)>,
{
    let mut counts: BTreeMap<GroupKey, LabelCounts> = BTreeMap::new();
    for (topic, phase, l) in labels {
        counts.entry((topic.to_string(), phase)).or_default().add(l);
    }
    for key in expected {
        if !counts.contains_key(key) {
            log::warn!("sentiment: group ({}, {}) is empty, omitted", key.0, key.1);
        }
    }
    counts
        .into_iter()
        .filter_map(|(k, c)| c.fractions().map(|f| (k, f)))
        .collect()
}

/// CSV `topic,phase,positive,neutral,negative` with six decimals.
pub fn write_distribution_csv<W: Write>(
    table: &BTreeMap<GroupKey, SentimentDistribution>,
    out: W,
) -> csv::Result<()> {
    let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    writer.write_record(["topic", "phase", "positive", "neutral", "negative"])?;
    for ((topic, phase), d) in table {
        writer.write_record([
            topic.as_str(),
            phase.as_str(),
            &format!("{:.6}", d.positive),
            &format!("{:.6}", d.neutral),
            &format!("{:.6}", d.negative),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lexicon() -> Lexicon {
        Lexicon::from_entries([("good", 2.0), ("bad", -2.0), ("great", 3.1)])
    }

    #[test]
    fn empty_text_scores_zero() {
        assert_eq!(score("", &lexicon()).compound, 0.0);
    }

    #[test]
    fn single_hit_compound() {
        let s = score("Good!", &lexicon());
        assert_eq!(s.raw_sum, 2.0);
        assert!((s.compound - 2.0 / 19f64.sqrt()).abs() < 1e-12);
        assert!((s.compound - 0.4588).abs() < 1e-4);
    }

    #[test]
    fn opposite_hits_cancel() {
        assert_eq!(score("good bad", &lexicon()).compound, 0.0);
    }

    #[test]
    fn labels_follow_threshold() {
        assert_eq!(label(PolarityScore::from_raw(0.0), 0.05), SentimentLabel::Neutral);
        assert_eq!(label(PolarityScore::from_raw(2.0), 0.05), SentimentLabel::Positive);
        let neg = PolarityScore {
            raw_sum: -0.2,
            compound: -0.06,
        };
        assert_eq!(label(neg, 0.05), SentimentLabel::Negative);
    }

    #[test]
    fn aggregate_fractions() {
        use SentimentLabel::*;
        let rows = [
            ("vaccine", PeriodLabel::During, Positive),
            ("vaccine", PeriodLabel::During, Positive),
            ("vaccine", PeriodLabel::During, Negative),
            ("vaccine", PeriodLabel::During, Neutral),
            ("sport", PeriodLabel::After, Negative),
        ];
        let table = aggregate(rows, &[]);
        let d = table[&("vaccine".to_string(), PeriodLabel::During)];
        assert_eq!((d.positive, d.neutral, d.negative), (0.5, 0.25, 0.25));
        let s = table[&("sport".to_string(), PeriodLabel::After)];
        assert_eq!((s.positive, s.neutral, s.negative), (0.0, 0.0, 1.0));
    }

    #[test]
    fn lexicon_rejects_out_of_range_valence() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lex.tsv");
        std::fs::write(&path, "ok\t1.5\t0.4\t[1, 2]\nwild\t7.0\n").unwrap();
        assert!(matches!(Lexicon::load(&path), Err(SentimentError::Parse { line: 2, .. })));
        std::fs::write(&path, "ok\t1.5\t0.4\t[1, 2]\n").unwrap();
        assert_eq!(Lexicon::load(&path).unwrap().valence("ok"), Some(1.5));
    }

    #[test]
    fn csv_layout() {
        let rows = [("t", PeriodLabel::Before, SentimentLabel::Positive)];
        let mut out = Vec::new();
        write_distribution_csv(&aggregate(rows, &[]), &mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "topic,phase,positive,neutral,negative\nt,before,1.000000,0.000000,0.000000\n"
        );
    }
}
