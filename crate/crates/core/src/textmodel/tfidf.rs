use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{SparseVec, TextError};

/// Term index with document frequencies. Indices follow lexicographic term
/// order so a vocabulary is a pure function of the document set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabularyDump", into = "VocabularyDump")]
pub struct Vocabulary {
    terms: Vec<String>,
    df: Vec<usize>,
    n_docs: usize,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyDump {
    n_docs: usize,
    terms: Vec<String>,
    df: Vec<usize>,
}

impl From<VocabularyDump> for Vocabulary {
    fn from(d: VocabularyDump) -> Self {
        let index = d.terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary {
            terms: d.terms,
            df: d.df,
            n_docs: d.n_docs,
            index,
        }
    }
}

impl From<Vocabulary> for VocabularyDump {
    fn from(v: Vocabulary) -> Self {
        VocabularyDump {
            n_docs: v.n_docs,
            terms: v.terms,
            df: v.df,
        }
    }
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn term(&self, index: usize) -> &str {
        &self.terms[index]
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn df(&self, index: usize) -> usize {
        self.df[index]
    }

    /// Smoothed inverse document frequency `ln((1+N)/(1+df)) + 1`.
    pub fn idf(&self, index: usize) -> f64 {
        ((1.0 + self.n_docs as f64) / (1.0 + self.df[index] as f64)).ln() + 1.0
    }

    /// Raw in-vocabulary term counts.
    pub fn counts<S: AsRef<str>>(&self, tokens: &[S]) -> SparseVec {
        SparseVec::from_pairs(
            tokens
                .iter()
                .filter_map(|t| self.index_of(t.as_ref()))
                .map(|i| (i as u32, 1.0))
                .collect(),
        )
    }

    /// L2-normalised tf-idf row; out-of-vocabulary tokens are ignored.
    pub fn transform<S: AsRef<str>>(&self, tokens: &[S]) -> SparseVec {
        let mut row = self.counts(tokens);
        for (slot, &i) in row.values.iter_mut().zip(&row.indices) {
            *slot *= self.idf(i as usize);
        }
        row.normalized()
    }

    /// In-vocabulary token ids in document order.
    pub fn word_ids<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().filter_map(|t| self.index_of(t.as_ref())).collect()
    }
}

/// Collects terms and document frequencies. Fails when no document has a
/// single token.
pub fn tfidf_fit<S: AsRef<str>>(docs: &[Vec<S>]) -> Result<Vocabulary, TextError> {
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for doc in docs {
        let distinct: HashSet<&str> = doc.iter().map(AsRef::as_ref).collect();
        for term in distinct {
            *df.entry(term).or_default() += 1;
        }
    }
    if df.is_empty() {
        return Err(TextError::NoFeatures);
    }
    let (terms, df): (Vec<String>, Vec<usize>) =
        df.into_iter().map(|(t, n)| (t.to_string(), n)).unzip();
    let index = terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
    Ok(Vocabulary {
        terms,
        df,
        n_docs: docs.len(),
        index,
    })
}

pub fn tfidf_transform<S: AsRef<str>>(vocab: &Vocabulary, doc: &[S]) -> SparseVec {
    vocab.transform(doc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    TfIdf,
    RawCounts,
}

/// Sparse document-term matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermMatrix {
    pub rows: Vec<SparseVec>,
    pub n_cols: usize,
    pub weighting: Weighting,
}

impl TermMatrix {
    pub fn tfidf<S: AsRef<str>>(vocab: &Vocabulary, docs: &[Vec<S>]) -> Self {
        Self {
            rows: docs.iter().map(|d| vocab.transform(d)).collect(),
            n_cols: vocab.len(),
            weighting: Weighting::TfIdf,
        }
    }

    pub fn raw_counts<S: AsRef<str>>(vocab: &Vocabulary, docs: &[Vec<S>]) -> Self {
        Self {
            rows: docs.iter().map(|d| vocab.counts(d)).collect(),
            n_cols: vocab.len(),
            weighting: Weighting::RawCounts,
        }
    }

    /// Dense rows, e.g. numeric feature vectors, stored sparsely.
    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let n_cols = rows.first().map_or(0, Vec::len);
        Self {
            rows: rows
                .iter()
                .map(|r| {
                    SparseVec::from_pairs(
                        r.iter().enumerate().map(|(i, &v)| (i as u32, v)).collect(),
                    )
                })
                .collect(),
            n_cols,
            weighting: Weighting::RawCounts,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docs(raw: &[&str]) -> Vec<Vec<String>> {
        raw.iter()
            .map(|d| d.split_whitespace().map(str::to_string).collect())
            .collect()
    }

    #[test]
    fn single_term_document_is_unit() {
        let d = docs(&["vaccine vaccine"]);
        let vocab = tfidf_fit(&d).unwrap();
        assert_eq!(vocab.transform(&d[0]).values, vec![1.0]);
    }

    #[test]
    fn empty_vocabulary_is_an_error() {
        assert!(matches!(tfidf_fit(&docs(&["", ""])), Err(TextError::NoFeatures)));
        assert!(matches!(tfidf_fit::<String>(&[]), Err(TextError::NoFeatures)));
    }

    #[test]
    fn unknown_terms_weigh_zero() {
        let vocab = tfidf_fit(&docs(&["a b"])).unwrap();
        let row = vocab.transform(&["zzz", "a"]);
        assert_eq!(row.indices, vec![0]);
        assert_eq!(row.get(1), 0.0);
        assert!(vocab.transform(&["zzz"]).is_empty());
    }

    #[test]
    fn indices_are_lexicographic() {
        let vocab = tfidf_fit(&docs(&["mask vaccine", "lockdown"])).unwrap();
        assert_eq!(vocab.terms(), ["lockdown", "mask", "vaccine"]);
        assert_eq!(vocab.df(0), 1);
    }

    #[test]
    fn serde_round_trip_rebuilds_index() {
        let vocab = tfidf_fit(&docs(&["a b", "b c"])).unwrap();
        let json = serde_json::to_string(&vocab).unwrap();
        let back: Vocabulary = serde_json::from_str(&json).unwrap();
        assert_eq!(back, vocab);
        assert_eq!(back.index_of("c"), Some(2));
    }
}
