use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TextError;

pub const LDA_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LdaParams {
    pub topics: usize,
    /// Document-topic prior; `None` means `50 / topics`.
    pub alpha: Option<f64>,
    pub beta: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for LdaParams {
    fn default() -> Self {
        Self {
            topics: 15,
            alpha: None,
            beta: 0.01,
            iterations: 200,
            seed: 0,
        }
    }
}

impl LdaParams {
    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(50.0 / self.topics as f64)
    }
}

/// Collapsed-Gibbs LDA state. Counts are persisted; `phi` and `theta` are
/// re-estimated from them on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaModel {
    pub version: u32,
    pub topics: usize,
    pub vocab_size: usize,
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
    pub iterations: usize,
    /// topics × vocab
    pub topic_word: Vec<Vec<u64>>,
    pub topic_totals: Vec<u64>,
    /// docs × topics
    pub doc_topic: Vec<Vec<u64>>,
    pub doc_lengths: Vec<u64>,
    /// Σ topic-word counts observed after every sweep.
    pub sweep_token_totals: Vec<u64>,
    #[serde(skip)]
    pub phi: Vec<Vec<f64>>,
    #[serde(skip)]
    pub theta: Vec<Vec<f64>>,
}

impl LdaModel {
    pub fn from_json(raw: &str) -> Result<Self, TextError> {
        let mut model: LdaModel =
            serde_json::from_str(raw).map_err(|e| TextError::Model(e.to_string()))?;
        if model.version != LDA_FORMAT_VERSION {
            return Err(TextError::Model(format!(
                "unsupported LDA model version {}",
                model.version
            )));
        }
        model.estimate();
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("LDA model serialises")
    }

    pub fn token_count(&self) -> u64 {
        self.doc_lengths.iter().sum()
    }

    /// Dirichlet-smoothed point estimates from the current counts.
    pub fn estimate(&mut self) {
        let v = self.vocab_size as f64;
        let k = self.topics as f64;
        self.phi = self
            .topic_word
            .iter()
            .zip(&self.topic_totals)
            .map(|(row, &total)| {
                let denom = total as f64 + v * self.beta;
                row.iter().map(|&c| (c as f64 + self.beta) / denom).collect()
            })
            .collect();
        self.theta = self
            .doc_topic
            .iter()
            .zip(&self.doc_lengths)
            .map(|(row, &len)| {
                let denom = len as f64 + k * self.alpha;
                row.iter().map(|&c| (c as f64 + self.alpha) / denom).collect()
            })
            .collect();
    }

    /// Most probable topic for a fitted document.
    pub fn dominant_topic(&self, doc: usize) -> usize {
        argmax(&self.theta[doc])
    }

    /// Top `n` word ids of a topic by phi, ties by lower id.
    pub fn top_words(&self, topic: usize, n: usize) -> Vec<(usize, f64)> {
        let mut ranked: Vec<(usize, f64)> = self.phi[topic].iter().copied().enumerate().collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        ranked.truncate(n);
        ranked
    }

    pub fn infer(&self, doc: &[usize], iterations: usize, seed: u64) -> Vec<f64> {
        lda_infer(self, doc, iterations, seed)
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn sample(weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        u -= w;
        if u < 0.0 {
            return i;
        }
    }
    weights.len() - 1
}

/// Fits LDA by collapsed Gibbs sampling over word-id documents. Deterministic
/// for a given seed.
pub fn lda_fit(docs: &[Vec<usize>], vocab_size: usize, params: LdaParams) -> Result<LdaModel, TextError> {
    let k = params.topics;
    if k == 0 {
        return Err(TextError::InvalidClusterCount { k, docs: docs.len() });
    }
    let token_count: usize = docs.iter().map(Vec::len).sum();
    if token_count == 0 || vocab_size == 0 {
        return Err(TextError::EmptyCorpus);
    }
    if k > vocab_size {
        log::warn!("LDA: {k} topics exceed the vocabulary size {vocab_size}");
    }
    let alpha = params.alpha();
    let beta = params.beta;
    let vbeta = vocab_size as f64 * beta;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let mut topic_word = vec![vec![0u64; vocab_size]; k];
    let mut topic_totals = vec![0u64; k];
    let mut doc_topic = vec![vec![0u64; k]; docs.len()];
    let mut z: Vec<Vec<usize>> = Vec::with_capacity(docs.len());
    for (d, doc) in docs.iter().enumerate() {
        let mut zd = Vec::with_capacity(doc.len());
        for &w in doc {
            let t = rng.gen_range(0..k);
            topic_word[t][w] += 1;
            topic_totals[t] += 1;
            doc_topic[d][t] += 1;
            zd.push(t);
        }
        z.push(zd);
    }

    let mut weights = vec![0.0; k];
    let mut sweep_token_totals = Vec::with_capacity(params.iterations);
    for _ in 0..params.iterations {
        for (d, doc) in docs.iter().enumerate() {
            for (i, &w) in doc.iter().enumerate() {
                let old = z[d][i];
                topic_word[old][w] -= 1;
                topic_totals[old] -= 1;
                doc_topic[d][old] -= 1;
                for t in 0..k {
                    weights[t] = (doc_topic[d][t] as f64 + alpha)
                        * (topic_word[t][w] as f64 + beta)
                        / (topic_totals[t] as f64 + vbeta);
                }
                let new = sample(&weights, &mut rng);
                topic_word[new][w] += 1;
                topic_totals[new] += 1;
                doc_topic[d][new] += 1;
                z[d][i] = new;
            }
        }
        sweep_token_totals.push(topic_word.iter().flatten().sum());
    }

    let mut model = LdaModel {
        version: LDA_FORMAT_VERSION,
        topics: k,
        vocab_size,
        alpha,
        beta,
        seed: params.seed,
        iterations: params.iterations,
        topic_word,
        topic_totals,
        doc_topic,
        doc_lengths: docs.iter().map(|d| d.len() as u64).collect(),
        sweep_token_totals,
        phi: Vec::new(),
        theta: Vec::new(),
    };
    model.estimate();
    Ok(model)
}

/// Topic distribution of an unseen document with the fitted topic-word
/// counts held fixed. Out-of-vocabulary ids are ignored; a document with no
/// usable tokens gets the uniform distribution.
pub fn lda_infer(model: &LdaModel, doc: &[usize], iterations: usize, seed: u64) -> Vec<f64> {
    let k = model.topics;
    let words: Vec<usize> = doc.iter().copied().filter(|&w| w < model.vocab_size).collect();
    if words.is_empty() {
        if !doc.is_empty() {
            log::warn!("LDA inference: every token is out of vocabulary");
        }
        return vec![1.0 / k as f64; k];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0u64; k];
    let mut z: Vec<usize> = words
        .iter()
        .map(|_| {
            let t = rng.gen_range(0..k);
            counts[t] += 1;
            t
        })
        .collect();
    let mut weights = vec![0.0; k];
    for _ in 0..iterations.max(1) {
        for (i, &w) in words.iter().enumerate() {
            counts[z[i]] -= 1;
            for t in 0..k {
                weights[t] = (counts[t] as f64 + model.alpha) * model.phi[t][w];
            }
            z[i] = sample(&weights, &mut rng);
            counts[z[i]] += 1;
        }
    }
    let denom = words.len() as f64 + k as f64 * model.alpha;
    counts
        .iter()
        .map(|&c| (c as f64 + model.alpha) / denom)
        .collect()
}
