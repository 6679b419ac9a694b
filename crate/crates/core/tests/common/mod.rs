//! Random micro-corpora for the privacy model and a brute-force scorer
//! computed straight from raw counts, sharing no code with the library's
//! model or path search.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use privlens::privacy::TrainingPost;
use privlens::SparseVec;
use rand::seq::SliceRandom;
use rand::Rng;

/// Node index used for test posts that can never match a trained node.
pub const UNSEEN: usize = 99;

/// One training post: which node it lands on, its cluster and PII flag.
#[derive(Debug, Clone, Copy)]
pub struct MicroPost {
    pub node: usize,
    pub cluster: usize,
    pub pii: bool,
}

#[derive(Debug, Clone)]
pub struct MicroCorpus {
    pub nodes: usize,
    /// Chronological posts per user.
    pub users: BTreeMap<String, Vec<MicroPost>>,
}

pub fn unit(k: usize) -> SparseVec {
    SparseVec::from_pairs(vec![(k as u32, 1.0)])
}

pub fn random_corpus<R: Rng>(rng: &mut R) -> MicroCorpus {
    let nodes = rng.gen_range(1..=6);
    let n_users = rng.gen_range(1..=4);
    let users = (0..n_users)
        .map(|u| {
            let len = rng.gen_range(1..=5);
            let posts = (0..len)
                .map(|_| MicroPost {
                    node: rng.gen_range(0..nodes),
                    cluster: rng.gen_range(0..2),
                    pii: rng.gen_bool(0.4),
                })
                .collect();
            (format!("u{u}"), posts)
        })
        .collect();
    MicroCorpus { nodes, users }
}

/// Training posts in shuffled order; timestamps fix the chronology.
pub fn training_posts<R: Rng>(corpus: &MicroCorpus, rng: &mut R) -> Vec<TrainingPost> {
    let mut out = Vec::new();
    let mut tick = 0i64;
    for (user, posts) in &corpus.users {
        for (i, p) in posts.iter().enumerate() {
            tick += 60;
            let text = format!("n{}", p.node);
            out.push(TrainingPost {
                user: user.clone(),
                post_id: format!("{user}-{i}"),
                timestamp: DateTime::<Utc>::from_timestamp(1_590_000_000 + tick, 0).unwrap(),
                text: text.clone(),
                raw_text: text,
                vector: unit(p.node),
                cluster: p.cluster,
                has_pii: p.pii,
            });
        }
    }
    out.shuffle(rng);
    out
}

/// A test sequence: a user (possibly unknown to training) and node indices,
/// where [`UNSEEN`] or an untrained index stands for a post matching nothing.
pub fn random_test_sequence<R: Rng>(corpus: &MicroCorpus, rng: &mut R, max_len: usize) -> (String, Vec<usize>) {
    let mut candidates: Vec<String> = corpus.users.keys().cloned().collect();
    candidates.push("stranger".into());
    let user = candidates.choose(rng).unwrap().clone();
    let len = rng.gen_range(1..=max_len);
    let nodes = (0..len)
        .map(|_| {
            if rng.gen_bool(0.1) {
                UNSEEN
            } else {
                rng.gen_range(0..corpus.nodes)
            }
        })
        .collect();
    (user, nodes)
}

#[derive(Debug, Default)]
pub struct Counts {
    pub starts: BTreeMap<usize, u64>,
    pub transitions: BTreeMap<(usize, usize), u64>,
    pub observations: BTreeMap<(usize, String), u64>,
}

impl Counts {
    fn add_sequence(&mut self, user: &str, nodes: &[usize]) {
        for (i, &n) in nodes.iter().enumerate() {
            *self.observations.entry((n, user.to_string())).or_default() += 1;
            if i == 0 {
                *self.starts.entry(n).or_default() += 1;
            } else {
                *self.transitions.entry((nodes[i - 1], n)).or_default() += 1;
            }
        }
    }

    fn known(&self, node: usize) -> bool {
        self.observations.keys().any(|(n, _)| *n == node)
    }

    fn observed(&self, node: usize, user: &str) -> u64 {
        self.observations.get(&(node, user.to_string())).copied().unwrap_or(0)
    }

    fn observed_anywhere(&self, user: &str) -> bool {
        self.observations.keys().any(|(_, u)| u == user)
    }

    /// Factor for stepping into `node`; `prev` is `None` at the start and
    /// `Some(None)` after a post that matched nothing.
    pub fn factor(&self, user: &str, prev: Option<Option<usize>>, node: usize) -> f64 {
        if !self.known(node) {
            return 0.0;
        }
        let (count, total) = match prev {
            None => (
                self.starts.get(&node).copied().unwrap_or(0),
                self.starts.values().sum::<u64>(),
            ),
            Some(None) => (0, 0),
            Some(Some(p)) => (
                self.transitions.get(&(p, node)).copied().unwrap_or(0),
                self.transitions
                    .iter()
                    .filter(|((from, _), _)| *from == p)
                    .map(|(_, c)| c)
                    .sum(),
            ),
        };
        let transition = if count == 0 {
            0.0
        } else {
            (1.0 / count as f64) * (count as f64 / total as f64)
        };
        let mine = self.observed(node, user);
        let all: u64 = self
            .observations
            .iter()
            .filter(|((n, _), _)| *n == node)
            .map(|(_, c)| c)
            .sum();
        let observation = if mine == 0 {
            1.0
        } else {
            1.0 - (1.0 / mine as f64) * (mine as f64 / all as f64)
        };
        transition * observation
    }
}

/// Counts of the merged cluster model: each user's posts split by cluster,
/// every per-cluster subsequence counted, the clusters summed.
pub fn cluster_counts(corpus: &MicroCorpus) -> Counts {
    let mut counts = Counts::default();
    for (user, posts) in &corpus.users {
        let clusters: BTreeSet<usize> = posts.iter().map(|p| p.cluster).collect();
        for c in clusters {
            let seq: Vec<usize> = posts.iter().filter(|p| p.cluster == c).map(|p| p.node).collect();
            counts.add_sequence(user, &seq);
        }
    }
    counts
}

/// Counts of the PII model: each user's PII posts across all clusters.
pub fn pii_counts(corpus: &MicroCorpus) -> Counts {
    let mut counts = Counts::default();
    for (user, posts) in &corpus.users {
        let seq: Vec<usize> = posts.iter().filter(|p| p.pii).map(|p| p.node).collect();
        if !seq.is_empty() {
            counts.add_sequence(user, &seq);
        }
    }
    counts
}

/// Minimum path product over every sequence of distinct nodes (at most
/// `max_len`) that starts at a start node, follows observed transitions and
/// visits a node the user was observed at. Enumerates all index tuples and
/// filters them, rather than searching.
pub fn brute_force_prior(pii: &Counts, user: &str, nodes: usize, max_len: usize) -> f64 {
    if !pii.observed_anywhere(user) {
        return 1.0;
    }
    let mut best = f64::INFINITY;
    for len in 1..=max_len.min(nodes) {
        let total = nodes.pow(len as u32);
        for code in 0..total {
            let mut path = Vec::with_capacity(len);
            let mut c = code;
            for _ in 0..len {
                path.push(c % nodes);
                c /= nodes;
            }
            let distinct: BTreeSet<usize> = path.iter().copied().collect();
            if distinct.len() != len
                || pii.starts.get(&path[0]).copied().unwrap_or(0) == 0
                || path
                    .windows(2)
                    .any(|w| pii.transitions.get(&(w[0], w[1])).copied().unwrap_or(0) == 0)
                || !path.iter().any(|&n| pii.observed(n, user) > 0)
            {
                continue;
            }
            let mut product = pii.factor(user, None, path[0]);
            for w in path.windows(2) {
                product *= pii.factor(user, Some(Some(w[0])), w[1]);
            }
            best = best.min(product);
        }
    }
    if best.is_finite() {
        best
    } else {
        1.0
    }
}

/// Counts of one corpus with priors cached per user.
pub struct Oracle {
    nodes: usize,
    merged: Counts,
    pii: Counts,
    priors: BTreeMap<String, f64>,
}

impl Oracle {
    pub fn new(corpus: &MicroCorpus) -> Self {
        Self {
            nodes: corpus.nodes,
            merged: cluster_counts(corpus),
            pii: pii_counts(corpus),
            priors: BTreeMap::new(),
        }
    }

    /// Prior and cumulative probability after each post.
    pub fn probability(&mut self, user: &str, test: &[usize]) -> (f64, Vec<f64>) {
        let prior = match self.priors.get(user) {
            Some(&p) => p,
            None => {
                let p = brute_force_prior(&self.pii, user, self.nodes, 6);
                self.priors.insert(user.to_string(), p);
                p
            }
        };
        let mut cumulative = prior;
        let mut prev: Option<Option<usize>> = None;
        let mut out = Vec::new();
        for &node in test {
            cumulative *= self.merged.factor(user, prev, node);
            out.push(cumulative);
            prev = Some(self.merged.known(node).then_some(node));
        }
        (prior, out)
    }
}
