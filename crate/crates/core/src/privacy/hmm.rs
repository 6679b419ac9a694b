use std::collections::{BTreeMap, HashMap};
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::PrivacyError;
use crate::textmodel::SparseVec;

pub const HMM_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One event node `X_t`: a cluster of near-identical posts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventNode {
    pub id: NodeId,
    /// Processed text of the post that created the node.
    pub text: String,
    pub vector: SparseVec,
    /// count(u | X)
    pub observations: BTreeMap<String, u64>,
    pub total_observations: u64,
    /// count(X' | X) keyed by successor
    pub transitions: BTreeMap<NodeId, u64>,
}

impl EventNode {
    pub fn transition_total(&self) -> u64 {
        self.transitions.values().sum()
    }

    pub fn observation_count(&self, user: &str) -> u64 {
        self.observations.get(user).copied().unwrap_or(0)
    }
}

/// Event-node HMM with integer counts. Node ids are dense indices into
/// `nodes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyHmm {
    pub version: u32,
    pub sim_threshold: f64,
    pub partition: Option<usize>,
    pub nodes: Vec<EventNode>,
    /// count(X as first post of a sequence)
    pub initial: BTreeMap<NodeId, u64>,
    pub initial_total: u64,
    #[serde(skip)]
    postings: HashMap<u32, Vec<NodeId>>,
    #[serde(skip)]
    empty_nodes: Vec<NodeId>,
}

impl PrivacyHmm {
    pub fn new(sim_threshold: f64, partition: Option<usize>) -> Self {
        Self {
            version: HMM_FORMAT_VERSION,
            sim_threshold,
            partition,
            nodes: Vec::new(),
            initial: BTreeMap::new(),
            initial_total: 0,
            postings: HashMap::new(),
            empty_nodes: Vec::new(),
        }
    }

    pub fn from_json(raw: &str) -> Result<Self, PrivacyError> {
        let mut hmm: PrivacyHmm =
            serde_json::from_str(raw).map_err(|e| PrivacyError::Model(e.to_string()))?;
        if hmm.version != HMM_FORMAT_VERSION {
            return Err(PrivacyError::Model(format!("unsupported HMM version {}", hmm.version)));
        }
        hmm.reindex();
        Ok(hmm)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("HMM serialises")
    }

    fn reindex(&mut self) {
        self.postings.clear();
        self.empty_nodes.clear();
        for node in &self.nodes {
            index_node(&mut self.postings, &mut self.empty_nodes, node);
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &EventNode {
        &self.nodes[id.0 as usize]
    }

    pub fn get(&self, id: NodeId) -> Option<&EventNode> {
        self.nodes.get(id.0 as usize)
    }

    pub fn initial_count(&self, id: NodeId) -> u64 {
        self.initial.get(&id).copied().unwrap_or(0)
    }

    pub fn transition_count(&self, from: NodeId, to: NodeId) -> u64 {
        self.node(from).transitions.get(&to).copied().unwrap_or(0)
    }

    /// p(X_1 = id)
    pub fn p_initial(&self, id: NodeId) -> f64 {
        if self.initial_total == 0 {
            return 0.0;
        }
        self.initial_count(id) as f64 / self.initial_total as f64
    }

    /// p(X_t = to | X_{t-1} = from), over observed successors.
    pub fn p_transition(&self, from: NodeId, to: NodeId) -> f64 {
        let total = self.node(from).transition_total();
        if total == 0 {
            return 0.0;
        }
        self.transition_count(from, to) as f64 / total as f64
    }

    /// p(u | X)
    pub fn p_observation(&self, user: &str, id: NodeId) -> f64 {
        let node = self.node(id);
        if node.total_observations == 0 {
            return 0.0;
        }
        node.observation_count(user) as f64 / node.total_observations as f64
    }

    /// Nodes at which `user` has at least one observation.
    pub fn observed_by(&self, user: &str) -> Vec<NodeId> {
        self.nodes
            .iter()
            .filter(|n| n.observation_count(user) > 0)
            .map(|n| n.id)
            .collect()
    }

    /// Most similar node with cosine ≥ the threshold; ties go to the lowest
    /// id. `vector` is expected to be L2-normalised.
    pub fn match_node(&self, vector: &SparseVec) -> Option<NodeId> {
        match_node(self, vector, self.sim_threshold)
    }

    fn add_node(&mut self, text: &str, vector: &SparseVec) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        let node = EventNode {
            id,
            text: text.to_string(),
            vector: vector.clone(),
            observations: BTreeMap::new(),
            total_observations: 0,
            transitions: BTreeMap::new(),
        };
        index_node(&mut self.postings, &mut self.empty_nodes, &node);
        self.nodes.push(node);
        id
    }

    /// Feeds one user's chronological sequence: each post joins its best
    /// matching node or opens a new one, then observation, initial and
    /// transition counts are incremented.
    pub fn observe_sequence<'a>(
        &mut self,
        user: &str,
        posts: impl IntoIterator<Item = (&'a str, &'a SparseVec)>,
    ) -> Vec<NodeId> {
        let mut path = Vec::new();
        for (text, vector) in posts {
            let id = self.match_node(vector).unwrap_or_else(|| self.add_node(text, vector));
            let node = &mut self.nodes[id.0 as usize];
            *node.observations.entry(user.to_string()).or_default() += 1;
            node.total_observations += 1;
            match path.last() {
                None => {
                    *self.initial.entry(id).or_default() += 1;
                    self.initial_total += 1;
                }
                Some(&prev) => {
                    let prev: NodeId = prev;
                    *self.nodes[prev.0 as usize].transitions.entry(id).or_default() += 1;
                }
            }
            path.push(id);
        }
        path
    }

    /// Merges models by node-set union, identifying nodes by their
    /// representative text and summing counts. Inputs are ordered by
    /// partition id first, so the result does not depend on input order.
    pub fn merge(models: &[PrivacyHmm], sim_threshold: f64) -> PrivacyHmm {
        let mut ordered: Vec<&PrivacyHmm> = models.iter().collect();
        ordered.sort_by_key(|m| m.partition.unwrap_or(usize::MAX));
        let mut merged = PrivacyHmm::new(sim_threshold, None);
        let mut by_text: HashMap<String, NodeId> = HashMap::new();
        for model in &ordered {
            let remap: Vec<NodeId> = model
                .nodes
                .iter()
                .map(|n| match by_text.get(&n.text) {
                    Some(&id) => id,
                    None => {
                        let id = merged.add_node(&n.text, &n.vector);
                        by_text.insert(n.text.clone(), id);
                        id
                    }
                })
                .collect();
            for node in &model.nodes {
                let target = &mut merged.nodes[remap[node.id.0 as usize].0 as usize];
                for (user, c) in &node.observations {
                    *target.observations.entry(user.clone()).or_default() += c;
                }
                target.total_observations += node.total_observations;
                for (succ, c) in &node.transitions {
                    *target.transitions.entry(remap[succ.0 as usize]).or_default() += c;
                }
            }
            for (id, c) in &model.initial {
                *merged.initial.entry(remap[id.0 as usize]).or_default() += c;
            }
            merged.initial_total += model.initial_total;
        }
        merged
    }
}

fn index_node(postings: &mut HashMap<u32, Vec<NodeId>>, empty: &mut Vec<NodeId>, node: &EventNode) {
    if node.vector.is_empty() {
        empty.push(node.id);
    }
    for &term in &node.vector.indices {
        postings.entry(term).or_default().push(node.id);
    }
}

/// Argmax-cosine node at or above `threshold`, lowest id on ties.
pub fn match_node(hmm: &PrivacyHmm, vector: &SparseVec, threshold: f64) -> Option<NodeId> {
    let mut best: Option<(NodeId, f64)> = None;
    let mut consider = |id: NodeId| {
        let sim = hmm.node(id).vector.cosine(vector);
        if sim < threshold {
            return;
        }
        match best {
            Some((b, s)) if s > sim || (s == sim && b < id) => {}
            _ => best = Some((id, sim)),
        }
    };
    if threshold <= 0.0 {
        // every node qualifies, including ones sharing no term
        (0..hmm.nodes.len()).for_each(|i| consider(NodeId(i as u32)));
    } else if vector.is_empty() {
        hmm.empty_nodes.iter().copied().for_each(&mut consider);
    } else {
        let mut candidates: Vec<NodeId> = vector
            .indices
            .iter()
            .filter_map(|t| hmm.postings.get(t))
            .flatten()
            .copied()
            .collect();
        candidates.sort_unstable();
        candidates.dedup();
        candidates.into_iter().for_each(consider);
    }
    best.map(|(id, _)| id)
}

/// A preprocessed, vectorised training post.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPost {
    pub user: String,
    pub post_id: String,
    pub timestamp: DateTime<Utc>,
    /// Preprocessed text; identifies nodes across cluster models.
    pub text: String,
    /// Original text, kept as the representative of PII model nodes.
    pub raw_text: String,
    pub vector: SparseVec,
    pub cluster: usize,
    pub has_pii: bool,
}

/// The PII-only model used for the linkability prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PiiHmm(pub PrivacyHmm);

impl std::ops::Deref for PiiHmm {
    type Target = PrivacyHmm;

    fn deref(&self) -> &PrivacyHmm {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmmSet {
    pub clusters: Vec<PrivacyHmm>,
    pub merged: PrivacyHmm,
    pub pii: PiiHmm,
}

impl HmmSet {
    pub fn from_json(raw: &str) -> Result<Self, PrivacyError> {
        let mut set: HmmSet =
            serde_json::from_str(raw).map_err(|e| PrivacyError::Model(e.to_string()))?;
        for hmm in set.clusters.iter_mut().chain([&mut set.merged, &mut set.pii.0]) {
            if hmm.version != HMM_FORMAT_VERSION {
                return Err(PrivacyError::Model(format!("unsupported HMM version {}", hmm.version)));
            }
            hmm.reindex();
        }
        Ok(set)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("HMM set serialises")
    }
}

fn sequences<'a>(posts: impl Iterator<Item = &'a TrainingPost>) -> BTreeMap<&'a str, Vec<&'a TrainingPost>> {
    let mut by_user: BTreeMap<&str, Vec<&TrainingPost>> = BTreeMap::new();
    for p in posts {
        by_user.entry(&p.user).or_default().push(p);
    }
    for seq in by_user.values_mut() {
        // stable: equal timestamps keep the caller's order
        seq.sort_by_key(|p| p.timestamp);
    }
    by_user
}

fn train_partition<'a>(
    posts: impl Iterator<Item = &'a TrainingPost>,
    sim_threshold: f64,
    partition: Option<usize>,
    raw: bool,
) -> PrivacyHmm {
    let mut hmm = PrivacyHmm::new(sim_threshold, partition);
    for (user, seq) in sequences(posts) {
        hmm.observe_sequence(
            user,
            seq.iter().map(|p| (if raw { p.raw_text.as_str() } else { p.text.as_str() }, &p.vector)),
        );
    }
    hmm
}

/// Trains one model per cluster (optionally on `threads` workers), merges
/// them, and trains the PII model on the PII-bearing posts of every user.
pub fn build_hmm(
    posts: &[TrainingPost],
    sim_threshold: f64,
    threads: usize,
) -> Result<HmmSet, PrivacyError> {
    if posts.is_empty() {
        return Err(PrivacyError::EmptyTrainingSet);
    }
    let mut by_cluster: BTreeMap<usize, Vec<&TrainingPost>> = BTreeMap::new();
    for p in posts {
        by_cluster.entry(p.cluster).or_default().push(p);
    }
    let jobs: Vec<(usize, Vec<&TrainingPost>)> = by_cluster.into_iter().collect();
    let clusters: Vec<PrivacyHmm> = if threads <= 1 || jobs.len() <= 1 {
        jobs.iter()
            .map(|(c, ps)| train_partition(ps.iter().copied(), sim_threshold, Some(*c), false))
            .collect()
    } else {
        let chunk = jobs.len().div_ceil(threads);
        std::thread::scope(|scope| {
            let handles: Vec<_> = jobs
                .chunks(chunk)
                .map(|batch| {
                    scope.spawn(move || {
                        batch
                            .iter()
                            .map(|(c, ps)| train_partition(ps.iter().copied(), sim_threshold, Some(*c), false))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("cluster training panicked"))
                .collect()
        })
    };
    let merged = PrivacyHmm::merge(&clusters, sim_threshold);
    let pii = PiiHmm(train_partition(posts.iter().filter(|p| p.has_pii), sim_threshold, None, true));
    Ok(HmmSet {
        clusters,
        merged,
        pii,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{Duration, TimeZone};

    fn unit(term: u32) -> SparseVec {
        SparseVec::from_pairs(vec![(term, 1.0)])
    }

    fn post(user: &str, i: i64, term: u32, cluster: usize) -> TrainingPost {
        TrainingPost {
            user: user.into(),
            post_id: format!("{user}{i}"),
            timestamp: Utc.with_ymd_and_hms(2020, 4, 1, 0, 0, 0).unwrap() + Duration::hours(i),
            text: format!("t{term}"),
            raw_text: format!("T{term}"),
            vector: unit(term),
            cluster,
            has_pii: false,
        }
    }

    #[test]
    fn two_distinct_posts_make_one_transition() {
        let set = build_hmm(&[post("u1", 0, 0, 0), post("u1", 1, 1, 0)], 0.8, 1).unwrap();
        let hmm = &set.merged;
        assert_eq!(hmm.len(), 2);
        assert_eq!(hmm.transition_count(NodeId(0), NodeId(1)), 1);
        assert_eq!(hmm.node(NodeId(0)).transition_total(), 1);
        assert_eq!(hmm.initial_count(NodeId(0)), 1);
    }

    #[test]
    fn shared_post_splits_observation_probability() {
        let set = build_hmm(&[post("u1", 0, 0, 0), post("u2", 0, 0, 0)], 0.8, 1).unwrap();
        let hmm = &set.merged;
        assert_eq!(hmm.len(), 1);
        let a = NodeId(0);
        assert_eq!(hmm.node(a).observation_count("u1"), 1);
        assert_eq!(hmm.node(a).observation_count("u2"), 1);
        assert_eq!(hmm.p_observation("u1", a), 0.5);
        assert_eq!(hmm.p_observation("u2", a), 0.5);
        assert_eq!(hmm.p_initial(a), 1.0);
    }

    #[test]
    fn merging_sums_shared_nodes_in_any_order() {
        let a = build_hmm(&[post("u1", 0, 0, 0), post("u1", 1, 1, 0)], 0.8, 1).unwrap();
        let b = build_hmm(&[post("u2", 0, 0, 1), post("u2", 1, 2, 1)], 0.8, 1).unwrap();
        let mut pa = a.clusters[0].clone();
        pa.partition = Some(0);
        let pb = b.clusters[0].clone();
        let ab = PrivacyHmm::merge(&[pa.clone(), pb.clone()], 0.8);
        let ba = PrivacyHmm::merge(&[pb, pa], 0.8);
        assert_eq!(ab, ba);
        assert_eq!(ab.len(), 3);
        assert_eq!(ab.node(NodeId(0)).total_observations, 2);
        assert_eq!(ab.initial_count(NodeId(0)), 2);
    }

    #[test]
    fn parallel_training_matches_sequential() {
        let posts: Vec<_> = (0..40)
            .map(|i| post(&format!("u{}", i % 7), i, (i % 9) as u32, (i % 4) as usize))
            .collect();
        let seq = build_hmm(&posts, 0.8, 1).unwrap();
        let par = build_hmm(&posts, 0.8, 3).unwrap();
        assert_eq!(seq, par);
    }

    #[test]
    fn empty_training_set_is_an_error() {
        assert!(matches!(build_hmm(&[], 0.8, 1), Err(PrivacyError::EmptyTrainingSet)));
    }

    #[test]
    fn match_node_threshold_and_ties() {
        let mut hmm = PrivacyHmm::new(0.8, None);
        hmm.observe_sequence(
            "u",
            [("a", &unit(0)), ("b", &unit(1))],
        );
        assert_eq!(hmm.match_node(&unit(0)), Some(NodeId(0)));
        assert_eq!(hmm.match_node(&unit(5)), None);
        let mixed = SparseVec::from_pairs(vec![(0, 1.0), (1, 1.0)]).normalized();
        // cosine 0.707 < 0.8
        assert_eq!(hmm.match_node(&mixed), None);
        assert_eq!(match_node(&hmm, &mixed, 0.5), Some(NodeId(0)));
    }

    #[test]
    fn json_round_trip_keeps_matching() {
        let set = build_hmm(&[post("u1", 0, 0, 0), post("u1", 1, 3, 0)], 0.8, 1).unwrap();
        let back = HmmSet::from_json(&set.to_json()).unwrap();
        assert_eq!(back.merged.match_node(&unit(3)), Some(NodeId(1)));
        assert_eq!(back, set);
    }
}
