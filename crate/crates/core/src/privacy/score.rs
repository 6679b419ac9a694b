use std::io::Write;

use serde::{Deserialize, Serialize};

use super::hmm::{NodeId, PiiHmm, PrivacyHmm};
use crate::textmodel::SparseVec;

/// What preceded the current step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Previous {
    Start,
    Node(NodeId),
    /// The previous post matched no node, so no transition can be known.
    Unseen,
}

/// One scored step. `node` is `None` for a post that matched no node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub node: Option<NodeId>,
    pub transition_weight: f64,
    pub transition_prob: f64,
    pub observation_weight: f64,
    pub observation_prob: f64,
    pub factor: f64,
    /// Prior times every factor up to and including this one.
    pub cumulative: f64,
}

impl TraceStep {
    pub fn transition_part(&self) -> f64 {
        self.transition_weight * self.transition_prob
    }

    pub fn observation_part(&self) -> f64 {
        1.0 - self.observation_weight * self.observation_prob
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskTrace {
    pub user: String,
    pub steps: Vec<TraceStep>,
    pub linkability_prior: f64,
    pub prior_paths: usize,
    pub prior_truncated: bool,
    pub probability: f64,
    pub risk: f64,
}

impl RiskTrace {
    /// Risk after the first `n` posts (the prior alone for `n = 0`).
    pub fn risk_after(&self, n: usize) -> f64 {
        let p = match n.min(self.steps.len()) {
            0 => self.linkability_prior,
            n => self.steps[n - 1].cumulative,
        };
        1.0 - p
    }
}

/// Step factor with every intermediate quantity. An unseen node is scored
/// as a new node observed once by this user.
pub fn step_parts(hmm: &PrivacyHmm, user: &str, prev: Previous, node: Option<NodeId>) -> TraceStep {
    let Some(node) = node else {
        return TraceStep {
            node: None,
            transition_weight: 0.0,
            transition_prob: 0.0,
            observation_weight: 1.0,
            observation_prob: 1.0,
            factor: 0.0,
            cumulative: 0.0,
        };
    };
    let count = match prev {
        Previous::Start => hmm.initial_count(node),
        Previous::Node(p) => hmm.transition_count(p, node),
        Previous::Unseen => 0,
    };
    let (transition_weight, transition_prob) = if count == 0 {
        (0.0, 0.0)
    } else {
        let p = match prev {
            Previous::Start => hmm.p_initial(node),
            Previous::Node(p) => hmm.p_transition(p, node),
            Previous::Unseen => unreachable!(),
        };
        (1.0 / count as f64, p)
    };
    let observed = hmm.node(node).observation_count(user);
    let (observation_weight, observation_prob) = if observed == 0 {
        (0.0, 0.0)
    } else {
        (1.0 / observed as f64, hmm.p_observation(user, node))
    };
    let factor = (transition_weight * transition_prob) * (1.0 - observation_weight * observation_prob);
    TraceStep {
        node: Some(node),
        transition_weight,
        transition_prob,
        observation_weight,
        observation_prob,
        factor: factor.clamp(0.0, 1.0),
        cumulative: 0.0,
    }
}

pub fn step_factor(hmm: &PrivacyHmm, user: &str, prev: Previous, node: Option<NodeId>) -> f64 {
    step_parts(hmm, user, prev, node).factor
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathLimits {
    /// Longest path considered, in nodes.
    pub max_length: usize,
    pub max_paths: usize,
}

impl Default for PathLimits {
    fn default() -> Self {
        Self {
            max_length: 6,
            max_paths: 100_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorResult {
    pub prior: f64,
    /// Paths visited before stopping.
    pub paths: usize,
    pub truncated: bool,
}

struct PathSearch<'a> {
    hmm: &'a PrivacyHmm,
    user: &'a str,
    limits: PathLimits,
    on_path: Vec<bool>,
    best: f64,
    paths: usize,
    truncated: bool,
}

impl PathSearch<'_> {
    fn done(&self) -> bool {
        self.truncated || self.best == 0.0
    }

    fn visit(&mut self, prev: Previous, node: NodeId, product: f64, depth: usize, touches_user: bool) {
        if self.done() {
            return;
        }
        if self.paths >= self.limits.max_paths {
            self.truncated = true;
            return;
        }
        self.paths += 1;
        let product = product * step_factor(self.hmm, self.user, prev, Some(node));
        let touches_user = touches_user || self.hmm.node(node).observation_count(self.user) > 0;
        if touches_user && product < self.best {
            self.best = product;
        }
        if depth >= self.limits.max_length {
            return;
        }
        self.on_path[node.0 as usize] = true;
        for (&next, &count) in &self.hmm.node(node).transitions {
            if count > 0 && !self.on_path[next.0 as usize] {
                self.visit(Previous::Node(node), next, product, depth + 1, touches_user);
                if self.done() {
                    break;
                }
            }
        }
        self.on_path[node.0 as usize] = false;
    }
}

/// Minimum path product over simple paths of the PII model that pass
/// through a node the user was observed at. Paths begin at nodes that
/// started at least one training sequence and follow observed transitions.
/// Returns 1 when the user has no PII node or no such path exists.
pub fn linkability_prior_with(pii: &PiiHmm, user: &str, limits: PathLimits) -> PriorResult {
    let hmm: &PrivacyHmm = pii;
    if hmm.observed_by(user).is_empty() {
        return PriorResult {
            prior: 1.0,
            paths: 0,
            truncated: false,
        };
    }
    let mut search = PathSearch {
        hmm,
        user,
        limits,
        on_path: vec![false; hmm.len()],
        best: f64::INFINITY,
        paths: 0,
        truncated: false,
    };
    for (&start, &count) in &hmm.initial {
        if count > 0 && limits.max_length > 0 {
            search.visit(Previous::Start, start, 1.0, 1, false);
        }
        if search.done() {
            break;
        }
    }
    PriorResult {
        prior: if search.best.is_finite() { search.best } else { 1.0 },
        paths: search.paths,
        truncated: search.truncated,
    }
}

pub fn linkability_prior(pii: &PiiHmm, user: &str) -> f64 {
    linkability_prior_with(pii, user, PathLimits::default()).prior
}

/// Scores a chronological sequence of L2-normalised post vectors against
/// `hmm`, given an already computed prior.
pub fn trace_with_prior(hmm: &PrivacyHmm, user: &str, vectors: &[SparseVec], prior: PriorResult) -> RiskTrace {
    let mut prev = Previous::Start;
    let mut cumulative = prior.prior;
    let mut steps = Vec::with_capacity(vectors.len());
    for v in vectors {
        let node = hmm.match_node(v);
        let mut step = step_parts(hmm, user, prev, node);
        cumulative *= step.factor;
        step.cumulative = cumulative;
        steps.push(step);
        prev = node.map_or(Previous::Unseen, Previous::Node);
    }
    RiskTrace {
        user: user.to_string(),
        steps,
        linkability_prior: prior.prior,
        prior_paths: prior.paths,
        prior_truncated: prior.truncated,
        probability: cumulative,
        risk: 1.0 - cumulative,
    }
}

pub fn sequence_privacy(
    hmm: &PrivacyHmm,
    pii: &PiiHmm,
    user: &str,
    vectors: &[SparseVec],
    limits: PathLimits,
) -> RiskTrace {
    trace_with_prior(hmm, user, vectors, linkability_prior_with(pii, user, limits))
}

/// One JSON object per line, in the given order.
pub fn write_traces_jsonl<W: Write>(traces: &[RiskTrace], mut out: W) -> std::io::Result<()> {
    for t in traces {
        serde_json::to_writer(&mut out, t)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(term: u32) -> SparseVec {
        SparseVec::from_pairs(vec![(term, 1.0)])
    }

    fn model(sequences: &[(&str, &[u32])]) -> PrivacyHmm {
        let mut hmm = PrivacyHmm::new(0.8, None);
        for (user, terms) in sequences {
            let vs: Vec<SparseVec> = terms.iter().map(|&t| unit(t)).collect();
            let texts: Vec<String> = terms.iter().map(|t| format!("t{t}")).collect();
            hmm.observe_sequence(user, texts.iter().map(String::as_str).zip(vs.iter()));
        }
        hmm
    }

    #[test]
    fn lone_user_lone_node_factor_is_zero() {
        let hmm = model(&[("u1", &[0])]);
        assert_eq!(step_factor(&hmm, "u1", Previous::Start, Some(NodeId(0))), 0.0);
    }

    #[test]
    fn shared_node_halves_the_observation_part() {
        // P and Q each lead only to A, so reaching A has transition part 1
        let hmm = model(&[("u1", &[1, 0]), ("u2", &[2, 0])]);
        let a = hmm.match_node(&unit(0)).unwrap();
        let p = hmm.match_node(&unit(1)).unwrap();
        let step = step_parts(&hmm, "u1", Previous::Node(p), Some(a));
        assert_eq!(step.transition_part(), 1.0);
        assert_eq!(step.observation_part(), 0.5);
        assert_eq!(step.factor, 0.5);
    }

    #[test]
    fn unobserved_user_keeps_transition_part() {
        let hmm = model(&[("u1", &[0, 1]), ("u2", &[0, 2])]);
        let a = NodeId(0);
        let step = step_parts(&hmm, "stranger", Previous::Start, Some(a));
        assert_eq!(step.observation_part(), 1.0);
        assert_eq!(step.factor, step.transition_part());
        assert_eq!(step.factor, 0.5);
    }

    #[test]
    fn unseen_transition_and_node_score_zero() {
        let hmm = model(&[("u1", &[0, 1]), ("u2", &[2])]);
        assert_eq!(step_factor(&hmm, "x", Previous::Node(NodeId(1)), Some(NodeId(0))), 0.0);
        assert_eq!(step_factor(&hmm, "x", Previous::Start, None), 0.0);
        assert_eq!(step_factor(&hmm, "x", Previous::Unseen, Some(NodeId(0))), 0.0);
    }

    #[test]
    fn empty_sequence_has_no_risk() {
        let hmm = model(&[("u1", &[0])]);
        let pii = PiiHmm(PrivacyHmm::new(0.8, None));
        let t = sequence_privacy(&hmm, &pii, "u1", &[], PathLimits::default());
        assert_eq!((t.probability, t.risk), (1.0, 0.0));
    }

    #[test]
    fn repeated_unique_post_is_fully_identifying() {
        let hmm = model(&[("u1", &[0])]);
        let pii = PiiHmm(PrivacyHmm::new(0.8, None));
        let t = sequence_privacy(&hmm, &pii, "u1", &[unit(0)], PathLimits::default());
        assert_eq!(t.risk, 1.0);
    }

    #[test]
    fn prior_for_users_without_pii_is_one() {
        let pii = PiiHmm(model(&[("u1", &[0])]));
        assert_eq!(linkability_prior(&pii, "u2"), 1.0);
        assert_eq!(linkability_prior(&pii, "u1"), 0.0);
    }

    #[test]
    fn prior_takes_min_over_paths() {
        // starts A×2, C×1; u2 is observed at every node.
        // A: (1/2 · 2/3)(1 − 1/3) = 2/9, A→B: (1/2 · 1)(1 − 1/2) = 1/4,
        // B→C: (1 · 1)(1 − 1/2) = 1/2, so A-B-C = 1/36 (C-A-B ties).
        let pii = PiiHmm(model(&[("u1", &[0, 1]), ("u2", &[0, 1, 2]), ("u3", &[2, 0])]));
        let r = linkability_prior_with(&pii, "u2", PathLimits::default());
        assert!(!r.truncated);
        assert!((r.prior - 1.0 / 36.0).abs() < 1e-12, "{}", r.prior);
    }

    #[test]
    fn path_cap_marks_truncation() {
        let pii = PiiHmm(model(&[("u1", &[0, 1, 2, 3]), ("u2", &[3, 2, 1, 0])]));
        let r = linkability_prior_with(
            &pii,
            "u1",
            PathLimits {
                max_length: 6,
                max_paths: 2,
            },
        );
        assert!(r.truncated);
        assert_eq!(r.paths, 2);
    }

    #[test]
    fn cumulative_matches_product() {
        let hmm = model(&[("u1", &[0, 1, 0]), ("u2", &[0, 1, 2]), ("u3", &[1, 2])]);
        let pii = PiiHmm(model(&[("u2", &[5])]));
        let t = sequence_privacy(&hmm, &pii, "u2", &[unit(0), unit(1), unit(2)], PathLimits::default());
        let product: f64 = t.linkability_prior * t.steps.iter().map(|s| s.factor).product::<f64>();
        assert!((t.probability - product).abs() < 1e-12);
        assert_eq!(t.risk_after(3), t.risk);
        assert!(t.risk_after(1) <= t.risk_after(2));
    }

    #[test]
    fn traces_export_as_jsonl() {
        let hmm = model(&[("u1", &[0])]);
        let pii = PiiHmm(PrivacyHmm::new(0.8, None));
        let t = sequence_privacy(&hmm, &pii, "u1", &[unit(0)], PathLimits::default());
        let mut out = Vec::new();
        write_traces_jsonl(&[t.clone(), t], &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 2);
        let back: RiskTrace = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(back.risk, 1.0);
    }
}
