use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::hmm::{PiiHmm, PrivacyHmm};
use super::score::{linkability_prior_with, trace_with_prior, PathLimits, PriorResult, RiskTrace};
use crate::corpus::PeriodLabel;
use crate::textmodel::SparseVec;

/// Group name under which every sequence is pooled.
pub const ALL_TOPICS: &str = "all";

/// A user's chronological test posts within one (topic, phase).
#[derive(Debug, Clone, PartialEq)]
pub struct TestSequence {
    pub user: String,
    pub topic: String,
    pub phase: PeriodLabel,
    pub vectors: Vec<SparseVec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSequence {
    pub topic: String,
    pub phase: PeriodLabel,
    pub trace: RiskTrace,
    /// Probability with the linkability prior replaced by 1.
    pub probability_without_pii: f64,
    pub unique: bool,
    pub uniform: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub topic: String,
    pub risk: f64,
    /// Share of the topic's sequences with risk at most `risk`.
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskAtLength {
    pub topic: String,
    pub posts: usize,
    /// Sequences with at least `posts` posts.
    pub sequences: usize,
    pub mean_risk: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CohortSummary {
    pub sequences: usize,
    /// Some step matched no node or followed an unobserved transition.
    pub unique: usize,
    /// Two or more steps matched the same node.
    pub uniform: usize,
    /// Risk exactly 1.
    pub fully_identified: usize,
    pub pii_users: usize,
    pub pii_sequences: usize,
    pub mean_risk_with_pii: f64,
    pub mean_risk_without_pii: f64,
    pub truncated_priors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortReport {
    pub scored: Vec<ScoredSequence>,
    pub cdf: Vec<CdfPoint>,
    pub risk_vs_posts: Vec<RiskAtLength>,
    pub summary: CohortSummary,
}

fn cdf_points(topic: &str, risks: &mut [f64]) -> Vec<CdfPoint> {
    risks.sort_by(f64::total_cmp);
    let n = risks.len() as f64;
    let mut points: Vec<CdfPoint> = Vec::new();
    for (i, &r) in risks.iter().enumerate() {
        let fraction = (i + 1) as f64 / n;
        match points.last_mut() {
            Some(last) if last.risk == r => last.fraction = fraction,
            _ => points.push(CdfPoint {
                topic: topic.to_string(),
                risk: r,
                fraction,
            }),
        }
    }
    points
}

/// Scores every test sequence and derives the risk CDF per topic, the mean
/// risk after `n = 1..=max_posts` posts, and the unique/uniform counts.
/// Input order does not matter; outputs are sorted by topic, phase, user.
pub fn cohort_report(
    hmm: &PrivacyHmm,
    pii: &PiiHmm,
    sequences: &[TestSequence],
    limits: PathLimits,
    max_posts: usize,
) -> CohortReport {
    let mut order: Vec<&TestSequence> = sequences.iter().collect();
    order.sort_by(|a, b| (&a.topic, a.phase, &a.user).cmp(&(&b.topic, b.phase, &b.user)));

    let mut priors: BTreeMap<&str, PriorResult> = BTreeMap::new();
    let mut scored = Vec::with_capacity(order.len());
    for seq in order {
        let prior = *priors
            .entry(seq.user.as_str())
            .or_insert_with(|| linkability_prior_with(pii, &seq.user, limits));
        let trace = trace_with_prior(hmm, &seq.user, &seq.vectors, prior);
        let probability_without_pii = trace.steps.iter().map(|s| s.factor).product();
        let unique = trace
            .steps
            .iter()
            .any(|s| s.node.is_none() || s.transition_part() == 0.0);
        let mut seen = BTreeSet::new();
        let uniform = trace.steps.iter().filter_map(|s| s.node).any(|n| !seen.insert(n));
        scored.push(ScoredSequence {
            topic: seq.topic.clone(),
            phase: seq.phase,
            trace,
            probability_without_pii,
            unique,
            uniform,
        });
    }

    let mut by_topic: BTreeMap<&str, Vec<&ScoredSequence>> = BTreeMap::new();
    for s in &scored {
        by_topic.entry(s.topic.as_str()).or_default().push(s);
        by_topic.entry(ALL_TOPICS).or_default().push(s);
    }
    let mut cdf = Vec::new();
    let mut risk_vs_posts = Vec::new();
    for (topic, group) in &by_topic {
        let mut risks: Vec<f64> = group.iter().map(|s| s.trace.risk).collect();
        cdf.extend(cdf_points(topic, &mut risks));
        for n in 1..=max_posts {
            let eligible: Vec<f64> = group
                .iter()
                .filter(|s| s.trace.steps.len() >= n)
                .map(|s| s.trace.risk_after(n))
                .collect();
            if eligible.is_empty() {
                break;
            }
            risk_vs_posts.push(RiskAtLength {
                topic: topic.to_string(),
                posts: n,
                sequences: eligible.len(),
                mean_risk: eligible.iter().sum::<f64>() / eligible.len() as f64,
            });
        }
    }

    let pii_users: BTreeSet<&str> = scored
        .iter()
        .filter(|s| !pii.observed_by(&s.trace.user).is_empty())
        .map(|s| s.trace.user.as_str())
        .collect();
    let pii_scored: Vec<&ScoredSequence> = scored
        .iter()
        .filter(|s| pii_users.contains(s.trace.user.as_str()))
        .collect();
    let mean = |xs: &mut dyn Iterator<Item = f64>| {
        let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    };
    let summary = CohortSummary {
        sequences: scored.len(),
        unique: scored.iter().filter(|s| s.unique).count(),
        uniform: scored.iter().filter(|s| s.uniform).count(),
        fully_identified: scored.iter().filter(|s| s.trace.risk == 1.0).count(),
        pii_users: pii_users.len(),
        pii_sequences: pii_scored.len(),
        mean_risk_with_pii: mean(&mut pii_scored.iter().map(|s| s.trace.risk)),
        mean_risk_without_pii: mean(&mut pii_scored.iter().map(|s| 1.0 - s.probability_without_pii)),
        truncated_priors: priors.values().filter(|p| p.truncated).count(),
    };
    CohortReport {
        scored,
        cdf,
        risk_vs_posts,
        summary,
    }
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

    fn seq(user: &str, topic: &str, terms: &[u32]) -> TestSequence {
        TestSequence {
            user: user.into(),
            topic: topic.into(),
            phase: PeriodLabel::During,
            vectors: terms.iter().map(|&t| unit(t)).collect(),
        }
    }

    #[test]
    fn all_identified_cohort_is_a_step_at_one() {
        let hmm = model(&[("a", &[0]), ("b", &[1])]);
        let pii = PiiHmm(PrivacyHmm::new(0.8, None));
        let r = cohort_report(&hmm, &pii, &[seq("a", "x", &[9]), seq("b", "x", &[8])], PathLimits::default(), 40);
        let x: Vec<_> = r.cdf.iter().filter(|p| p.topic == "x").collect();
        assert_eq!(x.len(), 1);
        assert_eq!((x[0].risk, x[0].fraction), (1.0, 1.0));
        assert_eq!(r.summary.unique, 2);
        assert_eq!(r.summary.fully_identified, 2);
    }

    #[test]
    fn unique_and_uniform_flags() {
        let hmm = model(&[("a", &[0, 1, 0]), ("b", &[0, 1])]);
        let pii = PiiHmm(PrivacyHmm::new(0.8, None));
        let seqs = [
            seq("a", "x", &[0, 1, 0]), // known path, repeats node 0
            seq("b", "x", &[0, 1]),    // known path
            seq("b", "y", &[1, 1]),    // never started at 1, never looped 1→1
        ];
        let r = cohort_report(&hmm, &pii, &seqs, PathLimits::default(), 40);
        let flags: Vec<_> = r.scored.iter().map(|s| (s.trace.user.as_str(), s.unique, s.uniform)).collect();
        assert_eq!(flags, [("a", false, true), ("b", false, false), ("b", true, true)]);
    }

    #[test]
    fn risk_vs_posts_uses_eligible_sequences() {
        let hmm = model(&[("a", &[0, 1]), ("b", &[0, 2])]);
        let pii = PiiHmm(PrivacyHmm::new(0.8, None));
        let r = cohort_report(&hmm, &pii, &[seq("a", "x", &[0, 1]), seq("b", "x", &[0])], PathLimits::default(), 40);
        let x: Vec<_> = r.risk_vs_posts.iter().filter(|p| p.topic == "x").collect();
        assert_eq!(x.len(), 2);
        assert_eq!((x[0].sequences, x[1].sequences), (2, 1));
        // after one post both have factor (1/2)(1 − 1/2) = 1/4
        assert!((x[0].mean_risk - 0.75).abs() < 1e-12);
    }

    #[test]
    fn pii_prior_only_lowers_probability() {
        let hmm = model(&[("a", &[0, 1]), ("b", &[0, 2])]);
        let pii = PiiHmm(model(&[("a", &[7]), ("b", &[7])]));
        let r = cohort_report(&hmm, &pii, &[seq("a", "x", &[0, 1])], PathLimits::default(), 40);
        let s = &r.scored[0];
        assert!(s.trace.probability <= s.probability_without_pii);
        assert_eq!(r.summary.pii_users, 1);
        assert!(r.summary.mean_risk_with_pii >= r.summary.mean_risk_without_pii);
    }
}
