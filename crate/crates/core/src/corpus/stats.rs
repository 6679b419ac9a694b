use std::collections::BTreeMap;

use serde::Serialize;

use super::{PeriodLabel, PostRecord};

/// Exact integer histograms over a classified corpus.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CorpusStats {
    pub total: usize,
    /// posts-per-user value → number of users
    pub posts_per_user: BTreeMap<usize, usize>,
    /// hashtags-per-post value → number of posts
    pub hashtags_per_post: BTreeMap<usize, usize>,
    /// (country, phase) → posts
    pub posts_per_phase: BTreeMap<(String, PeriodLabel), usize>,
}

impl CorpusStats {
    pub fn phase_total(&self, label: PeriodLabel) -> usize {
        self.posts_per_phase
            .iter()
            .filter(|((_, l), _)| *l == label)
            .map(|(_, n)| n)
            .sum()
    }
}

/// Mergeable accumulator; shards can be counted independently and merged
/// in any order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StatsAccumulator {
    total: usize,
    per_user: BTreeMap<String, usize>,
    hashtags_per_post: BTreeMap<usize, usize>,
    posts_per_phase: BTreeMap<(String, PeriodLabel), usize>,
}

impl StatsAccumulator {
    pub fn add(&mut self, record: &PostRecord, label: PeriodLabel) {
        self.total += 1;
        *self.per_user.entry(record.user_id.clone()).or_default() += 1;
        *self.hashtags_per_post.entry(record.hashtags.len()).or_default() += 1;
        let country = record.country.clone().unwrap_or_default();
        *self.posts_per_phase.entry((country, label)).or_default() += 1;
    }

    pub fn merge(&mut self, other: StatsAccumulator) {
        self.total += other.total;
        for (k, v) in other.per_user {
            *self.per_user.entry(k).or_default() += v;
        }
        for (k, v) in other.hashtags_per_post {
            *self.hashtags_per_post.entry(k).or_default() += v;
        }
        for (k, v) in other.posts_per_phase {
            *self.posts_per_phase.entry(k).or_default() += v;
        }
    }

    pub fn finish(self) -> CorpusStats {
        let mut posts_per_user = BTreeMap::new();
        for n in self.per_user.into_values() {
            *posts_per_user.entry(n).or_default() += 1;
        }
        CorpusStats {
            total: self.total,
            posts_per_user,
            hashtags_per_post: self.hashtags_per_post,
            posts_per_phase: self.posts_per_phase,
        }
    }
}

pub fn corpus_stats<'a>(
    records: impl IntoIterator<Item = (&'a PostRecord, PeriodLabel)>,
) -> CorpusStats {
    let mut acc = StatsAccumulator::default();
    for (record, label) in records {
        acc.add(record, label);
    }
    acc.finish()
}
