use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::reports::{ReportWindow, ScanReport};
use crate::corpus::{PeriodLabel, Phase};

pub const DEFAULT_TIERS: [f64; 5] = [3.0, 10.0, 20.0, 40.0, 55.0];
/// Score from which a domain counts as suspicious in category breakdowns.
pub const SUSPICIOUS_THRESHOLD: f64 = 3.0;

/// Which reports divide the summed positives.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Denominator {
    /// Every in-window report.
    #[default]
    AllReports,
    /// Only reports with at least one positive.
    PositiveReports,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VtScore {
    pub domain: String,
    pub score: f64,
    pub reports: usize,
    pub window: ReportWindow,
}

/// Mean positives over a domain's in-window reports, defined only when at
/// least one report has a positive.
pub fn vtscore(domain: &str, reports: &[ScanReport], window: ReportWindow, mode: Denominator) -> Option<VtScore> {
    if !reports.iter().any(|r| r.positives >= 1) {
        return None;
    }
    let counted: Vec<&ScanReport> = match mode {
        Denominator::AllReports => reports.iter().collect(),
        Denominator::PositiveReports => reports.iter().filter(|r| r.positives >= 1).collect(),
    };
    let sum: u64 = counted.iter().map(|r| r.positives as u64).sum();
    Some(VtScore {
        domain: domain.to_string(),
        score: sum as f64 / counted.len() as f64,
        reports: counted.len(),
        window,
    })
}

/// Highest threshold the score reaches.
pub fn tier(score: f64, thresholds: &[f64]) -> Option<f64> {
    thresholds
        .iter()
        .copied()
        .filter(|&t| score >= t)
        .max_by(f64::total_cmp)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainDossier {
    pub domain: String,
    pub suffix: String,
    pub category: String,
    pub score: Option<VtScore>,
    pub tier: Option<f64>,
    /// How often the domain was shared per (country, phase).
    #[serde(with = "share_list")]
    pub shares: BTreeMap<(String, PeriodLabel), u64>,
}

impl DomainDossier {
    pub fn new(domain: &str, suffix: &str, category: &str, score: Option<VtScore>, thresholds: &[f64]) -> Self {
        let tier = score.as_ref().and_then(|s| tier(s.score, thresholds));
        Self {
            domain: domain.to_string(),
            suffix: suffix.to_string(),
            category: category.to_string(),
            score,
            tier,
            shares: BTreeMap::new(),
        }
    }

    pub fn score_value(&self) -> Option<f64> {
        self.score.as_ref().map(|s| s.score)
    }

    pub fn shares_in(&self, phase: PeriodLabel) -> u64 {
        self.shares
            .iter()
            .filter(|((_, p), _)| *p == phase)
            .map(|(_, n)| n)
            .sum()
    }
}

/// JSON maps need string keys, so shares travel as
/// `[{"country":…,"phase":…,"count":n}]`.
mod share_list {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::corpus::PeriodLabel;

    #[derive(Serialize, Deserialize)]
    struct Share {
        country: String,
        phase: PeriodLabel,
        count: u64,
    }

    pub fn serialize<S: Serializer>(map: &BTreeMap<(String, PeriodLabel), u64>, s: S) -> Result<S::Ok, S::Error> {
        map.iter()
            .map(|((country, phase), &count)| Share {
                country: country.clone(),
                phase: *phase,
                count,
            })
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<(String, PeriodLabel), u64>, D::Error> {
        Ok(Vec::<Share>::deserialize(d)?
            .into_iter()
            .map(|s| ((s.country, s.phase), s.count))
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierRow {
    pub threshold: f64,
    pub phase: Phase,
    /// Shares of domains scoring at least `threshold`.
    pub total: u64,
    /// Distinct such domains.
    pub unique: u64,
}

/// One row per (threshold, phase). Shares outside every phase window are
/// not counted.
pub fn tier_table(dossiers: &[DomainDossier], thresholds: &[f64]) -> Vec<TierRow> {
    let mut rows = Vec::new();
    for &threshold in thresholds {
        for phase in Phase::ALL {
            let mut total = 0;
            let mut unique = 0;
            for d in dossiers {
                if d.score_value().is_some_and(|s| s >= threshold) {
                    let n = d.shares_in(PeriodLabel::from(phase));
                    total += n;
                    unique += u64::from(n > 0);
                }
            }
            rows.push(TierRow {
                threshold,
                phase,
                total,
                unique,
            });
        }
    }
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryShare {
    pub country: String,
    pub phase: PeriodLabel,
    pub category: String,
    pub domains: u64,
    pub fraction: f64,
}

/// Share of suspicious domains (score ≥ `min_score`) per category within
/// each (country, phase) they were shared in. Groups with no suspicious
/// domain are omitted.
pub fn category_distribution(dossiers: &[DomainDossier], min_score: f64) -> Vec<CategoryShare> {
    let mut groups: BTreeMap<(String, PeriodLabel), BTreeMap<&str, BTreeSet<&str>>> = BTreeMap::new();
    for d in dossiers {
        if !d.score_value().is_some_and(|s| s >= min_score) {
            continue;
        }
        for (key, &n) in &d.shares {
            if n > 0 {
                groups
                    .entry(key.clone())
                    .or_default()
                    .entry(d.category.as_str())
                    .or_default()
                    .insert(d.domain.as_str());
            }
        }
    }
    let mut out = Vec::new();
    for ((country, phase), cats) in groups {
        let total: usize = cats.values().map(BTreeSet::len).sum();
        for (category, domains) in cats {
            out.push(CategoryShare {
                country: country.clone(),
                phase,
                category: category.to_string(),
                domains: domains.len() as u64,
                fraction: domains.len() as f64 / total as f64,
            });
        }
    }
    out
}
