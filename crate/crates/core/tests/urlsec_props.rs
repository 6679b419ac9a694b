use std::collections::{BTreeMap, BTreeSet};
use std::sync::LazyLock;

use chrono::NaiveDate;
use privlens::urlsec::{
    category_distribution, registered_domain, registered_domain_of_host, tier, tier_table, vtscore, Denominator,
    DomainDossier, HostKind, PublicSuffixList, ReportCache, ReportWindow, ScanReport, DEFAULT_TIERS,
};
use privlens::PeriodLabel;
use proptest::prelude::*;

static PSL: LazyLock<PublicSuffixList> = LazyLock::new(|| PublicSuffixList::bundled(true));

fn window() -> ReportWindow {
    ReportWindow {
        start: NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(),
        end: NaiveDate::from_ymd_opt(2021, 11, 6).unwrap(),
    }
}

fn reports(domain: &str, positives: &[u32]) -> Vec<ScanReport> {
    positives
        .iter()
        .enumerate()
        .map(|(i, &p)| ScanReport {
            domain: domain.into(),
            date: NaiveDate::from_ymd_opt(2020, 3, 1).unwrap() + chrono::Duration::days(i as i64),
            positives: p,
            total: 90,
        })
        .collect()
}

#[test]
fn fifty_url_fixture_matches_hand_labels() {
    let psl = &*PSL;
    let fixture = include_str!("fixtures/registered_domains.tsv");
    let mut checked = 0;
    for line in fixture.lines().filter(|l| !l.starts_with('#') && !l.is_empty()) {
        let (url, expected) = line.split_once('\t').unwrap();
        match registered_domain(url, psl) {
            Ok(HostKind::Domain(d)) => assert_eq!(d.domain, expected, "{url}"),
            other => panic!("{url}: {other:?}"),
        }
        checked += 1;
    }
    assert_eq!(checked, 50);
}

#[test]
fn stated_denominator_example() {
    let s = vtscore("x.com", &reports("x.com", &[0, 6, 3]), window(), Denominator::AllReports).unwrap();
    assert_eq!(s.score, 3.0);
    assert!(vtscore("x.com", &reports("x.com", &[0, 0]), window(), Denominator::AllReports).is_none());
    assert!(vtscore("x.com", &[], window(), Denominator::AllReports).is_none());
}

#[test]
fn cache_window_filter_and_missing_file() {
    let mut all = reports("a.com", &[1, 2, 3]);
    all.push(ScanReport {
        domain: "a.com".into(),
        date: NaiveDate::from_ymd_opt(2022, 1, 1).unwrap(),
        positives: 4,
        total: 90,
    });
    let cache = ReportCache::from_reports(all);
    assert_eq!(cache.in_window("a.com", window()).len(), 3);
    let missing = ReportCache::load(std::path::Path::new("/nonexistent/reports.jsonl")).unwrap();
    assert!(missing.is_empty());
}

fn host_strategy() -> impl Strategy<Value = String> {
    (
        prop::collection::vec("[a-z][a-z0-9-]{0,6}[a-z0-9]", 1..4),
        prop::sample::select(vec!["com", "co.uk", "com.au", "gov.in", "github.io", "org", "blogspot.com", "ck", "de"]),
    )
        .prop_map(|(labels, suffix)| format!("{}.{suffix}", labels.join(".")))
}

proptest! {
    #[test]
    fn registered_domain_is_idempotent(host in host_strategy()) {
        let psl = &*PSL;
        if let Ok(first) = registered_domain_of_host(&host, psl) {
            prop_assert!(first.host.ends_with(&first.domain));
            prop_assert!(first.domain.ends_with(&first.suffix));
            prop_assert_eq!(first.domain.to_lowercase(), first.domain.clone());
            let again = registered_domain_of_host(&first.domain, psl).unwrap();
            prop_assert_eq!(again.domain, first.domain);
        }
    }

    #[test]
    fn appending_the_score_keeps_the_score(positives in prop::collection::vec(0u32..8, 1..10)) {
        prop_assume!(positives.iter().any(|&p| p > 0));
        let base = vtscore("d.com", &reports("d.com", &positives), window(), Denominator::AllReports).unwrap();
        let sum: u32 = positives.iter().sum();
        // Only integral scores can be appended as a report.
        prop_assume!(sum.is_multiple_of(positives.len() as u32));
        let mut extended = positives.clone();
        extended.push(base.score as u32);
        let after = vtscore("d.com", &reports("d.com", &extended), window(), Denominator::AllReports).unwrap();
        prop_assert_eq!(after.score, base.score);
    }

    #[test]
    fn tier_counts_are_consistent(
        domains in prop::collection::vec(
            (prop::collection::vec(0u32..70, 1..4), 0u64..6, prop::sample::select(PeriodLabel::ALL.to_vec()),
             prop::sample::select(vec!["News", "IT", "Health"])),
            0..20,
        ),
    ) {
        let dossiers: Vec<DomainDossier> = domains
            .iter()
            .enumerate()
            .map(|(i, (pos, n, phase, cat))| {
                let name = format!("d{i}.com");
                let score = vtscore(&name, &reports(&name, pos), window(), Denominator::AllReports);
                let mut d = DomainDossier::new(&name, "com", cat, score, &DEFAULT_TIERS);
                d.shares.insert(("AU".into(), *phase), *n);
                d
            })
            .collect();
        for d in &dossiers {
            prop_assert_eq!(d.tier, d.score_value().and_then(|s| tier(s, &DEFAULT_TIERS)));
        }
        for row in tier_table(&dossiers, &DEFAULT_TIERS) {
            prop_assert!(row.unique <= row.total);
        }

        let shares = category_distribution(&dossiers, 3.0);
        let mut oracle: BTreeMap<PeriodLabel, BTreeMap<&str, BTreeSet<String>>> = BTreeMap::new();
        for d in &dossiers {
            if d.score_value().is_some_and(|s| s >= 3.0) {
                for ((_, phase), &n) in &d.shares {
                    if n > 0 {
                        oracle.entry(*phase).or_default().entry(d.category.as_str()).or_default().insert(d.domain.clone());
                    }
                }
            }
        }
        let expected: usize = oracle.values().map(BTreeMap::len).sum();
        prop_assert_eq!(shares.len(), expected);
        for s in &shares {
            let group = &oracle[&s.phase];
            let total: usize = group.values().map(BTreeSet::len).sum();
            prop_assert_eq!(s.domains as usize, group[s.category.as_str()].len());
            prop_assert_eq!(s.fraction, s.domains as f64 / total as f64);
        }
        let mut sums: BTreeMap<PeriodLabel, f64> = BTreeMap::new();
        for s in &shares {
            *sums.entry(s.phase).or_default() += s.fraction;
        }
        prop_assert!(sums.values().all(|f| (f - 1.0).abs() <= 1e-12));
    }
}
