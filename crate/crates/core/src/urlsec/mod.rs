//! URL and domain security analysis: registrable-domain extraction against
//! a bundled public suffix list, category lookup, scanner-report caching,
//! VTScore aggregation and suspicion tiers.
//!
//! Everything runs offline by default. The VirusTotal client is compiled
//! only with the `live` feature.

mod category;
mod psl;
mod reports;
mod score;
mod virustotal;

use std::path::PathBuf;

use url::Url;

use crate::corpus::PostRecord;

pub use category::{categorize, CategoryClient, CategoryMap, IP_LITERAL, UNCATEGORIZED};
pub use psl::{registered_domain, registered_domain_of_host, HostKind, PublicSuffixList, RegisteredDomain};
pub use reports::{
    load_reports, write_reports, Backoff, Clock, FetchError, FetchOutcome, ReportCache, ReportFetcher, ReportSource,
    ReportWindow, ScanReport, SystemClock, TokenBucket,
};
pub use score::{
    category_distribution, tier, tier_table, vtscore, CategoryShare, Denominator, DomainDossier, TierRow, VtScore,
    DEFAULT_TIERS, SUSPICIOUS_THRESHOLD,
};
pub use virustotal::{api_key_from_env, parse_domain_report, API_KEY_VAR};
#[cfg(feature = "live")]
pub use virustotal::VirusTotalClient;

#[derive(Debug, thiserror::Error)]
pub enum UrlError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Table { path: PathBuf, message: String },
    #[error("invalid URL {0}")]
    InvalidUrl(String),
    #[error("invalid host {0:?}")]
    InvalidHost(String),
    #[error("{0}: no registrable part")]
    NoRegistrablePart(String),
    #[error("live scanning requested but {0} is not set")]
    MissingApiKey(&'static str),
}

/// The record's URLs that parse as absolute URLs with a host, verbatim,
/// and the number dropped.
pub fn extract_urls(record: &PostRecord) -> (Vec<String>, usize) {
    let mut kept = Vec::new();
    let mut dropped = 0;
    for u in &record.urls {
        match Url::parse(u) {
            Ok(parsed) if parsed.host().is_some() => kept.push(u.clone()),
            _ => dropped += 1,
        }
    }
    (kept, dropped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};

    fn record(urls: &[&str]) -> PostRecord {
        PostRecord {
            user_id: "u".into(),
            post_id: "p".into(),
            timestamp: Utc.with_ymd_and_hms(2020, 4, 1, 0, 0, 0).unwrap(),
            text: String::new(),
            hashtags: vec![],
            urls: urls.iter().map(|s| s.to_string()).collect(),
            country: None,
            language: None,
        }
    }

    #[test]
    fn valid_urls_pass_verbatim() {
        let (urls, dropped) = extract_urls(&record(&["https://a.com/x?y=1", "http://B.org"]));
        assert_eq!(urls, ["https://a.com/x?y=1", "http://B.org"]);
        assert_eq!(dropped, 0);
    }

    #[test]
    fn junk_is_dropped_and_counted() {
        let (urls, dropped) = extract_urls(&record(&["notaurl", "mailto:x@y.z"]));
        assert!(urls.is_empty());
        assert_eq!(dropped, 2);
    }
}
