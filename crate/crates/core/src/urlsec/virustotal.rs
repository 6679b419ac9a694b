use chrono::NaiveDate;
use serde_json::Value;

use super::reports::ScanReport;
use super::UrlError;

pub const API_KEY_VAR: &str = "VT_API_KEY";

/// The API key from the environment; live mode cannot run without one.
pub fn api_key_from_env() -> Result<String, UrlError> {
    match std::env::var(API_KEY_VAR) {
        Ok(k) if !k.trim().is_empty() => Ok(k),
        _ => Err(UrlError::MissingApiKey(API_KEY_VAR)),
    }
}

fn scan_date(raw: &str) -> Option<NaiveDate> {
    raw.get(..10)?.parse().ok()
}

/// Maps a v2 `domain/report` response to reports, one per scanned URL
/// under the domain. `detected_urls` entries are objects and
/// `undetected_urls` entries are `[url, sha256, positives, total, date]`.
pub fn parse_domain_report(domain: &str, body: &Value) -> Vec<ScanReport> {
    let mut out = Vec::new();
    if let Some(items) = body.get("detected_urls").and_then(Value::as_array) {
        for item in items {
            let positives = item.get("positives").and_then(Value::as_u64);
            let total = item.get("total").and_then(Value::as_u64);
            let date = item.get("scan_date").and_then(Value::as_str).and_then(scan_date);
            if let (Some(p), Some(t), Some(date)) = (positives, total, date) {
                out.push(ScanReport {
                    domain: domain.to_string(),
                    date,
                    positives: p as u32,
                    total: t as u32,
                });
            }
        }
    }
    if let Some(items) = body.get("undetected_urls").and_then(Value::as_array) {
        for item in items.iter().filter_map(Value::as_array) {
            let positives = item.get(2).and_then(Value::as_u64);
            let total = item.get(3).and_then(Value::as_u64);
            let date = item.get(4).and_then(Value::as_str).and_then(scan_date);
            if let (Some(p), Some(t), Some(date)) = (positives, total, date) {
                out.push(ScanReport {
                    domain: domain.to_string(),
                    date,
                    positives: p as u32,
                    total: t as u32,
                });
            }
        }
    }
    out.retain(ScanReport::is_valid);
    out
}

#[cfg(feature = "live")]
pub use live::VirusTotalClient;

#[cfg(feature = "live")]
mod live {
    use std::time::Duration;

    use super::super::reports::{FetchError, ReportSource, ScanReport};
    use super::super::UrlError;
    use super::{api_key_from_env, parse_domain_report};

    const ENDPOINT: &str = "https://www.virustotal.com/vtapi/v2/domain/report";

    pub struct VirusTotalClient {
        http: reqwest::blocking::Client,
        api_key: String,
        endpoint: String,
    }

    impl VirusTotalClient {
        pub fn from_env() -> Result<Self, UrlError> {
            Ok(Self::new(api_key_from_env()?, ENDPOINT))
        }

        pub fn new(api_key: String, endpoint: &str) -> Self {
            let http = reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(30))
                .build()
                .expect("HTTP client builds");
            Self {
                http,
                api_key,
                endpoint: endpoint.to_string(),
            }
        }
    }

    impl ReportSource for VirusTotalClient {
        fn fetch(&mut self, domain: &str) -> Result<Vec<ScanReport>, FetchError> {
            let response = self
                .http
                .get(&self.endpoint)
                .query(&[("apikey", self.api_key.as_str()), ("domain", domain)])
                .send()
                .map_err(|e| FetchError::Transport(e.to_string()))?;
            let status = response.status();
            // the v2 API answers 204 once the quota is spent
            if status.as_u16() == 204 || status.as_u16() == 429 {
                return Err(FetchError::RateLimited);
            }
            if !status.is_success() {
                return Err(FetchError::Transport(format!("HTTP {status}")));
            }
            let body: serde_json::Value = response.json().map_err(|e| FetchError::Transport(e.to_string()))?;
            Ok(parse_domain_report(domain, &body))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maps_detected_and_undetected_entries() {
        let body = serde_json::json!({
            "response_code": 1,
            "detected_urls": [
                {"url": "http://bad.example/x", "positives": 4, "total": 70, "scan_date": "2020-05-02 10:11:12"},
                {"url": "http://bad.example/y", "positives": 1, "total": 70}
            ],
            "undetected_urls": [
                ["http://bad.example/z", "abc", 0, 69, "2020-06-01 00:00:00"],
                ["broken"]
            ]
        });
        let got = parse_domain_report("bad.example", &body);
        assert_eq!(got.len(), 2);
        assert_eq!((got[0].positives, got[0].date.to_string().as_str()), (4, "2020-05-02"));
        assert_eq!((got[1].positives, got[1].total), (0, 69));
    }

    #[test]
    fn empty_response_has_no_reports() {
        assert!(parse_domain_report("a.com", &serde_json::json!({"response_code": 0})).is_empty());
    }
}
