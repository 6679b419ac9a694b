use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::UrlError;

/// One scanner report for a domain. Serialised as
/// `{"domain":…,"date":"YYYY-MM-DD","positives":n,"total":m}`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ScanReport {
    pub domain: String,
    pub date: NaiveDate,
    pub positives: u32,
    pub total: u32,
}

impl ScanReport {
    pub fn is_valid(&self) -> bool {
        self.total > 0 && self.positives <= self.total && !self.domain.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportWindow {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl ReportWindow {
    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }
}

/// Reports grouped by domain, each group in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReportCache {
    by_domain: BTreeMap<String, Vec<ScanReport>>,
    pub skipped: usize,
    path: Option<PathBuf>,
}

impl ReportCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_reports(reports: impl IntoIterator<Item = ScanReport>) -> Self {
        let mut cache = Self::new();
        for r in reports {
            cache.insert(r);
        }
        cache
    }

    /// Reads a JSONL cache. A missing file is an empty cache; malformed or
    /// inconsistent lines are skipped and counted.
    pub fn load(path: &Path) -> Result<Self, UrlError> {
        let mut cache = Self {
            path: Some(path.to_path_buf()),
            ..Self::default()
        };
        let file = match std::fs::File::open(path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                log::info!("report cache {} not found, starting empty", path.display());
                return Ok(cache);
            }
            Err(source) => {
                return Err(UrlError::Io {
                    path: path.to_path_buf(),
                    source,
                })
            }
        };
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|source| UrlError::Io {
                path: path.to_path_buf(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<ScanReport>(&line) {
                Ok(r) if r.is_valid() => cache.insert(r),
                _ => cache.skipped += 1,
            }
        }
        if cache.skipped > 0 {
            log::warn!("report cache {}: skipped {} bad lines", path.display(), cache.skipped);
        }
        Ok(cache)
    }

    fn insert(&mut self, mut report: ScanReport) {
        report.domain = report.domain.to_lowercase();
        self.by_domain.entry(report.domain.clone()).or_default().push(report);
    }

    pub fn contains(&self, domain: &str) -> bool {
        self.by_domain.contains_key(domain)
    }

    pub fn domains(&self) -> impl Iterator<Item = &str> {
        self.by_domain.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.by_domain.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.by_domain.is_empty()
    }

    /// In-window reports for `domain`, sorted by scan date (stable).
    pub fn in_window(&self, domain: &str, window: ReportWindow) -> Vec<ScanReport> {
        let mut out: Vec<ScanReport> = self
            .by_domain
            .get(domain)
            .map(|rs| rs.iter().filter(|r| window.contains(r.date)).cloned().collect())
            .unwrap_or_default();
        out.sort_by_key(|r| r.date);
        out
    }

    /// Adds reports and appends them to the backing file, if any.
    pub fn append(&mut self, reports: &[ScanReport]) -> Result<(), UrlError> {
        if let Some(path) = &self.path {
            let mut file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|source| UrlError::Io {
                    path: path.clone(),
                    source,
                })?;
            let mut buf = Vec::new();
            write_report_lines(reports.iter(), &mut buf).expect("in-memory write");
            file.write_all(&buf).map_err(|source| UrlError::Io {
                path: path.clone(),
                source,
            })?;
        }
        for r in reports {
            self.insert(r.clone());
        }
        Ok(())
    }

    /// Every report, grouped by domain in domain order.
    pub fn iter(&self) -> impl Iterator<Item = &ScanReport> {
        self.by_domain.values().flatten()
    }
}

fn write_report_lines<'a, W: Write>(reports: impl Iterator<Item = &'a ScanReport>, mut out: W) -> std::io::Result<()> {
    for r in reports {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_reports(path: &Path, reports: &[ScanReport]) -> Result<(), UrlError> {
    let mut buf = Vec::new();
    write_report_lines(reports.iter(), &mut buf).expect("in-memory write");
    std::fs::write(path, buf).map_err(|source| UrlError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_reports(path: &Path, domain: &str, window: ReportWindow) -> Result<Vec<ScanReport>, UrlError> {
    Ok(ReportCache::load(path)?.in_window(domain, window))
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FetchError {
    #[error("rate limited")]
    RateLimited,
    #[error("request failed: {0}")]
    Transport(String),
}

/// A remote source of scanner reports.
pub trait ReportSource {
    fn fetch(&mut self, domain: &str) -> Result<Vec<ScanReport>, FetchError>;
}

/// Time source for rate limiting and backoff, injectable for tests.
pub trait Clock {
    fn now(&self) -> Duration;
    fn sleep(&mut self, duration: Duration);
}

#[derive(Debug, Clone)]
pub struct SystemClock {
    origin: std::time::Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        Self {
            origin: std::time::Instant::now(),
        }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }

    fn sleep(&mut self, duration: Duration) {
        std::thread::sleep(duration);
    }
}

/// Token bucket holding at most `capacity` requests, refilled at
/// `per_minute` requests per minute.
#[derive(Debug, Clone)]
pub struct TokenBucket {
    capacity: f64,
    per_second: f64,
    tokens: f64,
    last: Option<Duration>,
}

impl TokenBucket {
    pub fn new(per_minute: u32, capacity: u32) -> Self {
        Self {
            capacity: capacity.max(1) as f64,
            per_second: per_minute.max(1) as f64 / 60.0,
            tokens: capacity.max(1) as f64,
            last: None,
        }
    }

    fn refill(&mut self, now: Duration) {
        if let Some(last) = self.last {
            let gained = (now.saturating_sub(last)).as_secs_f64() * self.per_second;
            self.tokens = (self.tokens + gained).min(self.capacity);
        }
        self.last = Some(now);
    }

    /// Blocks on `clock` until a token is available, then takes it.
    pub fn acquire(&mut self, clock: &mut dyn Clock) {
        self.refill(clock.now());
        if self.tokens < 1.0 {
            let wait = (1.0 - self.tokens) / self.per_second;
            clock.sleep(Duration::from_secs_f64(wait));
            self.refill(clock.now());
            self.tokens = self.tokens.max(1.0);
        }
        self.tokens -= 1.0;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Backoff {
    pub initial: Duration,
    pub max_delay: Duration,
    pub max_retries: u32,
}

impl Default for Backoff {
    fn default() -> Self {
        Self {
            initial: Duration::from_secs(15),
            max_delay: Duration::from_secs(240),
            max_retries: 4,
        }
    }
}

impl Backoff {
    /// Delay before retry `attempt` (0-based), doubling up to `max_delay`.
    pub fn delay(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt).unwrap_or(u32::MAX);
        self.initial.saturating_mul(factor).min(self.max_delay)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchOutcome {
    pub reports: Vec<ScanReport>,
    pub from_cache: bool,
    /// Retries ran out or the request failed; `reports` holds only what
    /// was already cached.
    pub partial: bool,
}

/// Fetcher sharing one rate limiter and one cache across domains.
pub struct ReportFetcher<'a> {
    pub source: &'a mut dyn ReportSource,
    pub clock: &'a mut dyn Clock,
    pub limiter: TokenBucket,
    pub backoff: Backoff,
}

impl ReportFetcher<'_> {
    /// Cached reports when the domain is cached, otherwise a rate-limited
    /// live request with bounded exponential backoff. Fresh results are
    /// written through to the cache.
    pub fn fetch_reports(
        &mut self,
        domain: &str,
        window: ReportWindow,
        cache: &mut ReportCache,
    ) -> Result<FetchOutcome, UrlError> {
        if cache.contains(domain) {
            return Ok(FetchOutcome {
                reports: cache.in_window(domain, window),
                from_cache: true,
                partial: false,
            });
        }
        let mut attempt = 0;
        loop {
            self.limiter.acquire(self.clock);
            match self.source.fetch(domain) {
                Ok(fresh) => {
                    let fresh: Vec<ScanReport> = fresh.into_iter().filter(ScanReport::is_valid).collect();
                    cache.append(&fresh)?;
                    return Ok(FetchOutcome {
                        reports: cache.in_window(domain, window),
                        from_cache: false,
                        partial: false,
                    });
                }
                Err(FetchError::RateLimited) if attempt < self.backoff.max_retries => {
                    self.clock.sleep(self.backoff.delay(attempt));
                    attempt += 1;
                }
                Err(e) => {
                    log::warn!("reports for {domain} incomplete: {e}");
                    return Ok(FetchOutcome {
                        reports: cache.in_window(domain, window),
                        from_cache: false,
                        partial: true,
                    });
                }
            }
        }
    }
}
