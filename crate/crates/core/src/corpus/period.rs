use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Duration, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use super::{CorpusError, PostRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Before,
    During,
    After,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::Before, Phase::During, Phase::After];

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Before => "before",
            Phase::During => "during",
            Phase::After => "after",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Phase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "before" => Ok(Phase::Before),
            "during" => Ok(Phase::During),
            "after" => Ok(Phase::After),
            other => Err(format!("unknown phase {other:?}")),
        }
    }
}

/// Phase assigned to a post; posts outside every window are `Unclassified`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PeriodLabel {
    Before,
    During,
    After,
    Unclassified,
}

impl PeriodLabel {
    pub const ALL: [PeriodLabel; 4] = [
        PeriodLabel::Before,
        PeriodLabel::During,
        PeriodLabel::After,
        PeriodLabel::Unclassified,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PeriodLabel::Before => "before",
            PeriodLabel::During => "during",
            PeriodLabel::After => "after",
            PeriodLabel::Unclassified => "unclassified",
        }
    }

    pub fn phase(self) -> Option<Phase> {
        match self {
            PeriodLabel::Before => Some(Phase::Before),
            PeriodLabel::During => Some(Phase::During),
            PeriodLabel::After => Some(Phase::After),
            PeriodLabel::Unclassified => None,
        }
    }
}

impl From<Phase> for PeriodLabel {
    fn from(phase: Phase) -> Self {
        match phase {
            Phase::Before => PeriodLabel::Before,
            Phase::During => PeriodLabel::During,
            Phase::After => PeriodLabel::After,
        }
    }
}

impl fmt::Display for PeriodLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PeriodLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.trim().eq_ignore_ascii_case("unclassified") {
            Ok(PeriodLabel::Unclassified)
        } else {
            s.parse::<Phase>().map(PeriodLabel::from)
        }
    }
}

/// Inclusive date range of one lockdown phase in one country.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodWindow {
    pub country: String,
    pub phase: Phase,
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl PeriodWindow {
    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }

    /// Inclusive day count.
    pub fn days(&self) -> i64 {
        (self.end - self.start).num_days() + 1
    }
}

impl fmt::Display for PeriodWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}..{}", self.country, self.phase, self.start, self.end)
    }
}

/// Returns the phase of the window containing the timestamp's UTC date.
/// `windows` must already satisfy the non-overlap invariant, which
/// [`WindowTable`] enforces at load time.
pub fn classify_period(timestamp: DateTime<Utc>, windows: &[PeriodWindow]) -> PeriodLabel {
    let date = timestamp.date_naive();
    windows
        .iter()
        .find(|w| w.contains(date))
        .map_or(PeriodLabel::Unclassified, |w| w.phase.into())
}

/// Validated per-country window lists.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WindowTable {
    by_country: BTreeMap<String, Vec<PeriodWindow>>,
}

impl WindowTable {
    pub fn new(windows: impl IntoIterator<Item = PeriodWindow>) -> Result<Self, CorpusError> {
        let mut by_country: BTreeMap<String, Vec<PeriodWindow>> = BTreeMap::new();
        for w in windows {
            if w.start > w.end {
                return Err(CorpusError::Table {
                    path: "windows".into(),
                    line: 0,
                    message: format!("window {w} ends before it starts"),
                });
            }
            by_country.entry(w.country.clone()).or_default().push(w);
        }
        for (country, list) in &mut by_country {
            list.sort_by_key(|w| (w.start, w.end));
            for pair in list.windows(2) {
                if pair[1].start <= pair[0].end {
                    return Err(CorpusError::OverlappingWindows {
                        country: country.clone(),
                        first: pair[0].to_string(),
                        second: pair[1].to_string(),
                    });
                }
            }
        }
        Ok(Self { by_country })
    }

    pub fn windows(&self, country: &str) -> &[PeriodWindow] {
        self.by_country.get(country).map_or(&[], Vec::as_slice)
    }

    pub fn countries(&self) -> impl Iterator<Item = &str> {
        self.by_country.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = &PeriodWindow> {
        self.by_country.values().flatten()
    }

    pub fn classify(&self, record: &PostRecord) -> PeriodLabel {
        match record.country.as_deref() {
            Some(country) => classify_period(record.timestamp, self.windows(country)),
            None => PeriodLabel::Unclassified,
        }
    }
}

#[derive(Debug, Deserialize)]
struct WindowRow {
    country: String,
    phase: String,
    start: NaiveDate,
    end: NaiveDate,
}

/// Reads a `country,phase,start,end` CSV.
pub fn load_windows(path: &Path) -> Result<WindowTable, CorpusError> {
    let origin = path.display().to_string();
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(&origin, e))?;
    let mut windows = Vec::new();
    for (i, row) in reader.deserialize::<WindowRow>().enumerate() {
        let row = row.map_err(|e| csv_error(&origin, e))?;
        let phase = row.phase.parse().map_err(|message| CorpusError::Table {
            path: origin.clone(),
            line: i + 2,
            message,
        })?;
        windows.push(PeriodWindow {
            country: row.country.trim().to_ascii_uppercase(),
            phase,
            start: row.start,
            end: row.end,
        });
    }
    WindowTable::new(windows)
}

/// Derives windows from a daily `country,date,stringency` CSV: each maximal
/// run of days at or above `threshold` becomes a `During` window, flanked by
/// `Before`/`After` windows of up to `flank_days` days that never overlap a
/// neighbouring window.
pub fn windows_from_stringency(
    path: &Path,
    threshold: f64,
    flank_days: i64,
) -> Result<WindowTable, CorpusError> {
    #[derive(Deserialize)]
    struct Row {
        country: String,
        date: NaiveDate,
        stringency: f64,
    }
    let origin = path.display().to_string();
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(&origin, e))?;
    let mut days: BTreeMap<String, BTreeMap<NaiveDate, f64>> = BTreeMap::new();
    for row in reader.deserialize::<Row>() {
        let row = row.map_err(|e| csv_error(&origin, e))?;
        days.entry(row.country.trim().to_ascii_uppercase())
            .or_default()
            .insert(row.date, row.stringency);
    }

    let mut windows = Vec::new();
    for (country, series) in days {
        let mut runs: Vec<(NaiveDate, NaiveDate)> = Vec::new();
        for (&date, &value) in &series {
            if value < threshold {
                continue;
            }
            match runs.last_mut() {
                Some((_, end)) if *end + Duration::days(1) == date => *end = date,
                _ => runs.push((date, date)),
            }
        }
        let mut last_end: Option<NaiveDate> = None;
        for (i, &(start, end)) in runs.iter().enumerate() {
            let mut before_start = start - Duration::days(flank_days);
            if let Some(prev) = last_end {
                before_start = before_start.max(prev + Duration::days(1));
            }
            if before_start < start {
                windows.push(PeriodWindow {
                    country: country.clone(),
                    phase: Phase::Before,
                    start: before_start,
                    end: start - Duration::days(1),
                });
            }
            windows.push(PeriodWindow {
                country: country.clone(),
                phase: Phase::During,
                start,
                end,
            });
            let mut after_end = end + Duration::days(flank_days);
            if let Some(&(next_start, _)) = runs.get(i + 1) {
                after_end = after_end.min(next_start - Duration::days(1));
            }
            if after_end > end {
                windows.push(PeriodWindow {
                    country: country.clone(),
                    phase: Phase::After,
                    start: end + Duration::days(1),
                    end: after_end,
                });
                last_end = Some(after_end);
            } else {
                last_end = Some(end);
            }
        }
    }
    WindowTable::new(windows)
}

/// Daily new-case counts for one country, dates strictly increasing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaseSeries {
    pub country: String,
    pub entries: Vec<(NaiveDate, u64)>,
}

impl CaseSeries {
    pub fn new(country: &str, entries: Vec<(NaiveDate, u64)>) -> Result<Self, CorpusError> {
        if let Some(pair) = entries.windows(2).find(|p| p[1].0 <= p[0].0) {
            return Err(CorpusError::Table {
                path: format!("case series {country}"),
                line: 0,
                message: format!("dates not strictly increasing at {}", pair[1].0),
            });
        }
        Ok(Self {
            country: country.to_string(),
            entries,
        })
    }
}

/// Reads a `country,date,new_cases` CSV into one series per country.
pub fn load_case_series(path: &Path) -> Result<BTreeMap<String, CaseSeries>, CorpusError> {
    #[derive(Deserialize)]
    struct Row {
        country: String,
        date: NaiveDate,
        new_cases: u64,
    }
    let origin = path.display().to_string();
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(&origin, e))?;
    let mut grouped: BTreeMap<String, Vec<(NaiveDate, u64)>> = BTreeMap::new();
    for row in reader.deserialize::<Row>() {
        let row = row.map_err(|e| csv_error(&origin, e))?;
        grouped
            .entry(row.country.trim().to_ascii_uppercase())
            .or_default()
            .push((row.date, row.new_cases));
    }
    grouped
        .into_iter()
        .map(|(country, entries)| {
            let series = CaseSeries::new(&country, entries)?;
            Ok((country, series))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InfectionRate {
    pub window: PeriodWindow,
    pub total_cases: u64,
    pub days: i64,
    pub ir: f64,
}

/// Mean new cases per day over the inclusive window.
pub fn infection_rate(
    series: &CaseSeries,
    window: &PeriodWindow,
) -> Result<InfectionRate, CorpusError> {
    if !series.country.eq_ignore_ascii_case(&window.country) {
        return Err(CorpusError::CountryMismatch(series.country.clone()));
    }
    let covered = matches!(
        (series.entries.first(), series.entries.last()),
        (Some(first), Some(last)) if first.0 <= window.start && last.0 >= window.end
    );
    if !covered {
        return Err(CorpusError::InsufficientCaseData {
            country: window.country.clone(),
            start: window.start,
            end: window.end,
        });
    }
    let total_cases: u64 = series
        .entries
        .iter()
        .filter(|(date, _)| window.contains(*date))
        .map(|(_, n)| n)
        .sum();
    let days = window.days();
    Ok(InfectionRate {
        window: window.clone(),
        total_cases,
        days,
        ir: total_cases as f64 / days as f64,
    })
}

fn csv_error(path: &str, e: csv::Error) -> CorpusError {
    let line = e.position().map_or(0, |p| p.line() as usize);
    CorpusError::Table {
        path: path.to_string(),
        line,
        message: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn date(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    fn window(phase: Phase, start: NaiveDate, end: NaiveDate) -> PeriodWindow {
        PeriodWindow {
            country: "AU".into(),
            phase,
            start,
            end,
        }
    }

    fn au_first_wave() -> Vec<PeriodWindow> {
        vec![
            window(Phase::Before, date(2020, 3, 5), date(2020, 3, 20)),
            window(Phase::During, date(2020, 3, 21), date(2020, 5, 15)),
            window(Phase::After, date(2020, 5, 16), date(2020, 6, 1)),
        ]
    }

    #[test]
    fn au_april_first_is_during() {
        let ts = Utc.with_ymd_and_hms(2020, 4, 1, 12, 0, 0).unwrap();
        assert_eq!(classify_period(ts, &au_first_wave()), PeriodLabel::During);
    }

    #[test]
    fn before_all_windows_is_unclassified() {
        let ts = Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap();
        assert_eq!(classify_period(ts, &au_first_wave()), PeriodLabel::Unclassified);
    }

    #[test]
    fn bounds_are_inclusive() {
        let start = Utc.with_ymd_and_hms(2020, 3, 21, 0, 0, 0).unwrap();
        let end = Utc.with_ymd_and_hms(2020, 5, 15, 23, 59, 59).unwrap();
        assert_eq!(classify_period(start, &au_first_wave()), PeriodLabel::During);
        assert_eq!(classify_period(end, &au_first_wave()), PeriodLabel::During);
    }

    #[test]
    fn overlapping_windows_rejected_at_load() {
        let mut windows = au_first_wave();
        windows.push(window(Phase::After, date(2020, 5, 15), date(2020, 5, 20)));
        assert!(matches!(
            WindowTable::new(windows),
            Err(CorpusError::OverlappingWindows { .. })
        ));
    }

    #[test]
    fn window_day_count_is_inclusive() {
        assert_eq!(au_first_wave()[1].days(), 56);
    }

    #[test]
    fn infection_rate_hand_sum() {
        let series = CaseSeries::new(
            "AU",
            vec![
                (date(2020, 1, 1), 10),
                (date(2020, 1, 2), 20),
                (date(2020, 1, 3), 30),
            ],
        )
        .unwrap();
        let w = window(Phase::During, date(2020, 1, 1), date(2020, 1, 3));
        let rate = infection_rate(&series, &w).unwrap();
        assert_eq!(rate.ir, 20.0);
        assert_eq!(rate.total_cases, 60);
    }

    #[test]
    fn zero_cases_give_zero_rate() {
        let series =
            CaseSeries::new("AU", vec![(date(2020, 1, 1), 0), (date(2020, 1, 2), 0)]).unwrap();
        let w = window(Phase::During, date(2020, 1, 1), date(2020, 1, 2));
        assert_eq!(infection_rate(&series, &w).unwrap().ir, 0.0);
    }

    #[test]
    fn uncovered_window_is_an_error() {
        let series = CaseSeries::new("AU", vec![(date(2020, 1, 2), 5)]).unwrap();
        let w = window(Phase::During, date(2020, 1, 1), date(2020, 1, 2));
        assert!(matches!(
            infection_rate(&series, &w),
            Err(CorpusError::InsufficientCaseData { .. })
        ));
    }

    #[test]
    fn non_increasing_dates_rejected() {
        assert!(CaseSeries::new("AU", vec![(date(2020, 1, 2), 1), (date(2020, 1, 2), 1)]).is_err());
    }

    #[test]
    fn stringency_runs_become_windows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let mut csv = String::from("country,date,stringency\n");
        for day in 1..=20u32 {
            let value = if (6..=10).contains(&day) { 70.0 } else { 40.0 };
            csv.push_str(&format!("au,2020-03-{day:02},{value}\n"));
        }
        std::fs::write(&path, csv).unwrap();
        let table = windows_from_stringency(&path, 65.0, 3).unwrap();
        let got: Vec<_> = table
            .windows("AU")
            .iter()
            .map(|w| (w.phase, w.start.format("%d").to_string(), w.end.format("%d").to_string()))
            .collect();
        assert_eq!(
            got,
            vec![
                (Phase::Before, "03".into(), "05".into()),
                (Phase::During, "06".into(), "10".into()),
                (Phase::After, "11".into(), "13".into()),
            ]
        );
    }
}
