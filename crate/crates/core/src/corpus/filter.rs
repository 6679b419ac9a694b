use std::collections::BTreeSet;

use serde::Serialize;

use super::PostRecord;

/// Country/language predicate. Country codes compare exactly (upper-case
/// ISO alpha-2); language tags compare ASCII case-insensitively.
#[derive(Debug, Clone)]
pub struct CorpusFilter {
    countries: BTreeSet<String>,
    language: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterOutcome {
    Keep,
    MissingCountry,
    MissingLanguage,
    OtherCountry,
    OtherLanguage,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct FilterReport {
    pub kept: usize,
    pub missing_country: usize,
    pub missing_language: usize,
    pub other_country: usize,
    pub other_language: usize,
}

impl FilterReport {
    pub fn dropped(&self) -> usize {
        self.missing_country + self.missing_language + self.other_country + self.other_language
    }

    fn tally(&mut self, outcome: FilterOutcome) {
        match outcome {
            FilterOutcome::Keep => self.kept += 1,
            FilterOutcome::MissingCountry => self.missing_country += 1,
            FilterOutcome::MissingLanguage => self.missing_language += 1,
            FilterOutcome::OtherCountry => self.other_country += 1,
            FilterOutcome::OtherLanguage => self.other_language += 1,
        }
    }
}

impl CorpusFilter {
    pub fn new<I, S>(countries: I, language: &str) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self {
            countries: countries
                .into_iter()
                .map(|c| c.as_ref().to_ascii_uppercase())
                .collect(),
            language: language.to_string(),
        }
    }

    pub fn check(&self, record: &PostRecord) -> FilterOutcome {
        let Some(country) = record.country.as_deref() else {
            return FilterOutcome::MissingCountry;
        };
        let Some(language) = record.language.as_deref() else {
            return FilterOutcome::MissingLanguage;
        };
        if !self.countries.contains(&country.to_ascii_uppercase()) {
            FilterOutcome::OtherCountry
        } else if !language.eq_ignore_ascii_case(&self.language) {
            FilterOutcome::OtherLanguage
        } else {
            FilterOutcome::Keep
        }
    }

    /// Lazily filters a record stream, tallying every decision into `report`.
    pub fn apply<'r, I>(
        &'r self,
        records: I,
        report: &'r mut FilterReport,
    ) -> impl Iterator<Item = PostRecord> + 'r
    where
        I: IntoIterator<Item = PostRecord>,
        I::IntoIter: 'r,
    {
        records.into_iter().filter(move |record| {
            let outcome = self.check(record);
            report.tally(outcome);
            outcome == FilterOutcome::Keep
        })
    }
}

/// Keeps records whose country is in `countries` and whose language equals
/// `language`; records lacking either field are dropped.
pub fn filter_corpus<I, S>(
    records: impl IntoIterator<Item = PostRecord>,
    countries: I,
    language: &str,
) -> (Vec<PostRecord>, FilterReport)
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let filter = CorpusFilter::new(countries, language);
    let mut report = FilterReport::default();
    let kept = filter.apply(records, &mut report).collect();
    (kept, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};

    fn record(id: &str, country: Option<&str>, language: Option<&str>) -> PostRecord {
        PostRecord {
            user_id: "u".into(),
            post_id: id.into(),
            timestamp: Utc.with_ymd_and_hms(2020, 4, 1, 0, 0, 0).unwrap(),
            text: String::new(),
            hashtags: vec![],
            urls: vec![],
            country: country.map(str::to_string),
            language: language.map(str::to_string),
        }
    }

    #[test]
    fn keeps_requested_countries_and_language() {
        let records = vec![
            record("1", Some("AU"), Some("en")),
            record("2", Some("IN"), Some("hi")),
            record("3", Some("US"), Some("en")),
        ];
        let (kept, report) = filter_corpus(records, ["AU", "US"], "en");
        let ids: Vec<_> = kept.iter().map(|r| r.post_id.as_str()).collect();
        assert_eq!(ids, ["1", "3"]);
        assert_eq!(report.kept, 2);
        assert_eq!(report.other_country, 1);
    }

    #[test]
    fn empty_input() {
        let (kept, report) = filter_corpus(Vec::new(), ["AU"], "en");
        assert!(kept.is_empty());
        assert_eq!(report, FilterReport::default());
    }

    #[test]
    fn absent_fields_are_dropped_and_counted() {
        let records = vec![
            record("1", None, Some("en")),
            record("2", Some("AU"), None),
            record("3", Some("AU"), Some("EN")),
            record("4", Some("AU"), Some("fr")),
        ];
        let (kept, report) = filter_corpus(records, ["au"], "en");
        assert_eq!(kept.len(), 1);
        assert_eq!(report.missing_country, 1);
        assert_eq!(report.missing_language, 1);
        assert_eq!(report.other_language, 1);
        assert_eq!(report.dropped(), 3);
    }
}
