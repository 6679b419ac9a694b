//! Seeded synthetic corpora with a ground-truth manifest.
//!
//! Posts are assembled from fifteen pandemic-era themes, each with its own
//! vocabulary, hashtags and linked domains. Users have a home country, a
//! language and two or three favourite themes; posting volume follows a
//! power law over users. Some posts re-use an earlier text of the same user
//! or a widely shared text, some mention a person, place or organisation
//! drawn from the shipped gazetteers, and a small share falls outside every
//! lockdown window or comes from a country or language the default filters
//! drop.

use std::collections::BTreeMap;

use chrono::{Duration, NaiveDate, TimeZone, Utc};
use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{PeriodWindow, PostRecord, WindowTable};
use crate::urlsec::{registered_domain_of_host, PublicSuffixList, ScanReport};

struct Theme {
    words: &'static [&'static str],
    hashtags: &'static [&'static str],
    domains: &'static [&'static str],
}

const THEMES: [Theme; 15] = [
    Theme {
        words: &["support", "local", "business", "shop", "small", "owner", "charities", "fundraising", "donate", "cafe", "order", "takeaway"],
        hashtags: &["SupportLocal", "fundraising", "charities", "ShopSmall"],
        domains: &["gofundme.com", "shopify.com", "docsquiffy.com", "comapnycsr.com"],
    },
    Theme {
        words: &["government", "minister", "election", "policy", "parliament", "president", "vote", "campaign", "opposition", "leader", "senate", "budget"],
        hashtags: &["politics", "Trump", "BorisJohnson", "PM"],
        domains: &["politico.com", "buzzsawpoilitics.com", "india.org", "theguardian.com"],
    },
    Theme {
        words: &["breaking", "update", "live", "report", "briefing", "announcement", "watch", "press", "conference", "today", "latest", "headline"],
        hashtags: &["LIVE", "WATCH", "currentaffairs", "BreakingNews"],
        domains: &["bbc.co.uk", "abc.net.au", "ndtv.com", "nytimes.com", "peoples.it"],
    },
    Theme {
        words: &["testing", "pcr", "swab", "clinic", "result", "queue", "positive", "negative", "tested", "drive", "centre", "lab"],
        hashtags: &["GetTested", "PCR", "testing"],
        domains: &["health.gov.au", "cdc.gov", "nhs.uk", "dudmc.com"],
    },
    Theme {
        words: &["lockdown", "restriction", "curfew", "rule", "closed", "border", "extended", "lifted", "stage", "order", "essential", "permit"],
        hashtags: &["lockdown", "StayAtHome", "Lockdown2"],
        domains: &["gov.uk", "vic.gov.au", "begadistrictnews.com.au", "grantuk.com"],
    },
    Theme {
        words: &["mask", "face", "covering", "wear", "mandatory", "public", "transport", "cloth", "protect", "others", "fine", "indoor"],
        hashtags: &["WearAMask", "MaskUp", "facecovering"],
        domains: &["who.int", "cdc.gov", "amazon.com"],
    },
    Theme {
        words: &["vaccine", "dose", "jab", "rollout", "trial", "booster", "pfizer", "appointment", "eligible", "clinic", "first", "second"],
        hashtags: &["vaccine", "GetVaccinated", "VaccinesWork"],
        domains: &["who.int", "pfizer.com", "geitpl.com", "itcslimited.com"],
    },
    Theme {
        words: &["death", "toll", "died", "record", "hospital", "icu", "tragic", "loss", "family", "mourning", "daily", "rising"],
        hashtags: &["deathtoll", "RIP", "COVIDdeaths"],
        domains: &["worldometers.info", "reuters.com", "cjsa.org"],
    },
    Theme {
        words: &["home", "stay", "safe", "family", "together", "inside", "garden", "baking", "movie", "weekend", "relax", "kids"],
        hashtags: &["StayHome", "StaySafe", "StayHomeSaveLives"],
        domains: &["youtube.com", "instagram.com", "netflix.com"],
    },
    Theme {
        words: &["nurse", "doctor", "frontline", "hero", "shift", "ward", "thank", "clap", "staff", "hospital", "ppe", "exhausted"],
        hashtags: &["ThankYouNHS", "frontlineheroes", "healthcareworkers"],
        domains: &["nhs.uk", "facebook.com", "twitter.com"],
    },
    Theme {
        words: &["school", "online", "class", "student", "teacher", "exam", "remote", "learning", "zoom", "homework", "university", "semester"],
        hashtags: &["onlinelearning", "homeschool", "remotelearning"],
        domains: &["zoom.us", "google.com", "ccp.it"],
    },
    Theme {
        words: &["flight", "travel", "airport", "cancelled", "quarantine", "hotel", "tourism", "holiday", "border", "passport", "stranded", "trip"],
        hashtags: &["travel", "tourism", "TravelBan"],
        domains: &["vietnam.travel", "booking.com", "qantas.com"],
    },
    Theme {
        words: &["job", "economy", "unemployment", "stimulus", "payment", "rent", "income", "market", "stock", "recession", "wage", "bill"],
        hashtags: &["economy", "jobs", "JobKeeper"],
        domains: &["bloomberg.com", "ft.com", "subscribe.theepochtimes.com"],
    },
    Theme {
        words: &["mental", "health", "anxiety", "lonely", "support", "talk", "wellbeing", "stress", "sleep", "walk", "mind", "check"],
        hashtags: &["mentalhealth", "selfcare", "wellbeing"],
        domains: &["beyondblue.org.au", "mind.org.uk", "lockdowndiary.blogspot.com"],
    },
    Theme {
        words: &["football", "match", "season", "league", "cricket", "stadium", "fans", "empty", "cancelled", "player", "training", "game"],
        hashtags: &["football", "cricket", "sport"],
        domains: &["espn.com", "skysports.com", "twitter.com"],
    },
];

const POSITIVE: &[&str] = &["great", "love", "thank", "happy", "hope", "proud", "amazing", "good", "safe", "grateful", "wonderful", "best"];
const NEGATIVE: &[&str] = &["sad", "angry", "terrible", "worst", "fear", "awful", "bad", "tired", "crisis", "scared", "hate", "disaster"];
const FILLER: &[&str] = &["the", "is", "a", "to", "and", "for", "this", "we", "all", "with", "our", "now"];
const MENTIONS: &[&str] = &["@newsdesk", "@healthdept", "@mayor", "@friend", "@team"];

const NAMES: &[&str] = &["Miha", "Anna", "Rahul", "Priya", "Oliver", "Charlotte", "Jack", "Emily", "Liam", "Aisha", "Noah", "Sophie"];
const LOCATIONS: &[&str] = &["Cairo", "Dubai", "Melbourne", "Sydney", "Mumbai", "Delhi", "London", "Manchester", "Chicago", "Boston", "Brisbane", "Leeds"];
const ORGANISATIONS: &[&str] = &["Chester Zoo", "Apple", "Qantas", "Tesco", "Infosys", "Walmart", "Red Cross", "Oxfam", "Woolworths", "Starbucks"];

const PII_TEMPLATES: &[&str] = &[
    "our daughter {name} has been accepted",
    "scheduled to fly to {location} next week",
    "great day out at {organisation} with {name}",
    "my brother {name} works at {organisation}",
    "finally back home in {location}",
    "queueing outside {organisation} in {location}",
];

const TARGET_COUNTRIES: [(&str, f64); 4] = [("AU", 0.27), ("IN", 0.22), ("US", 0.22), ("GB", 0.29)];
const OTHER_COUNTRIES: [&str; 2] = ["NZ", "CA"];
const OTHER_LANGUAGES: [&str; 3] = ["es", "hi", "fr"];

/// Seeded knobs for [`generate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub seed: u64,
    pub users: usize,
    pub posts: usize,
    /// Posts per user are proportional to `rank^-exponent`.
    pub exponent: f64,
    /// Share of users outside the four target countries.
    pub foreign_share: f64,
    /// Share of users posting in a language other than English.
    pub other_language_share: f64,
    /// Share of posts dated outside every window.
    pub unwindowed_share: f64,
    pub url_rate: f64,
    pub invalid_url_rate: f64,
    pub pii_rate: f64,
    /// Chance a post repeats one of the user's earlier texts.
    pub repeat_rate: f64,
    /// Chance a post copies a widely shared text.
    pub viral_rate: f64,
}

impl SynthParams {
    /// The shipped 1,000-record corpus.
    pub fn small(seed: u64) -> Self {
        Self {
            seed,
            users: 120,
            posts: 1_000,
            exponent: 0.8,
            foreign_share: 0.08,
            other_language_share: 0.05,
            unwindowed_share: 0.08,
            url_rate: 0.35,
            invalid_url_rate: 0.03,
            pii_rate: 0.12,
            repeat_rate: 0.12,
            viral_rate: 0.06,
        }
    }

    /// The shipped heavy-tail corpus: 5,000 posts over 300 users.
    pub fn heavy_tail(seed: u64) -> Self {
        Self {
            users: 300,
            posts: 5_000,
            exponent: 1.1,
            ..Self::small(seed)
        }
    }
}

/// Ground truth for a generated corpus.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub params: Option<SynthParams>,
    pub records: usize,
    pub users: usize,
    /// Users per post count.
    pub posts_per_user: BTreeMap<usize, usize>,
    pub countries: BTreeMap<String, usize>,
    pub languages: BTreeMap<String, usize>,
    /// Occurrences per hashtag.
    pub hashtags: BTreeMap<String, usize>,
    /// Posts per hashtag count.
    pub hashtags_per_post: BTreeMap<usize, usize>,
    pub url_total: usize,
    pub invalid_urls: usize,
    /// Shares per host, before suffix reduction.
    pub hosts: BTreeMap<String, usize>,
    pub pii_posts: usize,
    pub repeated_posts: usize,
    pub viral_posts: usize,
    pub unwindowed_posts: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub records: Vec<PostRecord>,
    pub manifest: SynthManifest,
}

/// Posts per user, summing to `posts`, each at least 1, heaviest first.
pub fn heavy_tail_counts(users: usize, posts: usize, exponent: f64) -> Vec<usize> {
    assert!(users > 0 && posts >= users, "need at least one post per user");
    let weights: Vec<f64> = (0..users).map(|i| ((i + 1) as f64).powf(-exponent)).collect();
    let total: f64 = weights.iter().sum();
    let spare = posts - users;
    let mut counts: Vec<usize> = weights
        .iter()
        .map(|w| 1 + (w / total * spare as f64).floor() as usize)
        .collect();
    let mut left = posts - counts.iter().sum::<usize>();
    let mut i = 0;
    while left > 0 {
        counts[i % users] += 1;
        left -= 1;
        i += 1;
    }
    counts
}

struct User {
    id: String,
    country: String,
    language: String,
    themes: Vec<usize>,
    /// Windows used for dating posts.
    windows: Vec<PeriodWindow>,
}

fn pick<'a, R: Rng>(rng: &mut R, items: &[&'a str]) -> &'a str {
    items[rng.gen_range(0..items.len())]
}

fn pii_phrase<R: Rng>(rng: &mut R) -> String {
    pick(rng, PII_TEMPLATES)
        .replace("{name}", pick(rng, NAMES))
        .replace("{location}", pick(rng, LOCATIONS))
        .replace("{organisation}", pick(rng, ORGANISATIONS))
}

fn compose<R: Rng>(rng: &mut R, theme: &Theme, with_pii: bool) -> (String, Vec<String>) {
    let mut words: Vec<String> = Vec::new();
    for _ in 0..rng.gen_range(4..=7) {
        words.push(pick(rng, theme.words).to_string());
        if rng.gen_bool(0.35) {
            words.push(pick(rng, FILLER).to_string());
        }
    }
    match rng.gen_range(0..3) {
        0 => words.push(pick(rng, POSITIVE).to_string()),
        1 => words.push(pick(rng, NEGATIVE).to_string()),
        _ => {}
    }
    if rng.gen_bool(0.1) {
        words.insert(0, pick(rng, MENTIONS).to_string());
    }
    let mut text = words.join(" ");
    if let Some(first) = text.get(..1) {
        if !first.starts_with('@') {
            text = first.to_uppercase() + &text[1..];
        }
    }
    if with_pii {
        text = format!("{text}, {}", pii_phrase(rng));
    }
    text.push(if rng.gen_bool(0.2) { '!' } else { '.' });
    let n_tags = *[0usize, 1, 1, 2, 3].choose(rng).unwrap();
    let mut tags: Vec<String> = Vec::new();
    for _ in 0..n_tags {
        let t = pick(rng, theme.hashtags).to_string();
        if !tags.contains(&t) {
            tags.push(t);
        }
    }
    for t in &tags {
        text.push_str(&format!(" #{t}"));
    }
    (text, tags)
}

fn make_url<R: Rng>(rng: &mut R, theme: &Theme) -> String {
    let domain = pick(rng, theme.domains);
    let host = if domain.matches('.').count() >= 2 || rng.gen_bool(0.5) {
        domain.to_string()
    } else {
        format!("www.{domain}")
    };
    let slug: String = (0..8).map(|_| rng.gen_range(b'a'..=b'z') as char).collect();
    format!("https://{host}/{}/{slug}", rng.gen_range(2020..=2021))
}

fn host_of(url: &str) -> Option<String> {
    url::Url::parse(url).ok()?.host_str().map(str::to_string)
}

/// Generates a corpus against the given lockdown windows. Countries
/// without windows borrow those of a target country.
pub fn generate(params: &SynthParams, windows: &WindowTable) -> SynthCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let counts = heavy_tail_counts(params.users, params.posts, params.exponent);
    let country_pick = WeightedIndex::new(TARGET_COUNTRIES.iter().map(|c| c.1)).unwrap();
    let all_windows: Vec<PeriodWindow> = windows.iter().cloned().collect();

    let users: Vec<User> = (0..params.users)
        .map(|_| {
            let id = format!("{:016x}", rng.gen::<u64>());
            let target = TARGET_COUNTRIES[country_pick.sample(&mut rng)].0;
            let country = if rng.gen_bool(params.foreign_share) {
                pick(&mut rng, &OTHER_COUNTRIES).to_string()
            } else {
                target.to_string()
            };
            let language = if rng.gen_bool(params.other_language_share) {
                pick(&mut rng, &OTHER_LANGUAGES).to_string()
            } else {
                "en".to_string()
            };
            let mut themes: Vec<usize> = (0..THEMES.len()).collect();
            themes.shuffle(&mut rng);
            themes.truncate(rng.gen_range(2..=3));
            let mut own = windows.windows(target).to_vec();
            if own.is_empty() {
                own = all_windows.clone();
            }
            User {
                id,
                country,
                language,
                themes,
                windows: own,
            }
        })
        .collect();

    let mut manifest = SynthManifest {
        params: Some(params.clone()),
        users: params.users,
        ..SynthManifest::default()
    };
    let mut viral: Vec<(String, Vec<String>, usize)> = Vec::new();
    let mut drafts = Vec::with_capacity(params.posts);
    let span_start = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
    let span_days = 548;

    for (user, &n) in users.iter().zip(&counts) {
        *manifest.posts_per_user.entry(n).or_default() += 1;
        let mut history: Vec<(String, Vec<String>, usize)> = Vec::new();
        for _ in 0..n {
            let theme_id = user.themes[rng.gen_range(0..user.themes.len())];
            let (text, tags, theme_id) = if !history.is_empty() && rng.gen_bool(params.repeat_rate) {
                manifest.repeated_posts += 1;
                history[rng.gen_range(0..history.len())].clone()
            } else if !viral.is_empty() && rng.gen_bool(params.viral_rate) {
                manifest.viral_posts += 1;
                viral[rng.gen_range(0..viral.len())].clone()
            } else {
                let with_pii = rng.gen_bool(params.pii_rate);
                let (text, tags) = compose(&mut rng, &THEMES[theme_id], with_pii);
                let entry = (text, tags, theme_id);
                if viral.len() < 40 && rng.gen_bool(0.1) {
                    viral.push(entry.clone());
                }
                entry
            };
            history.push((text.clone(), tags.clone(), theme_id));
            let date = if rng.gen_bool(params.unwindowed_share) {
                manifest.unwindowed_posts += 1;
                // may still land inside some window by chance
                span_start + Duration::days(rng.gen_range(0..span_days))
            } else {
                let w = &user.windows[rng.gen_range(0..user.windows.len())];
                w.start + Duration::days(rng.gen_range(0..w.days()))
            };
            let seconds = rng.gen_range(0..86_400);
            let timestamp = Utc.from_utc_datetime(&date.and_hms_opt(0, 0, 0).unwrap()) + Duration::seconds(seconds);
            let mut urls = Vec::new();
            if rng.gen_bool(params.url_rate) {
                for _ in 0..rng.gen_range(1..=2) {
                    urls.push(make_url(&mut rng, &THEMES[theme_id]));
                }
            }
            if rng.gen_bool(params.invalid_url_rate) {
                urls.push(if rng.gen_bool(0.5) { "notaurl".to_string() } else { format!("http://10.0.{}.{}/x", rng.gen_range(0..255), rng.gen_range(1..255)) });
            }
            drafts.push(PostRecord {
                user_id: user.id.clone(),
                post_id: String::new(),
                timestamp,
                text,
                hashtags: tags,
                urls,
                country: Some(user.country.clone()),
                language: Some(user.language.clone()),
            });
        }
    }

    drafts.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then(a.user_id.cmp(&b.user_id)));
    for (i, r) in drafts.iter_mut().enumerate() {
        r.post_id = format!("{:07}", i + 1);
        *manifest.countries.entry(r.country.clone().unwrap_or_default()).or_default() += 1;
        *manifest.languages.entry(r.language.clone().unwrap_or_default()).or_default() += 1;
        *manifest.hashtags_per_post.entry(r.hashtags.len()).or_default() += 1;
        for t in &r.hashtags {
            *manifest.hashtags.entry(t.clone()).or_default() += 1;
        }
        for u in &r.urls {
            match host_of(u) {
                Some(h) => {
                    manifest.url_total += 1;
                    *manifest.hosts.entry(h).or_default() += 1;
                }
                None => manifest.invalid_urls += 1,
            }
        }
        if PII_TEMPLATES.iter().any(|t| {
            let fixed = t.split('{').next().unwrap_or_default();
            r.text.contains(fixed.trim())
        }) {
            manifest.pii_posts += 1;
        }
    }
    manifest.records = drafts.len();
    SynthCorpus {
        records: drafts,
        manifest,
    }
}

/// Registered domains linked from the generated corpora.
pub fn synthetic_domains() -> Vec<String> {
    let psl = PublicSuffixList::bundled(true);
    let mut all: Vec<String> = THEMES
        .iter()
        .flat_map(|t| t.domains.iter())
        .map(|d| registered_domain_of_host(d, &psl).map_or_else(|_| d.to_string(), |r| r.domain))
        .collect();
    all.sort_unstable();
    all.dedup();
    all
}

/// Target mean positives for domains the generator treats as suspicious.
const SUSPICIOUS: &[(&str, u32)] = &[
    ("docsquiffy.com", 6),
    ("peoples.it", 12),
    ("ccp.it", 58),
    ("comapnycsr.com", 4),
    ("buzzsawpoilitics.com", 22),
    ("cjsa.org", 60),
    ("dudmc.com", 56),
    ("geitpl.com", 45),
    ("vietnam.travel", 57),
    ("itcslimited.com", 41),
    ("india.org", 55),
    ("begadistrictnews.com.au", 62),
    ("grantuk.com", 66),
    ("lockdowndiary.blogspot.com", 2),
];

/// Scanner reports for every synthetic domain, including a few outside
/// the default 2020-01-01..2021-11-06 window.
pub fn synthetic_reports(seed: u64) -> Vec<ScanReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = NaiveDate::from_ymd_opt(2019, 10, 1).unwrap();
    let mut out = Vec::new();
    for domain in synthetic_domains() {
        let target = SUSPICIOUS.iter().find(|(d, _)| *d == domain).map(|(_, t)| *t);
        let domain = domain.as_str();
        let n = rng.gen_range(2..=6);
        for _ in 0..n {
            let positives = match target {
                Some(t) => {
                    let spread = (t / 4).max(1);
                    rng.gen_range(t.saturating_sub(spread)..=t + spread)
                }
                None if rng.gen_bool(0.1) => 1,
                None => 0,
            };
            out.push(ScanReport {
                domain: domain.to_string(),
                date: start + Duration::days(rng.gen_range(0..800)),
                positives: positives.min(90),
                total: 90,
            });
        }
    }
    out.sort_by(|a, b| a.domain.cmp(&b.domain).then(a.date.cmp(&b.date)));
    out
}

/// Daily new cases per target country from 2020-02-01 to 2021-04-30 as a
/// `country,date,new_cases` CSV: two seeded waves with multiplicative
/// noise. Illustrative only; it does not follow any real series.
pub fn synthetic_case_series(seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = NaiveDate::from_ymd_opt(2020, 2, 1).unwrap();
    let end = NaiveDate::from_ymd_opt(2021, 4, 30).unwrap();
    let mut out = String::from("country,date,new_cases\n");
    for (country, _) in TARGET_COUNTRIES {
        let scale: f64 = rng.gen_range(200.0..2_000.0);
        let peaks = [rng.gen_range(40.0..90.0), rng.gen_range(250.0..330.0)];
        let mut day = start;
        let mut t = 0.0;
        while day <= end {
            let wave: f64 = peaks.iter().map(|p| (-((t - p) / 25.0f64).powi(2)).exp()).sum();
            let noise: f64 = rng.gen_range(0.8..1.2);
            let cases = (scale * wave * noise).round() as u64;
            out.push_str(&format!("{country},{day},{cases}\n"));
            day += Duration::days(1);
            t += 1.0;
        }
    }
    out
}
