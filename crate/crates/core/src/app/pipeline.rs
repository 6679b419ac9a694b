use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::bundle::{empty_table, ReportBundle, RunMetadata, Seeds, BUNDLE_FORMAT_VERSION};
use super::config::{hex_digest, PipelineConfig};
use super::table::Table;
use super::AppError;
use crate::corpus::{
    corpus_stats, filter_corpus, infection_rate, load_case_series, load_corpus, load_windows, LoadOptions,
    PeriodLabel, PostRecord, SchemaMap, WindowTable,
};
use crate::privacy::{
    build_hmm, cohort_report, detect_pii, split_train_test, write_traces_jsonl, Gazetteers, HmmSet, PathLimits,
    TestSequence, TrainingPost,
};
use crate::sentiment::{self, Lexicon};
use crate::textmodel::{
    explode_by_hashtags, kmeans_fit, lda_fit, tfidf_fit, top_terms, KMeansParams, LabelMap,
    LdaParams, Lemmatizer, Preprocessor, StopwordSet, TermMatrix, Vocabulary,
};
use crate::urlsec::{
    categorize, category_distribution, extract_urls, registered_domain, tier_table, vtscore, CategoryMap,
    DomainDossier, HostKind, PublicSuffixList, ReportCache, IP_LITERAL,
};

/// Pipeline stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Ingest,
    Periods,
    Hashtags,
    Topics,
    Sentiment,
    PrivacyTrain,
    PrivacyScore,
    Urls,
    VtScore,
}

impl Stage {
    pub const ALL: [Stage; 9] = [
        Stage::Ingest,
        Stage::Periods,
        Stage::Hashtags,
        Stage::Topics,
        Stage::Sentiment,
        Stage::PrivacyTrain,
        Stage::PrivacyScore,
        Stage::Urls,
        Stage::VtScore,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Periods => "periods",
            Stage::Hashtags => "hashtags",
            Stage::Topics => "topics",
            Stage::Sentiment => "sentiment",
            Stage::PrivacyTrain => "privacy-train",
            Stage::PrivacyScore => "privacy-score",
            Stage::Urls => "urls",
            Stage::VtScore => "vtscore",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Persisted outputs that later stages read back when run on their own.
pub const POSTS_FILE: &str = "posts.jsonl";
pub const TOPICS_FILE: &str = "topics.json";
pub const HMM_FILE: &str = "hmm.json";
pub const VOCABULARY_FILE: &str = "privacy_vocabulary.json";
pub const DOMAINS_FILE: &str = "domains.json";
pub const TRACES_FILE: &str = "traces.jsonl";
pub const DOSSIERS_FILE: &str = "dossiers.json";

/// A filtered post with its lockdown phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifiedPost {
    pub phase: PeriodLabel,
    pub record: PostRecord,
}

/// Topic label of every post, in post order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicAssignment {
    /// Label per raw topic id, after merges.
    pub names: Vec<String>,
    /// post_id → label
    pub labels: BTreeMap<String, String>,
}

impl TopicAssignment {
    fn label(&self, post_id: &str) -> Result<&str, AppError> {
        self.labels
            .get(post_id)
            .map(String::as_str)
            .ok_or_else(|| stage_error(Stage::Sentiment, format!("post {post_id} has no topic")))
    }

    /// Distinct labels in sorted order; the position is the HMM cluster.
    fn clusters(&self) -> BTreeMap<&str, usize> {
        let distinct: BTreeSet<&str> = self.names.iter().map(String::as_str).collect();
        distinct.into_iter().enumerate().map(|(i, l)| (l, i)).collect()
    }
}

fn stage_error(stage: Stage, message: impl fmt::Display) -> AppError {
    AppError::Stage {
        stage: stage.name(),
        message: message.to_string(),
    }
}

/// Stage runner. Memoises each stage's products so a full run computes
/// everything once; with `reuse` it reads persisted products from the
/// output directory instead of recomputing them.
pub struct Pipeline<'c> {
    config: &'c PipelineConfig,
    base: PathBuf,
    reuse: bool,
    inputs: BTreeMap<String, String>,
    tables: BTreeMap<String, Table>,
    artifacts: BTreeMap<String, String>,
    stages: Vec<String>,
    posts: Option<Vec<ClassifiedPost>>,
    preprocessor: Option<Preprocessor>,
    topics: Option<TopicAssignment>,
    model: Option<(HmmSet, Vocabulary)>,
    domains: Option<Vec<DomainDossier>>,
}

impl<'c> Pipeline<'c> {
    /// `base` is the directory paths in the metadata are shown relative to.
    pub fn new(config: &'c PipelineConfig, base: &Path) -> Self {
        Self {
            config,
            base: base.to_path_buf(),
            reuse: false,
            inputs: BTreeMap::new(),
            tables: BTreeMap::new(),
            artifacts: BTreeMap::new(),
            stages: Vec::new(),
            posts: None,
            preprocessor: None,
            topics: None,
            model: None,
            domains: None,
        }
    }

    /// Read earlier stages' products from the output directory when they
    /// exist there.
    pub fn reusing_outputs(mut self) -> Self {
        self.reuse = true;
        self
    }

    fn display_path(&self, path: &Path) -> String {
        path.strip_prefix(&self.base)
            .unwrap_or(path)
            .to_string_lossy()
            .replace('\\', "/")
    }

    /// Hashes a file the pipeline is about to read.
    fn record_input(&mut self, stage: Stage, path: &Path) -> Result<(), AppError> {
        let bytes = std::fs::read(path).map_err(|e| stage_error(stage, format!("{}: {e}", path.display())))?;
        self.inputs.insert(self.display_path(path), hex_digest(&bytes));
        Ok(())
    }

    fn read_input(&mut self, stage: Stage, path: &Path) -> Result<String, AppError> {
        let raw =
            std::fs::read_to_string(path).map_err(|e| stage_error(stage, format!("{}: {e}", path.display())))?;
        self.inputs.insert(self.display_path(path), hex_digest(raw.as_bytes()));
        Ok(raw)
    }

    fn persisted(&self, name: &str) -> Option<PathBuf> {
        let path = self.config.output.join(name);
        (self.reuse && path.is_file()).then_some(path)
    }

    fn put(&mut self, table: Table) {
        self.tables.insert(table.name.clone(), table);
    }

    fn windows(&mut self, stage: Stage) -> Result<WindowTable, AppError> {
        let path = self.config.windows.clone();
        self.record_input(stage, &path)?;
        load_windows(&path).map_err(|e| stage_error(stage, e))
    }

    pub fn run(&mut self, stage: Stage) -> Result<(), AppError> {
        log::info!("stage {stage}");
        match stage {
            Stage::Ingest => self.ingest(),
            Stage::Periods => self.periods(),
            Stage::Hashtags => self.hashtags(),
            Stage::Topics => self.fit_topics(),
            Stage::Sentiment => self.sentiment(),
            Stage::PrivacyTrain => self.train_privacy(),
            Stage::PrivacyScore => self.privacy_score(),
            Stage::Urls => self.collect_domains(),
            Stage::VtScore => self.vtscore(),
        }?;
        self.stages.push(stage.name().to_string());
        Ok(())
    }

    pub fn finish(self, label: Option<&str>) -> ReportBundle {
        let config = self.config;
        let stages = match label {
            Some(l) => vec![l.to_string()],
            None => self.stages,
        };
        ReportBundle {
            tables: self.tables,
            artifacts: self.artifacts,
            metadata: RunMetadata {
                tool: "privlens".into(),
                version: env!("CARGO_PKG_VERSION").into(),
                bundle_format: BUNDLE_FORMAT_VERSION,
                stages,
                config_sha256: config.hash(),
                seeds: Seeds {
                    kmeans: config.kmeans.seed,
                    lda: config.lda.seed,
                    split: config.privacy.seed,
                },
                threads: config.threads,
                bit_reproducible: true,
                offline: config.offline,
                inputs: self.inputs,
                tables: BTreeMap::new(),
                artifacts: BTreeMap::new(),
            },
        }
    }

    // ---- ingest -------------------------------------------------------

    fn load_posts(&mut self) -> Result<(), AppError> {
        if self.posts.is_some() {
            return Ok(());
        }
        if let Some(path) = self.persisted(POSTS_FILE) {
            let raw = self.read_input(Stage::Ingest, &path)?;
            let posts = raw
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(serde_json::from_str)
                .collect::<Result<Vec<ClassifiedPost>, _>>()
                .map_err(|e| stage_error(Stage::Ingest, format!("{}: {e}", path.display())))?;
            self.posts = Some(posts);
            return Ok(());
        }
        self.ingest()
    }

    fn posts(&mut self) -> Result<&[ClassifiedPost], AppError> {
        self.load_posts()?;
        Ok(self.posts.as_deref().expect("posts loaded"))
    }

    fn ingest(&mut self) -> Result<(), AppError> {
        let stage = Stage::Ingest;
        let config = self.config;
        let schema = match &config.schema {
            Some(path) => {
                self.record_input(stage, path)?;
                SchemaMap::from_json_file(path).map_err(|e| stage_error(stage, e))?
            }
            None => SchemaMap::default(),
        };
        self.record_input(stage, &config.input)?;
        let loaded = load_corpus(
            &config.input,
            LoadOptions {
                schema,
                span: config.span,
            },
        )
        .map_err(|e| stage_error(stage, e))?;
        let (kept, filter) = filter_corpus(loaded.records, &config.countries, &config.language);
        let windows = self.windows(stage)?;
        let posts: Vec<ClassifiedPost> = kept
            .into_iter()
            .map(|record| ClassifiedPost {
                phase: windows.classify(&record),
                record,
            })
            .collect();
        let stats = corpus_stats(posts.iter().map(|p| (&p.record, p.phase)));

        let mut summary = empty_table("corpus_summary");
        let skip = &loaded.report;
        let users: BTreeSet<&str> = posts.iter().map(|p| p.record.user_id.as_str()).collect();
        let mut metrics: Vec<(String, usize)> = vec![
            ("lines".into(), skip.lines),
            ("accepted".into(), skip.accepted),
            ("skipped".into(), skip.skipped),
        ];
        metrics.extend(skip.reasons.iter().map(|(r, n)| (format!("skipped: {r}"), *n)));
        metrics.extend([
            ("filtered: missing country".into(), filter.missing_country),
            ("filtered: missing language".into(), filter.missing_language),
            ("filtered: other country".into(), filter.other_country),
            ("filtered: other language".into(), filter.other_language),
            ("kept".into(), filter.kept),
            ("users".into(), users.len()),
        ]);
        for label in PeriodLabel::ALL {
            metrics.push((format!("posts: {label}"), stats.phase_total(label)));
        }
        for (metric, value) in metrics {
            summary.row(vec![metric.into(), value.into()]);
        }
        self.put(summary);

        let mut per_user = empty_table("posts_per_user");
        for (posts, users) in &stats.posts_per_user {
            per_user.row(vec![(*posts).into(), (*users).into()]);
        }
        self.put(per_user);
        let mut per_post = empty_table("hashtags_per_post");
        for (tags, posts) in &stats.hashtags_per_post {
            per_post.row(vec![(*tags).into(), (*posts).into()]);
        }
        self.put(per_post);
        let mut phases = empty_table("phase_counts");
        for ((country, label), n) in &stats.posts_per_phase {
            phases.row(vec![country.as_str().into(), label.as_str().into(), (*n).into()]);
        }
        self.put(phases);

        let mut jsonl = String::new();
        for p in &posts {
            jsonl.push_str(&serde_json::to_string(p).expect("post serialises"));
            jsonl.push('\n');
        }
        self.artifacts.insert(POSTS_FILE.into(), jsonl);
        self.posts = Some(posts);
        Ok(())
    }

    // ---- periods ------------------------------------------------------

    fn periods(&mut self) -> Result<(), AppError> {
        let stage = Stage::Periods;
        let windows = self.windows(stage)?;
        let mut table = empty_table("infection_rates");
        if let Some(path) = self.config.case_series.clone() {
            self.record_input(stage, &path)?;
            let series = load_case_series(&path).map_err(|e| stage_error(stage, e))?;
            for window in windows.iter() {
                let Some(s) = series.get(&window.country) else {
                    continue;
                };
                match infection_rate(s, window) {
                    Ok(ir) => table.row(vec![
                        window.country.as_str().into(),
                        window.phase.as_str().into(),
                        window.start.to_string().into(),
                        window.end.to_string().into(),
                        ir.days.into(),
                        ir.total_cases.into(),
                        ir.ir.into(),
                    ]),
                    Err(e) => log::warn!("infection rate for {window}: {e}"),
                }
            }
        } else {
            log::warn!("no case series configured; infection_rates is empty");
        }
        self.put(table);
        Ok(())
    }

    // ---- text ---------------------------------------------------------

    fn preprocessor(&mut self, stage: Stage) -> Result<Preprocessor, AppError> {
        if let Some(p) = &self.preprocessor {
            return Ok(p.clone());
        }
        let (stop_path, lemma_path) = (self.config.stopwords.clone(), self.config.lemmas.clone());
        self.record_input(stage, &stop_path)?;
        self.record_input(stage, &lemma_path)?;
        let stopwords = StopwordSet::load(&stop_path).map_err(|e| stage_error(stage, e))?;
        let lemmatizer = Lemmatizer::load(&lemma_path).map_err(|e| stage_error(stage, e))?;
        let p = Preprocessor::new(stopwords, lemmatizer);
        self.preprocessor = Some(p.clone());
        Ok(p)
    }

    fn label_map(&mut self, stage: Stage, path: Option<PathBuf>, k: usize) -> Result<Vec<String>, AppError> {
        let map = match path {
            Some(path) => {
                self.record_input(stage, &path)?;
                LabelMap::load(&path).map_err(|e| stage_error(stage, e))?
            }
            None => LabelMap::identity(k),
        };
        map.resolve(k).map_err(|e| stage_error(stage, e))
    }

    fn hashtags(&mut self) -> Result<(), AppError> {
        let stage = Stage::Hashtags;
        let pre = self.preprocessor(stage)?.without_hashtags();
        let config = self.config;
        let posts = self.posts()?;
        let copies: Vec<(PeriodLabel, PostRecord)> = posts
            .iter()
            .filter(|p| !p.record.hashtags.is_empty())
            .flat_map(|p| explode_by_hashtags(&p.record).into_iter().map(move |c| (p.phase, c)))
            .collect();
        let docs: Vec<Vec<String>> = copies.iter().map(|(_, c)| pre.tokens(&c.text)).collect();
        let vocab = tfidf_fit(&docs).map_err(|e| stage_error(stage, e))?;
        let matrix = TermMatrix::tfidf(&vocab, &docs);
        let model = kmeans_fit(
            &matrix,
            KMeansParams {
                k: config.kmeans.k,
                seed: config.kmeans.seed,
                max_iter: config.kmeans.max_iter,
                ..KMeansParams::default()
            },
        )
        .map_err(|e| stage_error(stage, e))?;
        let names = self.label_map(stage, config.hashtag_labels.clone(), config.kmeans.k)?;
        let labels: Vec<&str> = model.assignments.iter().map(|&id| names[id].as_str()).collect();

        let mut freq: BTreeMap<(&str, &str, PeriodLabel), u64> = BTreeMap::new();
        let mut members: BTreeMap<usize, BTreeMap<&str, u64>> = BTreeMap::new();
        for (((phase, copy), label), &id) in copies.iter().zip(&labels).zip(&model.assignments) {
            let country = copy.country.as_deref().unwrap_or("");
            *freq.entry((label, country, *phase)).or_default() += 1;
            *members.entry(id).or_default().entry(copy.hashtags[0].as_str()).or_default() += 1;
        }
        let mut clusters = empty_table("hashtag_clusters");
        for ((label, country, phase), n) in freq {
            clusters.row(vec![label.into(), country.into(), phase.as_str().into(), n.into()]);
        }
        let mut terms = empty_table("hashtag_top_terms");
        for (id, name) in names.iter().enumerate() {
            for (rank, (term, weight)) in top_terms(&model, &vocab, id, config.kmeans.top_terms).into_iter().enumerate() {
                terms.row(vec![id.into(), name.as_str().into(), (rank + 1).into(), term.into(), weight.into()]);
            }
        }
        let mut tags = empty_table("hashtag_members");
        for (id, counts) in members {
            let mut ranked: Vec<(&str, u64)> = counts.into_iter().collect();
            ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
            for (tag, n) in ranked.into_iter().take(config.kmeans.top_terms) {
                tags.row(vec![id.into(), names[id].as_str().into(), tag.into(), n.into()]);
            }
        }
        self.put(clusters);
        self.put(terms);
        self.put(tags);
        Ok(())
    }

    fn topics(&mut self) -> Result<&TopicAssignment, AppError> {
        if self.topics.is_none() {
            if let Some(path) = self.persisted(TOPICS_FILE) {
                let raw = self.read_input(Stage::Topics, &path)?;
                let topics = serde_json::from_str(&raw)
                    .map_err(|e| stage_error(Stage::Topics, format!("{}: {e}", path.display())))?;
                self.topics = Some(topics);
            } else {
                self.fit_topics()?;
            }
        }
        Ok(self.topics.as_ref().expect("topics assigned"))
    }

    fn fit_topics(&mut self) -> Result<(), AppError> {
        let stage = Stage::Topics;
        let pre = self.preprocessor(stage)?;
        let config = self.config;
        let names = self.label_map(stage, config.topic_labels.clone(), config.lda.topics)?;
        let posts = self.posts()?;
        let docs: Vec<Vec<String>> = posts.iter().map(|p| pre.tokens(&p.record.text)).collect();
        let vocab = tfidf_fit(&docs).map_err(|e| stage_error(stage, e))?;
        let ids: Vec<Vec<usize>> = docs.iter().map(|d| vocab.word_ids(d)).collect();
        let model = lda_fit(
            &ids,
            vocab.len(),
            LdaParams {
                topics: config.lda.topics,
                alpha: config.lda.alpha,
                beta: config.lda.beta,
                iterations: config.lda.iterations,
                seed: config.lda.seed,
            },
        )
        .map_err(|e| stage_error(stage, e))?;

        let mut labels = BTreeMap::new();
        let mut counts: BTreeMap<(&str, PeriodLabel), u64> = BTreeMap::new();
        for (doc, p) in posts.iter().enumerate() {
            let name = names[model.dominant_topic(doc)].as_str();
            labels.insert(p.record.post_id.clone(), name.to_string());
            *counts.entry((name, p.phase)).or_default() += 1;
        }
        let mut top = empty_table("topic_top_terms");
        for (id, name) in names.iter().enumerate() {
            for (rank, (word, weight)) in model.top_words(id, config.lda.top_terms).into_iter().enumerate() {
                top.row(vec![
                    id.into(),
                    name.as_str().into(),
                    (rank + 1).into(),
                    vocab.term(word).into(),
                    weight.into(),
                ]);
            }
        }
        let mut per_phase = empty_table("topic_counts");
        for ((name, phase), n) in counts {
            per_phase.row(vec![name.into(), phase.as_str().into(), n.into()]);
        }
        let assignment = TopicAssignment { names, labels };
        self.put(top);
        self.put(per_phase);
        self.artifacts.insert(
            TOPICS_FILE.into(),
            serde_json::to_string(&assignment).expect("topics serialise") + "\n",
        );
        self.topics = Some(assignment);
        Ok(())
    }

    // ---- sentiment ----------------------------------------------------

    fn sentiment(&mut self) -> Result<(), AppError> {
        let stage = Stage::Sentiment;
        let lexicon_path = self.config.lexicon.clone();
        self.record_input(stage, &lexicon_path)?;
        let lexicon = Lexicon::load(&lexicon_path).map_err(|e| stage_error(stage, e))?;
        let threshold = self.config.sentiment_threshold;
        self.topics()?;
        self.load_posts()?;
        let topics = self.topics.as_ref().expect("topics assigned");
        let posts = self.posts.as_deref().expect("posts loaded");
        let mut labelled = Vec::new();
        for p in posts.iter().filter(|p| p.phase.phase().is_some()) {
            let topic = topics.label(&p.record.post_id)?;
            let polarity = sentiment::score(&p.record.text, &lexicon);
            labelled.push((topic, p.phase, sentiment::label(polarity, threshold)));
        }
        let distribution = sentiment::aggregate(labelled, &[]);
        let mut table = empty_table("sentiment");
        for ((topic, phase), d) in distribution {
            table.row(vec![
                topic.into(),
                phase.as_str().into(),
                d.positive.into(),
                d.neutral.into(),
                d.negative.into(),
            ]);
        }
        self.put(table);
        Ok(())
    }

    // ---- privacy ------------------------------------------------------

    fn split(&mut self) -> Result<(Vec<PostRecord>, Vec<PostRecord>), AppError> {
        let (ratio, seed) = (self.config.privacy.ratio, self.config.privacy.seed);
        let records: Vec<PostRecord> = self.posts()?.iter().map(|p| p.record.clone()).collect();
        split_train_test(&records, ratio, seed).map_err(|e| stage_error(Stage::PrivacyTrain, e))
    }

    fn privacy_model(&mut self) -> Result<&(HmmSet, Vocabulary), AppError> {
        if self.model.is_none() {
            match (self.persisted(HMM_FILE), self.persisted(VOCABULARY_FILE)) {
                (Some(hmm_path), Some(vocab_path)) => {
                    let stage = Stage::PrivacyScore;
                    let raw = self.read_input(stage, &hmm_path)?;
                    let set = HmmSet::from_json(&raw).map_err(|e| stage_error(stage, e))?;
                    let raw = self.read_input(stage, &vocab_path)?;
                    let vocab: Vocabulary = serde_json::from_str(&raw)
                        .map_err(|e| stage_error(stage, format!("{}: {e}", vocab_path.display())))?;
                    self.model = Some((set, vocab));
                }
                _ => self.train_privacy()?,
            }
        }
        Ok(self.model.as_ref().expect("model trained"))
    }

    fn gazetteers(&mut self, stage: Stage) -> Result<Gazetteers, AppError> {
        let g = self.config.gazetteers.clone();
        for path in [&g.names, &g.locations, &g.organisations] {
            self.record_input(stage, path)?;
        }
        Gazetteers::load(&g.names, &g.locations, &g.organisations).map_err(|e| stage_error(stage, e))
    }

    fn train_privacy(&mut self) -> Result<(), AppError> {
        let stage = Stage::PrivacyTrain;
        let pre = self.preprocessor(stage)?;
        let gazetteers = self.gazetteers(stage)?;
        let (train, _) = self.split()?;
        self.topics()?;
        let config = self.config;
        let topics = self.topics.as_ref().expect("topics assigned");
        let clusters = topics.clusters();
        let docs: Vec<Vec<String>> = train.iter().map(|r| pre.tokens(&r.text)).collect();
        let vocab = tfidf_fit(&docs).map_err(|e| stage_error(stage, e))?;
        let mut training = Vec::with_capacity(train.len());
        for (record, tokens) in train.iter().zip(&docs) {
            let topic = topics.label(&record.post_id)?;
            training.push(TrainingPost {
                user: record.user_id.clone(),
                post_id: record.post_id.clone(),
                timestamp: record.timestamp,
                text: tokens.join(" "),
                raw_text: record.text.clone(),
                vector: vocab.transform(tokens),
                cluster: clusters[topic],
                has_pii: !detect_pii(&record.text, &gazetteers).is_empty(),
            });
        }
        let set = build_hmm(&training, config.privacy.sim_threshold, config.threads)
            .map_err(|e| stage_error(stage, e))?;

        let mut summary = empty_table("hmm_summary");
        summary.row(vec!["merged".into(), set.merged.len().into(), set.merged.initial_total.into()]);
        summary.row(vec!["pii".into(), set.pii.len().into(), set.pii.initial_total.into()]);
        let names: BTreeMap<usize, &str> = clusters.iter().map(|(l, i)| (*i, *l)).collect();
        for hmm in &set.clusters {
            let name = hmm.partition.and_then(|c| names.get(&c)).copied().unwrap_or("?");
            summary.row(vec![format!("cluster: {name}").into(), hmm.len().into(), hmm.initial_total.into()]);
        }
        self.put(summary);
        self.artifacts.insert(HMM_FILE.into(), set.to_json() + "\n");
        self.artifacts.insert(
            VOCABULARY_FILE.into(),
            serde_json::to_string(&vocab).expect("vocabulary serialises") + "\n",
        );
        self.model = Some((set, vocab));
        Ok(())
    }

    /// Test posts grouped by (user, topic, phase), chronological within
    /// each group. Posts outside every phase window are not scored.
    pub fn test_sequences(&mut self) -> Result<Vec<TestSequence>, AppError> {
        let pre = self.preprocessor(Stage::PrivacyScore)?;
        let (_, test) = self.split()?;
        self.privacy_model()?;
        self.topics()?;
        let phases: BTreeMap<&str, PeriodLabel> = self
            .posts
            .as_deref()
            .expect("posts loaded")
            .iter()
            .map(|p| (p.record.post_id.as_str(), p.phase))
            .collect();
        let topics = self.topics.as_ref().expect("topics assigned");
        let (_, vocab) = self.model.as_ref().expect("model trained");
        let mut groups: BTreeMap<(String, String, PeriodLabel), Vec<_>> = BTreeMap::new();
        for record in &test {
            let phase = phases[record.post_id.as_str()];
            if phase.phase().is_none() {
                continue;
            }
            let topic = topics.label(&record.post_id)?.to_string();
            groups
                .entry((record.user_id.clone(), topic, phase))
                .or_default()
                .push(vocab.transform(&pre.tokens(&record.text)));
        }
        Ok(groups
            .into_iter()
            .map(|((user, topic, phase), vectors)| TestSequence {
                user,
                topic,
                phase,
                vectors,
            })
            .collect())
    }

    fn privacy_score(&mut self) -> Result<(), AppError> {
        let sequences = self.test_sequences()?;
        let config = self.config;
        let p = &config.privacy;
        let limits = PathLimits {
            max_length: p.max_path_length,
            max_paths: p.max_paths,
        };
        let (set, _) = self.model.as_ref().expect("model trained");
        let report = cohort_report(&set.merged, &set.pii, &sequences, limits, p.max_posts);

        let mut cdf = empty_table("risk_cdf");
        for point in &report.cdf {
            cdf.row(vec![point.topic.as_str().into(), point.risk.into(), point.fraction.into()]);
        }
        let mut curve = empty_table("risk_vs_posts");
        for point in &report.risk_vs_posts {
            curve.row(vec![
                point.topic.as_str().into(),
                point.posts.into(),
                point.sequences.into(),
                point.mean_risk.into(),
            ]);
        }
        let mut per_sequence = empty_table("risk_by_sequence");
        for s in &report.scored {
            per_sequence.row(vec![
                s.topic.as_str().into(),
                s.phase.as_str().into(),
                s.trace.user.as_str().into(),
                s.trace.steps.len().into(),
                s.trace.linkability_prior.into(),
                s.trace.probability.into(),
                s.trace.risk.into(),
                s.probability_without_pii.into(),
                usize::from(s.unique).into(),
                usize::from(s.uniform).into(),
            ]);
        }
        let sum = &report.summary;
        let mut summary = empty_table("privacy_summary");
        for (metric, value) in [
            ("sequences", sum.sequences as f64),
            ("unique", sum.unique as f64),
            ("uniform", sum.uniform as f64),
            ("fully_identified", sum.fully_identified as f64),
            ("pii_users", sum.pii_users as f64),
            ("pii_sequences", sum.pii_sequences as f64),
            ("mean_risk_with_pii", sum.mean_risk_with_pii),
            ("mean_risk_without_pii", sum.mean_risk_without_pii),
            ("truncated_priors", sum.truncated_priors as f64),
        ] {
            summary.row(vec![metric.into(), value.into()]);
        }
        let traces: Vec<_> = report.scored.iter().map(|s| s.trace.clone()).collect();
        let mut buf = Vec::new();
        write_traces_jsonl(&traces, &mut buf).expect("in-memory write");
        self.artifacts
            .insert(TRACES_FILE.into(), String::from_utf8(buf).expect("traces are UTF-8"));
        self.put(cdf);
        self.put(curve);
        self.put(per_sequence);
        self.put(summary);
        Ok(())
    }

    // ---- urls ---------------------------------------------------------

    fn urls(&mut self) -> Result<&[DomainDossier], AppError> {
        if self.domains.is_none() {
            if let Some(path) = self.persisted(DOMAINS_FILE) {
                let raw = self.read_input(Stage::Urls, &path)?;
                let domains = serde_json::from_str(&raw)
                    .map_err(|e| stage_error(Stage::Urls, format!("{}: {e}", path.display())))?;
                self.domains = Some(domains);
            } else {
                self.collect_domains()?;
            }
        }
        Ok(self.domains.as_deref().expect("domains collected"))
    }

    fn collect_domains(&mut self) -> Result<(), AppError> {
        let stage = Stage::Urls;
        let u = self.config.urls.clone();
        let psl = match &u.public_suffix_list {
            Some(path) => {
                self.record_input(stage, path)?;
                PublicSuffixList::load(path, u.include_private_suffixes).map_err(|e| stage_error(stage, e))?
            }
            None => PublicSuffixList::bundled(u.include_private_suffixes),
        };
        let categories = match &u.category_map {
            Some(path) => {
                self.record_input(stage, path)?;
                CategoryMap::load(path).map_err(|e| stage_error(stage, e))?
            }
            None => CategoryMap::default(),
        };
        let posts = self.posts()?;
        let mut dossiers: BTreeMap<String, DomainDossier> = BTreeMap::new();
        let mut shares: BTreeMap<(String, PeriodLabel, String), u64> = BTreeMap::new();
        let (mut total, mut invalid, mut ip, mut unregistrable) = (0usize, 0usize, 0usize, 0usize);
        for p in posts {
            let (urls, dropped) = extract_urls(&p.record);
            total += urls.len() + dropped;
            invalid += dropped;
            let country = p.record.country.clone().unwrap_or_default();
            for url in urls {
                let (domain, suffix) = match registered_domain(&url, &psl) {
                    Ok(HostKind::Domain(d)) => (d.domain, d.suffix),
                    Ok(HostKind::IpLiteral(addr)) => {
                        ip += 1;
                        (addr.to_string(), String::new())
                    }
                    Err(e) => {
                        log::debug!("{e}");
                        unregistrable += 1;
                        continue;
                    }
                };
                let dossier = dossiers.entry(domain.clone()).or_insert_with(|| {
                    let category = if suffix.is_empty() {
                        IP_LITERAL.to_string()
                    } else {
                        categorize(&domain, &categories, None)
                    };
                    DomainDossier::new(&domain, &suffix, &category, None, &u.thresholds)
                });
                *dossier.shares.entry((country.clone(), p.phase)).or_default() += 1;
                *shares.entry((country.clone(), p.phase, dossier.category.clone())).or_default() += 1;
            }
        }
        let mut summary = empty_table("url_summary");
        for (metric, value) in [
            ("urls", total),
            ("invalid", invalid),
            ("ip_literals", ip),
            ("no_registrable_domain", unregistrable),
            ("domains", dossiers.len()),
        ] {
            summary.row(vec![metric.into(), value.into()]);
        }
        let mut table = empty_table("domain_categories");
        for ((country, phase, category), n) in shares {
            table.row(vec![country.into(), phase.as_str().into(), category.into(), n.into()]);
        }
        let domains: Vec<DomainDossier> = dossiers.into_values().collect();
        self.put(summary);
        self.put(table);
        self.artifacts.insert(
            DOMAINS_FILE.into(),
            serde_json::to_string(&domains).expect("domains serialise") + "\n",
        );
        self.domains = Some(domains);
        Ok(())
    }

    fn report_cache(&mut self) -> Result<ReportCache, AppError> {
        let stage = Stage::VtScore;
        let Some(path) = self.config.urls.report_cache.clone() else {
            return Ok(ReportCache::new());
        };
        if path.is_file() {
            self.record_input(stage, &path)?;
        }
        let cache = ReportCache::load(&path).map_err(|e| stage_error(stage, e))?;
        if cache.skipped > 0 {
            log::warn!("{}: {} unreadable cache lines skipped", path.display(), cache.skipped);
        }
        Ok(cache)
    }

    fn vtscore(&mut self) -> Result<(), AppError> {
        let stage = Stage::VtScore;
        let mut cache = self.report_cache()?;
        let u = self.config.urls.clone();
        let offline = self.config.offline;
        let mut domains = self.urls()?.to_vec();
        if !offline {
            fetch_missing(&domains, &u, &mut cache).map_err(|e| stage_error(stage, e))?;
        }
        for d in &mut domains {
            let reports = cache.in_window(&d.domain, u.report_window);
            d.score = vtscore(&d.domain, &reports, u.report_window, u.denominator);
            d.tier = d
                .score
                .as_ref()
                .and_then(|s| crate::urlsec::tier(s.score, &u.thresholds));
        }
        let mut scores = empty_table("domain_scores");
        for d in &domains {
            if let Some(s) = &d.score {
                scores.row(vec![
                    d.domain.as_str().into(),
                    d.category.as_str().into(),
                    s.score.into(),
                    s.reports.into(),
                    d.tier.unwrap_or(0.0).into(),
                ]);
            }
        }
        let mut tiers = empty_table("tier_table");
        for row in tier_table(&domains, &u.thresholds) {
            tiers.row(vec![row.threshold.into(), row.phase.as_str().into(), row.total.into(), row.unique.into()]);
        }
        let mut categories = empty_table("suspicious_categories");
        for c in category_distribution(&domains, u.suspicious_threshold) {
            categories.row(vec![
                c.country.into(),
                c.phase.as_str().into(),
                c.category.into(),
                c.domains.into(),
                c.fraction.into(),
            ]);
        }
        self.put(scores);
        self.put(tiers);
        self.put(categories);
        self.artifacts.insert(
            DOSSIERS_FILE.into(),
            serde_json::to_string_pretty(&domains).expect("dossiers serialise") + "\n",
        );
        Ok(())
    }
}

#[cfg(feature = "live")]
fn fetch_missing(
    domains: &[DomainDossier],
    urls: &super::config::UrlSection,
    cache: &mut ReportCache,
) -> Result<(), crate::urlsec::UrlError> {
    use crate::urlsec::{Backoff, ReportFetcher, SystemClock, TokenBucket, VirusTotalClient};
    let missing: Vec<&DomainDossier> = domains
        .iter()
        .filter(|d| !d.suffix.is_empty() && !cache.contains(&d.domain))
        .collect();
    if missing.is_empty() {
        return Ok(());
    }
    let mut client = VirusTotalClient::from_env()?;
    let mut clock = SystemClock::default();
    let mut fetcher = ReportFetcher {
        source: &mut client,
        clock: &mut clock,
        limiter: TokenBucket::new(urls.requests_per_minute, 1),
        backoff: Backoff::default(),
    };
    for d in missing {
        let outcome = fetcher.fetch_reports(&d.domain, urls.report_window, cache)?;
        if outcome.partial {
            log::warn!("{}: reports incomplete", d.domain);
        }
    }
    Ok(())
}

#[cfg(not(feature = "live"))]
fn fetch_missing(
    domains: &[DomainDossier],
    _urls: &super::config::UrlSection,
    cache: &mut ReportCache,
) -> Result<(), crate::urlsec::UrlError> {
    let missing = domains.iter().filter(|d| !cache.contains(&d.domain)).count();
    if missing > 0 {
        log::warn!("{missing} domains have no cached reports and this build has no network client");
    }
    Ok(())
}

/// Runs every stage on a validated config. The bundle is not written.
pub fn run_pipeline(config: &PipelineConfig, base: &Path) -> Result<ReportBundle, AppError> {
    let mut pipeline = Pipeline::new(config, base);
    for stage in Stage::ALL {
        pipeline.run(stage)?;
    }
    Ok(pipeline.finish(None))
}

/// Runs one stage, reading earlier stages' products from the output
/// directory where present. Only that stage's tables are returned.
pub fn run_stage(config: &PipelineConfig, base: &Path, stage: Stage) -> Result<ReportBundle, AppError> {
    let mut pipeline = Pipeline::new(config, base).reusing_outputs();
    pipeline.run(stage)?;
    let mut bundle = pipeline.finish(Some(stage.name()));
    let own = stage_tables(stage);
    bundle.tables.retain(|name, _| own.contains(&name.as_str()));
    let files = stage_artifacts(stage);
    bundle.artifacts.retain(|name, _| files.contains(&name.as_str()));
    Ok(bundle)
}

pub fn stage_tables(stage: Stage) -> &'static [&'static str] {
    match stage {
        Stage::Ingest => &["corpus_summary", "posts_per_user", "hashtags_per_post", "phase_counts"],
        Stage::Periods => &["infection_rates"],
        Stage::Hashtags => &["hashtag_clusters", "hashtag_top_terms", "hashtag_members"],
        Stage::Topics => &["topic_top_terms", "topic_counts"],
        Stage::Sentiment => &["sentiment"],
        Stage::PrivacyTrain => &["hmm_summary"],
        Stage::PrivacyScore => &["risk_cdf", "risk_vs_posts", "risk_by_sequence", "privacy_summary"],
        Stage::Urls => &["url_summary", "domain_categories"],
        Stage::VtScore => &["domain_scores", "tier_table", "suspicious_categories"],
    }
}

pub fn stage_artifacts(stage: Stage) -> &'static [&'static str] {
    match stage {
        Stage::Ingest => &[POSTS_FILE],
        Stage::Topics => &[TOPICS_FILE],
        Stage::PrivacyTrain => &[HMM_FILE, VOCABULARY_FILE],
        Stage::PrivacyScore => &[TRACES_FILE],
        Stage::Urls => &[DOMAINS_FILE],
        Stage::VtScore => &[DOSSIERS_FILE],
        Stage::Periods | Stage::Hashtags | Stage::Sentiment => &[],
    }
}

/// Collects every table already emitted in the output directory into one
/// bundle, checking each against its declared schema.
pub fn collect_report(config: &PipelineConfig, base: &Path) -> Result<ReportBundle, AppError> {
    let tables = super::bundle::load_tables(&config.output)?;
    let mut pipeline = Pipeline::new(config, base);
    for name in tables.keys() {
        for ext in ["json", "csv"] {
            let path = config.output.join(format!("{name}.{ext}"));
            if path.is_file() {
                pipeline.record_input(Stage::Ingest, &path)?;
                break;
            }
        }
    }
    let mut bundle = pipeline.finish(Some("report"));
    bundle.tables = tables;
    Ok(bundle)
}

impl From<super::table::SchemaError> for AppError {
    fn from(e: super::table::SchemaError) -> Self {
        AppError::Schema(e.to_string())
    }
}
