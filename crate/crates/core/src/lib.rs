//! Analytics toolkit for anonymised social-media post corpora.
//!
//! The crate is organised by analysis stage:
//!
//! * [`corpus`] ingests JSONL posts, filters them by country and language,
//!   assigns lockdown phases and computes infection rates.
//! * [`textmodel`] holds preprocessing, TF-IDF, K-Means and LDA.
//! * [`sentiment`] scores posts against a valence lexicon.
//! * [`privacy`] builds the event-node HMMs and computes per-user
//!   privacy probabilities and risks.
//! * [`urlsec`] extracts registered domains, categorises them and turns
//!   scanner reports into suspicion scores.
//! * [`app`] wires the stages into a reproducible pipeline and emits the
//!   report bundle.
//! * [`synth`] generates seeded synthetic corpora with ground-truth
//!   manifests, used by the shipped fixtures and the test suites.

pub mod app;
pub mod corpus;
pub mod privacy;
pub mod sentiment;
pub mod synth;
pub mod textmodel;
pub mod urlsec;

pub use corpus::{PeriodLabel, Phase, PostRecord};
pub use textmodel::SparseVec;
