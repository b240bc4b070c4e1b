//! Soft-skill mining from job advertisements.
//!
//! The pipeline has three stages, each usable on its own:
//!
//! 1. **Lexicon construction** ([`lexicon`], [`embedding`], [`clustering`]):
//!    clean crowd-submitted skill phrases, score how reliably each phrase
//!    refers to the candidate via trust-weighted votes, and group
//!    near-synonyms into skill clusters by average-linkage cosine
//!    clustering of averaged word vectors.
//! 2. **Detection** ([`detection`]): find skill clusters in job
//!    descriptions with a gap-tolerant ordered token matcher.
//! 3. **Statistics** ([`stats`], [`gender`]): matched salary rewards with
//!    permutation significance, skill counts by salary band, and the
//!    gender-composition / stereotype analyses.
//!
//! [`corpus`] holds the shared ingestion and text plumbing.

pub mod clustering;
pub mod corpus;
pub mod detection;
pub mod embedding;
pub mod gender;
pub mod lexicon;
pub mod stats;
