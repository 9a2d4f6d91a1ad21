//! Core library for mining transsuasion pairs from a social-post corpus,
//! building benchmark task suites, scoring submissions, and running an
//! Elo-rated arena judged by a pluggable oracle.
//!
//! The pipeline stages map onto the top-level modules:
//!
//! - [`corpus`]: ingestion, normalization, post/account filters, like percentiles
//! - [`providers`]: the uniform contract for external model services, with
//!   on-disk caching and deterministic mocks
//! - [`simtext`]: cosine / edit / Jaccard / media similarity
//! - [`pairminer`]: same-account pair candidates, gate checks, type assignment
//! - [`transcreate`]: cross-account sibling grouping and transcreation pairs
//! - [`benchkit`]: splits, task instances, prompt templates, metrics,
//!   instruction-dataset emission
//! - [`arena`]: Elo tournaments, replayable match logs, the iterative
//!   improvement loop, and a Bradley-Terry leaderboard view
//! - [`gateway`]: file-backed service state shared by the CLI and HTTP server

pub mod arena;
pub mod benchkit;
pub mod corpus;
pub mod gateway;
pub mod pairminer;
pub mod providers;
pub mod simtext;
pub mod transcreate;

pub use corpus::{AccountRecord, FilterReport, MediaAsset, PostRecord};
pub use pairminer::{GateThresholds, PairType, TranssuasionPair};
pub use providers::{EmbeddingVector, JudgeVerdict, ProviderConfig, Role, TokenScore};
