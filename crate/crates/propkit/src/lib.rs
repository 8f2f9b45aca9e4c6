//! propkit — a toolkit for news propagation trees.
//!
//! The crate covers the full lifecycle of a propagation dataset:
//!
//! * [`tree`] — the core data model: a news root plus comment nodes,
//!   validation, traversal order, and the canonical JSONL format;
//! * [`ingest`] — readers for raw dataset layouts, repair/drop reporting,
//!   and deterministic train/val/test splitting;
//! * [`sampler`] — bidirectional masked learning-sample construction from
//!   breadth- and depth-first tree linearizations;
//! * [`prompt`] — the instruction templates and the node-JSON wire contract
//!   shared by sampling and enhancement;
//! * [`gateway`] — live/mock/replay access to a chat-completions model with
//!   prompt fingerprinting and record/replay storage;
//! * [`enhance`] — validation-gated generation of synthetic comment nodes,
//!   with full transcripts;
//! * [`metrics`] — structural and semantic quality measures and reports;
//! * [`detect`] — a feature-based detection harness with early and
//!   cross-platform evaluation scenarios;
//! * [`fixture`] — seeded synthetic tree generators used by tests, demos,
//!   and benchmarks.

pub mod detect;
pub mod enhance;
pub mod fixture;
pub mod gateway;
pub mod ingest;
pub mod metrics;
pub mod prompt;
pub mod sampler;
pub mod tree;
