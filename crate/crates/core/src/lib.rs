//! Bias auditing for generative language models.
//!
//! The crate covers the full audit loop: expand prompt templates into
//! replicated trial plans ([`experiment`]), execute them against a text
//! generation backend ([`backend`]), map free-text responses onto the
//! sensitive attribute and content category ([`categorize`]), and compute
//! independence, separation and sufficiency statistics ([`metrics`]) along
//! with embedding-based gender polarity scores ([`polarity`]). [`report`]
//! assembles everything into a serializable audit report.

pub mod backend;
pub mod categorize;
pub mod data;
pub mod experiment;
pub mod jsonl;
pub mod metrics;
pub mod polarity;
pub mod report;
pub mod text;

pub use experiment::{Attribute, ExperimentKind, RolePair, TrialSpec};
