//! Core engine for running ethical-AI risk assessments.
//!
//! The crate is organized along the assessment workflow:
//!
//! - [`taxonomy`]: the fixed risk, pitfall, fundamental, role, answer and
//!   lifecycle vocabularies.
//! - [`question_bank`]: versioned risk-scan question banks, balance checks
//!   and the revision lifecycle.
//! - [`assessment`]: organizations, use-cases, scan sessions and responses.
//! - [`scoring`]: scan profiles, principle gap analysis and scan deltas.
//! - [`risk_register`]: risk scenarios, heatmap prioritization, mitigations
//!   and stakeholder engagement.
//! - [`insights`]: cohort statistics, benchmarking and the question
//!   feedback log.
//! - [`report`]: text and CSV renderings of the above.
//!
//! Everything here is a pure value or function; storage lives in the
//! `dress-store` crate.

pub mod assessment;
pub mod doc;
pub mod insights;
pub mod par;
pub mod question_bank;
pub mod report;
pub mod risk_register;
pub mod scoring;
pub mod taxonomy;

pub use taxonomy::{Answer, Fundamental, LifecycleStage, Pitfall, Risk, Role};

/// Timestamps throughout the engine.
pub type Timestamp = chrono::DateTime<chrono::Utc>;
