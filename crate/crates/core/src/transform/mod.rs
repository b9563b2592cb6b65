//! The transformation catalog and the monotonicity safety analysis.
//!
//! Each rule is a checked graph-to-graph (or deployment-to-deployment)
//! rewrite: it either applies, returning a fresh artifact, or fails with
//! the unmet precondition. Rules never mutate their input and never
//! silently no-op. Scripts (see [`script`]) chain rules to walk a
//! single-node program out to a replicated deployment.

pub mod script;

#[cfg(test)]
mod tests;

mod analysis;
mod cut;
mod local;
mod replicate;

pub use analysis::{analyze_monotonicity, EdgeVerdict, MonotonicityReport, OpClass};
pub use cut::{cut_flow, cut_flow_at, force_cut_flow_at, CutOptions, CutPlacement};
pub use local::{
    elide_subaggregation, fuse_append, insert_odiff_append, push_groupby_through_join,
    push_through_odiff, upgrade_to_bp, upgrade_to_ssiv,
};
pub use replicate::{replicate_with_broadcast, ReplicateOptions};
pub use script::{apply_script, rule_catalog, AppliedRule, RuleInfo, ScriptError};

use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum TransformError {
    #[error("{rule}: precondition failed: {reason}")]
    PreconditionFailed { rule: String, reason: String },
    #[error("{rule}: no functional dependency covers {needed}")]
    MissingFd { rule: String, needed: String },
    #[error("{rule}: key mismatch: {reason}")]
    KeyMismatch { rule: String, reason: String },
    #[error("unsafe cut: order-dependent path downstream: {}", path.join(" -> "))]
    UnsafeCut { path: Vec<String> },
    #[error("function `{0}` has no declared properties")]
    UnknownFunctionProperties(String),
}

impl TransformError {
    pub(crate) fn precondition(rule: &str, reason: impl Into<String>) -> TransformError {
        TransformError::PreconditionFailed { rule: rule.to_string(), reason: reason.into() }
    }
}
