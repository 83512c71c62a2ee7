use thiserror::Error;

use crate::model::{ActionId, NodeId, Violation};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed model JSON: {0}")]
    Parse(String),

    #[error("model schema error: {0}")]
    Schema(String),

    #[error("model failed validation with {} violation(s): {}", .0.len(), summarize(.0))]
    Invalid(Vec<Violation>),

    #[error("restricted action set is empty at node {node}")]
    EmptyRestriction { node: NodeId },

    #[error("policy selects action {action} at node {node}, which is not admissible")]
    InadmissiblePolicy { node: NodeId, action: ActionId },

    #[error("length mismatch: expected {expected} entries, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("growth certificate failed: gamma = {gamma} >= 1")]
    CertificateFailed { gamma: f64 },

    #[error("policy evaluation system is singular")]
    SingularSystem,

    #[error("no convergence after {iterations} iterations")]
    NonConvergence { iterations: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn summarize(violations: &[Violation]) -> String {
    let shown: Vec<String> = violations.iter().take(5).map(|v| v.to_string()).collect();
    let mut out = shown.join("; ");
    if violations.len() > 5 {
        out.push_str("; ...");
    }
    out
}
