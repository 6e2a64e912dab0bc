//! Multi-entity Bayesian networks at desk scale.
//!
//! An [`MTheory`] is a set of MFrags, each holding context constraints,
//! input and resident variable templates, and local distributions for its
//! residents. A query grounds the templates into a situation-specific
//! Bayesian network ([`Ssbn`]) which is then solved exactly.

mod infer;
mod model;
mod ssbn;
mod validate;

use thiserror::Error;

pub use infer::{infer, infer_enumerate, ENUMERATION_STATE_CAP};
pub use model::{
    ContextConstraint, DistRow, Entity, EntityId, Finding, GroundedVar, InputVariable, LocalDistribution, MFrag,
    MTheory, OrdinaryVariable, ResidentVariable, StateSpace, BUILTIN_EQUAL, BUILTIN_NOT_EQUAL, FALSE_STATE, TRUE_STATE,
};
pub use ssbn::{build_ssbn, Ssbn, SsbnNode, DEFAULT_DEPTH_LIMIT};
pub use validate::{validate_mtheory, Violation, ViolationKind};

/// Probability vectors must sum to one within this tolerance.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MebnError {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("invalid MTheory: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("invalid entity identifier '{0}'")]
    InvalidEntity(String),
    #[error("unknown variable '{0}'")]
    UnknownVariable(String),
    #[error("unknown entity '{0}'")]
    UnknownEntity(String),
    #[error("{var}: expected {expected} arguments, got {got}")]
    Arity { var: String, expected: usize, got: usize },
    #[error("{var}: argument '{arg}' is not bound")]
    UnboundArgument { var: String, arg: String },
    #[error("grounding {var} exceeds depth limit {limit}")]
    DepthExceeded { limit: usize, var: String },
    #[error("depth limit must be at least 1")]
    InvalidDepthLimit,
    #[error("grounding cycle through {0}")]
    GroundingCycle(String),
    #[error("{0}: no distribution row applies")]
    NoDistribution(String),
    #[error("{0}: distribution length does not match state space")]
    StateSpace(String),
    #[error("'{state}' is not a state of {var}")]
    InvalidState { var: String, state: String },
    #[error("conflicting evidence on {0}")]
    ConflictingEvidence(String),
    #[error("evidence has zero probability")]
    InconsistentEvidence,
    #[error("node {0} is not in the network")]
    NodeNotFound(usize),
    #[error("joint state space of {states} exceeds the enumeration cap {cap}")]
    StateSpaceCap { states: u128, cap: u128 },
    #[error("malformed network: {0}")]
    MalformedNetwork(String),
}

/// Parses and validates an MTheory JSON document.
pub fn load_mtheory(text: &str) -> Result<MTheory, MebnError> {
    let theory: MTheory = serde_json::from_str(text).map_err(|e| MebnError::Syntax(e.to_string()))?;
    let violations = validate_mtheory(&theory);
    if !violations.is_empty() {
        return Err(MebnError::Invalid(violations));
    }
    Ok(theory)
}

/// Posterior over the states of `query`, grounding then solving exactly.
pub fn query_posterior(
    theory: &MTheory,
    query: &GroundedVar,
    evidence: &[(GroundedVar, String)],
    depth_limit: usize,
) -> Result<(Vec<String>, Vec<f64>), MebnError> {
    let net = build_ssbn(theory, query, evidence, depth_limit)?;
    let dist = infer(&net, net.query)?;
    Ok((net.nodes[net.query].states.clone(), dist))
}
