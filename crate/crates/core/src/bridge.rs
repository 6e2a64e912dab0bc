//! Mapping between a grammar and an MTheory, and probability conflation.
//!
//! Every nonterminal becomes an input variable of the theory, derivations
//! and rules become entities, and a `hasProbability(d, r)` resident gives the
//! probability that derivation `d` is a semantically correct product of rule
//! `r`. Syntactic and semantic probabilities are combined by conflation.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::grammar::{Pcfg, Rhs, Rule};
use crate::mebn::{
    validate_mtheory, EntityId, InputVariable, LocalDistribution, MFrag, MTheory, MebnError, OrdinaryVariable,
    ResidentVariable, StateSpace, Violation,
};

pub const HAS_PROBABILITY: &str = "hasProbability";
pub const DERIVATION_TYPE: &str = "Derivation";
pub const RULE_TYPE: &str = "Rule";
/// Name of the fragment created when the theory has none.
pub const BRIDGE_MFRAG: &str = "PcfgBridge";
pub const NEUTRAL: [f64; 2] = [0.5, 0.5];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BridgeError {
    #[error("'{name}' is already a {kind} variable of MFrag '{mfrag}'")]
    NameCollision { name: String, kind: &'static str, mfrag: String },
    #[error("existing {HAS_PROBABILITY} must take two arguments and have states [T, F]")]
    BadHasProbability,
    #[error("empty derivation")]
    EmptyDerivation,
    #[error("derivations '{first}' and '{second}' both canonicalize to '{id}'")]
    CanonicalCollision { first: String, second: String, id: String },
    #[error("bridged theory is invalid: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error(transparent)]
    Mebn(#[from] MebnError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConflationError {
    #[error("probability {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("contradictory certainties cannot be conflated")]
    Contradiction,
    #[error("distributions must share a state space of at least 2 states")]
    Shape,
}

/// Canonical entity symbol: lowercase ASCII, every run of other characters
/// collapsed to one underscore, trimmed at both ends.
pub fn canonicalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut gap = false;
    for c in text.chars() {
        if c.is_ascii_alphanumeric() {
            if gap && !out.is_empty() {
                out.push('_');
            }
            gap = false;
            out.push(c.to_ascii_lowercase());
        } else {
            gap = true;
        }
    }
    out
}

/// Entity symbol of a rule, `lhs->rhs1_rhs2` with canonical symbols.
pub fn rule_entity(rule: &Rule) -> String {
    let rhs = match &rule.rhs {
        Rhs::Binary(l, r) => format!("{}_{}", canonicalize(l), canonicalize(r)),
        Rhs::Lexical(t) => canonicalize(t),
    };
    format!("{}->{}", canonicalize(&rule.lhs), rhs)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HasProbabilityRef {
    pub variable: String,
    pub home_mfrag: String,
}

/// Correspondence produced by [`induce_bridge`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BridgeBinding {
    /// Nonterminal to input-variable name.
    pub nonterminal_inputs: BTreeMap<String, String>,
    /// Derivation text to entity.
    pub derivations: BTreeMap<String, EntityId>,
    /// MFrag name to the `hasProbability` resident it relies on.
    pub has_probability: BTreeMap<String, HasProbabilityRef>,
}

impl BridgeBinding {
    /// Registers `derivation` as an entity of `theory`. The same text always
    /// yields the same identifier; distinct texts with one canonical form are
    /// rejected.
    pub fn register_derivation(&mut self, theory: &mut MTheory, derivation: &str) -> Result<EntityId, BridgeError> {
        if let Some(id) = self.derivations.get(derivation) {
            return Ok(id.clone());
        }
        let canonical = canonicalize(derivation);
        if canonical.is_empty() {
            return Err(BridgeError::EmptyDerivation);
        }
        if let Some((first, _)) = self.derivations.iter().find(|(_, id)| id.as_str() == canonical) {
            return Err(BridgeError::CanonicalCollision {
                first: first.clone(),
                second: derivation.to_string(),
                id: canonical,
            });
        }
        let id = EntityId::new(&canonical)?;
        theory.register_entity(&id, Some(DERIVATION_TYPE));
        self.derivations.insert(derivation.to_string(), id.clone());
        Ok(id)
    }

    pub fn register_rule(&self, theory: &mut MTheory, rule: &Rule) -> Result<EntityId, BridgeError> {
        let id = EntityId::new(&rule_entity(rule))?;
        theory.register_entity(&id, Some(RULE_TYPE));
        Ok(id)
    }
}

fn kind_of(m: &MFrag, name: &str) -> Option<&'static str> {
    if m.resident(name).is_some() {
        Some("resident")
    } else if m.input(name).is_some() {
        Some("input")
    } else if m.context.iter().any(|c| c.name == name) {
        Some("context")
    } else {
        None
    }
}

fn fresh_ordinary_var(m: &mut MFrag, base: &str, type_tag: &str) -> String {
    if let Some(ov) = m.ordinary_var(base) {
        if ov.type_tag == type_tag {
            return base.to_string();
        }
    }
    let mut name = base.to_string();
    let mut n = 1;
    while m.ordinary_var(&name).is_some() {
        name = format!("{base}{n}");
        n += 1;
    }
    m.ordinary_vars.push(OrdinaryVariable { name: name.clone(), type_tag: type_tag.to_string() });
    name
}

/// Extends `theory` so every nonterminal of `grammar` is an input variable
/// and a `hasProbability(d, r)` resident exists. Applying it to its own
/// output changes nothing.
pub fn induce_bridge(grammar: &Pcfg, theory: &MTheory) -> Result<(MTheory, BridgeBinding), BridgeError> {
    let mut out = theory.clone();

    for nt in grammar.nonterminals() {
        for m in &theory.mfrags {
            if let Some(kind) = kind_of(m, nt).filter(|k| *k != "input") {
                return Err(BridgeError::NameCollision { name: nt.clone(), kind, mfrag: m.name.clone() });
            }
        }
    }
    let hp_home = match theory.resident(HAS_PROBABILITY) {
        Some((m, r)) => {
            let states_ok = r.states.is_boolean();
            if r.args.len() != 2 || !states_ok {
                return Err(BridgeError::BadHasProbability);
            }
            Some(m.name.clone())
        }
        None => {
            if let Some(m) = theory.mfrags.iter().find(|m| kind_of(m, HAS_PROBABILITY).is_some()) {
                let kind = kind_of(m, HAS_PROBABILITY).unwrap_or("input");
                return Err(BridgeError::NameCollision { name: HAS_PROBABILITY.into(), kind, mfrag: m.name.clone() });
            }
            None
        }
    };

    if out.mfrags.is_empty() {
        out.mfrags.push(MFrag::new(BRIDGE_MFRAG));
    }
    let home = out.mfrags[0].name.clone();

    let mut nonterminal_inputs = BTreeMap::new();
    for nt in grammar.nonterminals() {
        if !out.is_input_anywhere(nt) {
            out.mfrags[0].inputs.push(InputVariable {
                name: nt.clone(),
                args: Vec::new(),
                states: None,
                prior: Some(NEUTRAL.to_vec()),
            });
        }
        nonterminal_inputs.insert(nt.clone(), nt.clone());
    }

    let hp_home = match hp_home {
        Some(h) => h,
        None => {
            let m = &mut out.mfrags[0];
            let d = fresh_ordinary_var(m, "d", DERIVATION_TYPE);
            let r = fresh_ordinary_var(m, "r", RULE_TYPE);
            m.residents.push(ResidentVariable {
                name: HAS_PROBABILITY.into(),
                args: vec![d, r],
                states: StateSpace::default(),
                parents: Vec::new(),
                cpt: Some(LocalDistribution { rows: Vec::new(), default: Some(NEUTRAL.to_vec()) }),
            });
            home
        }
    };

    let has_probability = out
        .mfrags
        .iter()
        .map(|m| (m.name.clone(), HasProbabilityRef { variable: HAS_PROBABILITY.into(), home_mfrag: hp_home.clone() }))
        .collect();

    let violations = validate_mtheory(&out);
    if !violations.is_empty() {
        return Err(BridgeError::Invalid(violations));
    }
    Ok((out, BridgeBinding { nonterminal_inputs, derivations: BTreeMap::new(), has_probability }))
}

fn check_unit(p: f64) -> Result<(), ConflationError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(ConflationError::OutOfRange(p))
    }
}

/// Conflation of two Bernoulli distributions given by their success
/// probabilities: `pq / (pq + (1-p)(1-q))`. A uniform argument is neutral.
pub fn conflate(p: f64, q: f64) -> Result<f64, ConflationError> {
    check_unit(p)?;
    check_unit(q)?;
    if q == 0.5 {
        return Ok(p);
    }
    if p == 0.5 {
        return Ok(q);
    }
    let agree = p * q;
    let denom = agree + (1.0 - p) * (1.0 - q);
    if denom == 0.0 {
        return Err(ConflationError::Contradiction);
    }
    Ok(agree / denom)
}

/// Normalized pointwise product of distributions over one state space.
pub fn conflate_distributions(dists: &[Vec<f64>]) -> Result<Vec<f64>, ConflationError> {
    let Some(first) = dists.first() else { return Err(ConflationError::Shape) };
    if first.len() < 2 || dists.iter().any(|d| d.len() != first.len()) {
        return Err(ConflationError::Shape);
    }
    if let Some(&bad) = dists.iter().flatten().find(|p| !(**p >= 0.0 && p.is_finite())) {
        return Err(ConflationError::OutOfRange(bad));
    }
    let mut product = vec![1.0; first.len()];
    for d in dists {
        product.iter_mut().zip(d).for_each(|(acc, p)| *acc *= p);
    }
    let z: f64 = product.iter().sum();
    if z == 0.0 {
        return Err(ConflationError::Contradiction);
    }
    Ok(product.into_iter().map(|p| p / z).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CombinedProbability {
    pub syntactic: f64,
    pub semantic: f64,
    pub conflated: f64,
}

pub fn combined_rule_probability(p_rule: f64, semantic: f64) -> Result<CombinedProbability, ConflationError> {
    Ok(CombinedProbability { syntactic: p_rule, semantic, conflated: conflate(p_rule, semantic)? })
}
