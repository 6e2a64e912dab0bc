//! Probabilistic CYK parsing over CNF grammars, with prepositional-phrase
//! attachment resolved by querying a multi-entity Bayesian network
//! knowledge base.
//!
//! * [`grammar`]: CNF PCFG loading and validation.
//! * [`chart`]: Viterbi, inside and exhaustive parsing.
//! * [`mebn`]: MTheory model, SSBN construction and exact inference.
//! * [`bridge`]: grammar to knowledge-base mapping and probability conflation.
//! * [`ssparser`]: CYK with semantic ambiguity resolution.
//! * [`cli`]: the `ssparse` command-line front end.

pub mod bridge;
pub mod chart;
pub mod cli;
pub mod grammar;
pub mod mebn;
pub mod ssparser;

pub use bridge::{conflate, induce_bridge, BridgeBinding, BridgeError};
pub use chart::{
    enumerate_parses, inside_probability, render_tree, tree_probability, viterbi_parse, ParseError, ParseTree,
    TreeFormat,
};
pub use grammar::{load_grammar, GrammarError, Pcfg, Rhs, Rule};
pub use mebn::{load_mtheory, query_posterior, GroundedVar, MTheory, MebnError};
pub use ssparser::{parse_with_semantics, Mode, SemanticError, SemanticOptions, SemanticParse, SemanticParser};
