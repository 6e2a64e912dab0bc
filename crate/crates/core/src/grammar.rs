//! CNF probabilistic context-free grammars.
//!
//! A [`Pcfg`] is loaded from a line-based text format:
//!
//! ```text
//! %start S          # optional, defaults to the first rule's LHS
//! S  -> NP VP 1.0   # binary rule
//! NP -> 'fish' 0.18 # lexical rule, terminals are quoted
//! ```
//!
//! Only Chomsky normal form is accepted. Symbol sets are inferred from the
//! rules, and the rule order of the file is preserved everywhere downstream.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance used when checking that the rules of one LHS sum to one.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GrammarError {
    #[error("line {line}: syntax error: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: probability {value} outside (0, 1]")]
    Probability { line: usize, value: f64 },
    #[error("line {line}: non-CNF rule ({count} right-hand side symbols)")]
    NonCnf { line: usize, count: usize },
    #[error("line {line}: non-CNF rule: {msg}")]
    NonCnfShape { line: usize, msg: String },
    #[error("line {line}: duplicate rule {rule}")]
    Duplicate { line: usize, rule: String },
    #[error("symbol '{0}' used both as terminal and nonterminal")]
    KindConflict(String),
    #[error("invalid symbol name '{0}'")]
    InvalidSymbol(String),
    #[error("unknown nonterminal '{0}'")]
    UnknownNonterminal(String),
    #[error("grammar has no start symbol (no rules and no %start directive)")]
    NoStart,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SymbolKind {
    Nonterminal,
    Terminal,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Symbol {
    pub name: String,
    pub kind: SymbolKind,
}

/// Right-hand side of a CNF rule.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Rhs {
    Binary(String, String),
    Lexical(String),
}

impl Rhs {
    pub fn symbols(&self) -> Vec<&str> {
        match self {
            Rhs::Binary(l, r) => vec![l, r],
            Rhs::Lexical(t) => vec![t],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "RuleRepr", try_from = "RuleRepr")]
pub struct Rule {
    pub lhs: String,
    pub rhs: Rhs,
    pub prob: f64,
}

// json shape: {lhs, rhs: [..], prob}; one rhs symbol means a lexical rule
#[derive(Serialize, Deserialize)]
struct RuleRepr {
    lhs: String,
    rhs: Vec<String>,
    prob: f64,
}

impl From<Rule> for RuleRepr {
    fn from(r: Rule) -> Self {
        RuleRepr { lhs: r.lhs, rhs: r.rhs.symbols().into_iter().map(str::to_string).collect(), prob: r.prob }
    }
}

impl TryFrom<RuleRepr> for Rule {
    type Error = String;

    fn try_from(r: RuleRepr) -> Result<Self, String> {
        let mut rhs = r.rhs.into_iter();
        let rhs = match (rhs.next(), rhs.next(), rhs.next()) {
            (Some(t), None, None) => Rhs::Lexical(t),
            (Some(a), Some(b), None) => Rhs::Binary(a, b),
            _ => return Err("rule rhs must have one or two symbols".into()),
        };
        Ok(Rule { lhs: r.lhs, rhs, prob: r.prob })
    }
}

impl Rule {
    pub fn binary(lhs: &str, left: &str, right: &str, prob: f64) -> Self {
        Rule { lhs: lhs.into(), rhs: Rhs::Binary(left.into(), right.into()), prob }
    }

    pub fn lexical(lhs: &str, terminal: &str, prob: f64) -> Self {
        Rule { lhs: lhs.into(), rhs: Rhs::Lexical(terminal.into()), prob }
    }

    pub fn is_lexical(&self) -> bool {
        matches!(self.rhs, Rhs::Lexical(_))
    }

    /// Rule text without the probability, e.g. `VP -> VP PP`.
    pub fn signature(&self) -> String {
        match &self.rhs {
            Rhs::Binary(l, r) => format!("{} -> {} {}", self.lhs, l, r),
            Rhs::Lexical(t) => format!("{} -> '{}'", self.lhs, t),
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.signature(), self.prob)
    }
}

/// Normalization failure of one nonterminal.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormViolation {
    pub nonterminal: String,
    pub sum: f64,
}

impl fmt::Display for NormViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Twelve decimals hide float noise but keep a 1e-6 deviation visible.
        let sum = format!("{:.12}", self.sum);
        write!(
            f,
            "rules for {} sum to {} (expected 1)",
            self.nonterminal,
            sum.trim_end_matches('0').trim_end_matches('.')
        )
    }
}

/// A binary rule compiled to symbol indices.
#[derive(Debug, Clone, Copy)]
pub(crate) struct BinaryIx {
    pub rule: usize,
    pub lhs: usize,
    pub left: usize,
    pub right: usize,
}

/// An immutable CNF PCFG.
#[derive(Debug, Clone)]
pub struct Pcfg {
    start: String,
    nonterminals: Vec<String>,
    terminals: Vec<String>,
    rules: Vec<Rule>,
    nt_index: HashMap<String, usize>,
    rule_index: HashMap<(String, Rhs), usize>,
    rule_lhs: Vec<usize>,
    binary: Vec<BinaryIx>,
    lexical: HashMap<String, Vec<usize>>,
}

impl PartialEq for Pcfg {
    fn eq(&self, other: &Self) -> bool {
        self.start == other.start && self.rules == other.rules
    }
}

fn valid_name(name: &str) -> bool {
    !name.is_empty() && !name.chars().any(char::is_whitespace)
}

impl Pcfg {
    /// Builds a grammar from rules in order. Symbol sets are inferred; the
    /// start symbol is always a nonterminal even when it has no rules.
    pub fn new(start: &str, rules: Vec<Rule>) -> Result<Self, GrammarError> {
        Self::build(start, rules.into_iter().map(|r| (0, r)).collect())
    }

    fn build(start: &str, rules: Vec<(usize, Rule)>) -> Result<Self, GrammarError> {
        if !valid_name(start) {
            return Err(GrammarError::InvalidSymbol(start.to_string()));
        }
        let mut nonterminals = vec![start.to_string()];
        let mut nt_index = HashMap::from([(start.to_string(), 0)]);
        let mut terminals: Vec<String> = Vec::new();
        let mut term_set: HashSet<String> = HashSet::new();
        let mut rule_index = HashMap::new();

        let mut add_nt = |name: &str, nts: &mut Vec<String>| -> Result<usize, GrammarError> {
            if !valid_name(name) {
                return Err(GrammarError::InvalidSymbol(name.to_string()));
            }
            Ok(*nt_index.entry(name.to_string()).or_insert_with(|| {
                nts.push(name.to_string());
                nts.len() - 1
            }))
        };

        let mut rule_lhs = Vec::with_capacity(rules.len());
        let mut binary = Vec::new();
        let mut lexical: HashMap<String, Vec<usize>> = HashMap::new();
        let mut out = Vec::with_capacity(rules.len());

        for (line, rule) in rules {
            if !(rule.prob > 0.0 && rule.prob <= 1.0) {
                return Err(GrammarError::Probability { line, value: rule.prob });
            }
            let ix = out.len();
            let lhs = add_nt(&rule.lhs, &mut nonterminals)?;
            rule_lhs.push(lhs);
            match &rule.rhs {
                Rhs::Binary(l, r) => {
                    let left = add_nt(l, &mut nonterminals)?;
                    let right = add_nt(r, &mut nonterminals)?;
                    binary.push(BinaryIx { rule: ix, lhs, left, right });
                }
                Rhs::Lexical(t) => {
                    if !valid_name(t) {
                        return Err(GrammarError::InvalidSymbol(t.clone()));
                    }
                    if term_set.insert(t.clone()) {
                        terminals.push(t.clone());
                    }
                    lexical.entry(t.clone()).or_default().push(ix);
                }
            }
            let key = (rule.lhs.clone(), rule.rhs.clone());
            if rule_index.insert(key, ix).is_some() {
                return Err(GrammarError::Duplicate { line, rule: rule.signature() });
            }
            out.push(rule);
        }
        if let Some(t) = terminals.iter().find(|t| nt_index.contains_key(*t)) {
            return Err(GrammarError::KindConflict(t.clone()));
        }

        Ok(Pcfg {
            start: start.to_string(),
            nonterminals,
            terminals,
            rules: out,
            nt_index,
            rule_index,
            rule_lhs,
            binary,
            lexical,
        })
    }

    pub fn start(&self) -> &str {
        &self.start
    }

    /// Nonterminals in order of first appearance, start symbol first.
    pub fn nonterminals(&self) -> &[String] {
        &self.nonterminals
    }

    /// Terminals in order of first appearance.
    pub fn terminals(&self) -> &[String] {
        &self.terminals
    }

    pub fn symbols(&self) -> impl Iterator<Item = Symbol> + '_ {
        let nts = self.nonterminals.iter().map(|n| Symbol { name: n.clone(), kind: SymbolKind::Nonterminal });
        let ts = self.terminals.iter().map(|t| Symbol { name: t.clone(), kind: SymbolKind::Terminal });
        nts.chain(ts)
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn is_terminal(&self, name: &str) -> bool {
        self.lexical.contains_key(name)
    }

    pub fn is_nonterminal(&self, name: &str) -> bool {
        self.nt_index.contains_key(name)
    }

    /// Position of a rule (matched on lhs and rhs) in file order.
    pub fn rule_position(&self, rule: &Rule) -> Option<usize> {
        self.rule_index.get(&(rule.lhs.clone(), rule.rhs.clone())).copied()
    }

    /// All rules with the given LHS, in file order.
    pub fn rules_for(&self, lhs: &str) -> Result<Vec<&Rule>, GrammarError> {
        if !self.is_nonterminal(lhs) {
            return Err(GrammarError::UnknownNonterminal(lhs.to_string()));
        }
        Ok(self.rules.iter().filter(|r| r.lhs == lhs).collect())
    }

    /// Reports every nonterminal whose rule probabilities do not sum to one
    /// within [`NORMALIZATION_TOLERANCE`]. Nonterminals without rules are
    /// not reported.
    pub fn validate_normalization(&self) -> Vec<NormViolation> {
        let mut sums = vec![0.0; self.nonterminals.len()];
        let mut seen = vec![false; self.nonterminals.len()];
        for (rule, &lhs) in self.rules.iter().zip(&self.rule_lhs) {
            sums[lhs] += rule.prob;
            seen[lhs] = true;
        }
        self.nonterminals
            .iter()
            .zip(sums.iter().zip(&seen))
            .filter(|(_, (sum, seen))| **seen && (**sum - 1.0).abs() > NORMALIZATION_TOLERANCE)
            .map(|(nt, (sum, _))| NormViolation { nonterminal: nt.clone(), sum: *sum })
            .collect()
    }

    /// Grammar file text; `load_grammar(&g.to_text())` reproduces `g`.
    pub fn to_text(&self) -> String {
        let mut out = format!("%start {}\n", self.start);
        for rule in &self.rules {
            out.push_str(&rule.to_string());
            out.push('\n');
        }
        out
    }

    pub(crate) fn nt_id(&self, name: &str) -> Option<usize> {
        self.nt_index.get(name).copied()
    }

    pub(crate) fn rule_lhs_id(&self, rule: usize) -> usize {
        self.rule_lhs[rule]
    }

    pub(crate) fn binary_rules(&self) -> &[BinaryIx] {
        &self.binary
    }

    pub(crate) fn lexical_rules(&self, terminal: &str) -> &[usize] {
        self.lexical.get(terminal).map(Vec::as_slice).unwrap_or(&[])
    }
}

// Drops a trailing `#` comment that is not inside a quoted terminal.
fn strip_comment(line: &str) -> &str {
    let mut quoted = false;
    for (i, c) in line.char_indices() {
        match c {
            '\'' => quoted = !quoted,
            '#' if !quoted => return &line[..i],
            _ => {}
        }
    }
    line
}

fn parse_terminal(tok: &str) -> Option<&str> {
    let inner = tok.strip_prefix('\'')?.strip_suffix('\'')?;
    (!inner.is_empty() && !inner.contains('\'')).then_some(inner)
}

/// Parses grammar file text. Rule order follows the file.
pub fn load_grammar(text: &str) -> Result<Pcfg, GrammarError> {
    let mut start: Option<String> = None;
    let mut rules = Vec::new();

    for (ix, raw) in text.lines().enumerate() {
        let line = ix + 1;
        let content = strip_comment(raw).trim();
        if content.is_empty() {
            continue;
        }
        let toks: Vec<&str> = content.split_whitespace().collect();
        if toks[0] == "%start" {
            if toks.len() != 2 || !valid_name(toks[1]) {
                return Err(GrammarError::Syntax { line, msg: "expected '%start SYMBOL'".into() });
            }
            start = Some(toks[1].to_string());
            continue;
        }
        if toks.len() < 4 || toks[1] != "->" {
            return Err(GrammarError::Syntax { line, msg: "expected 'LHS -> RHS... PROB'".into() });
        }
        let lhs = toks[0];
        if parse_terminal(lhs).is_some() || lhs.contains('\'') {
            return Err(GrammarError::Syntax { line, msg: format!("LHS '{lhs}' must be a nonterminal") });
        }
        let prob_tok = toks[toks.len() - 1];
        let prob: f64 = prob_tok
            .parse()
            .map_err(|_| GrammarError::Syntax { line, msg: format!("bad probability '{prob_tok}'") })?;
        if !prob.is_finite() || prob <= 0.0 || prob > 1.0 {
            return Err(GrammarError::Probability { line, value: prob });
        }
        let rhs_toks = &toks[2..toks.len() - 1];
        let rhs = match rhs_toks {
            [t] => match parse_terminal(t) {
                Some(term) => Rhs::Lexical(term.to_string()),
                None => return Err(GrammarError::NonCnfShape { line, msg: format!("unary rule to '{t}'") }),
            },
            [l, r] => {
                if l.contains('\'') || r.contains('\'') {
                    return Err(GrammarError::NonCnfShape {
                        line,
                        msg: "binary rules must have two nonterminals".into(),
                    });
                }
                Rhs::Binary(l.to_string(), r.to_string())
            }
            _ => return Err(GrammarError::NonCnf { line, count: rhs_toks.len() }),
        };
        rules.push((line, Rule { lhs: lhs.to_string(), rhs, prob }));
    }

    let start = match start {
        Some(s) => s,
        None => rules.first().map(|(_, r)| r.lhs.clone()).ok_or(GrammarError::NoStart)?,
    };
    Pcfg::build(&start, rules)
}
