//! Probabilistic CYK over a CNF [`Pcfg`].
//!
//! The chart keeps every candidate derivation per (span, nonterminal) so that
//! a caller can override the max-product choice at ambiguous cells; plain
//! Viterbi parsing always takes the first entry.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grammar::{Pcfg, Rhs, Rule};

/// Longest sentence accepted by [`enumerate_parses`].
pub const ENUMERATION_MAX_TOKENS: usize = 12;
pub const DEFAULT_ENUMERATION_CAP: usize = 10_000;

/// Scores closer than this (absolute in log space, relative in linear
/// space) are treated as ties and ordered by grammar rule order, then split.
pub const TIE_EPSILON: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("empty input")]
    EmptyInput,
    #[error("unknown token '{token}' at position {position}")]
    UnknownToken { token: String, position: usize },
    #[error("no parse: start symbol '{0}' does not span the input")]
    NoParse(String),
    #[error("more than {cap} parses")]
    CapExceeded { cap: usize },
    #[error("enumeration is limited to {max} tokens, got {len}")]
    TooLong { len: usize, max: usize },
    #[error("rule {0} is not in the grammar")]
    RuleNotInGrammar(String),
}

/// Half-open token interval `[start, end)`.
pub type Span = (usize, usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseTree {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<Rule>,
    pub span: Span,
    #[serde(default)]
    pub children: Vec<ParseTree>,
}

impl ParseTree {
    pub fn leaf(token: &str, position: usize) -> Self {
        ParseTree { label: token.to_string(), rule: None, span: (position, position + 1), children: Vec::new() }
    }

    pub fn is_leaf(&self) -> bool {
        self.rule.is_none()
    }

    /// Tokens at the leaves, left to right.
    pub fn leaves(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a str>) {
        if self.is_leaf() {
            out.push(&self.label);
        }
        for c in &self.children {
            c.collect_leaves(out);
        }
    }

    /// Checks the structural invariants: children partition the span, leaves
    /// are single tokens, and each internal node's rule matches its children.
    pub fn is_well_formed(&self) -> bool {
        match &self.rule {
            None => self.children.is_empty() && self.span.1 == self.span.0 + 1,
            Some(rule) => {
                if rule.lhs != self.label {
                    return false;
                }
                let shape_ok = match (&rule.rhs, self.children.as_slice()) {
                    (Rhs::Lexical(t), [leaf]) => leaf.is_leaf() && &leaf.label == t,
                    (Rhs::Binary(l, r), [a, b]) => !a.is_leaf() && !b.is_leaf() && &a.label == l && &b.label == r,
                    _ => false,
                };
                let mut at = self.span.0;
                for c in &self.children {
                    if c.span.0 != at || c.span.1 <= c.span.0 {
                        return false;
                    }
                    at = c.span.1;
                }
                shape_ok && at == self.span.1 && self.children.iter().all(ParseTree::is_well_formed)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TreeFormat {
    Bracketed,
    Ascii,
    Json,
}

pub fn render_tree(tree: &ParseTree, format: TreeFormat) -> String {
    match format {
        TreeFormat::Bracketed => {
            let mut out = String::new();
            write_bracketed(tree, &mut out);
            out
        }
        TreeFormat::Ascii => {
            let mut out = format!("{}\n", tree.label);
            write_ascii(&tree.children, "", &mut out);
            out.pop();
            out
        }
        TreeFormat::Json => serde_json::to_string(tree).expect("parse trees always serialize"),
    }
}

fn write_bracketed(tree: &ParseTree, out: &mut String) {
    if tree.children.is_empty() {
        out.push_str(&tree.label);
        return;
    }
    out.push('(');
    out.push_str(&tree.label);
    for c in &tree.children {
        out.push(' ');
        write_bracketed(c, out);
    }
    out.push(')');
}

fn write_ascii(children: &[ParseTree], prefix: &str, out: &mut String) {
    for (i, c) in children.iter().enumerate() {
        let last = i + 1 == children.len();
        let _ = writeln!(out, "{prefix}{}{}", if last { "└── " } else { "├── " }, c.label);
        let next = format!("{prefix}{}", if last { "    " } else { "│   " });
        write_ascii(&c.children, &next, out);
    }
}

/// Product of the grammar probabilities of every rule used in `tree`.
pub fn tree_probability(grammar: &Pcfg, tree: &ParseTree) -> Result<f64, ParseError> {
    let Some(rule) = &tree.rule else { return Ok(1.0) };
    let pos = grammar.rule_position(rule).ok_or_else(|| ParseError::RuleNotInGrammar(rule.signature()))?;
    let mut p = grammar.rules()[pos].prob;
    for c in &tree.children {
        p *= tree_probability(grammar, c)?;
    }
    Ok(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Log,
    Linear,
}

impl Scale {
    fn lift(self, p: f64) -> f64 {
        match self {
            Scale::Log => p.ln(),
            Scale::Linear => p,
        }
    }

    fn combine(self, rule: f64, left: f64, right: f64) -> f64 {
        match self {
            Scale::Log => rule + left + right,
            Scale::Linear => rule * left * right,
        }
    }

    pub fn to_prob(self, score: f64) -> f64 {
        match self {
            Scale::Log => score.exp(),
            Scale::Linear => score,
        }
    }

    /// `head >= other` are indistinguishable scores.
    pub fn tied(self, head: f64, other: f64) -> bool {
        match self {
            Scale::Log => head == other || head - other <= TIE_EPSILON,
            Scale::Linear => head - other <= TIE_EPSILON * head.abs(),
        }
    }
}

/// One derivation of a nonterminal over a span. `split` is `None` for
/// lexical entries; `score` is in the chart's [`Scale`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellEntry {
    pub rule: usize,
    pub split: Option<usize>,
    pub score: f64,
}

/// Sorts descending by score; near-ties are ordered by rule, then split.
pub(crate) fn order_entries(entries: &mut [CellEntry], scale: Scale) {
    entries.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.rule.cmp(&b.rule)).then(a.split.cmp(&b.split)));
    let mut start = 0;
    while start < entries.len() {
        let head = entries[start].score;
        let mut end = start + 1;
        while end < entries.len() && scale.tied(head, entries[end].score) {
            end += 1;
        }
        entries[start..end].sort_by_key(|e| (e.rule, e.split));
        start = end;
    }
}

/// CYK chart: all candidate entries per (span, nonterminal), best first,
/// plus the index of the entry selected for use by enclosing spans.
#[derive(Debug, Clone)]
pub struct Chart {
    len: usize,
    scale: Scale,
    nts: usize,
    cells: Vec<Vec<CellEntry>>,
    chosen: Vec<usize>,
}

impl Chart {
    fn slot(&self, span: Span, nt: usize) -> usize {
        (span.0 * (self.len + 1) + span.1) * self.nts + nt
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn scale(&self) -> Scale {
        self.scale
    }

    /// Candidate entries for `nonterminal` over `span`, best first.
    pub fn entries(&self, grammar: &Pcfg, span: Span, nonterminal: &str) -> &[CellEntry] {
        match grammar.nt_id(nonterminal) {
            Some(nt) if span.0 < span.1 && span.1 <= self.len => &self.cells[self.slot(span, nt)],
            _ => &[],
        }
    }

    /// The entry enclosing spans build on.
    pub fn selected(&self, grammar: &Pcfg, span: Span, nonterminal: &str) -> Option<&CellEntry> {
        let nt = grammar.nt_id(nonterminal)?;
        if span.0 >= span.1 || span.1 > self.len {
            return None;
        }
        let slot = self.slot(span, nt);
        self.cells[slot].get(self.chosen[slot])
    }

    /// Builds the chart. `resolve` is called for every (span, nonterminal)
    /// with at least two candidates and returns the index of the entry to
    /// keep; cells are visited by increasing span length, then start, then
    /// nonterminal order.
    pub(crate) fn fill<E>(
        grammar: &Pcfg,
        tokens: &[&str],
        scale: Scale,
        mut resolve: impl FnMut(Span, usize, &[CellEntry]) -> Result<usize, E>,
    ) -> Result<Chart, E> {
        let len = tokens.len();
        let nts = grammar.nonterminals().len();
        let size = (len + 1) * (len + 1) * nts;
        let mut chart = Chart { len, scale, nts, cells: vec![Vec::new(); size], chosen: vec![0; size] };
        let rules = grammar.rules();

        // Index loops read best here: i and j are span bounds, not just positions.
        #[allow(clippy::needless_range_loop)]
        for width in 1..=len {
            for i in 0..=len - width {
                let j = i + width;
                let mut per_nt: Vec<Vec<CellEntry>> = vec![Vec::new(); nts];
                if width == 1 {
                    for &r in grammar.lexical_rules(tokens[i]) {
                        per_nt[grammar.rule_lhs_id(r)].push(CellEntry {
                            rule: r,
                            split: None,
                            score: scale.lift(rules[r].prob),
                        });
                    }
                } else {
                    for b in grammar.binary_rules() {
                        for k in i + 1..j {
                            let left = chart.selected_ix((i, k), b.left);
                            let right = chart.selected_ix((k, j), b.right);
                            if let (Some(l), Some(r)) = (left, right) {
                                per_nt[b.lhs].push(CellEntry {
                                    rule: b.rule,
                                    split: Some(k),
                                    score: scale.combine(scale.lift(rules[b.rule].prob), l.score, r.score),
                                });
                            }
                        }
                    }
                }
                for (nt, mut entries) in per_nt.into_iter().enumerate() {
                    if entries.is_empty() {
                        continue;
                    }
                    order_entries(&mut entries, scale);
                    let pick = if entries.len() >= 2 { resolve((i, j), nt, &entries)? } else { 0 };
                    let slot = chart.slot((i, j), nt);
                    chart.chosen[slot] = pick.min(entries.len() - 1);
                    chart.cells[slot] = entries;
                }
            }
        }
        Ok(chart)
    }

    fn selected_ix(&self, span: Span, nt: usize) -> Option<CellEntry> {
        let slot = self.slot(span, nt);
        self.cells[slot].get(self.chosen[slot]).copied()
    }

    /// Plain max-product chart.
    pub fn build(grammar: &Pcfg, tokens: &[&str], scale: Scale) -> Result<Chart, ParseError> {
        check_tokens(grammar, tokens)?;
        let chart: Result<Chart, std::convert::Infallible> = Self::fill(grammar, tokens, scale, |_, _, _| Ok(0));
        Ok(chart.unwrap_or_else(|e| match e {}))
    }

    /// Tree rooted at `nonterminal` over `span` following selected entries.
    pub fn tree(&self, grammar: &Pcfg, tokens: &[&str], span: Span, nonterminal: &str) -> Option<ParseTree> {
        let nt = grammar.nt_id(nonterminal)?;
        self.tree_ix(grammar, tokens, span, nt)
    }

    fn tree_ix(&self, grammar: &Pcfg, tokens: &[&str], span: Span, nt: usize) -> Option<ParseTree> {
        let entry = self.selected_ix(span, nt)?;
        let rule = &grammar.rules()[entry.rule];
        let children = match (&rule.rhs, entry.split) {
            (Rhs::Lexical(_), _) => vec![ParseTree::leaf(tokens[span.0], span.0)],
            (Rhs::Binary(l, r), Some(k)) => vec![
                self.tree_ix(grammar, tokens, (span.0, k), grammar.nt_id(l)?)?,
                self.tree_ix(grammar, tokens, (k, span.1), grammar.nt_id(r)?)?,
            ],
            (Rhs::Binary(..), None) => return None,
        };
        Some(ParseTree { label: rule.lhs.clone(), rule: Some(rule.clone()), span, children })
    }

    /// Whether every entry's score equals its rule probability combined with
    /// the selected entries of its two sub-spans (relative 1e-12).
    pub fn is_consistent(&self, grammar: &Pcfg) -> bool {
        let rules = grammar.rules();
        for i in 0..self.len {
            for j in i + 1..=self.len {
                for nt in 0..self.nts {
                    for e in &self.cells[self.slot((i, j), nt)] {
                        let rule_score = self.scale.lift(rules[e.rule].prob);
                        let expected = match (&rules[e.rule].rhs, e.split) {
                            (Rhs::Lexical(_), None) => rule_score,
                            (Rhs::Binary(l, r), Some(k)) => {
                                let (Some(l), Some(r)) = (
                                    self.selected_ix((i, k), grammar.nt_id(l).unwrap()),
                                    self.selected_ix((k, j), grammar.nt_id(r).unwrap()),
                                ) else {
                                    return false;
                                };
                                self.scale.combine(rule_score, l.score, r.score)
                            }
                            _ => return false,
                        };
                        let (a, b) = (self.scale.to_prob(expected), self.scale.to_prob(e.score));
                        if (a - b).abs() > 1e-12 * a.abs().max(b.abs()) {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }
}

pub(crate) fn check_tokens(grammar: &Pcfg, tokens: &[&str]) -> Result<(), ParseError> {
    if tokens.is_empty() {
        return Err(ParseError::EmptyInput);
    }
    match tokens.iter().position(|t| !grammar.is_terminal(t)) {
        Some(position) => Err(ParseError::UnknownToken { token: tokens[position].to_string(), position }),
        None => Ok(()),
    }
}

/// Maximum-probability parse rooted at the start symbol.
pub fn viterbi_parse(grammar: &Pcfg, tokens: &[&str]) -> Result<(ParseTree, f64), ParseError> {
    viterbi_parse_scaled(grammar, tokens, Scale::Log)
}

/// [`viterbi_parse`] with an explicit score scale. Both scales select the
/// same trees; log space is the default because it cannot underflow.
pub fn viterbi_parse_scaled(grammar: &Pcfg, tokens: &[&str], scale: Scale) -> Result<(ParseTree, f64), ParseError> {
    let chart = Chart::build(grammar, tokens, scale)?;
    let full = (0, tokens.len());
    let entry = chart
        .selected(grammar, full, grammar.start())
        .ok_or_else(|| ParseError::NoParse(grammar.start().to_string()))?;
    let prob = scale.to_prob(entry.score);
    let tree = chart
        .tree(grammar, tokens, full, grammar.start())
        .ok_or_else(|| ParseError::NoParse(grammar.start().to_string()))?;
    Ok((tree, prob))
}

/// Sum of the probabilities of every complete parse; zero when none exists.
pub fn inside_probability(grammar: &Pcfg, tokens: &[&str]) -> Result<f64, ParseError> {
    check_tokens(grammar, tokens)?;
    let n = tokens.len();
    let nts = grammar.nonterminals().len();
    let at = |i: usize, j: usize, a: usize| (i * (n + 1) + j) * nts + a;
    let mut inside = vec![0.0; (n + 1) * (n + 1) * nts];
    let rules = grammar.rules();
    for (i, tok) in tokens.iter().enumerate() {
        for &r in grammar.lexical_rules(tok) {
            inside[at(i, i + 1, grammar.rule_lhs_id(r))] += rules[r].prob;
        }
    }
    for width in 2..=n {
        for i in 0..=n - width {
            let j = i + width;
            for b in grammar.binary_rules() {
                let mut sum = 0.0;
                for k in i + 1..j {
                    sum += inside[at(i, k, b.left)] * inside[at(k, j, b.right)];
                }
                inside[at(i, j, b.lhs)] += rules[b.rule].prob * sum;
            }
        }
    }
    Ok(grammar.nt_id(grammar.start()).map_or(0.0, |s| inside[at(0, n, s)]))
}

/// Every complete parse with its probability, best first. Ties (relative
/// [`TIE_EPSILON`]) are ordered by rule order then split, top-down and
/// left before right, which is the order [`viterbi_parse`] prefers.
///
/// Exponential; intended as a reference for testing.
pub fn enumerate_parses(grammar: &Pcfg, tokens: &[&str], cap: usize) -> Result<Vec<(ParseTree, f64)>, ParseError> {
    check_tokens(grammar, tokens)?;
    if tokens.len() > ENUMERATION_MAX_TOKENS {
        return Err(ParseError::TooLong { len: tokens.len(), max: ENUMERATION_MAX_TOKENS });
    }
    let mut e = Enumerator { grammar, tokens, counts: HashMap::new(), trees: HashMap::new() };
    let start = grammar.start();
    let total = e.count(start, 0, tokens.len());
    if total > cap as u128 {
        return Err(ParseError::CapExceeded { cap });
    }
    let mut out = e.trees(start, 0, tokens.len());
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| derivation_order(grammar, &a.0, &b.0)));
    let mut s = 0;
    while s < out.len() {
        let head = out[s].1;
        let mut end = s + 1;
        while end < out.len() && Scale::Linear.tied(head, out[end].1) {
            end += 1;
        }
        out[s..end].sort_by(|a, b| derivation_order(grammar, &a.0, &b.0));
        s = end;
    }
    Ok(out)
}

/// Compares derivations by root rule position, root split, then left and
/// right subtrees recursively.
pub fn derivation_order(grammar: &Pcfg, a: &ParseTree, b: &ParseTree) -> Ordering {
    match (&a.rule, &b.rule) {
        (None, None) => Ordering::Equal,
        (None, Some(_)) => Ordering::Less,
        (Some(_), None) => Ordering::Greater,
        (Some(ra), Some(rb)) => grammar
            .rule_position(ra)
            .cmp(&grammar.rule_position(rb))
            .then_with(|| {
                let split = |t: &ParseTree| t.children.first().map(|c| c.span.1);
                split(a).cmp(&split(b))
            })
            .then_with(|| {
                a.children
                    .iter()
                    .zip(&b.children)
                    .map(|(x, y)| derivation_order(grammar, x, y))
                    .find(|o| o.is_ne())
                    .unwrap_or(Ordering::Equal)
            }),
    }
}

struct Enumerator<'a> {
    grammar: &'a Pcfg,
    tokens: &'a [&'a str],
    counts: HashMap<(String, usize, usize), u128>,
    trees: HashMap<(String, usize, usize), Vec<(ParseTree, f64)>>,
}

impl Enumerator<'_> {
    fn count(&mut self, sym: &str, i: usize, j: usize) -> u128 {
        let key = (sym.to_string(), i, j);
        if let Some(&c) = self.counts.get(&key) {
            return c;
        }
        let mut total: u128 = 0;
        for rule in self.grammar.rules().iter().filter(|r| r.lhs == sym) {
            match &rule.rhs {
                Rhs::Lexical(t) => {
                    if j == i + 1 && self.tokens[i] == t {
                        total += 1;
                    }
                }
                Rhs::Binary(l, r) => {
                    for k in i + 1..j {
                        let c = self.count(l, i, k).saturating_mul(self.count(r, k, j));
                        total = total.saturating_add(c);
                    }
                }
            }
        }
        self.counts.insert(key, total);
        total
    }

    // Only called on (sym, i, j) that occur in some complete parse, so no
    // intermediate list is larger than the final one.
    fn trees(&mut self, sym: &str, i: usize, j: usize) -> Vec<(ParseTree, f64)> {
        let key = (sym.to_string(), i, j);
        if let Some(t) = self.trees.get(&key) {
            return t.clone();
        }
        let mut out = Vec::new();
        let rules: Vec<Rule> = self.grammar.rules().iter().filter(|r| r.lhs == sym).cloned().collect();
        for rule in rules {
            match &rule.rhs {
                Rhs::Lexical(t) => {
                    if j == i + 1 && self.tokens[i] == t {
                        let tree = ParseTree {
                            label: sym.to_string(),
                            rule: Some(rule.clone()),
                            span: (i, j),
                            children: vec![ParseTree::leaf(t, i)],
                        };
                        out.push((tree, rule.prob));
                    }
                }
                Rhs::Binary(l, r) => {
                    for k in i + 1..j {
                        if self.count(l, i, k) == 0 || self.count(r, k, j) == 0 {
                            continue;
                        }
                        let lefts = self.trees(l, i, k);
                        let rights = self.trees(r, k, j);
                        for (lt, lp) in &lefts {
                            for (rt, rp) in &rights {
                                let tree = ParseTree {
                                    label: sym.to_string(),
                                    rule: Some(rule.clone()),
                                    span: (i, j),
                                    children: vec![lt.clone(), rt.clone()],
                                };
                                out.push((tree, rule.prob * lp * rp));
                            }
                        }
                    }
                }
            }
        }
        self.trees.insert(key, out.clone());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::load_grammar;

    const PAPER_GRAMMAR: &str = include_str!("../testdata/paper_grammar.pcfg");

    fn toks(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs())
    }

    #[test]
    fn unique_parse_of_short_sentence() {
        let g = load_grammar(PAPER_GRAMMAR).unwrap();
        let t = toks("Alex eats fish");
        let (tree, p) = viterbi_parse(&g, &t).unwrap();
        assert_eq!(render_tree(&tree, TreeFormat::Bracketed), "(S (NP Alex) (VP (V eats) (NP fish)))");
        assert!(rel(p, 0.18 * 0.7 * 1.0 * 0.18) < 1e-12);
        assert!(rel(p, 2.268e-2) < 1e-12);
        assert!(rel(p, tree_probability(&g, &tree).unwrap()) < 1e-12);
        let all = enumerate_parses(&g, &t, DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(all.len(), 1);
        assert!(rel(inside_probability(&g, &t).unwrap(), 2.268e-2) < 1e-12);
    }

    #[test]
    fn pp_sentence_prefers_np_attachment() {
        let g = load_grammar(PAPER_GRAMMAR).unwrap();
        let t = toks("Alex eats fish with fork");
        let (tree, p) = viterbi_parse(&g, &t).unwrap();
        assert_eq!(
            render_tree(&tree, TreeFormat::Bracketed),
            "(S (NP Alex) (VP (V eats) (NP (NP fish) (PP (P with) (NP fork)))))"
        );
        assert!(rel(p, 4.536e-4) < 1e-12);

        let all = enumerate_parses(&g, &t, DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(all.len(), 2);
        assert!(rel(all[0].1, 4.536e-4) < 1e-12);
        assert!(rel(all[1].1, 2.7216e-4) < 1e-12);
        assert_eq!(all[0].0, tree);
        assert!(rel(tree_probability(&g, &all[1].0).unwrap(), 2.7216e-4) < 1e-12);
        assert!(rel(inside_probability(&g, &t).unwrap(), 7.2576e-4) < 1e-12);
    }

    #[test]
    fn unknown_token_and_no_parse() {
        let g = load_grammar(PAPER_GRAMMAR).unwrap();
        assert_eq!(
            viterbi_parse(&g, &toks("Alex eats telescope")).unwrap_err(),
            ParseError::UnknownToken { token: "telescope".into(), position: 2 }
        );
        assert_eq!(viterbi_parse(&g, &toks("with with")).unwrap_err(), ParseError::NoParse("S".into()));
        assert!(enumerate_parses(&g, &toks("with with"), 10).unwrap().is_empty());
        assert_eq!(inside_probability(&g, &toks("with with")).unwrap(), 0.0);
        assert_eq!(viterbi_parse(&g, &[]).unwrap_err(), ParseError::EmptyInput);
    }

    #[test]
    fn single_rule_grammar() {
        let g = load_grammar("S -> 'a' 1.0").unwrap();
        let (tree, p) = viterbi_parse(&g, &["a"]).unwrap();
        assert_eq!(p, 1.0);
        assert_eq!(tree_probability(&g, &tree).unwrap(), 1.0);
        assert_eq!(inside_probability(&g, &["a"]).unwrap(), 1.0);
        assert_eq!(render_tree(&tree.children[0], TreeFormat::Bracketed), "a");
    }

    #[test]
    fn enumeration_cap_and_length() {
        // Catalan growth: "a"^n under S -> S S | 'a'
        let g = load_grammar("S -> S S 0.5\nS -> 'a' 0.5").unwrap();
        let five = vec!["a"; 5];
        assert_eq!(enumerate_parses(&g, &five, 14).unwrap().len(), 14);
        assert_eq!(enumerate_parses(&g, &five, 13).unwrap_err(), ParseError::CapExceeded { cap: 13 });
        let long = vec!["a"; 13];
        assert!(matches!(enumerate_parses(&g, &long, 10), Err(ParseError::TooLong { .. })));
    }

    #[test]
    fn ties_prefer_earlier_rule_then_smaller_split() {
        let g = load_grammar("S -> S S 0.5\nS -> 'a' 0.5").unwrap();
        let (tree, _) = viterbi_parse(&g, &["a", "a", "a"]).unwrap();
        // both bracketings have probability 0.5^5; smaller split wins
        assert_eq!(render_tree(&tree, TreeFormat::Bracketed), "(S (S a) (S (S a) (S a)))");
        let all = enumerate_parses(&g, &["a", "a", "a"], 10).unwrap();
        assert_eq!(all[0].0, tree);

        let g = load_grammar("S -> A B 0.5\nS -> B A 0.5\nA -> 'x' 1.0\nB -> 'x' 1.0").unwrap();
        let (tree, _) = viterbi_parse(&g, &["x", "x"]).unwrap();
        assert_eq!(render_tree(&tree, TreeFormat::Bracketed), "(S (A x) (B x))");
    }

    #[test]
    fn tree_probability_rejects_foreign_rules() {
        let g = load_grammar(PAPER_GRAMMAR).unwrap();
        let (mut tree, _) = viterbi_parse(&g, &toks("Alex eats fish")).unwrap();
        tree.rule = Some(Rule::binary("S", "VP", "NP", 1.0));
        assert!(matches!(tree_probability(&g, &tree), Err(ParseError::RuleNotInGrammar(_))));
    }

    #[test]
    fn json_round_trip_and_schema() {
        let g = load_grammar(PAPER_GRAMMAR).unwrap();
        let (tree, _) = viterbi_parse(&g, &toks("Alex eats fish with fork")).unwrap();
        let js = render_tree(&tree, TreeFormat::Json);
        let back: ParseTree = serde_json::from_str(&js).unwrap();
        assert_eq!(back, tree);
        let v: serde_json::Value = serde_json::from_str(&js).unwrap();
        assert_eq!(v["label"], "S");
        assert_eq!(v["span"], serde_json::json!([0, 5]));
        assert_eq!(v["rule"]["rhs"], serde_json::json!(["NP", "VP"]));
        assert!(v["children"][0]["children"][0].get("rule").is_none());
    }

    #[test]
    fn ascii_rendering() {
        let g = load_grammar(PAPER_GRAMMAR).unwrap();
        let (tree, _) = viterbi_parse(&g, &toks("Alex eats fish")).unwrap();
        let expected = "\
S
├── NP
│   └── Alex
└── VP
    ├── V
    │   └── eats
    └── NP
        └── fish";
        assert_eq!(render_tree(&tree, TreeFormat::Ascii), expected);
        assert_eq!(render_tree(&ParseTree::leaf("fork", 0), TreeFormat::Ascii), "fork");
    }

    #[test]
    fn well_formedness_and_chart_consistency() {
        let g = load_grammar(PAPER_GRAMMAR).unwrap();
        let t = toks("Alex eats fish with fork with eggs");
        let (tree, _) = viterbi_parse(&g, &t).unwrap();
        assert!(tree.is_well_formed());
        assert_eq!(tree.leaves(), t);
        for scale in [Scale::Log, Scale::Linear] {
            let chart = Chart::build(&g, &t, scale).unwrap();
            assert!(chart.is_consistent(&g));
            let vp = chart.entries(&g, (1, 5), "VP");
            assert_eq!(vp.len(), 2);
            assert!(vp[0].score >= vp[1].score);
        }
        let mut broken = tree.clone();
        broken.children[0].span = (0, 2);
        assert!(!broken.is_well_formed());
    }
}
