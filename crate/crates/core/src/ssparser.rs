//! CYK parsing with semantic ambiguity resolution.
//!
//! Whenever a chart cell holds two or more derivations of one nonterminal,
//! the syntactically weaker rule R1 is checked against the knowledge base
//! with a `hasProbability(D, R1)` query, where D is the span's token yield.
//! R1 replaces the stronger rule R2 iff `conflate(P1, P_MEBN1) > P2`.
//! With more than two candidates the test runs pairwise from the weakest
//! candidate upwards.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bridge::{conflate, induce_bridge, BridgeBinding, BridgeError, ConflationError, HAS_PROBABILITY};
use crate::chart::{check_tokens, CellEntry, Chart, ParseError, ParseTree, Scale, Span};
use crate::grammar::{Pcfg, Rule};
use crate::mebn::{build_ssbn, infer, GroundedVar, MTheory, MebnError, DEFAULT_DEPTH_LIMIT, TRUE_STATE};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SemanticError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Bridge(#[from] BridgeError),
    #[error("knowledge-base query for span [{}, {}) failed: {source}", .span.0, .span.1)]
    Query { span: Span, source: MebnError },
    #[error("span [{}, {}): {source}", .span.0, .span.1)]
    Conflation { span: Span, source: ConflationError },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Compare the conflated value against the raw product P2.
    #[default]
    Literal,
    /// Rescale P1 and P2 to sum to one before conflating and comparing.
    Normalized,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Literal => "literal",
            Mode::Normalized => "normalized",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "literal" => Ok(Mode::Literal),
            "normalized" => Ok(Mode::Normalized),
            _ => Err(format!("unknown mode '{s}' (expected literal or normalized)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SemanticOptions {
    pub mode: Mode,
    pub depth_limit: usize,
    /// Query both candidates and compare their conflated values.
    pub symmetric: bool,
}

impl Default for SemanticOptions {
    fn default() -> Self {
        SemanticOptions { mode: Mode::Literal, depth_limit: DEFAULT_DEPTH_LIMIT, symmetric: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmbiguityCandidate {
    pub rule: Rule,
    pub span: Span,
    pub split: Option<usize>,
    /// Token yield of the span.
    pub derivation: String,
    pub p_pcfg: f64,
    pub log_p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateSummary {
    pub rule: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split: Option<usize>,
    pub p_pcfg: f64,
}

/// One pairwise test between the weaker candidate `r1` and the stronger `r2`
/// (indices into the record's candidate list).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub r1: usize,
    pub r2: usize,
    pub p1: f64,
    pub p2: f64,
    pub p_mebn1: f64,
    pub conflated1: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_mebn2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conflated2: Option<f64>,
    pub selected: usize,
    pub inequality: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecisionRecord {
    pub span: Span,
    pub lhs: String,
    pub derivation: String,
    pub candidates: Vec<CandidateSummary>,
    /// Rule queried in the deciding comparison.
    pub queried: String,
    pub p_mebn: f64,
    pub conflated: f64,
    pub winner: String,
    pub winner_index: usize,
    pub mode: Mode,
    pub comparisons: Vec<Comparison>,
}

pub type DecisionTrace = Vec<DecisionRecord>;

/// Source of `P(hasProbability(D, R) = T)`.
pub trait SemanticOracle {
    fn posterior(&mut self, derivation: &str, rule: &Rule) -> Result<f64, MebnError>;
}

impl<F: FnMut(&str, &Rule) -> Result<f64, MebnError>> SemanticOracle for F {
    fn posterior(&mut self, derivation: &str, rule: &Rule) -> Result<f64, MebnError> {
        self(derivation, rule)
    }
}

fn sci(p: f64) -> String {
    format!("{p:.5e}")
}

fn tied(a: f64, b: f64) -> bool {
    Scale::Linear.tied(a.max(b), a.min(b))
}

/// Picks a winner among `candidates` (sorted best first by syntactic
/// score). Values equal up to rounding count as equal, so the syntactic
/// winner stands when the knowledge base is neutral.
pub fn resolve_ambiguity(
    candidates: &[AmbiguityCandidate],
    oracle: &mut impl SemanticOracle,
    mode: Mode,
    symmetric: bool,
) -> Result<(usize, DecisionRecord), SemanticError> {
    let first = candidates.first().expect("resolve_ambiguity needs candidates");
    let span = first.span;
    let query_err = |source| SemanticError::Query { span, source };
    let conflate_err = |source| SemanticError::Conflation { span, source };

    let mut winner = candidates.len() - 1;
    let mut comparisons = Vec::new();
    for challenger in (0..candidates.len() - 1).rev() {
        let (weak, strong) = (&candidates[winner], &candidates[challenger]);
        let (p1, p2) = match mode {
            Mode::Literal => (weak.p_pcfg, strong.p_pcfg),
            Mode::Normalized => {
                (1.0 / (1.0 + (strong.log_p - weak.log_p).exp()), 1.0 / (1.0 + (weak.log_p - strong.log_p).exp()))
            }
        };
        let q1 = oracle.posterior(&weak.derivation, &weak.rule).map_err(query_err)?;
        let c1 = conflate(p1, q1).map_err(conflate_err)?;
        let (q2, c2, rhs) = if symmetric {
            let q2 = oracle.posterior(&strong.derivation, &strong.rule).map_err(query_err)?;
            let c2 = conflate(p2, q2).map_err(conflate_err)?;
            (Some(q2), Some(c2), c2)
        } else {
            (None, None, p2)
        };
        let keep_weak = c1 > rhs && !tied(c1, rhs);
        let inequality = format!(
            "&({}, {}) = {} {} {}",
            sci(p1),
            sci(q1),
            sci(c1),
            if keep_weak { ">" } else { "<=" },
            match c2 {
                Some(c2) => format!("&({}, {}) = {}", sci(p2), sci(q2.unwrap_or(0.5)), sci(c2)),
                None => sci(p2),
            }
        );
        let selected = if keep_weak { winner } else { challenger };
        comparisons.push(Comparison {
            r1: winner,
            r2: challenger,
            p1,
            p2,
            p_mebn1: q1,
            conflated1: c1,
            p_mebn2: q2,
            conflated2: c2,
            selected,
            inequality,
        });
        winner = selected;
    }

    let last = comparisons.last().expect("at least two candidates");
    let record = DecisionRecord {
        span,
        lhs: first.rule.lhs.clone(),
        derivation: first.derivation.clone(),
        candidates: candidates
            .iter()
            .map(|c| CandidateSummary { rule: c.rule.signature(), split: c.split, p_pcfg: c.p_pcfg })
            .collect(),
        queried: candidates[last.r1].rule.signature(),
        p_mebn: last.p_mebn1,
        conflated: last.conflated1,
        winner: candidates[winner].rule.signature(),
        winner_index: winner,
        mode,
        comparisons,
    };
    Ok((winner, record))
}

/// Grammar plus bridged knowledge base, ready to parse.
#[derive(Debug, Clone)]
pub struct SemanticParser<'g> {
    grammar: &'g Pcfg,
    theory: MTheory,
    binding: BridgeBinding,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemanticParse {
    pub tree: ParseTree,
    pub probability: f64,
    pub trace: DecisionTrace,
}

/// Per-parse state: the theory grows derivation and rule entities as the
/// chart is filled.
pub struct Session {
    theory: MTheory,
    binding: BridgeBinding,
    depth_limit: usize,
    cache: HashMap<(String, String), f64>,
}

impl Session {
    pub fn new(theory: MTheory, binding: BridgeBinding, depth_limit: usize) -> Self {
        Session { theory, binding, depth_limit, cache: HashMap::new() }
    }

    pub fn theory(&self) -> &MTheory {
        &self.theory
    }
}

impl SemanticOracle for Session {
    fn posterior(&mut self, derivation: &str, rule: &Rule) -> Result<f64, MebnError> {
        let key = (derivation.to_string(), rule.signature());
        if let Some(&p) = self.cache.get(&key) {
            return Ok(p);
        }
        let p = semantic_query_probability(&mut self.theory, &mut self.binding, derivation, rule, self.depth_limit)?;
        self.cache.insert(key, p);
        Ok(p)
    }
}

/// `P(hasProbability(D, R) = T | findings)`, registering D and R as
/// entities first.
pub fn semantic_query_probability(
    theory: &mut MTheory,
    binding: &mut BridgeBinding,
    derivation: &str,
    rule: &Rule,
    depth_limit: usize,
) -> Result<f64, MebnError> {
    let lift = |e: BridgeError| match e {
        BridgeError::Mebn(m) => m,
        other => MebnError::InvalidEntity(other.to_string()),
    };
    let d = binding.register_derivation(theory, derivation).map_err(lift)?;
    let r = binding.register_rule(theory, rule).map_err(lift)?;
    let query = GroundedVar { name: HAS_PROBABILITY.into(), args: vec![d.to_string(), r.to_string()] };
    let net = build_ssbn(theory, &query, &[], depth_limit)?;
    let dist = infer(&net, net.query)?;
    let t = net.nodes[net.query]
        .state_index(TRUE_STATE)
        .ok_or_else(|| MebnError::InvalidState { var: query.to_string(), state: TRUE_STATE.into() })?;
    Ok(dist[t])
}

impl<'g> SemanticParser<'g> {
    /// Bridges `theory` to `grammar`.
    pub fn new(grammar: &'g Pcfg, theory: &MTheory) -> Result<Self, BridgeError> {
        let (theory, binding) = induce_bridge(grammar, theory)?;
        Ok(SemanticParser { grammar, theory, binding })
    }

    pub fn theory(&self) -> &MTheory {
        &self.theory
    }

    pub fn binding(&self) -> &BridgeBinding {
        &self.binding
    }

    pub fn session(&self, depth_limit: usize) -> Session {
        Session::new(self.theory.clone(), self.binding.clone(), depth_limit)
    }

    pub fn parse(&self, tokens: &[&str], options: &SemanticOptions) -> Result<SemanticParse, SemanticError> {
        let mut session = self.session(options.depth_limit);
        self.parse_with(tokens, options, &mut session)
    }

    /// Parses with an arbitrary source of semantic posteriors.
    pub fn parse_with(
        &self,
        tokens: &[&str],
        options: &SemanticOptions,
        oracle: &mut impl SemanticOracle,
    ) -> Result<SemanticParse, SemanticError> {
        parse_with_semantics(self.grammar, tokens, options, oracle)
    }
}

/// CYK where every multi-candidate cell is settled by [`resolve_ambiguity`].
pub fn parse_with_semantics(
    grammar: &Pcfg,
    tokens: &[&str],
    options: &SemanticOptions,
    oracle: &mut impl SemanticOracle,
) -> Result<SemanticParse, SemanticError> {
    check_tokens(grammar, tokens)?;
    let mut trace = Vec::new();
    let rules = grammar.rules();
    let chart = Chart::fill(grammar, tokens, Scale::Log, |span, _nt, entries: &[CellEntry]| {
        let derivation = tokens[span.0..span.1].join(" ");
        let candidates: Vec<AmbiguityCandidate> = entries
            .iter()
            .map(|e| AmbiguityCandidate {
                rule: rules[e.rule].clone(),
                span,
                split: e.split,
                derivation: derivation.clone(),
                p_pcfg: e.score.exp(),
                log_p: e.score,
            })
            .collect();
        let (winner, record) = resolve_ambiguity(&candidates, oracle, options.mode, options.symmetric)?;
        trace.push(record);
        Ok::<usize, SemanticError>(winner)
    })?;
    let full = (0, tokens.len());
    let no_parse = || SemanticError::Parse(ParseError::NoParse(grammar.start().to_string()));
    let entry = chart.selected(grammar, full, grammar.start()).ok_or_else(no_parse)?;
    let probability = entry.score.exp();
    let tree = chart.tree(grammar, tokens, full, grammar.start()).ok_or_else(no_parse)?;
    Ok(SemanticParse { tree, probability, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::{render_tree, viterbi_parse, TreeFormat};
    use crate::grammar::load_grammar;
    use crate::mebn::load_mtheory;

    const PAPER_GRAMMAR: &str = include_str!("../testdata/paper_grammar.pcfg");
    const INSTRUMENT_KB: &str = include_str!("../testdata/instrument_kb.json");
    const S1: &str = "Alex eats fish with fork";
    const S2: &str = "Alex eats fish with eggs";
    const VP_ATTACH: &str = "(S (NP Alex) (VP (VP (V eats) (NP fish)) (PP (P with) (NP fork))))";
    const NP_ATTACH: &str = "(S (NP Alex) (VP (V eats) (NP (NP fish) (PP (P with) (NP fork)))))";

    fn toks(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    fn candidates(p1: f64, p2: f64) -> Vec<AmbiguityCandidate> {
        let mk = |rule: Rule, p: f64| AmbiguityCandidate {
            rule,
            span: (1, 5),
            split: Some(2),
            derivation: "eats fish with fork".into(),
            p_pcfg: p,
            log_p: p.ln(),
        };
        vec![mk(Rule::binary("VP", "V", "NP", 0.7), p2), mk(Rule::binary("VP", "VP", "PP", 0.3), p1)]
    }

    fn fixed(q: f64) -> impl FnMut(&str, &Rule) -> Result<f64, MebnError> {
        move |_, _| Ok(q)
    }

    #[test]
    fn weaker_rule_wins_with_strong_semantics() {
        let c = candidates(1.512e-3, 2.52e-3);
        let (w, rec) = resolve_ambiguity(&c, &mut fixed(0.7), Mode::Literal, false).unwrap();
        assert_eq!(w, 1);
        assert_eq!(rec.queried, "VP -> VP PP");
        assert_eq!(rec.winner, "VP -> VP PP");
        assert!((rec.conflated - 3.5209018618e-3).abs() < 1e-12);
        assert!(rec.comparisons[0].inequality.contains('>'));

        let (w, _) = resolve_ambiguity(&c, &mut fixed(0.5), Mode::Literal, false).unwrap();
        assert_eq!(w, 0);
    }

    #[test]
    fn flip_threshold() {
        // conflate(p1, q) = p2  <=>  q = p2 (1 - p1) / (p1 (1 - p2) + p2 (1 - p1))
        let (p1, p2): (f64, f64) = (1.512e-3, 2.52e-3);
        let q_star = p2 * (1.0 - p1) / (p1 * (1.0 - p2) + p2 * (1.0 - p1));
        assert!((q_star - 0.62517).abs() < 1e-4);
        let c = candidates(p1, p2);
        let pick = |q: f64| resolve_ambiguity(&c, &mut fixed(q), Mode::Literal, false).unwrap().0;
        assert_eq!(pick(q_star + 1e-6), 1);
        assert_eq!(pick(q_star - 1e-6), 0);
    }

    #[test]
    fn normalized_mode() {
        let c = candidates(1.512e-3, 2.52e-3);
        // normalized p1 = 0.375; conflate(0.375, 0.7) = 0.5833 < 0.625
        let (w, rec) = resolve_ambiguity(&c, &mut fixed(0.7), Mode::Normalized, false).unwrap();
        assert_eq!(w, 0);
        assert!((rec.comparisons[0].p1 - 0.375).abs() < 1e-12);
        let (w, _) = resolve_ambiguity(&c, &mut fixed(0.9), Mode::Normalized, false).unwrap();
        assert_eq!(w, 1);
        for mode in [Mode::Literal, Mode::Normalized] {
            assert_eq!(resolve_ambiguity(&c, &mut fixed(1.0), mode, false).unwrap().0, 1);
        }
    }

    #[test]
    fn symmetric_variant_queries_both() {
        let c = candidates(1.512e-3, 2.52e-3);
        let mut seen = Vec::new();
        let mut oracle = |_: &str, r: &Rule| {
            seen.push(r.signature());
            Ok(if r.signature() == "VP -> VP PP" { 0.7 } else { 0.3 })
        };
        let (w, rec) = resolve_ambiguity(&c, &mut oracle, Mode::Literal, true).unwrap();
        assert_eq!(seen, ["VP -> VP PP", "VP -> V NP"]);
        assert_eq!(w, 1);
        assert!(rec.comparisons[0].conflated2.is_some());
    }

    #[test]
    fn three_candidates_pairwise_from_weakest() {
        let mk = |lhs: &str, l: &str, p: f64| AmbiguityCandidate {
            rule: Rule::binary(lhs, l, "B", 0.1),
            span: (0, 3),
            split: Some(1),
            derivation: "x y z".into(),
            p_pcfg: p,
            log_p: p.ln(),
        };
        let c = vec![mk("A", "C1", 0.3), mk("A", "C2", 0.2), mk("A", "C3", 0.1)];
        // weakest gets strong support and beats the middle one, then loses to the best
        let mut oracle = |_: &str, r: &Rule| Ok(if r.rhs.symbols()[0] == "C3" { 0.75 } else { 0.5 });
        let (w, rec) = resolve_ambiguity(&c, &mut oracle, Mode::Literal, false).unwrap();
        // conflate(0.1, 0.75) = 0.25 > 0.2; then 0.25 <= 0.3
        assert_eq!(rec.comparisons.len(), 2);
        assert_eq!(rec.comparisons[0].selected, 2);
        assert_eq!(w, 0);
        assert_eq!(rec.queried, "A -> C3 B");
    }

    #[test]
    fn paper_sentences_with_instrument_kb() {
        let g = load_grammar(PAPER_GRAMMAR).unwrap();
        let kb = load_mtheory(INSTRUMENT_KB).unwrap();
        let parser = SemanticParser::new(&g, &kb).unwrap();
        let opts = SemanticOptions::default();

        let s1 = parser.parse(&toks(S1), &opts).unwrap();
        assert_eq!(render_tree(&s1.tree, TreeFormat::Bracketed), VP_ATTACH);
        assert!((s1.probability - 2.7216e-4).abs() < 1e-15);
        assert_eq!(s1.trace.len(), 1);
        let rec = &s1.trace[0];
        assert_eq!(rec.span, (1, 5));
        assert_eq!(rec.derivation, "eats fish with fork");
        assert!((rec.p_mebn - 0.7).abs() < 1e-12);
        assert!((rec.candidates[0].p_pcfg - 2.52e-3).abs() < 1e-15);
        assert!((rec.candidates[1].p_pcfg - 1.512e-3).abs() < 1e-15);

        let s2 = parser.parse(&toks(S2), &opts).unwrap();
        assert_eq!(
            render_tree(&s2.tree, TreeFormat::Bracketed),
            "(S (NP Alex) (VP (V eats) (NP (NP fish) (PP (P with) (NP eggs)))))"
        );
        let rec = &s2.trace[0];
        assert_eq!(rec.p_mebn, 0.5);
        assert!((rec.candidates[0].p_pcfg - 6.3e-3).abs() < 1e-15);
        assert!((rec.candidates[1].p_pcfg - 3.78e-3).abs() < 1e-15);
    }

    #[test]
    fn empty_kb_matches_viterbi() {
        let g = load_grammar(PAPER_GRAMMAR).unwrap();
        let parser = SemanticParser::new(&g, &MTheory::new("empty")).unwrap();
        for s in [S1, S2, "Alex eats fish with fork with eggs", "fish eats Alex"] {
            let t = toks(s);
            let plain = viterbi_parse(&g, &t).unwrap();
            let sem = parser.parse(&t, &SemanticOptions::default()).unwrap();
            assert_eq!(sem.tree, plain.0, "{s}");
            assert!((sem.probability - plain.1).abs() <= 1e-12 * plain.1);
        }
        let t = toks(S1);
        assert_eq!(
            render_tree(&parser.parse(&t, &SemanticOptions::default()).unwrap().tree, TreeFormat::Bracketed),
            NP_ATTACH
        );
    }

    #[test]
    fn semantic_query_defaults_and_rows() {
        let g = load_grammar(PAPER_GRAMMAR).unwrap();
        let empty = SemanticParser::new(&g, &MTheory::new("empty")).unwrap();
        let mut session = empty.session(DEFAULT_DEPTH_LIMIT);
        let vp_pp = Rule::binary("VP", "VP", "PP", 0.3);
        assert_eq!(session.posterior("never seen before", &vp_pp).unwrap(), 0.5);
        assert!(session.theory().entity("never_seen_before").is_some());

        let kb = load_mtheory(INSTRUMENT_KB).unwrap();
        let parser = SemanticParser::new(&g, &kb).unwrap();
        let mut session = parser.session(DEFAULT_DEPTH_LIMIT);
        assert!((session.posterior("eats fish with fork", &vp_pp).unwrap() - 0.7).abs() < 1e-12);
        assert_eq!(session.posterior("eats fish with eggs", &vp_pp).unwrap(), 0.5);
    }

    #[test]
    fn parse_errors_propagate() {
        let g = load_grammar(PAPER_GRAMMAR).unwrap();
        let parser = SemanticParser::new(&g, &MTheory::new("empty")).unwrap();
        let opts = SemanticOptions::default();
        assert!(matches!(
            parser.parse(&toks("Alex eats rocks"), &opts),
            Err(SemanticError::Parse(ParseError::UnknownToken { .. }))
        ));
        assert!(matches!(parser.parse(&toks("with with"), &opts), Err(SemanticError::Parse(ParseError::NoParse(_)))));
        let mut failing = |_: &str, _: &Rule| Err(MebnError::InconsistentEvidence);
        let err = parser.parse_with(&toks(S1), &opts, &mut failing).unwrap_err();
        assert!(matches!(err, SemanticError::Query { span: (1, 5), .. }));
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("literal".parse::<Mode>().unwrap(), Mode::Literal);
        assert_eq!("normalized".parse::<Mode>().unwrap(), Mode::Normalized);
        assert!("loose".parse::<Mode>().is_err());
        assert_eq!(serde_json::to_string(&Mode::Normalized).unwrap(), "\"normalized\"");
    }

    #[test]
    fn chained_knowledge_base_query() {
        let g = load_grammar(PAPER_GRAMMAR).unwrap();
        let kb = load_mtheory(include_str!("../testdata/instrument_chain_kb.json")).unwrap();
        let parser = SemanticParser::new(&g, &kb).unwrap();
        let mut session = parser.session(DEFAULT_DEPTH_LIMIT);
        let vp_pp = Rule::binary("VP", "VP", "PP", 0.3);
        // P(U | M = T) = 0.36 / 0.48 = 0.75; 0.75 * 0.8 + 0.25 * 0.3
        let q = session.posterior("eats fish with fork", &vp_pp).unwrap();
        assert!((q - 0.675).abs() < 1e-12);

        let mut theory = session.theory().clone();
        let query = GroundedVar::new(HAS_PROBABILITY, &["eats_fish_with_fork", "vp->vp_pp"]);
        let net = build_ssbn(&theory, &query, &[], DEFAULT_DEPTH_LIMIT).unwrap();
        let exact = crate::mebn::infer_enumerate(&net, net.query).unwrap();
        assert!((exact[0] - q).abs() < 1e-12);
        assert_eq!(net.nodes.len(), 3);

        // No finding for this derivation: 0.4 * 0.8 + 0.6 * 0.3
        let mut binding = parser.binding().clone();
        let q = semantic_query_probability(&mut theory, &mut binding, "eats eggs", &vp_pp, 10).unwrap();
        assert!((q - 0.5).abs() < 1e-12);

        let s1 = parser.parse(&toks(S1), &SemanticOptions::default()).unwrap();
        assert_eq!(render_tree(&s1.tree, TreeFormat::Bracketed), VP_ATTACH);
    }

    #[test]
    fn selected_tree_is_a_step_function_of_q() {
        let g = load_grammar(PAPER_GRAMMAR).unwrap();
        let t = toks(S1);
        let mut flipped_at = None;
        for k in 0..=1000 {
            let q = k as f64 / 1000.0;
            let mut oracle = |_: &str, r: &Rule| Ok(if r.signature() == "VP -> VP PP" { q } else { 0.5 });
            let tree = parse_with_semantics(&g, &t, &SemanticOptions::default(), &mut oracle).unwrap().tree;
            let vp = render_tree(&tree, TreeFormat::Bracketed) == VP_ATTACH;
            match (vp, flipped_at) {
                (true, None) => flipped_at = Some(q),
                (false, Some(at)) => panic!("back to NP attachment at {q} after flipping at {at}"),
                _ => {}
            }
        }
        let at = flipped_at.expect("flip inside [0, 1]");
        assert!((0.625..=0.626).contains(&at), "{at}");
    }

    #[test]
    fn one_record_per_ambiguous_cell() {
        let g = load_grammar(PAPER_GRAMMAR).unwrap();
        let kb = load_mtheory(INSTRUMENT_KB).unwrap();
        let parser = SemanticParser::new(&g, &kb).unwrap();
        for s in [S1, S2, "Alex eats fish with fork with eggs", "fish with eggs eats Alex with fork"] {
            let t = toks(s);
            let chart = Chart::build(&g, &t, Scale::Log).unwrap();
            let mut ambiguous = Vec::new();
            for width in 1..=t.len() {
                for i in 0..=t.len() - width {
                    for nt in g.nonterminals() {
                        if chart.entries(&g, (i, i + width), nt).len() >= 2 {
                            ambiguous.push(((i, i + width), nt.clone()));
                        }
                    }
                }
            }
            let trace = parser.parse(&t, &SemanticOptions::default()).unwrap().trace;
            let recorded: Vec<(Span, String)> = trace.iter().map(|r| (r.span, r.lhs.clone())).collect();
            assert_eq!(recorded, ambiguous, "{s}");
            for r in &trace {
                assert!(r.candidates.iter().any(|c| c.rule == r.winner));
                assert_eq!(r.derivation, t[r.span.0..r.span.1].join(" "));
            }
        }
    }
}
