use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::Serialize;

use super::model::{MFrag, MTheory, StateSpace, BUILTIN_EQUAL, BUILTIN_NOT_EQUAL};
use super::NORMALIZATION_TOLERANCE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    Disjointness,
    Cycle,
    DuplicateName,
    DuplicateResident,
    MissingDistribution,
    RowNormalization,
    RowKey,
    StateSpace,
    UnknownOrdinaryVariable,
    UnknownParent,
    UnboundParentArgument,
    UnresolvedInput,
    ArgumentArity,
    ConflictingPrior,
    ContextStates,
    Finding,
    Entity,
}

impl ViolationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ViolationKind::Disjointness => "disjointness",
            ViolationKind::Cycle => "cycle",
            ViolationKind::DuplicateName => "duplicate-name",
            ViolationKind::DuplicateResident => "duplicate-resident",
            ViolationKind::MissingDistribution => "missing-distribution",
            ViolationKind::RowNormalization => "row-normalization",
            ViolationKind::RowKey => "row-key",
            ViolationKind::StateSpace => "state-space",
            ViolationKind::UnknownOrdinaryVariable => "unknown-ordinary-variable",
            ViolationKind::UnknownParent => "unknown-parent",
            ViolationKind::UnboundParentArgument => "unbound-parent-argument",
            ViolationKind::UnresolvedInput => "unresolved-input",
            ViolationKind::ArgumentArity => "argument-arity",
            ViolationKind::ConflictingPrior => "conflicting-prior",
            ViolationKind::ContextStates => "context-states",
            ViolationKind::Finding => "finding",
            ViolationKind::Entity => "entity",
        }
    }
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A broken MFrag or MTheory invariant. `mfrag` is `None` for theory-level
/// problems (registry, findings, cross-fragment cycles).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub mfrag: Option<String>,
    pub kind: ViolationKind,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.mfrag {
            Some(m) => write!(f, "[{m}] {}: {}", self.kind, self.detail),
            None => write!(f, "{}: {}", self.kind, self.detail),
        }
    }
}

struct Report(Vec<Violation>);

impl Report {
    fn push(&mut self, mfrag: Option<&str>, kind: ViolationKind, detail: String) {
        self.0.push(Violation { mfrag: mfrag.map(str::to_string), kind, detail });
    }
}

fn check_vector(report: &mut Report, mfrag: &str, what: &str, dist: &[f64], states: Option<usize>) {
    if let Some(n) = states {
        if dist.len() != n {
            report.push(
                Some(mfrag),
                ViolationKind::StateSpace,
                format!("{what}: {} probabilities for {n} states", dist.len()),
            );
        }
    }
    let sum: f64 = dist.iter().sum();
    if dist.iter().any(|p| !p.is_finite() || *p < 0.0) || (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
        report.push(Some(mfrag), ViolationKind::RowNormalization, format!("{what}: sums to {sum}"));
    }
}

/// Checks every MFrag and MTheory invariant; empty iff the theory is valid.
pub fn validate_mtheory(theory: &MTheory) -> Vec<Violation> {
    let mut report = Report(Vec::new());

    let mut seen = HashSet::new();
    for e in &theory.entities {
        if e.id.is_empty() || e.id.chars().any(char::is_whitespace) {
            report.push(None, ViolationKind::Entity, format!("invalid entity identifier '{}'", e.id));
        }
        if !seen.insert(e.id.as_str()) {
            report.push(None, ViolationKind::Entity, format!("entity '{}' registered twice", e.id));
        }
    }

    let mut home: HashMap<&str, &str> = HashMap::new();
    for m in &theory.mfrags {
        for r in &m.residents {
            if let Some(prev) = home.insert(&r.name, &m.name) {
                report.push(
                    Some(&m.name),
                    ViolationKind::DuplicateResident,
                    format!("'{}' is already resident in MFrag '{prev}'", r.name),
                );
            }
        }
    }

    for m in &theory.mfrags {
        check_mfrag(theory, m, &mut report);
    }
    check_cross_fragment_cycles(theory, &mut report);
    check_findings(theory, &mut report);
    report.0
}

fn listed_states(theory: &MTheory, var: &str) -> Option<Vec<String>> {
    if let Some((_, r)) = theory.resident(var) {
        return r.states.listed().map(<[String]>::to_vec);
    }
    theory
        .root_input(var)
        .map(|i| i.states.clone().unwrap_or_default())
        .and_then(|s| s.listed().map(<[String]>::to_vec))
}

fn check_mfrag(theory: &MTheory, m: &MFrag, report: &mut Report) {
    let name = m.name.as_str();

    let mut ovs = HashSet::new();
    for ov in &m.ordinary_vars {
        if !ovs.insert(ov.name.as_str()) {
            report.push(
                Some(name),
                ViolationKind::DuplicateName,
                format!("ordinary variable '{}' declared twice", ov.name),
            );
        }
    }

    // C, I and R must be pairwise disjoint, and each free of repeats
    let sets: [(&str, Vec<&str>); 3] = [
        ("context", m.context.iter().map(|c| c.name.as_str()).collect()),
        ("input", m.inputs.iter().map(|i| i.name.as_str()).collect()),
        ("resident", m.residents.iter().map(|r| r.name.as_str()).collect()),
    ];
    for (a, (label_a, names_a)) in sets.iter().enumerate() {
        if *label_a != "context" {
            let mut uniq = HashSet::new();
            for n in names_a {
                if !uniq.insert(n) {
                    report.push(
                        Some(name),
                        ViolationKind::DuplicateName,
                        format!("{label_a} variable '{n}' declared twice"),
                    );
                }
            }
        }
        for (label_b, names_b) in &sets[a + 1..] {
            for n in names_a.iter().filter(|n| names_b.contains(n)) {
                report.push(
                    Some(name),
                    ViolationKind::Disjointness,
                    format!("'{n}' is both a {label_a} and a {label_b} variable"),
                );
            }
        }
    }

    let check_args = |report: &mut Report, what: &str, args: &[String]| {
        for a in args.iter().filter(|a| !ovs.contains(a.as_str())) {
            report.push(
                Some(name),
                ViolationKind::UnknownOrdinaryVariable,
                format!("{what}: unknown ordinary variable '{a}'"),
            );
        }
    };

    for c in &m.context {
        check_args(report, &format!("context {}", c.name), &c.args);
        if c.name == BUILTIN_EQUAL || c.name == BUILTIN_NOT_EQUAL {
            if c.args.len() != 2 {
                report.push(Some(name), ViolationKind::ArgumentArity, format!("context {} takes 2 arguments", c.name));
            }
            continue;
        }
        match listed_states(theory, &c.name) {
            Some(states) if states == ["T", "F"] => {}
            Some(_) => report.push(
                Some(name),
                ViolationKind::ContextStates,
                format!("context variable '{}' must have states [T, F]", c.name),
            ),
            None if theory.resident(&c.name).is_some() => report.push(
                Some(name),
                ViolationKind::ContextStates,
                format!("context variable '{}' must have states [T, F]", c.name),
            ),
            None => report.push(
                Some(name),
                ViolationKind::UnresolvedInput,
                format!("context variable '{}' is not declared anywhere", c.name),
            ),
        }
        if c.value != "T" && c.value != "F" {
            report.push(
                Some(name),
                ViolationKind::ContextStates,
                format!("context '{}' tests value '{}'", c.name, c.value),
            );
        }
    }

    for i in &m.inputs {
        check_args(report, &format!("input {}", i.name), &i.args);
        match theory.resident(&i.name) {
            Some((_, r)) => {
                if r.args.len() != i.args.len() {
                    report.push(
                        Some(name),
                        ViolationKind::ArgumentArity,
                        format!("input '{}' has {} arguments, its resident has {}", i.name, i.args.len(), r.args.len()),
                    );
                }
            }
            None => match &i.prior {
                None => report.push(
                    Some(name),
                    ViolationKind::UnresolvedInput,
                    format!("input '{}' is not resident in any MFrag and has no prior", i.name),
                ),
                Some(prior) => {
                    let states = i.states.clone().unwrap_or_default();
                    match states.listed() {
                        Some(s) => {
                            check_state_list(report, name, &i.name, s);
                            check_vector(report, name, &format!("prior of input '{}'", i.name), prior, Some(s.len()));
                        }
                        None => report.push(
                            Some(name),
                            ViolationKind::StateSpace,
                            format!("root input '{}' needs a listed state space", i.name),
                        ),
                    }
                    if let Some(first) = theory.root_input(&i.name) {
                        if first.prior.as_ref() != Some(prior) || first.states != i.states {
                            report.push(
                                Some(name),
                                ViolationKind::ConflictingPrior,
                                format!("root input '{}' is declared with different priors", i.name),
                            );
                        }
                    }
                }
            },
        }
    }

    let mut graph: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for r in &m.residents {
        check_args(report, &format!("resident {}", r.name), &r.args);
        let mut uniq = HashSet::new();
        if r.args.iter().any(|a| !uniq.insert(a)) {
            report.push(Some(name), ViolationKind::DuplicateName, format!("resident '{}' repeats an argument", r.name));
        }
        let states = match &r.states {
            StateSpace::Listed(s) => {
                check_state_list(report, name, &r.name, s);
                Some(s.len())
            }
            StateSpace::Entities { entities } => {
                if theory.entities_of(entities).len() < 2 {
                    report.push(
                        Some(name),
                        ViolationKind::StateSpace,
                        format!("resident '{}': fewer than 2 entities of type '{entities}'", r.name),
                    );
                }
                None
            }
        };

        let mut parent_states: HashMap<&str, Option<Vec<String>>> = HashMap::new();
        for p in &r.parents {
            let parent_args = if let Some(pr) = m.resident(p) {
                graph.entry(r.name.as_str()).or_default().push(pr.name.as_str());
                parent_states.insert(p, pr.states.listed().map(<[String]>::to_vec));
                &pr.args
            } else if let Some(pi) = m.input(p) {
                parent_states.insert(p, listed_states(theory, p));
                &pi.args
            } else {
                report.push(
                    Some(name),
                    ViolationKind::UnknownParent,
                    format!("parent '{p}' of '{}' is not an input or resident of this MFrag", r.name),
                );
                continue;
            };
            for a in parent_args.iter().filter(|a| !r.args.contains(a)) {
                report.push(
                    Some(name),
                    ViolationKind::UnboundParentArgument,
                    format!("parent '{p}' of '{}' uses '{a}', which '{}' does not bind", r.name, r.name),
                );
            }
        }

        let Some(cpt) = &r.cpt else {
            report.push(
                Some(name),
                ViolationKind::MissingDistribution,
                format!("resident '{}' has no distribution", r.name),
            );
            continue;
        };
        if cpt.rows.is_empty() && cpt.default.is_none() {
            report.push(
                Some(name),
                ViolationKind::MissingDistribution,
                format!("resident '{}' has an empty distribution", r.name),
            );
        }
        for (ix, row) in cpt.rows.iter().enumerate() {
            let what = format!("'{}' row {}", r.name, ix + 1);
            check_vector(report, name, &what, &row.dist, states);
            for (key, value) in &row.given {
                if let Some(ps) = parent_states.get(key.as_str()) {
                    if ps.as_ref().is_some_and(|s| !s.contains(value)) {
                        report.push(
                            Some(name),
                            ViolationKind::RowKey,
                            format!("{what}: '{value}' is not a state of '{key}'"),
                        );
                    }
                } else if r.args.contains(key) {
                    if theory.entity(value).is_none() {
                        report.push(Some(name), ViolationKind::RowKey, format!("{what}: unknown entity '{value}'"));
                    }
                } else {
                    report.push(
                        Some(name),
                        ViolationKind::RowKey,
                        format!("{what}: '{key}' is neither a parent nor an argument of '{}'", r.name),
                    );
                }
            }
        }
        if let Some(d) = &cpt.default {
            check_vector(report, name, &format!("'{}' default row", r.name), d, states);
        }
    }

    if let Some(cycle) = find_cycle(&graph) {
        report.push(Some(name), ViolationKind::Cycle, format!("dependency cycle through {}", cycle.join(" -> ")));
    }
}

fn check_state_list(report: &mut Report, mfrag: &str, var: &str, states: &[String]) {
    let uniq: HashSet<&String> = states.iter().collect();
    if states.len() < 2 || uniq.len() != states.len() {
        report.push(Some(mfrag), ViolationKind::StateSpace, format!("'{var}' needs at least 2 distinct states"));
    }
}

// Residents that depend on each other through inputs, across fragments.
fn check_cross_fragment_cycles(theory: &MTheory, report: &mut Report) {
    let mut graph: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    let mut cross = false;
    for m in &theory.mfrags {
        for r in &m.residents {
            for p in &r.parents {
                if m.resident(p).is_some() {
                    graph.entry(&r.name).or_default().push(p);
                } else if m.input(p).is_some() && theory.resident(p).is_some() {
                    graph.entry(&r.name).or_default().push(p);
                    cross = true;
                }
            }
        }
    }
    if !cross {
        return;
    }
    if let Some(cycle) = find_cycle(&graph) {
        let within_one = theory.mfrags.iter().any(|m| cycle.iter().all(|v| m.resident(v).is_some()));
        if !within_one {
            report.push(
                None,
                ViolationKind::Cycle,
                format!("cross-MFrag dependency cycle through {}", cycle.join(" -> ")),
            );
        }
    }
}

fn find_cycle<'a>(graph: &BTreeMap<&'a str, Vec<&'a str>>) -> Option<Vec<&'a str>> {
    fn visit<'a>(
        v: &'a str,
        graph: &BTreeMap<&'a str, Vec<&'a str>>,
        state: &mut HashMap<&'a str, u8>,
        path: &mut Vec<&'a str>,
    ) -> Option<Vec<&'a str>> {
        match state.get(v) {
            Some(2) => return None,
            Some(1) => {
                let at = path.iter().position(|p| *p == v).unwrap_or(0);
                let mut cycle = path[at..].to_vec();
                cycle.push(v);
                return Some(cycle);
            }
            _ => {}
        }
        state.insert(v, 1);
        path.push(v);
        for &next in graph.get(v).map(Vec::as_slice).unwrap_or(&[]) {
            if let Some(c) = visit(next, graph, state, path) {
                return Some(c);
            }
        }
        path.pop();
        state.insert(v, 2);
        None
    }
    let mut state = HashMap::new();
    for &v in graph.keys() {
        if let Some(c) = visit(v, graph, &mut state, &mut Vec::new()) {
            return Some(c);
        }
    }
    None
}

fn check_findings(theory: &MTheory, report: &mut Report) {
    for f in &theory.findings {
        let (args, states) = if let Some((_, r)) = theory.resident(&f.variable) {
            (r.args.len(), theory.resolve_states(&r.states))
        } else if let Some(i) = theory.root_input(&f.variable) {
            (i.args.len(), theory.resolve_states(&i.states.clone().unwrap_or_default()))
        } else {
            report.push(None, ViolationKind::Finding, format!("finding on unknown variable '{}'", f.variable));
            continue;
        };
        if f.args.len() != args {
            report.push(
                None,
                ViolationKind::Finding,
                format!("finding on '{}' has {} arguments, expected {args}", f.variable, f.args.len()),
            );
        }
        for a in f.args.iter().filter(|a| theory.entity(a).is_none()) {
            report.push(None, ViolationKind::Finding, format!("finding on '{}' uses unknown entity '{a}'", f.variable));
        }
        if !states.contains(&f.state) {
            report.push(None, ViolationKind::Finding, format!("'{}' is not a state of '{}'", f.state, f.variable));
        }
    }
}
