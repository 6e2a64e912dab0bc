//! Situation-specific Bayesian network construction.
//!
//! Grounding starts at the query and the evidence nodes and pulls in every
//! ancestor by substituting entity bindings for ordinary variables. The
//! result is cut down to the connected component of the query.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

use serde::Serialize;

use super::model::{GroundedVar, InputVariable, MFrag, MTheory, ResidentVariable, BUILTIN_EQUAL, BUILTIN_NOT_EQUAL};
use super::{MebnError, NORMALIZATION_TOLERANCE};

pub const DEFAULT_DEPTH_LIMIT: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SsbnNode {
    pub var: GroundedVar,
    pub states: Vec<String>,
    pub parents: Vec<usize>,
    /// One row per parent configuration; the first parent varies slowest.
    pub cpt: Vec<Vec<f64>>,
}

impl SsbnNode {
    pub fn cardinality(&self) -> usize {
        self.states.len()
    }

    pub fn state_index(&self, state: &str) -> Option<usize> {
        self.states.iter().position(|s| s == state)
    }
}

/// Ground network for one query. Nodes are topologically ordered.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ssbn {
    pub nodes: Vec<SsbnNode>,
    pub evidence: BTreeMap<usize, usize>,
    pub query: usize,
}

impl Ssbn {
    pub fn node_index(&self, var: &GroundedVar) -> Option<usize> {
        self.nodes.iter().position(|n| &n.var == var)
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.nodes.iter().enumerate().flat_map(|(i, n)| n.parents.iter().map(move |&p| (p, i))).collect()
    }

    /// Row of `node`'s CPT selected by a full assignment of network states.
    pub(crate) fn row_index(&self, node: usize, assignment: &[usize]) -> usize {
        self.nodes[node].parents.iter().fold(0, |acc, &p| acc * self.nodes[p].cardinality() + assignment[p])
    }

    /// Checks acyclicity, CPT shape and normalization, and evidence states.
    pub fn check(&self) -> Result<(), MebnError> {
        for (i, n) in self.nodes.iter().enumerate() {
            if n.parents.iter().any(|&p| p >= i) {
                return Err(MebnError::MalformedNetwork(format!("{} is not after its parents", n.var)));
            }
            let rows: usize = n.parents.iter().map(|&p| self.nodes[p].cardinality()).product();
            if n.cpt.len() != rows {
                return Err(MebnError::MalformedNetwork(format!(
                    "{} has {} CPT rows, expected {rows}",
                    n.var,
                    n.cpt.len()
                )));
            }
            for row in &n.cpt {
                let sum: f64 = row.iter().sum();
                if row.len() != n.cardinality()
                    || row.iter().any(|p| *p < 0.0)
                    || (sum - 1.0).abs() > NORMALIZATION_TOLERANCE
                {
                    return Err(MebnError::MalformedNetwork(format!("{} has an invalid CPT row", n.var)));
                }
            }
        }
        for (&node, &state) in &self.evidence {
            if node >= self.nodes.len() || state >= self.nodes[node].cardinality() {
                return Err(MebnError::MalformedNetwork("evidence outside the network".into()));
            }
        }
        Ok(())
    }

    /// Removes nodes and re-indexes, keeping relative order. Every kept
    /// node's parents must be kept too.
    pub fn retain(&self, keep: &[bool]) -> Ssbn {
        let mut map = vec![usize::MAX; self.nodes.len()];
        let mut nodes = Vec::new();
        for (i, n) in self.nodes.iter().enumerate().filter(|(i, _)| keep[*i]) {
            map[i] = nodes.len();
            let mut n = n.clone();
            n.parents = n.parents.iter().map(|&p| map[p]).collect();
            nodes.push(n);
        }
        let evidence = self.evidence.iter().filter(|(n, _)| keep[**n]).map(|(&n, &s)| (map[n], s)).collect();
        Ssbn { nodes, evidence, query: map[self.query] }
    }
}

struct Grounder<'a> {
    theory: &'a MTheory,
    depth_limit: usize,
    nodes: Vec<SsbnNode>,
    index: HashMap<GroundedVar, usize>,
    active: HashSet<GroundedVar>,
}

enum Template<'a> {
    Resident(&'a MFrag, &'a ResidentVariable),
    Root(&'a InputVariable),
}

impl<'a> Grounder<'a> {
    fn template(&self, var: &GroundedVar) -> Result<Template<'a>, MebnError> {
        let theory = self.theory;
        if let Some((m, r)) = theory.resident(&var.name) {
            return Ok(Template::Resident(m, r));
        }
        theory.root_input(&var.name).map(Template::Root).ok_or_else(|| MebnError::UnknownVariable(var.name.clone()))
    }

    fn check_entities(&self, var: &GroundedVar, arity: usize) -> Result<(), MebnError> {
        if var.args.len() != arity {
            return Err(MebnError::Arity { var: var.to_string(), expected: arity, got: var.args.len() });
        }
        match var.args.iter().find(|a| self.theory.entity(a).is_none()) {
            Some(a) => Err(MebnError::UnknownEntity(a.clone())),
            None => Ok(()),
        }
    }

    fn ground(&mut self, var: &GroundedVar, depth: usize) -> Result<usize, MebnError> {
        if let Some(&ix) = self.index.get(var) {
            return Ok(ix);
        }
        if self.active.contains(var) {
            return Err(MebnError::GroundingCycle(var.to_string()));
        }
        let node = match self.template(var)? {
            Template::Root(input) => {
                self.check_entities(var, input.args.len())?;
                let states = self.theory.resolve_states(&input.states.clone().unwrap_or_default());
                let prior = input.prior.clone().ok_or_else(|| MebnError::NoDistribution(var.to_string()))?;
                if prior.len() != states.len() {
                    return Err(MebnError::StateSpace(var.to_string()));
                }
                SsbnNode { var: var.clone(), states, parents: Vec::new(), cpt: vec![prior] }
            }
            Template::Resident(mfrag, resident) => {
                self.check_entities(var, resident.args.len())?;
                self.active.insert(var.clone());
                let node = self.ground_resident(var, mfrag, resident, depth);
                self.active.remove(var);
                node?
            }
        };
        self.nodes.push(node);
        let ix = self.nodes.len() - 1;
        self.index.insert(var.clone(), ix);
        Ok(ix)
    }

    fn ground_resident(
        &mut self,
        var: &GroundedVar,
        mfrag: &MFrag,
        resident: &ResidentVariable,
        depth: usize,
    ) -> Result<SsbnNode, MebnError> {
        let theory = self.theory;
        let binding: HashMap<&str, &str> =
            resident.args.iter().map(String::as_str).zip(var.args.iter().map(String::as_str)).collect();
        let bind = |args: &[String]| -> Result<Vec<String>, MebnError> {
            args.iter()
                .map(|a| {
                    binding
                        .get(a.as_str())
                        .map(|e| e.to_string())
                        .ok_or_else(|| MebnError::UnboundArgument { var: var.to_string(), arg: a.clone() })
                })
                .collect()
        };

        let context_ok = self.context_holds(mfrag, &binding)?;

        let mut parents = Vec::with_capacity(resident.parents.len());
        for p in &resident.parents {
            let ix = if let Some(pr) = mfrag.resident(p) {
                self.ground(&GroundedVar { name: p.clone(), args: bind(&pr.args)? }, depth)?
            } else if let Some(pi) = mfrag.input(p) {
                let gv = GroundedVar { name: p.clone(), args: bind(&pi.args)? };
                if theory.resident(p).is_some() {
                    if depth + 1 > self.depth_limit {
                        return Err(MebnError::DepthExceeded { limit: self.depth_limit, var: gv.to_string() });
                    }
                    self.ground(&gv, depth + 1)?
                } else {
                    self.ground(&gv, depth)?
                }
            } else {
                return Err(MebnError::UnknownVariable(p.clone()));
            };
            parents.push(ix);
        }

        let states = theory.resolve_states(&resident.states);
        let cpt_decl = resident.cpt.as_ref().ok_or_else(|| MebnError::NoDistribution(var.to_string()))?;
        let cards: Vec<usize> = parents.iter().map(|&p| self.nodes[p].cardinality()).collect();
        let rows: usize = cards.iter().product();
        let mut cpt = Vec::with_capacity(rows);
        let mut config = vec![0usize; parents.len()];
        for _ in 0..rows {
            let matched = if context_ok {
                cpt_decl.rows.iter().find(|row| {
                    row.given.iter().all(|(key, value)| {
                        if let Some(k) = resident.parents.iter().position(|p| p == key) {
                            self.nodes[parents[k]].states[config[k]] == *value
                        } else {
                            binding.get(key.as_str()) == Some(&value.as_str())
                        }
                    })
                })
            } else {
                None
            };
            let dist = matched
                .map(|r| &r.dist)
                .or(cpt_decl.default.as_ref())
                .ok_or_else(|| MebnError::NoDistribution(var.to_string()))?;
            if dist.len() != states.len() {
                return Err(MebnError::StateSpace(var.to_string()));
            }
            cpt.push(dist.clone());
            // odometer, last parent fastest
            for k in (0..config.len()).rev() {
                config[k] += 1;
                if config[k] < cards[k] {
                    break;
                }
                config[k] = 0;
            }
        }
        Ok(SsbnNode { var: var.clone(), states, parents, cpt })
    }

    fn context_holds(&self, mfrag: &MFrag, binding: &HashMap<&str, &str>) -> Result<bool, MebnError> {
        // typed ordinary variables act as implicit IsA constraints
        for (ov, entity) in binding {
            let wanted = mfrag.ordinary_var(ov).map(|o| o.type_tag.as_str());
            let actual = self.theory.entity(entity).and_then(|e| e.type_tag.as_deref());
            if let (Some(w), Some(a)) = (wanted, actual) {
                if w != a {
                    return Ok(false);
                }
            }
        }
        for c in &mfrag.context {
            let Some(args) = c.args.iter().map(|a| binding.get(a.as_str()).copied()).collect::<Option<Vec<&str>>>()
            else {
                // constraint mentions variables this resident does not bind
                return Ok(false);
            };
            let holds = match c.name.as_str() {
                BUILTIN_EQUAL => args.len() == 2 && args[0] == args[1],
                BUILTIN_NOT_EQUAL => args.len() == 2 && args[0] != args[1],
                _ => {
                    let gv = GroundedVar { name: c.name.clone(), args: args.iter().map(|a| a.to_string()).collect() };
                    self.theory.finding(&gv) == Some(c.value.as_str())
                }
            };
            if !holds {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// Builds the SSBN answering `query` given the theory's findings plus
/// `evidence`. Query-time evidence overrides a finding on the same variable.
pub fn build_ssbn(
    theory: &MTheory,
    query: &GroundedVar,
    evidence: &[(GroundedVar, String)],
    depth_limit: usize,
) -> Result<Ssbn, MebnError> {
    if depth_limit == 0 {
        return Err(MebnError::InvalidDepthLimit);
    }
    if theory.resident(&query.name).is_none() {
        return Err(MebnError::UnknownVariable(query.name.clone()));
    }
    let mut g = Grounder { theory, depth_limit, nodes: Vec::new(), index: HashMap::new(), active: HashSet::new() };
    let q = g.ground(query, 0)?;

    let mut observed: BTreeMap<usize, usize> = BTreeMap::new();
    let findings =
        theory.findings.iter().map(|f| (GroundedVar { name: f.variable.clone(), args: f.args.clone() }, &f.state));
    let explicit: Vec<(GroundedVar, &String)> = evidence.iter().map(|(v, s)| (v.clone(), s)).collect();
    let explicit_vars: HashSet<&GroundedVar> = evidence.iter().map(|(v, _)| v).collect();
    for (var, state) in findings.filter(|(v, _)| !explicit_vars.contains(v)).chain(explicit.iter().cloned()) {
        let ix = g.ground(&var, 0)?;
        let s = g.nodes[ix]
            .state_index(state)
            .ok_or_else(|| MebnError::InvalidState { var: var.to_string(), state: state.clone() })?;
        if observed.insert(ix, s).is_some_and(|prev| prev != s) {
            return Err(MebnError::ConflictingEvidence(var.to_string()));
        }
    }

    let full = Ssbn { nodes: g.nodes, evidence: observed, query: q };
    let keep = connected_to(&full, q);
    let ssbn = full.retain(&keep);
    ssbn.check()?;
    Ok(ssbn)
}

fn connected_to(n: &Ssbn, start: usize) -> Vec<bool> {
    let mut adj = vec![Vec::new(); n.nodes.len()];
    for (p, c) in n.edges() {
        adj[p].push(c);
        adj[c].push(p);
    }
    let mut seen = vec![false; n.nodes.len()];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(v) = queue.pop_front() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    seen
}
