//! Exact posterior marginals over an [`Ssbn`].

use super::ssbn::Ssbn;
use super::MebnError;

/// Largest joint state count [`infer_enumerate`] accepts.
pub const ENUMERATION_STATE_CAP: u128 = 1 << 20;

/// Table over a sorted set of variables; the last variable varies fastest.
#[derive(Debug, Clone)]
struct Factor {
    vars: Vec<usize>,
    cards: Vec<usize>,
    values: Vec<f64>,
}

impl Factor {
    fn scalar(v: f64) -> Self {
        Factor { vars: Vec::new(), cards: Vec::new(), values: vec![v] }
    }

    fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.vars.len()];
        for k in (0..self.vars.len().saturating_sub(1)).rev() {
            s[k] = s[k + 1] * self.cards[k + 1];
        }
        s
    }

    fn from_cpt(n: &Ssbn, node: usize) -> Factor {
        let mut vars: Vec<usize> = n.nodes[node].parents.clone();
        vars.push(node);
        vars.sort_unstable();
        vars.dedup();
        let cards: Vec<usize> = vars.iter().map(|&v| n.nodes[v].cardinality()).collect();
        let size = cards.iter().product();
        let mut values = Vec::with_capacity(size);
        let mut assignment = vec![0; n.nodes.len()];
        let mut local = vec![0; vars.len()];
        for _ in 0..size {
            for (k, &v) in vars.iter().enumerate() {
                assignment[v] = local[k];
            }
            values.push(n.nodes[node].cpt[n.row_index(node, &assignment)][assignment[node]]);
            advance(&mut local, &cards);
        }
        Factor { vars, cards, values }
    }

    fn product(&self, other: &Factor) -> Factor {
        let mut vars: Vec<usize> = self.vars.iter().chain(&other.vars).copied().collect();
        vars.sort_unstable();
        vars.dedup();
        let card_of = |v: usize| {
            self.vars
                .iter()
                .position(|&x| x == v)
                .map(|k| self.cards[k])
                .unwrap_or_else(|| other.cards[other.vars.iter().position(|&x| x == v).unwrap()])
        };
        let cards: Vec<usize> = vars.iter().map(|&v| card_of(v)).collect();
        let project = |f: &Factor| -> Vec<usize> {
            let strides = f.strides();
            vars.iter().map(|v| f.vars.iter().position(|x| x == v).map_or(0, |k| strides[k])).collect()
        };
        let (sa, sb) = (project(self), project(other));
        let size: usize = cards.iter().product();
        let mut values = Vec::with_capacity(size);
        let mut local = vec![0; vars.len()];
        for _ in 0..size {
            let ia: usize = local.iter().zip(&sa).map(|(x, s)| x * s).sum();
            let ib: usize = local.iter().zip(&sb).map(|(x, s)| x * s).sum();
            values.push(self.values[ia] * other.values[ib]);
            advance(&mut local, &cards);
        }
        Factor { vars, cards, values }
    }

    fn sum_out(&self, var: usize) -> Factor {
        let Some(k) = self.vars.iter().position(|&v| v == var) else { return self.clone() };
        self.slice(k, None)
    }

    fn reduce(&self, var: usize, state: usize) -> Factor {
        let Some(k) = self.vars.iter().position(|&v| v == var) else { return self.clone() };
        self.slice(k, Some(state))
    }

    // Drops dimension k, summing over it or fixing it to one state.
    fn slice(&self, k: usize, fixed: Option<usize>) -> Factor {
        let strides = self.strides();
        let mut vars = self.vars.clone();
        let mut cards = self.cards.clone();
        vars.remove(k);
        cards.remove(k);
        let outer: Vec<usize> = (0..self.vars.len()).filter(|&i| i != k).map(|i| strides[i]).collect();
        let size: usize = cards.iter().product();
        let mut values = Vec::with_capacity(size);
        let mut local = vec![0; vars.len()];
        for _ in 0..size {
            let base: usize = local.iter().zip(&outer).map(|(x, s)| x * s).sum();
            values.push(match fixed {
                Some(s) => self.values[base + s * strides[k]],
                None => (0..self.cards[k]).map(|s| self.values[base + s * strides[k]]).sum(),
            });
            advance(&mut local, &cards);
        }
        Factor { vars, cards, values }
    }
}

fn advance(local: &mut [usize], cards: &[usize]) {
    for k in (0..local.len()).rev() {
        local[k] += 1;
        if local[k] < cards[k] {
            return;
        }
        local[k] = 0;
    }
}

fn normalize(mut dist: Vec<f64>) -> Result<Vec<f64>, MebnError> {
    let z: f64 = dist.iter().sum();
    if !(z > 0.0 && z.is_finite()) {
        return Err(MebnError::InconsistentEvidence);
    }
    dist.iter_mut().for_each(|p| *p /= z);
    Ok(dist)
}

fn check_target(n: &Ssbn, target: usize) -> Result<(), MebnError> {
    if target >= n.nodes.len() {
        return Err(MebnError::NodeNotFound(target));
    }
    Ok(())
}

/// P(target | evidence) by variable elimination with a min-degree order.
pub fn infer(n: &Ssbn, target: usize) -> Result<Vec<f64>, MebnError> {
    check_target(n, target)?;
    let mut factors: Vec<Factor> = (0..n.nodes.len()).map(|i| Factor::from_cpt(n, i)).collect();
    for (&var, &state) in n.evidence.iter().filter(|(v, _)| **v != target) {
        for f in factors.iter_mut() {
            *f = f.reduce(var, state);
        }
    }

    let mut pending: Vec<usize> = (0..n.nodes.len()).filter(|v| *v != target && !n.evidence.contains_key(v)).collect();
    while !pending.is_empty() {
        let (pos, var) = pending
            .iter()
            .enumerate()
            .min_by_key(|(_, &v)| {
                let mut neighbours: Vec<usize> = factors
                    .iter()
                    .filter(|f| f.vars.contains(&v))
                    .flat_map(|f| f.vars.iter().copied())
                    .filter(|&u| u != v)
                    .collect();
                neighbours.sort_unstable();
                neighbours.dedup();
                (neighbours.len(), v)
            })
            .map(|(pos, &v)| (pos, v))
            .expect("pending is nonempty");
        pending.swap_remove(pos);
        let (touching, rest): (Vec<Factor>, Vec<Factor>) = factors.into_iter().partition(|f| f.vars.contains(&var));
        factors = rest;
        let joined = touching.iter().fold(Factor::scalar(1.0), |acc, f| acc.product(f));
        factors.push(joined.sum_out(var));
    }

    let joint = factors.iter().fold(Factor::scalar(1.0), |acc, f| acc.product(f));
    let card = n.nodes[target].cardinality();
    let mut dist: Vec<f64> = if joint.vars.is_empty() { vec![joint.values[0]; card] } else { joint.values };
    if let Some(&observed) = n.evidence.get(&target) {
        for (s, p) in dist.iter_mut().enumerate() {
            if s != observed {
                *p = 0.0;
            }
        }
    }
    normalize(dist)
}

/// P(target | evidence) by summing the full joint. Reference implementation
/// for testing [`infer`]; refuses networks above [`ENUMERATION_STATE_CAP`].
pub fn infer_enumerate(n: &Ssbn, target: usize) -> Result<Vec<f64>, MebnError> {
    check_target(n, target)?;
    let cards: Vec<usize> = n.nodes.iter().map(|x| x.cardinality()).collect();
    let total = cards.iter().try_fold(1u128, |acc, &c| acc.checked_mul(c as u128)).unwrap_or(u128::MAX);
    if total > ENUMERATION_STATE_CAP {
        return Err(MebnError::StateSpaceCap { states: total, cap: ENUMERATION_STATE_CAP });
    }
    let mut dist = vec![0.0; cards[target]];
    let mut assignment = vec![0; cards.len()];
    for _ in 0..total {
        let consistent = n.evidence.iter().all(|(&v, &s)| assignment[v] == s);
        if consistent {
            let mut p = 1.0;
            for i in 0..n.nodes.len() {
                p *= n.nodes[i].cpt[n.row_index(i, &assignment)][assignment[i]];
            }
            dist[assignment[target]] += p;
        }
        advance(&mut assignment, &cards);
    }
    normalize(dist)
}
