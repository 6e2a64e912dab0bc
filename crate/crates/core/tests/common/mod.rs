#![allow(dead_code)]

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::Rng;
use serde_json::{json, Value};
use ssparse::mebn::{GroundedVar, MTheory};
use ssparse::{Pcfg, Rhs, Rule};

pub const PAPER_GRAMMAR: &str = include_str!("../../testdata/paper_grammar.pcfg");
pub const INSTRUMENT_KB: &str = include_str!("../../testdata/instrument_kb.json");

pub fn testdata(name: &str) -> String {
    format!("{}/testdata/{name}", env!("CARGO_MANIFEST_DIR"))
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs())
}

/// Weights in [0.05, 1) rescaled to sum to one.
pub fn random_distribution(rng: &mut StdRng, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

/// Normalized CNF grammar where every nonterminal has a lexical rule, so
/// top-down sampling always terminates.
pub fn random_grammar(rng: &mut StdRng) -> Pcfg {
    let n_nts = rng.gen_range(2..=4);
    let nts: Vec<String> = std::iter::once("S".to_string()).chain((1..=n_nts).map(|i| format!("N{i}"))).collect();
    let terminals: Vec<String> = (0..rng.gen_range(3..=6)).map(|i| format!("t{i}")).collect();
    let mut rules = Vec::new();
    for lhs in &nts {
        let mut rhs: Vec<Rhs> = Vec::new();
        let n_lex = rng.gen_range(1..=2);
        for t in terminals.choose_multiple(rng, n_lex) {
            rhs.push(Rhs::Lexical(t.clone()));
        }
        for _ in 0..rng.gen_range(1..=3) {
            let b = Rhs::Binary(nts.choose(rng).unwrap().clone(), nts.choose(rng).unwrap().clone());
            if !rhs.contains(&b) {
                rhs.push(b);
            }
        }
        let probs = random_distribution(rng, rhs.len());
        for (r, p) in rhs.into_iter().zip(probs) {
            rules.push(Rule { lhs: lhs.clone(), rhs: r, prob: p });
        }
    }
    Pcfg::new("S", rules).expect("generated grammar is well formed")
}

/// Samples a derivation top-down, giving up once it exceeds `max_len`
/// tokens.
pub fn sample_sentence(rng: &mut StdRng, grammar: &Pcfg, max_len: usize) -> Option<Vec<String>> {
    fn expand(rng: &mut StdRng, g: &Pcfg, nt: &str, depth: usize, max_len: usize, out: &mut Vec<String>) -> Option<()> {
        if out.len() > max_len || depth > 64 {
            return None;
        }
        let rules = g.rules_for(nt).ok()?;
        let mut x = rng.gen_range(0.0..1.0);
        let rule = rules
            .iter()
            .find(|r| {
                x -= r.prob;
                x < 0.0
            })
            .unwrap_or(rules.last()?);
        match &rule.rhs {
            Rhs::Lexical(t) => out.push(t.clone()),
            Rhs::Binary(l, r) => {
                expand(rng, g, l, depth + 1, max_len, out)?;
                expand(rng, g, r, depth + 1, max_len, out)?;
            }
        }
        (out.len() <= max_len).then_some(())
    }
    let mut out = Vec::new();
    expand(rng, grammar, grammar.start(), 0, max_len, &mut out)?;
    Some(out)
}

/// A sentence of at most `max_len` tokens.
pub fn sample_bounded(rng: &mut StdRng, grammar: &Pcfg, max_len: usize) -> Vec<String> {
    loop {
        if let Some(s) = sample_sentence(rng, grammar, max_len) {
            return s;
        }
    }
}

/// A random MTheory over `Thing` entities plus one query and some evidence
/// on resident instances.
pub struct RandomMebn {
    pub theory: MTheory,
    pub query: GroundedVar,
    pub evidence: Vec<(GroundedVar, String)>,
}

struct ResidentSpec {
    name: String,
    arity: usize,
    states: Vec<String>,
}

fn cpt(rng: &mut StdRng, n_states: usize, parents: &[(String, Vec<String>)]) -> Value {
    let mut rows = Vec::new();
    let mut configs: Vec<Vec<usize>> = vec![Vec::new()];
    for (_, states) in parents {
        configs =
            configs.into_iter().flat_map(|c| (0..states.len()).map(move |s| [c.clone(), vec![s]].concat())).collect();
    }
    for config in configs {
        // Leave some configurations to the default row.
        if !parents.is_empty() && rng.gen_bool(0.25) {
            continue;
        }
        let given: serde_json::Map<String, Value> =
            parents.iter().zip(&config).map(|((p, states), &s)| (p.clone(), json!(states[s]))).collect();
        rows.push(json!({"given": given, "dist": random_distribution(rng, n_states)}));
    }
    json!({"rows": rows, "default": random_distribution(rng, n_states)})
}

pub fn random_mebn(rng: &mut StdRng) -> RandomMebn {
    let n_entities = rng.gen_range(1..=3);
    let entities: Vec<String> = (0..n_entities).map(|i| format!("e{i}")).collect();
    let mut all: Vec<ResidentSpec> = Vec::new();
    let mut mfrags = Vec::new();

    for k in 0..rng.gen_range(1..=3) {
        let mut local: Vec<(String, usize, Vec<String>)> = Vec::new();
        let mut inputs = Vec::new();
        // Pull in residents of earlier fragments.
        for spec in &all {
            if rng.gen_bool(0.6) {
                let args: Vec<&str> = if spec.arity == 1 { vec!["x"] } else { vec![] };
                inputs.push(json!({"name": spec.name, "args": args}));
                local.push((spec.name.clone(), spec.arity, spec.states.clone()));
            }
        }
        if rng.gen_bool(0.3) {
            let name = format!("I{k}");
            inputs.push(json!({"name": name, "prior": random_distribution(rng, 2)}));
            local.push((name, 0, vec!["T".into(), "F".into()]));
        }
        let mut residents = Vec::new();
        for j in 0..rng.gen_range(2..=4) {
            let name = format!("R{k}_{j}");
            let arity = rng.gen_range(0..=1);
            let states: Vec<String> = (0..rng.gen_range(2..=3)).map(|s| format!("s{s}")).collect();
            let eligible: Vec<&(String, usize, Vec<String>)> = local.iter().filter(|(_, a, _)| *a <= arity).collect();
            let n_parents = rng.gen_range(eligible.len().min(1)..=eligible.len().min(3));
            let parents: Vec<(String, Vec<String>)> =
                eligible.choose_multiple(rng, n_parents).map(|(n, _, s)| (n.clone(), s.clone())).collect();
            let args: Vec<&str> = if arity == 1 { vec!["x"] } else { vec![] };
            residents.push(json!({
                "name": name,
                "args": args,
                "states": states,
                "parents": parents.iter().map(|(p, _)| p).collect::<Vec<_>>(),
                "cpt": cpt(rng, states.len(), &parents),
            }));
            local.push((name.clone(), arity, states.clone()));
            all.push(ResidentSpec { name, arity, states });
        }
        mfrags.push(json!({
            "name": format!("F{k}"),
            "ordinary_vars": [{"name": "x", "type": "Thing"}],
            "inputs": inputs,
            "residents": residents,
        }));
    }

    let doc = json!({
        "name": "random",
        "entities": entities.iter().map(|e| json!({"name": e, "type": "Thing"})).collect::<Vec<_>>(),
        "mfrags": mfrags,
    });
    let theory = ssparse::mebn::load_mtheory(&doc.to_string()).expect("generated MTheory is valid");

    let ground = |rng: &mut StdRng, spec: &ResidentSpec| GroundedVar {
        name: spec.name.clone(),
        args: if spec.arity == 1 { vec![entities.choose(rng).unwrap().clone()] } else { vec![] },
    };
    let query = ground(rng, all.last().unwrap());
    let mut evidence = Vec::new();
    for _ in 0..rng.gen_range(0..=3) {
        let spec = all.choose(rng).unwrap();
        let var = ground(rng, spec);
        if var != query && !evidence.iter().any(|(v, _)| v == &var) {
            evidence.push((var, spec.states.choose(rng).unwrap().clone()));
        }
    }
    RandomMebn { theory, query, evidence }
}
