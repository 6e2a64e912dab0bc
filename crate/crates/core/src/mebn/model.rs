use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::MebnError;

pub const TRUE_STATE: &str = "T";
pub const FALSE_STATE: &str = "F";

/// Context names evaluated on the bindings rather than on findings.
pub const BUILTIN_EQUAL: &str = "Equal";
pub const BUILTIN_NOT_EQUAL: &str = "NotEqual";

/// Entity identifier symbol. Never empty, never contains whitespace.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct EntityId(String);

impl EntityId {
    pub fn new(symbol: &str) -> Result<Self, MebnError> {
        if symbol.is_empty() || symbol.chars().any(char::is_whitespace) {
            return Err(MebnError::InvalidEntity(symbol.to_string()));
        }
        Ok(EntityId(symbol.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for EntityId {
    type Error = MebnError;

    fn try_from(s: String) -> Result<Self, MebnError> {
        EntityId::new(&s)
    }
}

impl From<EntityId> for String {
    fn from(e: EntityId) -> String {
        e.0
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A registered entity. Untyped entities bind to ordinary variables of any
/// type; typed ones only to variables of the same type.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "EntityRepr", into = "EntityRepr")]
pub struct Entity {
    pub id: String,
    pub type_tag: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum EntityRepr {
    Name(String),
    Typed {
        name: String,
        #[serde(rename = "type")]
        type_tag: String,
    },
}

impl From<EntityRepr> for Entity {
    fn from(r: EntityRepr) -> Self {
        match r {
            EntityRepr::Name(id) => Entity { id, type_tag: None },
            EntityRepr::Typed { name, type_tag } => Entity { id: name, type_tag: Some(type_tag) },
        }
    }
}

impl From<Entity> for EntityRepr {
    fn from(e: Entity) -> Self {
        match e.type_tag {
            None => EntityRepr::Name(e.id),
            Some(type_tag) => EntityRepr::Typed { name: e.id, type_tag },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrdinaryVariable {
    pub name: String,
    #[serde(rename = "type", default = "default_type")]
    pub type_tag: String,
}

fn default_type() -> String {
    "Entity".to_string()
}

/// States of a random variable: an explicit list, or every registered
/// entity of a type (`"*"` for all entities) resolved at grounding time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StateSpace {
    Listed(Vec<String>),
    Entities { entities: String },
}

impl Default for StateSpace {
    fn default() -> Self {
        StateSpace::Listed(vec![TRUE_STATE.into(), FALSE_STATE.into()])
    }
}

impl StateSpace {
    pub fn listed(&self) -> Option<&[String]> {
        match self {
            StateSpace::Listed(s) => Some(s),
            StateSpace::Entities { .. } => None,
        }
    }

    pub fn is_boolean(&self) -> bool {
        self.listed().is_some_and(|s| s.len() == 2 && s[0] == TRUE_STATE && s[1] == FALSE_STATE)
    }
}

/// Context constraint. `Equal`/`NotEqual` compare two bindings; any other
/// name is a boolean variable whose grounded instance must carry a finding
/// equal to `value`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextConstraint {
    pub name: String,
    #[serde(default)]
    pub args: Vec<String>,
    #[serde(default = "true_state")]
    pub value: String,
}

fn true_state() -> String {
    TRUE_STATE.to_string()
}

/// Input variable: a reference to a resident of another MFrag, or a root
/// variable with its own prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputVariable {
    pub name: String,
    #[serde(default)]
    pub args: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub states: Option<StateSpace>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistRow {
    /// Parent name to state, or ordinary variable (one of the resident's
    /// arguments) to entity.
    #[serde(default)]
    pub given: BTreeMap<String, String>,
    pub dist: Vec<f64>,
}

/// Local distribution of a resident variable. The first matching row wins;
/// `default` applies when no row matches or the context fails.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LocalDistribution {
    #[serde(default)]
    pub rows: Vec<DistRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidentVariable {
    pub name: String,
    #[serde(default)]
    pub args: Vec<String>,
    #[serde(default)]
    pub states: StateSpace,
    #[serde(default)]
    pub parents: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cpt: Option<LocalDistribution>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MFrag {
    pub name: String,
    #[serde(default)]
    pub ordinary_vars: Vec<OrdinaryVariable>,
    #[serde(default)]
    pub context: Vec<ContextConstraint>,
    #[serde(default)]
    pub inputs: Vec<InputVariable>,
    #[serde(default)]
    pub residents: Vec<ResidentVariable>,
}

impl MFrag {
    pub fn new(name: &str) -> Self {
        MFrag {
            name: name.into(),
            ordinary_vars: Vec::new(),
            context: Vec::new(),
            inputs: Vec::new(),
            residents: Vec::new(),
        }
    }

    pub fn resident(&self, name: &str) -> Option<&ResidentVariable> {
        self.residents.iter().find(|r| r.name == name)
    }

    pub fn input(&self, name: &str) -> Option<&InputVariable> {
        self.inputs.iter().find(|i| i.name == name)
    }

    pub fn ordinary_var(&self, name: &str) -> Option<&OrdinaryVariable> {
        self.ordinary_vars.iter().find(|o| o.name == name)
    }

    /// Dependency edges `(parent, resident)` of this fragment's graph.
    pub fn edges(&self) -> Vec<(&str, &str)> {
        self.residents.iter().flat_map(|r| r.parents.iter().map(move |p| (p.as_str(), r.name.as_str()))).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub variable: String,
    #[serde(default)]
    pub args: Vec<String>,
    pub state: String,
}

/// A variable instance with its arguments bound to entities.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroundedVar {
    #[serde(rename = "variable")]
    pub name: String,
    #[serde(default)]
    pub args: Vec<String>,
}

impl GroundedVar {
    pub fn new(name: &str, args: &[&str]) -> Self {
        GroundedVar { name: name.to_string(), args: args.iter().map(|a| a.to_string()).collect() }
    }
}

impl fmt::Display for GroundedVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.name, self.args.join(", "))
    }
}

impl FromStr for GroundedVar {
    type Err = MebnError;

    /// Parses `name(a, b)` or a bare `name`.
    fn from_str(s: &str) -> Result<Self, MebnError> {
        let s = s.trim();
        let bad = || MebnError::Syntax(format!("bad variable reference '{s}'"));
        let (name, args) = match s.find('(') {
            None => (s, Vec::new()),
            Some(open) => {
                let inner = s[open + 1..].strip_suffix(')').ok_or_else(bad)?;
                let args: Vec<String> = if inner.trim().is_empty() {
                    Vec::new()
                } else {
                    inner.split(',').map(|a| a.trim().to_string()).collect()
                };
                if args.iter().any(String::is_empty) {
                    return Err(bad());
                }
                (&s[..open], args)
            }
        };
        if name.is_empty() || name.chars().any(|c| c.is_whitespace() || c == ')') {
            return Err(bad());
        }
        Ok(GroundedVar { name: name.to_string(), args })
    }
}

/// A first-order probabilistic knowledge base: a set of MFrags, an entity
/// registry and ground findings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MTheory {
    pub name: String,
    #[serde(default)]
    pub entities: Vec<Entity>,
    #[serde(default)]
    pub mfrags: Vec<MFrag>,
    #[serde(default)]
    pub findings: Vec<Finding>,
}

impl MTheory {
    pub fn new(name: &str) -> Self {
        MTheory { name: name.into(), entities: Vec::new(), mfrags: Vec::new(), findings: Vec::new() }
    }

    pub fn entity(&self, id: &str) -> Option<&Entity> {
        self.entities.iter().find(|e| e.id == id)
    }

    /// Adds an entity unless one with the same id exists.
    pub fn register_entity(&mut self, id: &EntityId, type_tag: Option<&str>) {
        if self.entity(id.as_str()).is_none() {
            self.entities.push(Entity { id: id.as_str().to_string(), type_tag: type_tag.map(str::to_string) });
        }
    }

    /// The MFrag and declaration of a resident variable.
    pub fn resident(&self, name: &str) -> Option<(&MFrag, &ResidentVariable)> {
        self.mfrags.iter().find_map(|m| m.resident(name).map(|r| (m, r)))
    }

    /// First input declaration of `name` carrying a prior, when no MFrag
    /// holds it as a resident.
    pub fn root_input(&self, name: &str) -> Option<&InputVariable> {
        if self.resident(name).is_some() {
            return None;
        }
        self.mfrags.iter().flat_map(|m| &m.inputs).find(|i| i.name == name && i.prior.is_some())
    }

    pub fn is_input_anywhere(&self, name: &str) -> bool {
        self.mfrags.iter().any(|m| m.input(name).is_some())
    }

    /// Entities whose type matches `type_tag` (`"*"` matches all), in
    /// registry order.
    pub fn entities_of(&self, type_tag: &str) -> Vec<String> {
        self.entities
            .iter()
            .filter(|e| type_tag == "*" || e.type_tag.as_deref().is_none_or(|t| t == type_tag))
            .map(|e| e.id.clone())
            .collect()
    }

    /// Concrete states of a state space against the current registry.
    pub fn resolve_states(&self, space: &StateSpace) -> Vec<String> {
        match space {
            StateSpace::Listed(s) => s.clone(),
            StateSpace::Entities { entities } => self.entities_of(entities),
        }
    }

    pub fn finding(&self, var: &GroundedVar) -> Option<&str> {
        self.findings.iter().find(|f| f.variable == var.name && f.args == var.args).map(|f| f.state.as_str())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("theories always serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grounded_var_parsing() {
        let v: GroundedVar = "hasProbability(eats_fish_with_fork, vp->vp_pp)".parse().unwrap();
        assert_eq!(v, GroundedVar::new("hasProbability", &["eats_fish_with_fork", "vp->vp_pp"]));
        assert_eq!(v.to_string(), "hasProbability(eats_fish_with_fork, vp->vp_pp)");
        assert_eq!("Rain".parse::<GroundedVar>().unwrap(), GroundedVar::new("Rain", &[]));
        assert_eq!("Rain()".parse::<GroundedVar>().unwrap(), GroundedVar::new("Rain", &[]));
        assert!("f(a,,b)".parse::<GroundedVar>().is_err());
        assert!("f(a".parse::<GroundedVar>().is_err());
        assert!("(a)".parse::<GroundedVar>().is_err());
    }

    #[test]
    fn entity_serde_forms() {
        let es: Vec<Entity> = serde_json::from_str(r#"["alex", {"name": "fork", "type": "Tool"}]"#).unwrap();
        assert_eq!(es[0], Entity { id: "alex".into(), type_tag: None });
        assert_eq!(es[1].type_tag.as_deref(), Some("Tool"));
        assert_eq!(serde_json::to_string(&es).unwrap(), r#"["alex",{"name":"fork","type":"Tool"}]"#);
        assert!(EntityId::new("").is_err());
        assert!(EntityId::new("two words").is_err());
    }

    #[test]
    fn state_space_forms() {
        let s: StateSpace = serde_json::from_str(r#"["T","F"]"#).unwrap();
        assert!(s.is_boolean());
        let e: StateSpace = serde_json::from_str(r#"{"entities": "Tool"}"#).unwrap();
        let mut t = MTheory::new("t");
        t.entities =
            serde_json::from_str(r#"["x", {"name": "fork", "type": "Tool"}, {"name": "egg", "type": "Food"}]"#)
                .unwrap();
        assert_eq!(t.resolve_states(&e), ["x", "fork"]);
        assert_eq!(t.entities_of("*"), ["x", "fork", "egg"]);
    }
}
