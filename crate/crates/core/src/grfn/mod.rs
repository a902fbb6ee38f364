//! Grounded function networks: versioned variable nodes, function nodes and
//! the edges between them, plus lowering, execution and differentiation.

mod dot;
mod exec;
mod lower;
mod scalar;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::ir::{BaseType, Expression};

pub use dot::to_dot;
pub use exec::{execute, execute_ordered, gradient, Array, EvalOrder, ExecError, Executor, Value};
pub use lower::{lower, lower_in, LoweringError};
pub use scalar::{Dual, Scalar};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableNode {
    pub id: String,
    pub name: String,
    pub version: u32,
    pub scope: String,
    #[serde(rename = "type")]
    pub base_type: BaseType,
}

pub fn var_id(scope: &str, name: &str, version: u32) -> String {
    format!("{scope}::{name}::{version}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FunctionKind {
    #[serde(rename = "ASSIGN")]
    Assign,
    #[serde(rename = "CONDITION")]
    Condition,
    #[serde(rename = "DECISION")]
    Decision,
    #[serde(rename = "LOOPBODY")]
    LoopBody,
}

impl FunctionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FunctionKind::Assign => "ASSIGN",
            FunctionKind::Condition => "CONDITION",
            FunctionKind::Decision => "DECISION",
            FunctionKind::LoopBody => "LOOPBODY",
        }
    }

    fn id_tag(self) -> &'static str {
        match self {
            FunctionKind::Assign => "assign",
            FunctionKind::Condition => "condition",
            FunctionKind::Decision => "decision",
            FunctionKind::LoopBody => "loopbody",
        }
    }
}

/// The node only runs when every listed condition variable has the given value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Guard {
    pub cond: String,
    pub value: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionNode {
    pub id: String,
    pub kind: FunctionKind,
    pub latex: Option<String>,
    pub inputs: Vec<String>,
    pub output: String,
    /// ASSIGN right-hand side or CONDITION predicate.
    #[serde(with = "sexpr_opt")]
    pub expression: Option<Expression>,
    /// Subscripts of an indexed ASSIGN target.
    #[serde(default, skip_serializing_if = "Vec::is_empty", with = "sexpr_vec")]
    pub indices: Vec<Expression>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub guard: Vec<Guard>,
    /// LOOPBODY nodes name the loop they belong to.
    #[serde(default, rename = "loop", skip_serializing_if = "Option::is_none")]
    pub loop_id: Option<String>,
}

/// A DO loop. Its LOOPBODY nodes (one per carried variable) share it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopSpec {
    pub id: String,
    pub var: String,
    #[serde(with = "sexpr_one")]
    pub lo: Expression,
    #[serde(with = "sexpr_one")]
    pub hi: Expression,
    #[serde(with = "sexpr_opt")]
    pub stride: Option<Expression>,
    /// Variables the loop writes, loop variable included.
    pub carried: Vec<String>,
    pub body: Grfn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DeclKind {
    Param,
    Local,
    Module,
    Constant,
}

/// Declared shape and kind of a variable in one scope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Declaration {
    pub scope: String,
    pub name: String,
    #[serde(rename = "type")]
    pub base_type: BaseType,
    pub kind: DeclKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty", with = "sexpr_dims")]
    pub dims: Vec<(Expression, Expression)>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "sexpr_opt")]
    pub init: Option<Expression>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum GroundingSource {
    Comment,
    Text,
    Equation,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VarRef {
    pub scope: String,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingRecord {
    pub variable: VarRef,
    pub description: String,
    pub units: Option<String>,
    pub source: GroundingSource,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grfn {
    pub variables: Vec<VariableNode>,
    pub functions: Vec<FunctionNode>,
    pub edges: Vec<(String, String)>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    #[serde(default)]
    pub groundings: Vec<GroundingRecord>,
    pub scope: String,
    #[serde(default)]
    pub declarations: Vec<Declaration>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub loops: Vec<LoopSpec>,
}

#[derive(Debug, thiserror::Error)]
pub enum GrfnJsonError {
    #[error("invalid GrFN JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid GrFN: {0}")]
    Invalid(String),
}

impl Grfn {
    pub fn variable(&self, id: &str) -> Option<&VariableNode> {
        self.variables.iter().find(|v| v.id == id)
    }

    pub fn function(&self, id: &str) -> Option<&FunctionNode> {
        self.functions.iter().find(|f| f.id == id)
    }

    pub fn loop_spec(&self, id: &str) -> Option<&LoopSpec> {
        self.loops.iter().find(|l| l.id == id)
    }

    pub fn functions_of_kind(&self, kind: FunctionKind) -> impl Iterator<Item = &FunctionNode> {
        self.functions.iter().filter(move |f| f.kind == kind)
    }

    /// Final version of `name` among the outputs, if any.
    pub fn output_var(&self, name: &str) -> Option<&VariableNode> {
        self.outputs
            .iter()
            .filter_map(|id| self.variable(id))
            .find(|v| v.name.eq_ignore_ascii_case(name))
    }

    /// Latest version of each variable name in the top scope.
    pub fn final_versions(&self) -> Vec<&VariableNode> {
        let mut best: Vec<&VariableNode> = Vec::new();
        for v in &self.variables {
            if v.scope != self.scope || v.name.contains(['@', '#']) {
                continue;
            }
            match best.iter_mut().find(|b| b.name == v.name) {
                Some(b) if b.version < v.version => *b = v,
                Some(_) => {}
                None => best.push(v),
            }
        }
        best.sort_by(|a, b| a.name.cmp(&b.name));
        best
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("GrFN serializes")
    }

    pub fn from_json(text: &str) -> Result<Grfn, GrfnJsonError> {
        let g: Grfn = serde_json::from_str(text)?;
        g.check().map_err(GrfnJsonError::Invalid)?;
        Ok(g)
    }

    /// Structural checks: unique ids, edges consistent with functions,
    /// single producers and acyclicity.
    pub fn check(&self) -> Result<(), String> {
        let mut ids = HashSet::new();
        for v in &self.variables {
            if !ids.insert(v.id.as_str()) {
                return Err(format!("duplicate variable {}", v.id));
            }
        }
        let mut produced = HashSet::new();
        for f in &self.functions {
            for i in f.inputs.iter().chain(f.guard.iter().map(|g| &g.cond)) {
                if !ids.contains(i.as_str()) {
                    return Err(format!("{} reads unknown variable {i}", f.id));
                }
            }
            if !ids.contains(f.output.as_str()) {
                return Err(format!("{} writes unknown variable {}", f.id, f.output));
            }
            if !produced.insert(f.output.as_str()) {
                return Err(format!("{} has more than one producer", f.output));
            }
            if let Some(l) = &f.loop_id {
                let spec = self
                    .loop_spec(l)
                    .ok_or_else(|| format!("{} names unknown loop {l}", f.id))?;
                spec.body.check()?;
            }
        }
        for i in &self.inputs {
            if produced.contains(i.as_str()) {
                return Err(format!("input {i} has a producer"));
            }
        }
        if let Some(cycle) = self.find_cycle() {
            return Err(format!("cycle through {cycle}"));
        }
        Ok(())
    }

    /// A node on a directed cycle, if the graph has one.
    pub fn find_cycle(&self) -> Option<String> {
        let nodes = self.node_ids();
        let index: std::collections::HashMap<&str, usize> = nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect();
        let mut succ = vec![Vec::new(); nodes.len()];
        let mut indeg = vec![0usize; nodes.len()];
        for (a, b) in &self.edges {
            let (Some(&a), Some(&b)) = (index.get(a.as_str()), index.get(b.as_str())) else {
                continue;
            };
            succ[a].push(b);
            indeg[b] += 1;
        }
        let mut ready: Vec<usize> = (0..nodes.len()).filter(|&i| indeg[i] == 0).collect();
        let mut seen = 0;
        while let Some(n) = ready.pop() {
            seen += 1;
            for &s in &succ[n] {
                indeg[s] -= 1;
                if indeg[s] == 0 {
                    ready.push(s);
                }
            }
        }
        if seen == nodes.len() {
            None
        } else {
            (0..nodes.len())
                .find(|&i| indeg[i] > 0)
                .map(|i| nodes[i].clone())
        }
    }

    /// Variable ids followed by function ids.
    pub fn node_ids(&self) -> Vec<String> {
        self.variables
            .iter()
            .map(|v| v.id.clone())
            .chain(self.functions.iter().map(|f| f.id.clone()))
            .collect()
    }
}

pub(crate) mod sexpr_one {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::ir::sexpr::{parse_sexpr, to_sexpr};
    use crate::ir::Expression;

    pub fn serialize<S: Serializer>(e: &Expression, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&to_sexpr(e))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Expression, D::Error> {
        let text = String::deserialize(d)?;
        parse_sexpr(&text).map_err(serde::de::Error::custom)
    }
}

mod sexpr_opt {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::ir::sexpr::{parse_sexpr, to_sexpr};
    use crate::ir::Expression;

    pub fn serialize<S: Serializer>(e: &Option<Expression>, s: S) -> Result<S::Ok, S::Error> {
        match e {
            Some(e) => s.serialize_some(&to_sexpr(e)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Expression>, D::Error> {
        Option::<String>::deserialize(d)?
            .map(|t| parse_sexpr(&t).map_err(serde::de::Error::custom))
            .transpose()
    }
}

mod sexpr_vec {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::ir::sexpr::{parse_sexpr, to_sexpr};
    use crate::ir::Expression;

    pub fn serialize<S: Serializer>(v: &[Expression], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(to_sexpr))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Expression>, D::Error> {
        Vec::<String>::deserialize(d)?
            .iter()
            .map(|t| parse_sexpr(t).map_err(serde::de::Error::custom))
            .collect()
    }
}

mod sexpr_dims {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::ir::sexpr::{parse_sexpr, to_sexpr};
    use crate::ir::Expression;

    pub fn serialize<S: Serializer>(
        v: &[(Expression, Expression)],
        s: S,
    ) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|(a, b)| [to_sexpr(a), to_sexpr(b)]))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> Result<Vec<(Expression, Expression)>, D::Error> {
        Vec::<[String; 2]>::deserialize(d)?
            .iter()
            .map(|[a, b]| {
                Ok((
                    parse_sexpr(a).map_err(serde::de::Error::custom)?,
                    parse_sexpr(b).map_err(serde::de::Error::custom)?,
                ))
            })
            .collect()
    }
}
