//! Structural comparison of two networks: shared variables and the
//! SHARED / PATH / CONTROL / ISOLATED classification of every node.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::grfn::Grfn;
use crate::grounding::{
    alignment_score, grfn_descriptions, name_similarity, VarRef, DEFAULT_THRESHOLD,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum NodeClass {
    Shared,
    Path,
    Control,
    Isolated,
}

impl NodeClass {
    pub fn color(self) -> &'static str {
        match self {
            NodeClass::Shared => "blue",
            NodeClass::Path => "black",
            NodeClass::Control => "green",
            NodeClass::Isolated => "orange",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeRole {
    Variable,
    Function,
}

/// A directed graph of variable and function nodes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NodeGraph {
    pub nodes: BTreeMap<String, NodeRole>,
    pub edges: BTreeSet<(String, String)>,
}

impl NodeGraph {
    /// Top-level nodes and edges of a network; a loop stays one opaque
    /// LOOPBODY node per carried variable.
    pub fn from_grfn(g: &Grfn) -> Self {
        let mut nodes = BTreeMap::new();
        for v in &g.variables {
            nodes.insert(v.id.clone(), NodeRole::Variable);
        }
        for f in &g.functions {
            nodes.insert(f.id.clone(), NodeRole::Function);
        }
        let edges = g
            .edges
            .iter()
            .filter(|(a, b)| nodes.contains_key(a) && nodes.contains_key(b))
            .cloned()
            .collect();
        NodeGraph { nodes, edges }
    }

    fn index(&self) -> (Vec<&str>, Vec<Vec<usize>>, Vec<Vec<usize>>) {
        let names: Vec<&str> = self.nodes.keys().map(String::as_str).collect();
        let pos = |n: &str| names.binary_search(&n).ok();
        let mut succ = vec![Vec::new(); names.len()];
        let mut pred = vec![Vec::new(); names.len()];
        for (a, b) in &self.edges {
            if let (Some(i), Some(j)) = (pos(a), pos(b)) {
                succ[i].push(j);
                pred[j].push(i);
            }
        }
        (names, succ, pred)
    }
}

fn reach(start: impl Iterator<Item = usize>, next: &[Vec<usize>]) -> Vec<bool> {
    let mut seen = vec![false; next.len()];
    let mut stack: Vec<usize> = start.flat_map(|s| next[s].iter().copied()).collect();
    while let Some(n) = stack.pop() {
        if !std::mem::replace(&mut seen[n], true) {
            stack.extend(next[n].iter().copied());
        }
    }
    seen
}

/// Classify every node of an acyclic graph against a shared set.
///
/// PATH nodes lie on a directed path between two shared nodes. CONTROL nodes
/// feed PATH or SHARED nodes directly, together with function nodes whose
/// outputs are all such feeders.
pub fn classify_graph(graph: &NodeGraph, shared: &BTreeSet<String>) -> BTreeMap<String, NodeClass> {
    let (names, succ, pred) = graph.index();
    let is_shared: Vec<bool> = names.iter().map(|n| shared.contains(*n)).collect();
    let seeds = || (0..names.len()).filter(|&i| is_shared[i]);
    let from_shared = reach(seeds(), &succ);
    let to_shared = reach(seeds(), &pred);
    let mut class: Vec<NodeClass> = (0..names.len())
        .map(|i| {
            if is_shared[i] {
                NodeClass::Shared
            } else if from_shared[i] && to_shared[i] {
                NodeClass::Path
            } else {
                NodeClass::Isolated
            }
        })
        .collect();
    let covered = |c: NodeClass| matches!(c, NodeClass::Shared | NodeClass::Path);
    let feeders: Vec<usize> = (0..names.len())
        .filter(|&i| class[i] == NodeClass::Isolated && succ[i].iter().any(|&j| covered(class[j])))
        .collect();
    for &i in &feeders {
        class[i] = NodeClass::Control;
    }
    for i in 0..names.len() {
        if class[i] == NodeClass::Isolated
            && graph.nodes[names[i]] == NodeRole::Function
            && !succ[i].is_empty()
            && succ[i].iter().all(|&j| feeders.binary_search(&j).is_ok())
        {
            class[i] = NodeClass::Control;
        }
    }
    names.into_iter().map(str::to_string).zip(class).collect()
}

pub fn classify_nodes(grfn: &Grfn, shared: &BTreeSet<String>) -> BTreeMap<String, NodeClass> {
    classify_graph(&NodeGraph::from_grfn(grfn), shared)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharedPair {
    /// Variable ids on each side.
    pub a: String,
    pub b: String,
    pub name_a: String,
    pub name_b: String,
    pub score: f64,
}

/// Final-version variables of two networks matched one-to-one, best score
/// first, by name similarity and grounding descriptions.
pub fn shared_variables(a: &Grfn, b: &Grfn) -> Vec<SharedPair> {
    shared_variables_with(a, b, DEFAULT_THRESHOLD)
}

pub fn shared_variables_with(a: &Grfn, b: &Grfn, threshold: f64) -> Vec<SharedPair> {
    let (da, db) = (grfn_descriptions(a), grfn_descriptions(b));
    let desc = |d: &BTreeMap<VarRef, String>, scope: &str, name: &str| {
        d.get(&VarRef {
            scope: scope.to_string(),
            name: name.to_string(),
        })
        .cloned()
    };
    let (va, vb) = (a.final_versions(), b.final_versions());
    let mut candidates = Vec::new();
    for x in &va {
        let dx = desc(&da, &x.scope, &x.name);
        for y in &vb {
            let dy = desc(&db, &y.scope, &y.name);
            let score = alignment_score(&x.name, dx.as_deref(), &y.name, dy.as_deref());
            if score >= threshold {
                candidates.push((score, name_similarity(&x.name, &y.name), *x, *y));
            }
        }
    }
    // equal scores prefer the closer spelling
    candidates.sort_by(|p, q| {
        q.0.total_cmp(&p.0)
            .then_with(|| q.1.total_cmp(&p.1))
            .then_with(|| p.2.name.cmp(&q.2.name))
            .then_with(|| p.3.name.cmp(&q.3.name))
    });
    let (mut used_a, mut used_b) = (BTreeSet::new(), BTreeSet::new());
    let mut out = Vec::new();
    for (score, _, x, y) in candidates {
        if used_a.contains(&x.id) || used_b.contains(&y.id) {
            continue;
        }
        used_a.insert(x.id.clone());
        used_b.insert(y.id.clone());
        out.push(SharedPair {
            a: x.id.clone(),
            b: y.id.clone(),
            name_a: x.name.clone(),
            name_b: y.name.clone(),
            score,
        });
    }
    out.sort_by(|p, q| p.name_a.cmp(&q.name_a));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassCounts {
    pub shared: usize,
    pub path: usize,
    pub control: usize,
    pub isolated: usize,
}

impl ClassCounts {
    pub fn of(classes: &BTreeMap<String, NodeClass>) -> Self {
        let mut c = ClassCounts::default();
        for class in classes.values() {
            match class {
                NodeClass::Shared => c.shared += 1,
                NodeClass::Path => c.path += 1,
                NodeClass::Control => c.control += 1,
                NodeClass::Isolated => c.isolated += 1,
            }
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideReport {
    pub scope: String,
    pub classes: BTreeMap<String, NodeClass>,
    pub counts: ClassCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub shared: Vec<SharedPair>,
    pub a: SideReport,
    pub b: SideReport,
}

pub fn structural_compare(a: &Grfn, b: &Grfn, threshold: f64) -> ComparisonReport {
    let shared = shared_variables_with(a, b, threshold);
    let side = |g: &Grfn, ids: BTreeSet<String>| {
        let classes = classify_nodes(g, &ids);
        SideReport {
            scope: g.scope.clone(),
            counts: ClassCounts::of(&classes),
            classes,
        }
    };
    ComparisonReport {
        a: side(a, shared.iter().map(|p| p.a.clone()).collect()),
        b: side(b, shared.iter().map(|p| p.b.clone()).collect()),
        shared,
    }
}

fn esc(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Both networks side by side, nodes colored by class.
pub fn comparison_dot(a: &Grfn, b: &Grfn, report: &ComparisonReport) -> String {
    let mut s = String::from("digraph comparison {\n  rankdir=LR;\n");
    for (tag, g, side) in [("a", a, &report.a), ("b", b, &report.b)] {
        let _ = writeln!(
            s,
            "  subgraph cluster_{tag} {{\n    label=\"{}\";",
            esc(&g.scope)
        );
        for v in &g.variables {
            let c = side
                .classes
                .get(&v.id)
                .copied()
                .unwrap_or(NodeClass::Isolated);
            let _ = writeln!(
                s,
                "    \"{tag}:{}\" [shape=ellipse, color={}, label=\"{}_{}\"];",
                esc(&v.id),
                c.color(),
                esc(&v.name),
                v.version
            );
        }
        for f in &g.functions {
            let c = side
                .classes
                .get(&f.id)
                .copied()
                .unwrap_or(NodeClass::Isolated);
            let _ = writeln!(
                s,
                "    \"{tag}:{}\" [shape=box, color={}, label=\"{}\"];",
                esc(&f.id),
                c.color(),
                f.kind.as_str()
            );
        }
        for (x, y) in &g.edges {
            let _ = writeln!(s, "    \"{tag}:{}\" -> \"{tag}:{}\";", esc(x), esc(y));
        }
        s.push_str("  }\n");
    }
    for p in &report.shared {
        let _ = writeln!(
            s,
            "  \"a:{}\" -> \"b:{}\" [style=dashed, dir=none, color=blue];",
            esc(&p.a),
            esc(&p.b)
        );
    }
    s.push_str("}\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(vars: &[&str], fns: &[&str], edges: &[(&str, &str)]) -> NodeGraph {
        let mut g = NodeGraph::default();
        for v in vars {
            g.nodes.insert(v.to_string(), NodeRole::Variable);
        }
        for f in fns {
            g.nodes.insert(f.to_string(), NodeRole::Function);
        }
        g.edges = edges
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect();
        g
    }

    fn set(xs: &[&str]) -> BTreeSet<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn chain_with_side_input() {
        let g = graph(
            &["x", "y", "z", "w", "u", "v"],
            &["f1", "f2", "f3"],
            &[
                ("x", "f1"),
                ("f1", "y"),
                ("y", "f2"),
                ("w", "f2"),
                ("f2", "z"),
                ("u", "f3"),
                ("f3", "v"),
            ],
        );
        let c = classify_graph(&g, &set(&["x", "z"]));
        let of = |k| {
            c.iter()
                .filter(|(_, v)| **v == k)
                .map(|(n, _)| n.as_str())
                .collect::<Vec<_>>()
        };
        assert_eq!(of(NodeClass::Shared), ["x", "z"]);
        assert_eq!(of(NodeClass::Path), ["f1", "f2", "y"]);
        assert_eq!(of(NodeClass::Control), ["w"]);
        assert_eq!(of(NodeClass::Isolated), ["f3", "u", "v"]);
    }

    #[test]
    fn producer_of_control_variable() {
        // p -> g -> w -> f2 on the path: g's only output is CONTROL
        let g = graph(
            &["x", "z", "w", "p"],
            &["f2", "g"],
            &[
                ("x", "f2"),
                ("w", "f2"),
                ("f2", "z"),
                ("p", "g"),
                ("g", "w"),
            ],
        );
        let c = classify_graph(&g, &set(&["x", "z"]));
        assert_eq!(c["w"], NodeClass::Control);
        assert_eq!(c["g"], NodeClass::Control);
        assert_eq!(c["p"], NodeClass::Isolated);
    }

    #[test]
    fn empty_shared_set_isolates_everything() {
        let g = graph(&["x", "y"], &["f"], &[("x", "f"), ("f", "y")]);
        assert!(classify_graph(&g, &BTreeSet::new())
            .values()
            .all(|c| *c == NodeClass::Isolated));
    }
}
