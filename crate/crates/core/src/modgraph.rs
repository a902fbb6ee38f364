//! Module dependency graph and wavefront schedule.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ir::{
    is_intrinsic, walk_statements, Container, Expression, PairProgram, StatementKind, UnitKind,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum NodeKind {
    Program,
    Subroutine,
    Function,
    Module,
    External,
}

impl From<UnitKind> for NodeKind {
    fn from(k: UnitKind) -> Self {
        match k {
            UnitKind::Program => NodeKind::Program,
            UnitKind::Subroutine => NodeKind::Subroutine,
            UnitKind::Function => NodeKind::Function,
            UnitKind::Module => NodeKind::Module,
        }
    }
}

/// Edges point from a dependent unit to its dependency.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleDepGraph {
    pub nodes: BTreeMap<String, NodeKind>,
    pub edges: BTreeSet<(String, String)>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    /// Wavefronts, dependencies first; names sorted within a level.
    pub levels: Vec<Vec<String>>,
    pub depth: usize,
}

impl Schedule {
    pub fn level_of(&self, name: &str) -> Option<usize> {
        self.levels.iter().position(|l| l.iter().any(|n| n == name))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("dependency cycle: {}", display_cycle(.cycle))]
pub struct CycleError {
    /// The cycle's nodes starting at the smallest name, without repeating it.
    pub cycle: Vec<String>,
}

fn display_cycle(cycle: &[String]) -> String {
    let mut parts: Vec<&str> = cycle.iter().map(String::as_str).collect();
    if let Some(first) = cycle.first() {
        parts.push(first);
    }
    parts.join(" -> ")
}

impl ModuleDepGraph {
    /// Build a graph from explicit nodes and edges, rejecting cycles.
    /// Edge endpoints missing from `nodes` are added as EXTERNAL.
    pub fn from_edges(
        nodes: impl IntoIterator<Item = (String, NodeKind)>,
        edges: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self, CycleError> {
        let mut g = ModuleDepGraph {
            nodes: nodes.into_iter().collect(),
            ..Default::default()
        };
        for (a, b) in edges {
            for n in [&a, &b] {
                g.nodes.entry(n.clone()).or_insert(NodeKind::External);
            }
            g.edges.insert((a, b));
        }
        g.check_acyclic()?;
        Ok(g)
    }

    pub fn dependencies<'a>(&'a self, node: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.edges
            .range((node.to_string(), String::new())..)
            .take_while(move |(a, _)| a == node)
            .map(|(_, b)| b.as_str())
    }

    fn check_acyclic(&self) -> Result<(), CycleError> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            New,
            Active,
            Done,
        }
        let mut mark: BTreeMap<&str, Mark> =
            self.nodes.keys().map(|n| (n.as_str(), Mark::New)).collect();
        for root in self.nodes.keys() {
            if mark[root.as_str()] != Mark::New {
                continue;
            }
            // iterative DFS: stack of (node, remaining deps)
            let mut stack: Vec<(&str, Vec<&str>)> = vec![(root, self.dependencies(root).collect())];
            mark.insert(root, Mark::Active);
            while let Some((node, deps)) = stack.last_mut() {
                let node = *node;
                match deps.pop() {
                    None => {
                        mark.insert(node, Mark::Done);
                        stack.pop();
                    }
                    Some(d) => match mark[d] {
                        Mark::Done => {}
                        Mark::New => {
                            mark.insert(d, Mark::Active);
                            stack.push((d, self.dependencies(d).collect()));
                        }
                        Mark::Active => {
                            let start = stack.iter().position(|(n, _)| *n == d).unwrap();
                            let mut cycle: Vec<String> =
                                stack[start..].iter().map(|(n, _)| n.to_string()).collect();
                            let min = (0..cycle.len()).min_by_key(|&i| &cycle[i]).unwrap();
                            cycle.rotate_left(min);
                            return Err(CycleError { cycle });
                        }
                    },
                }
            }
        }
        Ok(())
    }
}

fn owner(program: &PairProgram, name: &str) -> Option<(String, UnitKind)> {
    let c = program.containers.iter().find(|c| c.name == name)?;
    Some(match &c.host {
        Some(h) => (h.clone(), UnitKind::Module),
        None => (c.name.clone(), c.kind),
    })
}

fn referenced_units(c: &Container) -> Vec<(String, bool)> {
    let mut out = Vec::new();
    let expr = |e: &Expression, out: &mut Vec<(String, bool)>| {
        e.walk(&mut |sub| {
            if let Expression::Call { name, .. } = sub {
                if !is_intrinsic(name) {
                    out.push((name.clone(), false));
                }
            }
        })
    };
    for d in &c.locals {
        if let Some(i) = &d.init {
            expr(i, &mut out);
        }
    }
    walk_statements(&c.body, &mut |s| match &s.kind {
        StatementKind::Assign { indices, rhs, .. } => {
            indices.iter().for_each(|i| expr(i, &mut out));
            expr(rhs, &mut out);
        }
        StatementKind::If { cond, .. } => expr(cond, &mut out),
        StatementKind::Do { lo, hi, stride, .. } => {
            expr(lo, &mut out);
            expr(hi, &mut out);
            if let Some(s) = stride {
                expr(s, &mut out);
            }
        }
        StatementKind::Call { callee, args } => {
            out.push((callee.clone(), true));
            args.iter().for_each(|a| expr(a, &mut out));
        }
        StatementKind::Return | StatementKind::OpaqueIo { .. } => {}
    });
    out
}

/// Nodes are top-level units; module procedures count as their module.
/// Edges come from `USE` and from calls resolved across units.
pub fn build_dependency_graph(program: &PairProgram) -> Result<ModuleDepGraph, CycleError> {
    let mut nodes = BTreeMap::new();
    let mut edges = BTreeSet::new();
    let mut warnings = Vec::new();
    for c in program.containers.iter().filter(|c| c.host.is_none()) {
        nodes.insert(c.name.clone(), NodeKind::from(c.kind));
    }
    for c in &program.containers {
        let from = owner(program, &c.name).unwrap().0;
        for m in &c.uses {
            match program
                .containers
                .iter()
                .find(|u| u.name == *m && u.kind == UnitKind::Module)
            {
                Some(_) => {}
                None => {
                    if !nodes.contains_key(m) {
                        warnings.push(format!(
                            "module {m} used by {} is not part of the program",
                            c.name
                        ));
                        nodes.insert(m.clone(), NodeKind::External);
                    }
                }
            }
            if *m != from {
                edges.insert((from.clone(), m.clone()));
            }
        }
        for (name, is_call) in referenced_units(c) {
            let to = match owner(program, &name) {
                Some((o, _)) => o,
                None => {
                    if !nodes.contains_key(&name) {
                        let what = if is_call { "subroutine" } else { "function" };
                        warnings.push(format!("external {what} {name} called from {}", c.name));
                        nodes.insert(name.clone(), NodeKind::External);
                    }
                    name
                }
            };
            if to != from {
                edges.insert((from.clone(), to));
            }
        }
    }
    let mut g = ModuleDepGraph::from_edges(nodes, edges)?;
    g.warnings = warnings;
    Ok(g)
}

/// Level k holds the nodes whose longest path to a sink has k edges.
pub fn schedule(graph: &ModuleDepGraph) -> Schedule {
    let mut height: BTreeMap<&str, usize> = BTreeMap::new();
    fn visit<'a>(
        g: &'a ModuleDepGraph,
        n: &'a str,
        height: &mut BTreeMap<&'a str, usize>,
    ) -> usize {
        if let Some(&h) = height.get(n) {
            return h;
        }
        let deps: Vec<&str> = g.dependencies(n).collect();
        let h = deps
            .into_iter()
            .map(|d| visit(g, d, height) + 1)
            .max()
            .unwrap_or(0);
        height.insert(n, h);
        h
    }
    for n in graph.nodes.keys() {
        visit(graph, n, &mut height);
    }
    let depth = height.values().map(|h| h + 1).max().unwrap_or(0);
    let mut levels = vec![Vec::new(); depth];
    for (n, h) in height {
        levels[h].push(n.to_string());
    }
    Schedule { levels, depth }
}

/// Run `f` on every unit, one wavefront at a time; units within a level run
/// concurrently. Results keep the schedule's order.
pub fn run_schedule<R, F>(schedule: &Schedule, f: F) -> Vec<Vec<R>>
where
    R: Send,
    F: Fn(&str) -> R + Sync,
{
    schedule
        .levels
        .iter()
        .map(|level| level.par_iter().map(|n| f(n)).collect())
        .collect()
}

pub fn to_dot(graph: &ModuleDepGraph) -> String {
    let mut out = String::from("digraph modules {\n");
    for (n, kind) in &graph.nodes {
        if *kind == NodeKind::External {
            let _ = writeln!(out, "  \"{n}\" [style=dashed];");
        } else {
            let _ = writeln!(out, "  \"{n}\";");
        }
    }
    for (a, b) in &graph.edges {
        let _ = writeln!(out, "  \"{a}\" -> \"{b}\";");
    }
    out.push_str("}\n");
    out
}
