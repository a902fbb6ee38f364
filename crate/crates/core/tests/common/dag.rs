//! Random DAGs and brute-force oracles for classification and scheduling.

use std::collections::{BTreeMap, BTreeSet};

use grfn::analysis::{NodeClass, NodeGraph, NodeRole};
use rand::Rng;

/// Random DAG on `n` nodes: edges only run from lower to higher index.
pub fn random_edges(rng: &mut impl Rng, n: usize, p: f64) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(p) {
                edges.push((i, j));
            }
        }
    }
    edges
}

pub fn name(i: usize) -> String {
    format!("n{i:02}")
}

/// Random node graph with random roles and a random shared subset of the
/// variable nodes.
pub fn random_node_graph(rng: &mut impl Rng, max_nodes: usize) -> (NodeGraph, BTreeSet<String>) {
    let n = rng.gen_range(1..=max_nodes);
    let p = rng.gen_range(0.1..0.5);
    let mut g = NodeGraph::default();
    for i in 0..n {
        let role = if rng.gen_bool(0.5) {
            NodeRole::Variable
        } else {
            NodeRole::Function
        };
        g.nodes.insert(name(i), role);
    }
    g.edges = random_edges(rng, n, p)
        .into_iter()
        .map(|(a, b)| (name(a), name(b)))
        .collect();
    let shared = (0..n).filter(|_| rng.gen_bool(0.3)).map(name).collect();
    (g, shared)
}

/// Every simple directed path from `from`, reported as node lists.
fn simple_paths(
    succ: &BTreeMap<&str, Vec<&str>>,
    from: &str,
    path: &mut Vec<String>,
    out: &mut Vec<Vec<String>>,
) {
    path.push(from.to_string());
    out.push(path.clone());
    for next in succ.get(from).into_iter().flatten() {
        if !path.iter().any(|p| p == next) {
            simple_paths(succ, next, path, out);
        }
    }
    path.pop();
}

/// Classification by enumerating all simple paths between shared nodes.
pub fn brute_force_classes(
    g: &NodeGraph,
    shared: &BTreeSet<String>,
) -> BTreeMap<String, NodeClass> {
    let mut succ: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (a, b) in &g.edges {
        succ.entry(a.as_str()).or_default().push(b.as_str());
    }
    let mut on_path = BTreeSet::new();
    for s in shared {
        let mut paths = Vec::new();
        simple_paths(&succ, s, &mut Vec::new(), &mut paths);
        for p in paths {
            if p.len() > 1 && shared.contains(p.last().unwrap()) {
                on_path.extend(p[1..p.len() - 1].iter().cloned());
            }
        }
    }
    let mut class: BTreeMap<String, NodeClass> = g
        .nodes
        .keys()
        .map(|n| {
            let c = if shared.contains(n) {
                NodeClass::Shared
            } else if on_path.contains(n) {
                NodeClass::Path
            } else {
                NodeClass::Isolated
            };
            (n.clone(), c)
        })
        .collect();
    let covered = |c: &NodeClass| matches!(c, NodeClass::Shared | NodeClass::Path);
    let feeders: BTreeSet<String> = g
        .edges
        .iter()
        .filter(|(a, b)| class[a] == NodeClass::Isolated && covered(&class[b]))
        .map(|(a, _)| a.clone())
        .collect();
    for f in &feeders {
        class.insert(f.clone(), NodeClass::Control);
    }
    for (n, role) in &g.nodes {
        let outs: Vec<&String> = g
            .edges
            .iter()
            .filter(|(a, _)| a == n)
            .map(|(_, b)| b)
            .collect();
        if *role == NodeRole::Function
            && class[n] == NodeClass::Isolated
            && !outs.is_empty()
            && outs.iter().all(|o| feeders.contains(*o))
        {
            class.insert(n.clone(), NodeClass::Control);
        }
    }
    class
}

/// Node count of the longest path in a DAG given by index edges `a -> b`
/// meaning `a` depends on `b`.
pub fn longest_path_nodes(n: usize, edges: &[(usize, usize)]) -> usize {
    // depth[i] = 1 + max depth of its dependencies; indices are topological
    // in reverse (dependencies have larger indices)
    let mut depth = vec![1usize; n];
    for i in (0..n).rev() {
        for &(a, b) in edges {
            if a == i {
                depth[i] = depth[i].max(depth[b] + 1);
            }
        }
    }
    depth.into_iter().max().unwrap_or(0)
}
