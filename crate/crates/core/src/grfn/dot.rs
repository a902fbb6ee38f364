use std::fmt::Write;

use super::Grfn;

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Graphviz rendering: variables as ellipses, functions as boxes.
pub fn to_dot(grfn: &Grfn) -> String {
    let mut out = String::from("digraph grfn {\n  rankdir=LR;\n");
    for v in &grfn.variables {
        let _ = writeln!(
            out,
            "  \"{}\" [shape=ellipse, label=\"{}_{}\"];",
            escape(&v.id),
            escape(&v.name),
            v.version
        );
    }
    for f in &grfn.functions {
        let label = match &f.latex {
            Some(l) => format!("{}\\n{}", f.kind.as_str(), escape(l)),
            None => f.kind.as_str().to_string(),
        };
        let _ = writeln!(
            out,
            "  \"{}\" [shape=box, label=\"{}\"];",
            escape(&f.id),
            label
        );
    }
    for (a, b) in &grfn.edges {
        let _ = writeln!(out, "  \"{}\" -> \"{}\";", escape(a), escape(b));
    }
    out.push_str("}\n");
    out
}
