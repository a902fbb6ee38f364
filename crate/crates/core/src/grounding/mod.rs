//! Grounding: variable descriptions from comments and text, symbol
//! alignment, and matching equations against code.

mod canon;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub use crate::grfn::{GroundingRecord, GroundingSource, VarRef};
pub use canon::{canonicalize, compare, Canon, Comparison, Verdict};

use crate::equation::{EquationIR, SymbolHints};
use crate::fortran::CommentBlock;
use crate::grfn::{FunctionKind, FunctionNode, Grfn};
use crate::ir::PairProgram;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// A variable mention read from a document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextMention {
    pub symbol: String,
    pub description: String,
    pub units: Option<String>,
    pub origin: String,
}

const SUPERSCRIPTS: &[(char, char)] = &[
    ('⁰', '0'),
    ('¹', '1'),
    ('²', '2'),
    ('³', '3'),
    ('⁴', '4'),
    ('⁵', '5'),
    ('⁶', '6'),
    ('⁷', '7'),
    ('⁸', '8'),
    ('⁹', '9'),
    ('⁻', '-'),
    ('⁺', '+'),
];

/// Unicode superscripts to ASCII: `m⁻²` becomes `m-2`.
pub fn normalize_units(units: &str) -> String {
    units
        .chars()
        .map(|c| {
            SUPERSCRIPTS
                .iter()
                .find(|(s, _)| *s == c)
                .map_or(c, |(_, a)| *a)
        })
        .collect::<String>()
        .trim()
        .to_string()
}

fn is_unit_char(c: char) -> bool {
    c.is_ascii_alphanumeric()
        || matches!(c, '/' | '-' | '^' | '.')
        || SUPERSCRIPTS.iter().any(|(s, _)| *s == c)
}

/// A trailing bare token reads as units only if it has something besides
/// letters, so plain words like `number` stay in the description.
fn looks_like_units(tok: &str) -> bool {
    !tok.is_empty()
        && tok.chars().next().is_some_and(|c| c.is_alphabetic())
        && tok.chars().all(is_unit_char)
        && !tok.ends_with('.')
        && tok.chars().any(|c| !c.is_ascii_alphabetic())
}

fn split_units(rest: &str) -> (String, Option<String>) {
    let rest = rest.trim();
    if rest.ends_with(')') {
        if let Some(open) = rest.rfind('(') {
            let units = &rest[open + 1..rest.len() - 1];
            let desc = rest[..open].trim();
            if !desc.is_empty() && !units.trim().is_empty() {
                return (desc.to_string(), Some(normalize_units(units)));
            }
        }
    }
    if let Some((desc, last)) = rest.rsplit_once(char::is_whitespace) {
        if looks_like_units(last) && !desc.trim().is_empty() {
            return (desc.trim().to_string(), Some(normalize_units(last)));
        }
    }
    (rest.to_string(), None)
}

/// `NAME = description [(units) | units]` on one comment line.
pub fn parse_comment_line(line: &str) -> Option<(String, String, Option<String>)> {
    let line = line.trim().trim_start_matches(['*', '!', 'C', 'c']).trim();
    let (name, rest) = line.split_once('=')?;
    let name = name.trim();
    let mut chars = name.chars();
    if !chars.next().is_some_and(|c| c.is_ascii_alphabetic())
        || !chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
    {
        return None;
    }
    if rest.starts_with('=') {
        return None;
    }
    let (desc, units) = split_units(rest);
    if desc.is_empty() {
        return None;
    }
    Some((name.to_ascii_uppercase(), desc, units))
}

pub fn parse_comment_descriptions(block: &CommentBlock, scope: &str) -> Vec<GroundingRecord> {
    block
        .lines
        .iter()
        .filter_map(|l| parse_comment_line(l))
        .map(|(name, description, units)| GroundingRecord {
            variable: VarRef {
                scope: scope.to_string(),
                name,
            },
            description,
            units,
            source: GroundingSource::Comment,
            score: 1.0,
        })
        .collect()
}

/// Comment records for every unit of a program, scoped by unit name.
pub fn comment_records(program: &PairProgram) -> Vec<GroundingRecord> {
    program
        .containers
        .iter()
        .flat_map(|c| {
            c.comments
                .iter()
                .flat_map(|b| parse_comment_descriptions(b, &c.name))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct MentionError {
    pub line: usize,
    pub message: String,
}

/// Mentions TSV: symbol, description, units, origin; `#` starts a comment line.
pub fn parse_mentions_tsv(text: &str) -> Result<Vec<TextMention>, MentionError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            return Err(MentionError {
                line: i + 1,
                message: format!("expected 4 tab-separated columns, found {}", cols.len()),
            });
        }
        let symbol = cols[0].trim();
        if symbol.is_empty() {
            return Err(MentionError {
                line: i + 1,
                message: "empty symbol".into(),
            });
        }
        let units = cols[2].trim();
        out.push(TextMention {
            symbol: symbol.to_string(),
            description: cols[1].trim().to_string(),
            units: (!units.is_empty()).then(|| normalize_units(units)),
            origin: cols[3].trim().to_string(),
        });
    }
    Ok(out)
}

/// Uppercase with subscript markup removed: `e_{s}` and `ES` agree.
pub fn normalize_symbol(s: &str) -> String {
    s.chars()
        .filter(|c| !matches!(c, '_' | '{' | '}' | '\\' | ' '))
        .flat_map(char::to_uppercase)
        .collect()
}

pub fn name_similarity(a: &str, b: &str) -> f64 {
    let (a, b) = (normalize_symbol(a), normalize_symbol(b));
    if a == b {
        1.0
    } else {
        strsim::normalized_levenshtein(&a, &b)
    }
}

fn tokens(s: &str) -> BTreeSet<String> {
    s.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn token_jaccard(a: &str, b: &str) -> f64 {
    let (a, b) = (tokens(a), tokens(b));
    let union = a.union(&b).count();
    if union == 0 {
        0.0
    } else {
        a.intersection(&b).count() as f64 / union as f64
    }
}

/// Score of a symbol against a variable: 1 for a normalized exact name
/// match, else the better of name similarity and description overlap.
pub fn alignment_score(
    symbol: &str,
    symbol_desc: Option<&str>,
    var: &str,
    var_desc: Option<&str>,
) -> f64 {
    let name = name_similarity(symbol, var);
    if name == 1.0 {
        return 1.0;
    }
    let desc = match (symbol_desc, var_desc) {
        (Some(a), Some(b)) => token_jaccard(a, b),
        _ => 0.0,
    };
    name.max(desc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    pub symbol: String,
    pub variable: VarRef,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub matches: Vec<Alignment>,
    pub unmatched: Vec<String>,
}

/// Best variable per symbol at or above `threshold`. Ties go to the
/// lexicographically smallest variable name.
pub fn align_symbols(
    symbols: &BTreeSet<String>,
    variables: &BTreeSet<VarRef>,
    symbol_descriptions: &BTreeMap<String, String>,
    variable_descriptions: &BTreeMap<VarRef, String>,
    threshold: f64,
) -> AlignmentReport {
    let mut report = AlignmentReport::default();
    for s in symbols {
        let sd = symbol_descriptions.get(s).map(String::as_str);
        let mut best: Option<(f64, &VarRef)> = None;
        for v in variables {
            let score = alignment_score(
                s,
                sd,
                &v.name,
                variable_descriptions.get(v).map(String::as_str),
            );
            let better = match best {
                None => true,
                Some((b, bv)) => {
                    score > b || (score == b && (&v.name, &v.scope) < (&bv.name, &bv.scope))
                }
            };
            if better {
                best = Some((score, v));
            }
        }
        match best {
            Some((score, v)) if score >= threshold => report.matches.push(Alignment {
                symbol: s.clone(),
                variable: v.clone(),
                score,
            }),
            _ => report.unmatched.push(s.clone()),
        }
    }
    report
}

/// Named variables of a network, without temporaries.
pub fn grfn_variables(grfn: &Grfn) -> BTreeSet<VarRef> {
    fn walk(g: &Grfn, out: &mut BTreeSet<VarRef>) {
        for v in &g.variables {
            if !v.name.contains(['@', '#']) {
                out.insert(VarRef {
                    scope: v.scope.clone(),
                    name: v.name.clone(),
                });
            }
        }
        for l in &g.loops {
            walk(&l.body, out);
        }
    }
    let mut out = BTreeSet::new();
    walk(grfn, &mut out);
    out
}

/// Descriptions already attached to a network, first record wins.
pub fn grfn_descriptions(grfn: &Grfn) -> BTreeMap<VarRef, String> {
    let mut out = BTreeMap::new();
    for r in &grfn.groundings {
        out.entry(r.variable.clone())
            .or_insert_with(|| r.description.clone());
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Unresolved {
    pub symbol: String,
    pub source: GroundingSource,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GroundReport {
    pub attached: usize,
    pub unresolved: Vec<Unresolved>,
}

/// Find the network variable a record names: the same scope, then an
/// inlined instance of that scope, then a unique variable of that name.
fn resolve(variables: &BTreeSet<VarRef>, r: &VarRef) -> Option<VarRef> {
    let name = |v: &&VarRef| v.name.eq_ignore_ascii_case(&r.name);
    if let Some(v) = variables
        .iter()
        .filter(name)
        .find(|v| v.scope.eq_ignore_ascii_case(&r.scope))
    {
        return Some(v.clone());
    }
    let instance = format!(".{}@", r.scope.to_ascii_uppercase());
    if let Some(v) = variables
        .iter()
        .filter(name)
        .find(|v| v.scope.to_ascii_uppercase().contains(&instance))
    {
        return Some(v.clone());
    }
    let mut same: Vec<&VarRef> = variables.iter().filter(name).collect();
    same.dedup_by(|a, b| a.name == b.name && a.scope.starts_with(&b.scope));
    if same.len() == 1 {
        return Some(same[0].clone());
    }
    None
}

/// Attach records and aligned text mentions to a copy of `grfn`.
pub fn ground(
    grfn: &Grfn,
    records: &[GroundingRecord],
    mentions: &[TextMention],
    threshold: f64,
) -> (Grfn, GroundReport) {
    let mut out = grfn.clone();
    let mut report = GroundReport::default();
    let variables = grfn_variables(grfn);
    let push = |out: &mut Grfn, report: &mut GroundReport, r: GroundingRecord| {
        if !out.groundings.contains(&r) {
            out.groundings.push(r);
            report.attached += 1;
        }
    };
    for r in records {
        if r.description.trim().is_empty() {
            report.unresolved.push(Unresolved {
                symbol: r.variable.name.clone(),
                source: r.source,
                reason: "empty description".into(),
            });
            continue;
        }
        match resolve(&variables, &r.variable) {
            Some(v) => {
                let mut r = r.clone();
                r.variable = v;
                r.score = r.score.clamp(0.0, 1.0);
                push(&mut out, &mut report, r);
            }
            None => report.unresolved.push(Unresolved {
                symbol: r.variable.name.clone(),
                source: r.source,
                reason: format!(
                    "no variable {} in scope {}",
                    r.variable.name, r.variable.scope
                ),
            }),
        }
    }
    if !mentions.is_empty() {
        let var_desc = grfn_descriptions(&out);
        for m in mentions {
            let symbols = BTreeSet::from([m.symbol.clone()]);
            let descs = BTreeMap::from([(m.symbol.clone(), m.description.clone())]);
            let a = align_symbols(&symbols, &variables, &descs, &var_desc, threshold);
            match a.matches.into_iter().next() {
                Some(al) if !m.description.trim().is_empty() => push(
                    &mut out,
                    &mut report,
                    GroundingRecord {
                        variable: al.variable,
                        description: m.description.clone(),
                        units: m.units.clone(),
                        source: GroundingSource::Text,
                        score: al.score,
                    },
                ),
                Some(_) => report.unresolved.push(Unresolved {
                    symbol: m.symbol.clone(),
                    source: GroundingSource::Text,
                    reason: "empty description".into(),
                }),
                None => report.unresolved.push(Unresolved {
                    symbol: m.symbol.clone(),
                    source: GroundingSource::Text,
                    reason: format!("no variable scores {threshold} or more"),
                }),
            }
        }
    }
    (out, report)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MatchError {
    #[error("the network has no ASSIGN nodes")]
    NoAssignNodes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquationMatchReport {
    pub equation: String,
    pub lhs: Option<String>,
    /// Id of the closest ASSIGN node and the variable it produces.
    pub node: String,
    pub output: String,
    pub verdict: Verdict,
    /// Top-level factors (or terms) as LaTeX.
    pub shared: Vec<String>,
    pub code_only: Vec<String>,
    pub equation_only: Vec<String>,
    pub alignment: Vec<Alignment>,
    pub unmatched_symbols: Vec<String>,
}

fn assign_nodes(g: &Grfn) -> Vec<(&FunctionNode, &Grfn)> {
    let mut out: Vec<(&FunctionNode, &Grfn)> = g
        .functions_of_kind(FunctionKind::Assign)
        .filter(|f| f.expression.is_some())
        .map(|f| (f, g))
        .collect();
    for l in &g.loops {
        out.extend(assign_nodes(&l.body));
    }
    out
}

/// Lower is better: right target, verdict, more shared parts, fewer differences.
type Rank = (bool, Verdict, std::cmp::Reverse<usize>, usize);

/// Find the ASSIGN node closest to `eq` after canonicalizing both sides and
/// mapping equation symbols onto code variables.
pub fn match_equation(
    eq: &EquationIR,
    grfn: &Grfn,
    hints: &SymbolHints,
    threshold: f64,
) -> Result<EquationMatchReport, MatchError> {
    let nodes = assign_nodes(grfn);
    if nodes.is_empty() {
        return Err(MatchError::NoAssignNodes);
    }
    let mut symbols: BTreeSet<String> = eq.rhs.free_vars().into_iter().collect();
    symbols.extend(eq.lhs.clone());
    let variables = grfn_variables(grfn);
    let descs = grfn_descriptions(grfn);
    let mut alignment = align_symbols(&symbols, &variables, &BTreeMap::new(), &descs, threshold);
    // hinted spellings take part even below the threshold
    for s in alignment.unmatched.clone() {
        if let Some(h) = hints
            .known_identifiers
            .iter()
            .find(|h| normalize_symbol(h) == normalize_symbol(&s))
        {
            if let Some(v) = variables.iter().find(|v| v.name.eq_ignore_ascii_case(h)) {
                alignment.matches.push(Alignment {
                    symbol: s.clone(),
                    variable: v.clone(),
                    score: 1.0,
                });
                alignment.unmatched.retain(|u| *u != s);
            }
        }
    }
    let rename: BTreeMap<String, String> = alignment
        .matches
        .iter()
        .map(|a| (a.symbol.clone(), a.variable.name.clone()))
        .collect();
    let eq_canon = canonicalize(&eq.rhs, &rename);
    let lhs_target = eq.lhs.as_ref().and_then(|l| rename.get(l));

    let mut best: Option<(Rank, EquationMatchReport)> = None;
    for (f, g) in nodes {
        let out_var = g.variable(&f.output).expect("node output exists");
        let code = canonicalize(f.expression.as_ref().unwrap(), &BTreeMap::new());
        let cmp = compare(&code, &eq_canon);
        let lhs_miss = lhs_target.is_some_and(|t| *t != out_var.name);
        let rank = (
            lhs_miss,
            cmp.verdict,
            std::cmp::Reverse(cmp.shared.len()),
            cmp.code_only.len() + cmp.equation_only.len(),
        );
        if best.as_ref().is_some_and(|(r, _)| *r <= rank) {
            continue;
        }
        let latex = |xs: &[Canon]| xs.iter().map(Canon::latex).collect::<Vec<_>>();
        best = Some((
            rank,
            EquationMatchReport {
                equation: eq.source.clone(),
                lhs: eq.lhs.clone(),
                node: f.id.clone(),
                output: f.output.clone(),
                verdict: cmp.verdict,
                shared: latex(&cmp.shared),
                code_only: latex(&cmp.code_only),
                equation_only: latex(&cmp.equation_only),
                alignment: alignment.matches.clone(),
                unmatched_symbols: alignment.unmatched.clone(),
            },
        ));
    }
    Ok(best.expect("at least one node").1)
}
