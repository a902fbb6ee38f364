//! Canonical forms up to associativity and commutativity of `+` and `*`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ir::{render_latex, BinaryOp, Expression, UnaryOp};

/// Expression with `+` and `*` chains flattened and their operands sorted.
/// The derived ordering is the structural sort key.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Canon {
    Num(String),
    Logical(bool),
    Var(String, Vec<Canon>),
    Unary(UnaryOp, Box<Canon>),
    Binary(BinaryOp, Box<Canon>, Box<Canon>),
    /// Flattened `+` or `*` chain, operands sorted.
    Chain(BinaryOp, Vec<Canon>),
    Call(String, Vec<Canon>),
}

/// Spelling-independent number key: `1`, `1.0` and `1.00` agree.
fn number_key(text: &str) -> String {
    match text.parse::<f64>() {
        Ok(v) => format!("{v:?}"),
        Err(_) => text.to_string(),
    }
}

/// Canonicalize, renaming variables through `rename` (names missing from
/// the map are kept).
pub fn canonicalize(e: &Expression, rename: &BTreeMap<String, String>) -> Canon {
    match e {
        Expression::Num { value } => Canon::Num(number_key(value.as_str())),
        Expression::Logical { value } => Canon::Logical(*value),
        Expression::Var { name, indices } => Canon::Var(
            rename.get(name).cloned().unwrap_or_else(|| name.clone()),
            indices.iter().map(|i| canonicalize(i, rename)).collect(),
        ),
        Expression::Unary { op, child } => Canon::Unary(*op, Box::new(canonicalize(child, rename))),
        Expression::Binary { op, left, right } if matches!(op, BinaryOp::Add | BinaryOp::Mul) => {
            let mut ops = Vec::new();
            for side in [left, right] {
                match canonicalize(side, rename) {
                    Canon::Chain(o, xs) if o == *op => ops.extend(xs),
                    c => ops.push(c),
                }
            }
            ops.sort();
            Canon::Chain(*op, ops)
        }
        Expression::Binary { op, left, right } => Canon::Binary(
            *op,
            Box::new(canonicalize(left, rename)),
            Box::new(canonicalize(right, rename)),
        ),
        Expression::Call { name, args } => Canon::Call(
            name.to_ascii_uppercase(),
            args.iter().map(|a| canonicalize(a, rename)).collect(),
        ),
    }
}

impl Canon {
    /// Back to an expression; chains fold to the left.
    pub fn to_expression(&self) -> Expression {
        match self {
            Canon::Num(n) => Expression::num(n.clone()),
            Canon::Logical(b) => Expression::Logical { value: *b },
            Canon::Var(n, idx) => Expression::Var {
                name: n.clone(),
                indices: idx.iter().map(Canon::to_expression).collect(),
            },
            Canon::Unary(op, c) => Expression::unary(*op, c.to_expression()),
            Canon::Binary(op, l, r) => {
                Expression::binary(*op, l.to_expression(), r.to_expression())
            }
            Canon::Chain(op, xs) => {
                let mut it = xs.iter().map(Canon::to_expression);
                let first = it.next().expect("chains have two or more operands");
                it.fold(first, |l, r| Expression::binary(*op, l, r))
            }
            Canon::Call(n, args) => {
                Expression::call(n.clone(), args.iter().map(Canon::to_expression).collect())
            }
        }
    }

    pub fn latex(&self) -> String {
        render_latex(&self.to_expression())
    }

    /// Operands of a top-level chain of `op`, or the whole form.
    fn operands(&self, op: BinaryOp) -> Vec<Canon> {
        match self {
            Canon::Chain(o, xs) if *o == op => xs.clone(),
            c => vec![c.clone()],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Exact,
    /// The code has factors or terms the equation lacks.
    Subset,
    /// The equation has factors or terms the code lacks.
    Superset,
    Mismatch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub verdict: Verdict,
    pub shared: Vec<Canon>,
    pub code_only: Vec<Canon>,
    pub equation_only: Vec<Canon>,
}

/// Multiset difference of two sorted operand lists.
fn split(a: &[Canon], b: &[Canon]) -> (Vec<Canon>, Vec<Canon>, Vec<Canon>) {
    let (mut i, mut j) = (0, 0);
    let (mut shared, mut a_only, mut b_only) = (Vec::new(), Vec::new(), Vec::new());
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Equal => {
                shared.push(a[i].clone());
                i += 1;
                j += 1;
            }
            std::cmp::Ordering::Less => {
                a_only.push(a[i].clone());
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                b_only.push(b[j].clone());
                j += 1;
            }
        }
    }
    a_only.extend_from_slice(&a[i..]);
    b_only.extend_from_slice(&b[j..]);
    (shared, a_only, b_only)
}

/// Compare a code form with an equation form by their top-level factors,
/// or terms when either side is a sum.
pub fn compare(code: &Canon, equation: &Canon) -> Comparison {
    if code == equation {
        return Comparison {
            verdict: Verdict::Exact,
            shared: code.operands(BinaryOp::Mul),
            code_only: vec![],
            equation_only: vec![],
        };
    }
    let is_sum = |c: &Canon| matches!(c, Canon::Chain(BinaryOp::Add, _));
    let op = if is_sum(code) || is_sum(equation) {
        BinaryOp::Add
    } else {
        BinaryOp::Mul
    };
    let (shared, code_only, equation_only) = split(&code.operands(op), &equation.operands(op));
    let verdict = if shared.is_empty() {
        Verdict::Mismatch
    } else if equation_only.is_empty() {
        Verdict::Subset
    } else if code_only.is_empty() {
        Verdict::Superset
    } else {
        Verdict::Mismatch
    };
    Comparison {
        verdict,
        shared,
        code_only,
        equation_only,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(n: &str) -> Expression {
        Expression::var(n)
    }

    fn mul(a: Expression, b: Expression) -> Expression {
        Expression::binary(BinaryOp::Mul, a, b)
    }

    #[test]
    fn chains_flatten_and_sort() {
        let none = BTreeMap::new();
        let l = mul(mul(v("a"), v("b")), v("c"));
        let r = mul(v("c"), mul(v("b"), v("a")));
        assert_eq!(canonicalize(&l, &none), canonicalize(&r, &none));
        // subtraction is not reordered
        let s1 = Expression::binary(BinaryOp::Sub, v("a"), v("b"));
        let s2 = Expression::binary(BinaryOp::Sub, v("b"), v("a"));
        assert_ne!(canonicalize(&s1, &none), canonicalize(&s2, &none));
    }

    #[test]
    fn numbers_compare_by_value() {
        let none = BTreeMap::new();
        assert_eq!(
            canonicalize(&Expression::num("1"), &none),
            canonicalize(&Expression::num("1.0"), &none)
        );
    }

    #[test]
    fn extra_factor_is_subset() {
        let none = BTreeMap::new();
        let code = canonicalize(&mul(mul(v("a"), v("b")), v("dn")), &none);
        let eq = canonicalize(&mul(v("b"), v("a")), &none);
        let c = compare(&code, &eq);
        assert_eq!(c.verdict, Verdict::Subset);
        assert_eq!(c.code_only, vec![Canon::Var("dn".into(), vec![])]);
        assert_eq!(compare(&eq, &code).verdict, Verdict::Superset);
    }
}
