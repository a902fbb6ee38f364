//! Rendering expressions as LaTeX math.

use super::{prec, BinaryOp, Expression, UnaryOp};

pub(crate) const GREEK: &[&str] = &[
    "alpha",
    "beta",
    "gamma",
    "delta",
    "epsilon",
    "varepsilon",
    "zeta",
    "eta",
    "theta",
    "vartheta",
    "iota",
    "kappa",
    "lambda",
    "mu",
    "nu",
    "xi",
    "pi",
    "rho",
    "sigma",
    "tau",
    "upsilon",
    "phi",
    "varphi",
    "chi",
    "psi",
    "omega",
    "Gamma",
    "Delta",
    "Theta",
    "Lambda",
    "Xi",
    "Pi",
    "Sigma",
    "Upsilon",
    "Phi",
    "Psi",
    "Omega",
];

pub(crate) fn is_greek(name: &str) -> bool {
    GREEK.contains(&name)
}

/// Render an expression as a LaTeX math-mode string.
///
/// Division renders as `\frac`, powers as `^{..}`, products with `\cdot`
/// and `EXP(x)` as `e^{x}`. Parentheses appear only where precedence needs them.
pub fn render_latex(expr: &Expression) -> String {
    let mut out = String::new();
    render(expr, &mut out);
    out
}

/// Precedence as seen by LaTeX, where `\frac` is an atom.
fn latex_prec(e: &Expression) -> u8 {
    match e {
        Expression::Binary {
            op: BinaryOp::Div, ..
        } => prec::ATOM,
        _ => e.precedence(),
    }
}

fn is_neg(e: &Expression) -> bool {
    matches!(
        e,
        Expression::Unary {
            op: UnaryOp::Neg,
            ..
        }
    )
}

fn paren(e: &Expression, wrap: bool, out: &mut String) {
    if wrap {
        out.push('(');
        render(e, out);
        out.push(')');
    } else {
        render(e, out);
    }
}

pub(crate) fn render_name(name: &str, out: &mut String) {
    if is_greek(name) {
        out.push('\\');
        out.push_str(name);
    } else if let Some((base, sub)) = name.split_once('_') {
        if is_greek(base) {
            out.push('\\');
        }
        out.push_str(base);
        out.push_str("_{");
        out.push_str(sub);
        out.push('}');
    } else {
        out.push_str(name);
    }
}

fn render(e: &Expression, out: &mut String) {
    match e {
        Expression::Num { value } => out.push_str(value.as_str()),
        Expression::Logical { value } => out.push_str(if *value { "\\top" } else { "\\bot" }),
        Expression::Var { name, indices } => {
            if indices.is_empty() {
                render_name(name, out);
            } else {
                if name.contains('_') {
                    out.push_str("\\mathrm{");
                    out.push_str(name);
                    out.push('}');
                } else {
                    render_name(name, out);
                }
                out.push_str("_{");
                for (i, idx) in indices.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    render(idx, out);
                }
                out.push('}');
            }
        }
        Expression::Unary { op, child } => {
            let (sym, level) = match op {
                UnaryOp::Neg => ("-", prec::NEG),
                UnaryOp::Not => ("\\lnot ", prec::NOT),
            };
            out.push_str(sym);
            paren(child, latex_prec(child) < level || is_neg(child), out);
        }
        Expression::Binary { op, left, right } => render_binary(*op, left, right, out),
        Expression::Call { name, args } => render_call(name, args, out),
    }
}

fn render_binary(op: BinaryOp, left: &Expression, right: &Expression, out: &mut String) {
    match op {
        BinaryOp::Div => {
            out.push_str("\\frac{");
            render(left, out);
            out.push_str("}{");
            render(right, out);
            out.push('}');
        }
        BinaryOp::Pow => {
            let wrap = latex_prec(left) < prec::ATOM
                || matches!(
                    left,
                    Expression::Binary {
                        op: BinaryOp::Div,
                        ..
                    }
                )
                || matches!(left, Expression::Call { name, .. } if name == "EXP");
            paren(left, wrap, out);
            out.push_str("^{");
            render(right, out);
            out.push('}');
        }
        _ => {
            let level = op.precedence();
            let sym = match op {
                BinaryOp::Add => "+",
                BinaryOp::Sub => "-",
                BinaryOp::Mul => " \\cdot ",
                BinaryOp::Lt => " < ",
                BinaryOp::Le => " \\leq ",
                BinaryOp::Gt => " > ",
                BinaryOp::Ge => " \\geq ",
                BinaryOp::Eq => " = ",
                BinaryOp::Ne => " \\neq ",
                BinaryOp::And => " \\land ",
                BinaryOp::Or => " \\lor ",
                BinaryOp::Eqv => " \\Leftrightarrow ",
                BinaryOp::Neqv => " \\oplus ",
                BinaryOp::Div | BinaryOp::Pow => unreachable!(),
            };
            let left_wrap = if op.is_relational() {
                latex_prec(left) <= level
            } else {
                latex_prec(left) < level
            };
            paren(left, left_wrap, out);
            out.push_str(sym);
            paren(right, latex_prec(right) <= level || is_neg(right), out);
        }
    }
}

fn render_args(args: &[Expression], out: &mut String) {
    out.push('(');
    for (i, a) in args.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        render(a, out);
    }
    out.push(')');
}

fn render_call(name: &str, args: &[Expression], out: &mut String) {
    match (name, args) {
        ("EXP", [x]) => {
            out.push_str("e^{");
            render(x, out);
            out.push('}');
        }
        ("SQRT", [x]) => {
            out.push_str("\\sqrt{");
            render(x, out);
            out.push('}');
        }
        ("ABS", [x]) => {
            out.push_str("\\left|");
            render(x, out);
            out.push_str("\\right|");
        }
        ("LOG" | "SIN" | "COS" | "TAN" | "MIN" | "MAX", _) => {
            out.push('\\');
            out.push_str(&name.to_ascii_lowercase());
            render_args(args, out);
        }
        _ => {
            out.push_str("\\operatorname{");
            out.push_str(if name == "MOD" { "mod" } else { name });
            out.push('}');
            render_args(args, out);
        }
    }
}
