//! Free-form Fortran pretty-printer. Reparsing its output yields a
//! structurally equal program.

use std::fmt::Write;

use super::{
    prec, BinaryOp, Container, Decl, Expression, PairProgram, Statement, StatementKind, UnaryOp,
    UnitKind,
};

pub fn print_program(program: &PairProgram) -> String {
    let mut out = String::new();
    for c in program.containers.iter().filter(|c| c.host.is_none()) {
        print_unit(program, c, &mut out);
        out.push('\n');
    }
    out
}

pub fn print_container(container: &Container) -> String {
    let mut out = String::new();
    print_unit(&PairProgram::default(), container, &mut out);
    out
}

fn print_unit(program: &PairProgram, c: &Container, out: &mut String) {
    let header = match c.kind {
        UnitKind::Program | UnitKind::Module => format!("{} {}", c.kind, c.name),
        UnitKind::Subroutine | UnitKind::Function => {
            format!("{} {}({})", c.kind, c.name, c.params.join(", "))
        }
    };
    out.push_str(&header);
    out.push('\n');
    for m in &c.uses {
        let _ = writeln!(out, "  USE {m}");
    }
    out.push_str("  IMPLICIT NONE\n");
    for d in &c.locals {
        print_decl(d, out);
    }
    print_body(&c.body, 1, out);
    if c.kind == UnitKind::Module {
        let hosted: Vec<&Container> = program
            .containers
            .iter()
            .filter(|p| p.host.as_deref() == Some(c.name.as_str()))
            .collect();
        if !hosted.is_empty() {
            out.push_str("CONTAINS\n");
            for p in hosted {
                print_unit(program, p, out);
            }
        }
    }
    let _ = writeln!(out, "END {} {}", c.kind, c.name);
}

fn print_decl(d: &Decl, out: &mut String) {
    let _ = write!(out, "  {}", d.base_type);
    if d.parameter {
        out.push_str(", PARAMETER");
    }
    let _ = write!(out, " :: {}", d.name);
    if d.is_array() {
        out.push('(');
        for (i, dim) in d.dims.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            let _ = write!(
                out,
                "{}:{}",
                fortran_expr(&dim.lower),
                fortran_expr(&dim.upper)
            );
        }
        out.push(')');
    }
    if let Some(init) = &d.init {
        let _ = write!(out, " = {}", fortran_expr(init));
    }
    out.push('\n');
}

fn indent(level: usize, out: &mut String) {
    for _ in 0..level {
        out.push_str("  ");
    }
}

fn print_body(body: &[Statement], level: usize, out: &mut String) {
    for s in body {
        print_statement(s, level, out);
    }
}

fn print_statement(s: &Statement, level: usize, out: &mut String) {
    indent(level, out);
    match &s.kind {
        StatementKind::Assign {
            target,
            indices,
            rhs,
        } => {
            out.push_str(target);
            if !indices.is_empty() {
                print_args(indices, out);
            }
            let _ = writeln!(out, " = {}", fortran_expr(rhs));
        }
        StatementKind::If {
            cond,
            then_body,
            else_body,
        } => {
            let _ = writeln!(out, "IF ({}) THEN", fortran_expr(cond));
            print_body(then_body, level + 1, out);
            let mut else_body = else_body;
            loop {
                match else_body.as_slice() {
                    [] => break,
                    [Statement {
                        kind:
                            StatementKind::If {
                                cond,
                                then_body,
                                else_body: rest,
                            },
                        ..
                    }] => {
                        indent(level, out);
                        let _ = writeln!(out, "ELSE IF ({}) THEN", fortran_expr(cond));
                        print_body(then_body, level + 1, out);
                        else_body = rest;
                    }
                    other => {
                        indent(level, out);
                        out.push_str("ELSE\n");
                        print_body(other, level + 1, out);
                        break;
                    }
                }
            }
            indent(level, out);
            out.push_str("END IF\n");
        }
        StatementKind::Do {
            var,
            lo,
            hi,
            stride,
            body,
        } => {
            let _ = write!(out, "DO {var} = {}, {}", fortran_expr(lo), fortran_expr(hi));
            if let Some(s) = stride {
                let _ = write!(out, ", {}", fortran_expr(s));
            }
            out.push('\n');
            print_body(body, level + 1, out);
            indent(level, out);
            out.push_str("END DO\n");
        }
        StatementKind::Call { callee, args } => {
            let _ = write!(out, "CALL {callee}");
            if !args.is_empty() {
                print_args(args, out);
            }
            out.push('\n');
        }
        StatementKind::Return => out.push_str("RETURN\n"),
        StatementKind::OpaqueIo { text } => {
            out.push_str(text);
            out.push('\n');
        }
    }
}

fn print_args(args: &[Expression], out: &mut String) {
    out.push('(');
    for (i, a) in args.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write_expr(a, out);
    }
    out.push(')');
}

/// Fortran source text for an expression.
pub fn fortran_expr(e: &Expression) -> String {
    let mut out = String::new();
    write_expr(e, &mut out);
    out
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

fn wrap(e: &Expression, needed: bool, out: &mut String) {
    if needed {
        out.push('(');
        write_expr(e, out);
        out.push(')');
    } else {
        write_expr(e, out);
    }
}

fn write_expr(e: &Expression, out: &mut String) {
    match e {
        Expression::Num { value } => out.push_str(value.as_str()),
        Expression::Logical { value } => out.push_str(if *value { ".TRUE." } else { ".FALSE." }),
        Expression::Var { name, indices } => {
            out.push_str(name);
            if !indices.is_empty() {
                print_args(indices, out);
            }
        }
        Expression::Call { name, args } => {
            out.push_str(name);
            print_args(args, out);
        }
        Expression::Unary { op, child } => {
            let level = match op {
                UnaryOp::Neg => {
                    out.push('-');
                    prec::NEG
                }
                UnaryOp::Not => {
                    out.push_str(".NOT. ");
                    prec::NOT
                }
            };
            wrap(child, child.precedence() < level || is_neg(child), out);
        }
        Expression::Binary { op, left, right } => {
            let level = op.precedence();
            if *op == BinaryOp::Pow {
                wrap(left, left.precedence() < prec::ATOM, out);
                out.push_str("**");
                wrap(right, right.precedence() < prec::NEG || is_neg(right), out);
                return;
            }
            let sym = match op {
                BinaryOp::Add => "+",
                BinaryOp::Sub => "-",
                BinaryOp::Mul => "*",
                BinaryOp::Div => "/",
                BinaryOp::Lt => " < ",
                BinaryOp::Le => " <= ",
                BinaryOp::Gt => " > ",
                BinaryOp::Ge => " >= ",
                BinaryOp::Eq => " == ",
                BinaryOp::Ne => " /= ",
                BinaryOp::And => " .AND. ",
                BinaryOp::Or => " .OR. ",
                BinaryOp::Eqv => " .EQV. ",
                BinaryOp::Neqv => " .NEQV. ",
                BinaryOp::Pow => unreachable!(),
            };
            let left_needs = if op.is_relational() {
                left.precedence() <= level
            } else {
                left.precedence() < level
            };
            wrap(left, left_needs, out);
            out.push_str(sym);
            wrap(right, right.precedence() <= level || is_neg(right), out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_parens() {
        let e = Expression::binary(
            BinaryOp::Div,
            Expression::var("A"),
            Expression::binary(BinaryOp::Mul, Expression::var("B"), Expression::var("C")),
        );
        assert_eq!(fortran_expr(&e), "A/(B*C)");
        let p = Expression::binary(
            BinaryOp::Pow,
            Expression::var("A"),
            Expression::binary(BinaryOp::Pow, Expression::var("B"), Expression::var("C")),
        );
        assert_eq!(fortran_expr(&p), "A**B**C");
    }
}
