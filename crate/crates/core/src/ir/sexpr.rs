//! Prefix s-expression text for expressions, used by the GrFN JSON form.
//!
//! `(* SWFAC (/ A (+ 1 A)))`, `(idx X I)`, `(call EXP X)`, `(neg X)`.

use super::{BinaryOp, Expression, Literal, UnaryOp};

pub fn to_sexpr(expr: &Expression) -> String {
    let mut out = String::new();
    write(expr, &mut out);
    out
}

fn write(expr: &Expression, out: &mut String) {
    match expr {
        Expression::Num { value } => out.push_str(value.as_str()),
        Expression::Logical { value } => out.push_str(if *value { ".true." } else { ".false." }),
        Expression::Var { name, indices } if indices.is_empty() => out.push_str(name),
        Expression::Var { name, indices } => {
            out.push_str("(idx ");
            out.push_str(name);
            for i in indices {
                out.push(' ');
                write(i, out);
            }
            out.push(')');
        }
        Expression::Unary { op, child } => {
            out.push_str(match op {
                UnaryOp::Neg => "(neg ",
                UnaryOp::Not => "(not ",
            });
            write(child, out);
            out.push(')');
        }
        Expression::Binary { op, left, right } => {
            out.push('(');
            out.push_str(op.symbol());
            out.push(' ');
            write(left, out);
            out.push(' ');
            write(right, out);
            out.push(')');
        }
        Expression::Call { name, args } => {
            out.push_str("(call ");
            out.push_str(name);
            for a in args {
                out.push(' ');
                write(a, out);
            }
            out.push(')');
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed s-expression at token {position}: {message}")]
pub struct SexprError {
    pub position: usize,
    pub message: String,
}

pub fn parse_sexpr(text: &str) -> Result<Expression, SexprError> {
    let tokens = tokenize(text);
    let mut pos = 0;
    let expr = parse(&tokens, &mut pos)?;
    if pos != tokens.len() {
        return Err(SexprError {
            position: pos,
            message: "trailing tokens".into(),
        });
    }
    Ok(expr)
}

fn tokenize(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        if c == '(' || c == ')' || c.is_whitespace() {
            if let Some(s) = start.take() {
                out.push(&text[s..i]);
            }
            if !c.is_whitespace() {
                out.push(&text[i..i + 1]);
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push(&text[s..]);
    }
    out
}

fn err(position: usize, message: &str) -> SexprError {
    SexprError {
        position,
        message: message.to_string(),
    }
}

fn parse(tokens: &[&str], pos: &mut usize) -> Result<Expression, SexprError> {
    let tok = *tokens
        .get(*pos)
        .ok_or_else(|| err(*pos, "unexpected end"))?;
    *pos += 1;
    if tok == ")" {
        return Err(err(*pos - 1, "unexpected ')'"));
    }
    if tok != "(" {
        return Ok(atom(tok));
    }
    let head = *tokens
        .get(*pos)
        .ok_or_else(|| err(*pos, "missing operator"))?;
    *pos += 1;
    let mut args = Vec::new();
    let name = match head {
        "idx" | "call" => {
            let n = *tokens.get(*pos).ok_or_else(|| err(*pos, "missing name"))?;
            *pos += 1;
            Some(n.to_string())
        }
        _ => None,
    };
    loop {
        match tokens.get(*pos) {
            Some(&")") => {
                *pos += 1;
                break;
            }
            Some(_) => args.push(parse(tokens, pos)?),
            None => return Err(err(*pos, "unclosed '('")),
        }
    }
    let arity = |n: usize| {
        if args.len() == n {
            Ok(())
        } else {
            Err(err(*pos, &format!("'{head}' expects {n} operands")))
        }
    };
    match head {
        "idx" => Ok(Expression::indexed(name.unwrap(), args)),
        "call" => Ok(Expression::call(name.unwrap(), args)),
        "neg" | "not" => {
            arity(1)?;
            let op = if head == "neg" {
                UnaryOp::Neg
            } else {
                UnaryOp::Not
            };
            Ok(Expression::unary(op, args.pop().unwrap()))
        }
        other => {
            let op = BinaryOp::from_symbol(other).ok_or_else(|| err(*pos, "unknown operator"))?;
            arity(2)?;
            let right = args.pop().unwrap();
            let left = args.pop().unwrap();
            Ok(Expression::binary(op, left, right))
        }
    }
}

fn atom(tok: &str) -> Expression {
    match tok {
        ".true." => Expression::Logical { value: true },
        ".false." => Expression::Logical { value: false },
        t if t.starts_with(|c: char| c.is_ascii_digit()) => Expression::Num {
            value: Literal::new(t),
        },
        t => Expression::var(t),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lais_rhs_round_trips() {
        let text = "(call EXP (* EMP2 (- N NB)))";
        let e = parse_sexpr(text).unwrap();
        assert_eq!(to_sexpr(&e), text);
    }

    #[test]
    fn indexed_and_logical() {
        let text = "(and (> (idx X I 2) 0.5) .true.)";
        assert_eq!(to_sexpr(&parse_sexpr(text).unwrap()), text);
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse_sexpr("(+ A").is_err());
        assert!(parse_sexpr("(+ A B C)").is_err());
        assert!(parse_sexpr(")").is_err());
        assert!(parse_sexpr("A B").is_err());
    }
}
