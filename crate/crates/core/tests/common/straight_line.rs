//! Random straight-line programs and a direct interpreter for them.

use std::collections::BTreeMap;

use rand::Rng;

#[derive(Debug, Clone)]
pub enum E {
    Num(String),
    Var(String),
    Neg(Box<E>),
    Bin(char, Box<E>, Box<E>),
    Pow(Box<E>, i32),
    Call(&'static str, Vec<E>),
}

#[derive(Debug, Clone)]
pub struct Prog {
    pub inputs: Vec<String>,
    pub locals: Vec<String>,
    pub stmts: Vec<(String, E)>,
}

fn gen_expr(rng: &mut impl Rng, defined: &[String], depth: u32) -> E {
    let leaf = depth == 0 || rng.gen_bool(0.3);
    if leaf {
        if rng.gen_bool(0.7) {
            return E::Var(defined[rng.gen_range(0..defined.len())].clone());
        }
        return E::Num(format!("{:.2}", rng.gen_range(-5.0..5.0)));
    }
    let sub = |rng: &mut _| Box::new(gen_expr(rng, defined, depth - 1));
    match rng.gen_range(0..10) {
        0..=4 => {
            let op = ['+', '-', '*', '/'][rng.gen_range(0..4)];
            E::Bin(op, sub(rng), sub(rng))
        }
        5 => E::Neg(sub(rng)),
        6 => E::Pow(sub(rng), rng.gen_range(2..=3)),
        7 => {
            let f = ["SIN", "COS", "ABS", "EXP"][rng.gen_range(0..4)];
            E::Call(f, vec![gen_expr(rng, defined, depth - 1)])
        }
        _ => {
            let f = ["MIN", "MAX"][rng.gen_range(0..2)];
            E::Call(
                f,
                vec![
                    gen_expr(rng, defined, depth - 1),
                    gen_expr(rng, defined, depth - 1),
                ],
            )
        }
    }
}

pub fn generate(rng: &mut impl Rng) -> Prog {
    let n_in = rng.gen_range(1..=4);
    let inputs: Vec<String> = (1..=n_in).map(|i| format!("X{i}")).collect();
    let locals: Vec<String> = (1..=4).map(|i| format!("T{i}")).collect();
    let mut defined = inputs.clone();
    let mut stmts = Vec::new();
    for _ in 0..rng.gen_range(1..=10) {
        let target = if rng.gen_bool(0.8) {
            locals[rng.gen_range(0..locals.len())].clone()
        } else {
            inputs[rng.gen_range(0..inputs.len())].clone()
        };
        let rhs = gen_expr(rng, &defined, 3);
        if !defined.contains(&target) {
            defined.push(target.clone());
        }
        stmts.push((target, rhs));
    }
    Prog {
        inputs,
        locals,
        stmts,
    }
}

fn render(e: &E) -> String {
    match e {
        E::Num(s) if s.starts_with('-') => format!("({s})"),
        E::Num(s) => s.clone(),
        E::Var(v) => v.clone(),
        E::Neg(a) => format!("(-{})", render(a)),
        E::Bin(op, a, b) => format!("({} {op} {})", render(a), render(b)),
        E::Pow(a, k) => format!("({} ** {k})", render(a)),
        E::Call(f, args) => format!(
            "{f}({})",
            args.iter().map(render).collect::<Vec<_>>().join(", ")
        ),
    }
}

pub fn to_fortran(p: &Prog) -> String {
    let mut s = format!("SUBROUTINE P({})\n", p.inputs.join(", "));
    s += &format!("REAL {}, {}\n", p.inputs.join(", "), p.locals.join(", "));
    for (t, e) in &p.stmts {
        s += &format!("{t} = {}\n", render(e));
    }
    s += "END SUBROUTINE P\n";
    s
}

fn eval(e: &E, env: &BTreeMap<String, f64>) -> Result<f64, String> {
    Ok(match e {
        E::Num(s) => s.parse().unwrap(),
        E::Var(v) => env[v],
        E::Neg(a) => -eval(a, env)?,
        E::Bin(op, a, b) => {
            let (x, y) = (eval(a, env)?, eval(b, env)?);
            match op {
                '+' => x + y,
                '-' => x - y,
                '*' => x * y,
                _ if y == 0.0 => return Err("division by zero".into()),
                _ => x / y,
            }
        }
        E::Pow(a, k) => eval(a, env)?.powi(*k),
        E::Call(f, args) => {
            let xs: Vec<f64> = args
                .iter()
                .map(|a| eval(a, env))
                .collect::<Result<_, _>>()?;
            match *f {
                "SIN" => xs[0].sin(),
                "COS" => xs[0].cos(),
                "ABS" => xs[0].abs(),
                "EXP" => xs[0].exp(),
                "MIN" => {
                    if xs[1] < xs[0] {
                        xs[1]
                    } else {
                        xs[0]
                    }
                }
                _ => {
                    if xs[1] > xs[0] {
                        xs[1]
                    } else {
                        xs[0]
                    }
                }
            }
        }
    })
}

/// Final values of every assigned variable, or an error if a division by
/// zero happens along the way.
pub fn interpret(
    p: &Prog,
    inputs: &BTreeMap<String, f64>,
) -> Result<BTreeMap<String, f64>, String> {
    let mut env = inputs.clone();
    let mut out = BTreeMap::new();
    for (t, e) in &p.stmts {
        let v = eval(e, &env)?;
        env.insert(t.clone(), v);
        out.insert(t.clone(), v);
    }
    Ok(out)
}

pub fn random_inputs(p: &Prog, rng: &mut impl Rng) -> BTreeMap<String, f64> {
    p.inputs
        .iter()
        .map(|n| (n.clone(), rng.gen_range(-3.0..3.0)))
        .collect()
}

pub fn same(a: f64, b: f64) -> bool {
    a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan())
}
