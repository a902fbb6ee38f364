//! Interpreter for lowered networks, generic over plain and dual numbers.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

use super::{DeclKind, Declaration, FunctionKind, FunctionNode, Grfn, Scalar, VariableNode};
use crate::grfn::Dual;
use crate::ir::{BaseType, BinaryOp, Expression, UnaryOp};

/// Trip counts above this are treated as runaway loops.
const MAX_TRIPS: f64 = 1e8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExecError {
    #[error("domain error in {node}: {message}")]
    Domain { node: String, message: String },
    #[error("unbound input {0}")]
    UnboundInput(String),
    #[error("{0} is not an output of the network")]
    UnknownOutput(String),
    #[error("{output} is not differentiable: {reason}")]
    NonDifferentiable { output: String, reason: String },
    #[error("type error in {node}: {message}")]
    Type { node: String, message: String },
    #[error("malformed network: {0}")]
    Malformed(String),
}

/// Column-major array with inclusive bounds per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Array<T> {
    pub dims: Vec<(i64, i64)>,
    pub data: Vec<T>,
}

impl<T: Copy> Array<T> {
    pub fn filled(dims: Vec<(i64, i64)>, value: T) -> Self {
        let len = dims
            .iter()
            .map(|(lo, hi)| (hi - lo + 1).max(0) as usize)
            .product();
        Array {
            dims,
            data: vec![value; len],
        }
    }

    pub fn offset(&self, idx: &[i64]) -> Option<usize> {
        if idx.len() != self.dims.len() {
            return None;
        }
        let mut off = 0usize;
        let mut stride = 1usize;
        for (&i, &(lo, hi)) in idx.iter().zip(&self.dims) {
            if i < lo || i > hi {
                return None;
            }
            off += (i - lo) as usize * stride;
            stride *= (hi - lo + 1) as usize;
        }
        Some(off)
    }

    pub fn get(&self, idx: &[i64]) -> Option<T> {
        self.offset(idx).map(|o| self.data[o])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value<T> {
    Num(T),
    Bool(bool),
    Array(Array<T>),
}

impl<T: Scalar> Value<T> {
    pub fn as_num(&self) -> Option<T> {
        match self {
            Value::Num(x) => Some(*x),
            _ => None,
        }
    }

    /// Scalar value as `f64`; logicals map to 0/1.
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Num(x) => Some(x.re()),
            Value::Bool(b) => Some(if *b { 1.0 } else { 0.0 }),
            Value::Array(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EvalOrder {
    /// Ready nodes run in creation order.
    #[default]
    Forward,
    /// Ready nodes run latest-created first.
    Reverse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Intrinsic {
    Exp,
    Log,
    Sin,
    Cos,
    Tan,
    Sqrt,
    Abs,
    Min,
    Max,
    Mod,
}

impl Intrinsic {
    fn parse(name: &str) -> Option<Self> {
        Some(match name.to_ascii_uppercase().as_str() {
            "EXP" => Intrinsic::Exp,
            "LOG" => Intrinsic::Log,
            "SIN" => Intrinsic::Sin,
            "COS" => Intrinsic::Cos,
            "TAN" => Intrinsic::Tan,
            "SQRT" => Intrinsic::Sqrt,
            "ABS" => Intrinsic::Abs,
            "MIN" => Intrinsic::Min,
            "MAX" => Intrinsic::Max,
            "MOD" => Intrinsic::Mod,
            _ => return None,
        })
    }
}

/// Expression with variable names resolved to input slots.
#[derive(Debug, Clone)]
enum CExpr {
    Num(f64, bool),
    Bool(bool),
    Slot {
        slot: usize,
        ty: BaseType,
    },
    Index {
        slot: usize,
        ty: BaseType,
        indices: Vec<CExpr>,
    },
    Unary(UnaryOp, Box<CExpr>),
    Binary(BinaryOp, Box<CExpr>, Box<CExpr>),
    Call(Intrinsic, Vec<CExpr>),
}

fn compile(e: &Expression, slots: &[(&str, BaseType)], node: &str) -> Result<CExpr, ExecError> {
    let slot_of = |name: &str| {
        slots.iter().position(|(n, _)| *n == name).ok_or_else(|| {
            ExecError::Malformed(format!("{node} reads {name} without an input edge"))
        })
    };
    Ok(match e {
        Expression::Num { value } => CExpr::Num(value.value(), value.is_integer()),
        Expression::Logical { value } => CExpr::Bool(*value),
        Expression::Var { name, indices } => {
            let slot = slot_of(name)?;
            let ty = slots[slot].1;
            if indices.is_empty() {
                CExpr::Slot { slot, ty }
            } else {
                CExpr::Index {
                    slot,
                    ty,
                    indices: indices
                        .iter()
                        .map(|i| compile(i, slots, node))
                        .collect::<Result<_, _>>()?,
                }
            }
        }
        Expression::Unary { op, child } => {
            CExpr::Unary(*op, Box::new(compile(child, slots, node)?))
        }
        Expression::Binary { op, left, right } => CExpr::Binary(
            *op,
            Box::new(compile(left, slots, node)?),
            Box::new(compile(right, slots, node)?),
        ),
        Expression::Call { name, args } => {
            let f = Intrinsic::parse(name).ok_or_else(|| {
                ExecError::Malformed(format!("{node} calls unknown function {name}"))
            })?;
            CExpr::Call(
                f,
                args.iter()
                    .map(|a| compile(a, slots, node))
                    .collect::<Result<_, _>>()?,
            )
        }
    })
}

/// Intermediate value during expression evaluation.
enum Ev<T> {
    Num(T, bool),
    Bool(bool),
    Arr(Array<T>),
}

fn domain(node: &str, message: impl Into<String>) -> ExecError {
    ExecError::Domain {
        node: node.to_string(),
        message: message.into(),
    }
}

fn type_err(node: &str, message: impl Into<String>) -> ExecError {
    ExecError::Type {
        node: node.to_string(),
        message: message.into(),
    }
}

fn index_of<T: Scalar>(v: T, node: &str) -> Result<i64, ExecError> {
    let r = v.re();
    if !r.is_finite() {
        return Err(domain(node, "non-finite subscript"));
    }
    Ok(r.trunc() as i64)
}

fn num<T: Scalar>(e: Ev<T>, node: &str) -> Result<(T, bool), ExecError> {
    match e {
        Ev::Num(x, i) => Ok((x, i)),
        Ev::Bool(_) => Err(type_err(node, "logical value used as a number")),
        Ev::Arr(_) => Err(type_err(node, "array used in an arithmetic expression")),
    }
}

fn boolean<T>(e: Ev<T>, node: &str) -> Result<bool, ExecError> {
    match e {
        Ev::Bool(b) => Ok(b),
        _ => Err(type_err(node, "expected a logical value")),
    }
}

fn eval<T: Scalar>(e: &CExpr, vals: &[&Value<T>], node: &str) -> Result<Ev<T>, ExecError> {
    Ok(match e {
        CExpr::Num(x, int) => Ev::Num(T::constant(*x), *int),
        CExpr::Bool(b) => Ev::Bool(*b),
        CExpr::Slot { slot, ty } => match vals[*slot] {
            Value::Num(x) => Ev::Num(*x, *ty == BaseType::Integer),
            Value::Bool(b) => Ev::Bool(*b),
            Value::Array(a) => Ev::Arr(a.clone()),
        },
        CExpr::Index { slot, ty, indices } => {
            let Value::Array(a) = vals[*slot] else {
                return Err(type_err(node, "subscripted a scalar"));
            };
            let mut idx = Vec::with_capacity(indices.len());
            for i in indices {
                let (v, _) = num(eval(i, vals, node)?, node)?;
                idx.push(index_of(v, node)?);
            }
            let x = a.get(&idx).ok_or_else(|| {
                domain(
                    node,
                    format!("subscript {idx:?} out of bounds {:?}", a.dims),
                )
            })?;
            match ty {
                BaseType::Logical => Ev::Bool(x.re() != 0.0),
                BaseType::Integer => Ev::Num(x, true),
                BaseType::Real => Ev::Num(x, false),
            }
        }
        CExpr::Unary(UnaryOp::Neg, c) => {
            let (x, i) = num(eval(c, vals, node)?, node)?;
            Ev::Num(-x, i)
        }
        CExpr::Unary(UnaryOp::Not, c) => Ev::Bool(!boolean(eval(c, vals, node)?, node)?),
        CExpr::Binary(op, l, r) => binary(*op, eval(l, vals, node)?, eval(r, vals, node)?, node)?,
        CExpr::Call(f, args) => {
            let mut xs = Vec::with_capacity(args.len());
            for a in args {
                xs.push(num(eval(a, vals, node)?, node)?);
            }
            intrinsic(*f, &xs, node)?
        }
    })
}

fn binary<T: Scalar>(op: BinaryOp, l: Ev<T>, r: Ev<T>, node: &str) -> Result<Ev<T>, ExecError> {
    if op.is_logical() {
        let (a, b) = (boolean(l, node)?, boolean(r, node)?);
        return Ok(Ev::Bool(match op {
            BinaryOp::And => a && b,
            BinaryOp::Or => a || b,
            BinaryOp::Eqv => a == b,
            _ => a != b,
        }));
    }
    if op.is_relational() {
        if let (Ev::Bool(a), Ev::Bool(b)) = (&l, &r) {
            return match op {
                BinaryOp::Eq => Ok(Ev::Bool(a == b)),
                BinaryOp::Ne => Ok(Ev::Bool(a != b)),
                _ => Err(type_err(node, "ordering comparison of logical values")),
            };
        }
        let (a, b) = (num(l, node)?.0.re(), num(r, node)?.0.re());
        return Ok(Ev::Bool(match op {
            BinaryOp::Lt => a < b,
            BinaryOp::Le => a <= b,
            BinaryOp::Gt => a > b,
            BinaryOp::Ge => a >= b,
            BinaryOp::Eq => a == b,
            _ => a != b,
        }));
    }
    let ((a, ai), (b, bi)) = (num(l, node)?, num(r, node)?);
    let int = ai && bi;
    let v = match op {
        BinaryOp::Add => a + b,
        BinaryOp::Sub => a - b,
        BinaryOp::Mul => a * b,
        BinaryOp::Div => {
            if b.re() == 0.0 {
                return Err(domain(node, "division by zero"));
            }
            let q = a / b;
            if int {
                q.trunc()
            } else {
                q
            }
        }
        BinaryOp::Pow => {
            let (x, y) = (a.re(), b.re());
            if x < 0.0 && y.fract() != 0.0 {
                return Err(domain(node, "negative base raised to a non-integer power"));
            }
            if x == 0.0 && y < 0.0 {
                return Err(domain(node, "zero raised to a negative power"));
            }
            let p = a.pow(b);
            if int {
                p.trunc()
            } else {
                p
            }
        }
        _ => unreachable!("arithmetic operator"),
    };
    Ok(Ev::Num(v, int))
}

fn intrinsic<T: Scalar>(f: Intrinsic, xs: &[(T, bool)], node: &str) -> Result<Ev<T>, ExecError> {
    let arity_ok = match f {
        Intrinsic::Min | Intrinsic::Max => xs.len() >= 2,
        Intrinsic::Mod => xs.len() == 2,
        _ => xs.len() == 1,
    };
    if !arity_ok {
        return Err(type_err(
            node,
            format!("{f:?} called with {} arguments", xs.len()),
        ));
    }
    let (x, xi) = xs[0];
    Ok(match f {
        Intrinsic::Exp => Ev::Num(x.exp(), false),
        Intrinsic::Log => {
            if x.re() <= 0.0 {
                return Err(domain(
                    node,
                    format!("LOG of non-positive value {}", x.re()),
                ));
            }
            Ev::Num(x.ln(), false)
        }
        Intrinsic::Sqrt => {
            if x.re() < 0.0 {
                return Err(domain(node, format!("SQRT of negative value {}", x.re())));
            }
            Ev::Num(x.sqrt(), false)
        }
        Intrinsic::Sin => Ev::Num(x.sin(), false),
        Intrinsic::Cos => Ev::Num(x.cos(), false),
        Intrinsic::Tan => Ev::Num(x.tan(), false),
        Intrinsic::Abs => Ev::Num(x.abs(), xi),
        Intrinsic::Min | Intrinsic::Max => {
            let mut best = xs[0].0;
            for &(y, _) in &xs[1..] {
                let better = if f == Intrinsic::Min {
                    y.re() < best.re()
                } else {
                    y.re() > best.re()
                };
                if better {
                    best = y;
                }
            }
            Ev::Num(best, xs.iter().all(|(_, i)| *i))
        }
        Intrinsic::Mod => {
            let (y, yi) = xs[1];
            if y.re() == 0.0 {
                return Err(domain(node, "MOD with zero divisor"));
            }
            Ev::Num(x - (x / y).trunc() * y, xi && yi)
        }
    })
}

/// Convert an evaluated value for storage in a variable of type `ty`.
fn store<T: Scalar>(v: Ev<T>, ty: BaseType, node: &str) -> Result<Value<T>, ExecError> {
    Ok(match (v, ty) {
        (Ev::Num(x, _), BaseType::Real) => Value::Num(x),
        (Ev::Num(x, _), BaseType::Integer) => Value::Num(x.trunc()),
        (Ev::Bool(b), BaseType::Logical) => Value::Bool(b),
        (Ev::Arr(mut a), ty) => {
            if ty == BaseType::Integer {
                a.data.iter_mut().for_each(|x| *x = x.trunc());
            }
            Value::Array(a)
        }
        (Ev::Num(..), BaseType::Logical) => {
            return Err(type_err(node, "number assigned to a LOGICAL"))
        }
        (Ev::Bool(_), _) => {
            return Err(type_err(
                node,
                "logical value assigned to a numeric variable",
            ))
        }
    })
}

fn element<T: Scalar>(v: Ev<T>, ty: BaseType, node: &str) -> Result<T, ExecError> {
    Ok(match (v, ty) {
        (Ev::Bool(b), BaseType::Logical) => T::constant(if b { 1.0 } else { 0.0 }),
        (Ev::Num(x, _), BaseType::Integer) => x.trunc(),
        (Ev::Num(x, _), BaseType::Real) => x,
        _ => return Err(type_err(node, "element type mismatch")),
    })
}

struct LoopBounds {
    lo: CExpr,
    hi: CExpr,
    stride: Option<CExpr>,
}

struct CompiledFn {
    kind: FunctionKind,
    inputs: Vec<usize>,
    output: usize,
    out_type: BaseType,
    expr: Option<CExpr>,
    indices: Vec<CExpr>,
    /// Input slot holding the prior value of an indexed target.
    target_slot: Option<usize>,
    guards: Vec<(usize, bool)>,
    loop_idx: Option<usize>,
    bounds: Option<LoopBounds>,
}

struct LoopPlan<'g> {
    var: &'g str,
    carried: &'g [String],
    body: Executor<'g>,
}

/// A network prepared for repeated evaluation.
pub struct Executor<'g> {
    grfn: &'g Grfn,
    decls: &'g [Declaration],
    fns: Vec<CompiledFn>,
    forward: Vec<usize>,
    reverse: Vec<usize>,
    loops: Vec<LoopPlan<'g>>,
}

fn topo_order(fns: &[CompiledFn], n_vars: usize, reverse: bool) -> Result<Vec<usize>, ExecError> {
    let mut producer = vec![None; n_vars];
    for (i, f) in fns.iter().enumerate() {
        producer[f.output] = Some(i);
    }
    let mut succ = vec![Vec::new(); fns.len()];
    let mut indeg = vec![0usize; fns.len()];
    for (i, f) in fns.iter().enumerate() {
        let mut deps: Vec<usize> = f
            .inputs
            .iter()
            .chain(f.guards.iter().map(|(c, _)| c))
            .filter_map(|v| producer[*v])
            .collect();
        deps.sort_unstable();
        deps.dedup();
        for d in deps {
            succ[d].push(i);
            indeg[i] += 1;
        }
    }
    let key = |i: usize| if reverse { usize::MAX - i } else { i };
    let mut ready: BinaryHeap<Reverse<usize>> = (0..fns.len())
        .filter(|&i| indeg[i] == 0)
        .map(|i| Reverse(key(i)))
        .collect();
    let mut order = Vec::with_capacity(fns.len());
    while let Some(Reverse(k)) = ready.pop() {
        let i = key(k);
        order.push(i);
        for &s in &succ[i] {
            indeg[s] -= 1;
            if indeg[s] == 0 {
                ready.push(Reverse(key(s)));
            }
        }
    }
    if order.len() != fns.len() {
        return Err(ExecError::Malformed("the network has a cycle".into()));
    }
    Ok(order)
}

fn strip_loop_scopes(scope: &str) -> &str {
    let mut s = scope;
    while let Some((head, tail)) = s.rsplit_once('.') {
        if tail
            .strip_prefix("DO")
            .is_some_and(|n| !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit()))
        {
            s = head;
        } else {
            break;
        }
    }
    s
}

fn simple_eval(e: &Expression, lookup: &dyn Fn(&str) -> Option<f64>) -> Result<f64, String> {
    match e {
        Expression::Num { value } => Ok(value.value()),
        Expression::Logical { value } => Ok(if *value { 1.0 } else { 0.0 }),
        Expression::Var { name, indices } if indices.is_empty() => {
            lookup(name).ok_or_else(|| format!("{name} has no value here"))
        }
        Expression::Unary {
            op: UnaryOp::Neg,
            child,
        } => Ok(-simple_eval(child, lookup)?),
        Expression::Binary { op, left, right } if op.is_arithmetic() => {
            let (a, b) = (simple_eval(left, lookup)?, simple_eval(right, lookup)?);
            let int = is_int_expr(left) && is_int_expr(right);
            Ok(match op {
                BinaryOp::Add => a + b,
                BinaryOp::Sub => a - b,
                BinaryOp::Mul => a * b,
                BinaryOp::Div if b == 0.0 => return Err("division by zero".into()),
                BinaryOp::Div if int => (a / b).trunc(),
                BinaryOp::Div => a / b,
                _ => Scalar::pow(a, b),
            })
        }
        Expression::Call { name, args } if args.len() == 1 => {
            let x = simple_eval(&args[0], lookup)?;
            Ok(match name.as_str() {
                "EXP" => x.exp(),
                "LOG" => x.ln(),
                "SQRT" => x.sqrt(),
                "ABS" => x.abs(),
                "SIN" => x.sin(),
                "COS" => x.cos(),
                "TAN" => x.tan(),
                _ => return Err(format!("{name} is not allowed in a declaration")),
            })
        }
        _ => Err("expression is not allowed in a declaration".into()),
    }
}

fn is_int_expr(e: &Expression) -> bool {
    match e {
        Expression::Num { value } => value.is_integer(),
        Expression::Binary { left, right, .. } => is_int_expr(left) && is_int_expr(right),
        Expression::Unary { child, .. } => is_int_expr(child),
        _ => false,
    }
}

impl<'g> Executor<'g> {
    pub fn new(grfn: &'g Grfn) -> Result<Self, ExecError> {
        Self::with_decls(grfn, &grfn.declarations)
    }

    fn with_decls(grfn: &'g Grfn, decls: &'g [Declaration]) -> Result<Self, ExecError> {
        let var_index: HashMap<&str, usize> = grfn
            .variables
            .iter()
            .enumerate()
            .map(|(i, v)| (v.id.as_str(), i))
            .collect();
        let idx = |id: &str| {
            var_index
                .get(id)
                .copied()
                .ok_or_else(|| ExecError::Malformed(format!("unknown variable {id}")))
        };
        let mut loops = Vec::new();
        let mut loop_ids: HashMap<&str, usize> = HashMap::new();
        let mut fns = Vec::with_capacity(grfn.functions.len());
        for f in &grfn.functions {
            let inputs: Vec<usize> = f.inputs.iter().map(|i| idx(i)).collect::<Result<_, _>>()?;
            let slots: Vec<(&str, BaseType)> = inputs
                .iter()
                .map(|&i| (grfn.variables[i].name.as_str(), grfn.variables[i].base_type))
                .collect();
            let output = idx(&f.output)?;
            let expr = f
                .expression
                .as_ref()
                .map(|e| compile(e, &slots, &f.id))
                .transpose()?;
            let indices = f
                .indices
                .iter()
                .map(|e| compile(e, &slots, &f.id))
                .collect::<Result<Vec<_>, _>>()?;
            let target_slot = if f.indices.is_empty() {
                None
            } else {
                let name = &grfn.variables[output].name;
                Some(slots.iter().position(|(n, _)| n == name).ok_or_else(|| {
                    ExecError::Malformed(format!("{} lacks its target's prior value", f.id))
                })?)
            };
            let guards = f
                .guard
                .iter()
                .map(|g| Ok((idx(&g.cond)?, g.value)))
                .collect::<Result<Vec<_>, ExecError>>()?;
            let (loop_idx, bounds) = match &f.loop_id {
                Some(l) => {
                    let spec = grfn
                        .loop_spec(l)
                        .ok_or_else(|| ExecError::Malformed(format!("unknown loop {l}")))?;
                    let li = match loop_ids.get(l.as_str()) {
                        Some(&i) => i,
                        None => {
                            loops.push(LoopPlan {
                                var: &spec.var,
                                carried: &spec.carried,
                                body: Executor::with_decls(&spec.body, decls)?,
                            });
                            loop_ids.insert(l, loops.len() - 1);
                            loops.len() - 1
                        }
                    };
                    let bounds = LoopBounds {
                        lo: compile(&spec.lo, &slots, &f.id)?,
                        hi: compile(&spec.hi, &slots, &f.id)?,
                        stride: spec
                            .stride
                            .as_ref()
                            .map(|s| compile(s, &slots, &f.id))
                            .transpose()?,
                    };
                    (Some(li), Some(bounds))
                }
                None => (None, None),
            };
            check_shape(f)?;
            fns.push(CompiledFn {
                kind: f.kind,
                inputs,
                output,
                out_type: grfn.variables[output].base_type,
                expr,
                indices,
                target_slot,
                guards,
                loop_idx,
                bounds,
            });
        }
        let forward = topo_order(&fns, grfn.variables.len(), false)?;
        let reverse = topo_order(&fns, grfn.variables.len(), true)?;
        Ok(Executor {
            grfn,
            decls,
            fns,
            forward,
            reverse,
            loops,
        })
    }

    pub fn grfn(&self) -> &'g Grfn {
        self.grfn
    }

    fn decl(&self, scope: &str, name: &str) -> Option<&'g Declaration> {
        let base = strip_loop_scopes(scope);
        self.decls
            .iter()
            .find(|d| d.scope == base && d.name == name)
            .or_else(|| {
                self.decls.iter().find(|d| {
                    d.name == name
                        && !d.scope.contains('.')
                        && matches!(d.kind, DeclKind::Module | DeclKind::Constant)
                        && self
                            .decls
                            .iter()
                            .any(|m| m.scope == d.scope && m.kind == DeclKind::Module)
                })
            })
            .or_else(|| {
                self.decls.iter().find(|d| {
                    d.name == name && d.kind == DeclKind::Constant && !d.scope.contains('.')
                })
            })
    }

    fn constant_value(&self, scope: &str, name: &str, depth: usize) -> Option<f64> {
        if depth > 32 {
            return None;
        }
        let d = self.decl(scope, name)?;
        if d.kind != DeclKind::Constant {
            return None;
        }
        let init = d.init.as_ref()?;
        let scope = d.scope.clone();
        simple_eval(init, &|n| self.constant_value(&scope, n, depth + 1)).ok()
    }

    /// Initial value of a variable nobody bound: its initializer or zero.
    fn default_value<T: Scalar>(
        &self,
        v: &VariableNode,
        user: &dyn Fn(&str) -> Option<f64>,
    ) -> Result<Value<T>, ExecError> {
        let decl = self.decl(&v.scope, &v.name);
        let lookup = |n: &str| self.constant_value(&v.scope, n, 0).or_else(|| user(n));
        let init = match decl.and_then(|d| d.init.as_ref()) {
            Some(e) => Some(simple_eval(e, &lookup).map_err(|m| type_err(&v.id, m))?),
            None => None,
        };
        let scalar = match v.base_type {
            BaseType::Logical => Value::Bool(init.is_some_and(|x| x != 0.0)),
            BaseType::Integer => Value::Num(T::constant(init.unwrap_or(0.0).trunc())),
            BaseType::Real => Value::Num(T::constant(init.unwrap_or(0.0))),
        };
        match decl {
            Some(d) if !d.dims.is_empty() => {
                let mut dims = Vec::new();
                for (lo, hi) in &d.dims {
                    let lo = simple_eval(lo, &lookup)
                        .map_err(|m| type_err(&v.id, format!("array bound: {m}")))?;
                    let hi = simple_eval(hi, &lookup)
                        .map_err(|m| type_err(&v.id, format!("array bound: {m}")))?;
                    dims.push((lo as i64, hi as i64));
                }
                let fill = match scalar {
                    Value::Num(x) => x,
                    Value::Bool(b) => T::constant(if b { 1.0 } else { 0.0 }),
                    Value::Array(_) => unreachable!(),
                };
                Ok(Value::Array(Array::filled(dims, fill)))
            }
            _ => Ok(scalar),
        }
    }

    fn coerce<T: Scalar>(v: &VariableNode, value: Value<T>) -> Value<T> {
        match (value, v.base_type) {
            (Value::Num(x), BaseType::Logical) => Value::Bool(x.re() != 0.0),
            (Value::Num(x), BaseType::Integer) => Value::Num(x.trunc()),
            (other, _) => other,
        }
    }

    /// Bind top-level inputs from `inputs` (by name, case-insensitive).
    fn bind_top<T: Scalar>(
        &self,
        v: &VariableNode,
        inputs: &BTreeMap<String, Value<T>>,
    ) -> Result<Value<T>, ExecError> {
        let user_num = |n: &str| inputs.get(n).and_then(|x| x.as_f64());
        let decl = self.decl(&v.scope, &v.name);
        let kind = decl.map(|d| d.kind).unwrap_or(DeclKind::Local);
        if kind == DeclKind::Constant {
            return self.default_value(v, &user_num);
        }
        let visible = v.scope == self.grfn.scope || kind == DeclKind::Module;
        if visible {
            if let Some(x) = inputs.get(&v.name) {
                return Ok(Self::coerce(v, x.clone()));
            }
        }
        let required = match kind {
            DeclKind::Param => v.scope == self.grfn.scope,
            DeclKind::Module => decl.is_some_and(|d| d.init.is_none()),
            _ => false,
        };
        if required {
            return Err(ExecError::UnboundInput(v.name.clone()));
        }
        self.default_value(v, &user_num)
    }

    /// Run with inputs keyed by name. Returns every output by name.
    pub fn run<T: Scalar>(
        &self,
        inputs: &BTreeMap<String, Value<T>>,
        order: EvalOrder,
    ) -> Result<BTreeMap<String, Value<T>>, ExecError> {
        let inputs: BTreeMap<String, Value<T>> = inputs
            .iter()
            .map(|(k, v)| (k.to_ascii_uppercase(), v.clone()))
            .collect();
        let values = self.run_inner(&|v: &VariableNode| self.bind_top(v, &inputs), order)?;
        self.collect_outputs(values)
    }

    fn collect_outputs<T: Scalar>(
        &self,
        mut values: Vec<Option<Value<T>>>,
    ) -> Result<BTreeMap<String, Value<T>>, ExecError> {
        let mut out = BTreeMap::new();
        for id in &self.grfn.outputs {
            let i = self
                .grfn
                .variables
                .iter()
                .position(|v| &v.id == id)
                .ok_or_else(|| ExecError::Malformed(format!("unknown output {id}")))?;
            let v = values[i]
                .take()
                .ok_or_else(|| ExecError::Malformed(format!("output {id} was never computed")))?;
            out.insert(self.grfn.variables[i].name.clone(), v);
        }
        Ok(out)
    }

    fn run_inner<T: Scalar>(
        &self,
        bind: &dyn Fn(&VariableNode) -> Result<Value<T>, ExecError>,
        order: EvalOrder,
    ) -> Result<Vec<Option<Value<T>>>, ExecError> {
        let g = self.grfn;
        let mut values: Vec<Option<Value<T>>> = vec![None; g.variables.len()];
        for id in &g.inputs {
            let i = g
                .variables
                .iter()
                .position(|v| &v.id == id)
                .ok_or_else(|| ExecError::Malformed(format!("unknown input {id}")))?;
            values[i] = Some(bind(&g.variables[i])?);
        }
        let mut loop_results: Vec<Option<BTreeMap<String, Value<T>>>> =
            vec![None; self.loops.len()];
        let order = match order {
            EvalOrder::Forward => &self.forward,
            EvalOrder::Reverse => &self.reverse,
        };
        for &fi in order {
            let f = &self.fns[fi];
            let node = g.functions[fi].id.as_str();
            let runs = f
                .guards
                .iter()
                .all(|(c, want)| matches!(values[*c], Some(Value::Bool(b)) if b == *want));
            if !runs {
                continue;
            }
            let result = {
                let mut vals: Vec<&Value<T>> = Vec::with_capacity(f.inputs.len());
                for &i in &f.inputs {
                    match &values[i] {
                        Some(v) => vals.push(v),
                        None if f.kind == FunctionKind::Decision => vals.push(&Value::Bool(false)),
                        None => {
                            return Err(ExecError::Malformed(format!(
                                "{node} reads {} before it has a value",
                                g.variables[i].id
                            )))
                        }
                    }
                }
                match f.kind {
                    FunctionKind::Assign => self.run_assign(f, &vals, node)?,
                    FunctionKind::Condition => {
                        let e = eval(f.expr.as_ref().expect("condition expression"), &vals, node)?;
                        Value::Bool(boolean(e, node)?)
                    }
                    FunctionKind::Decision => {
                        let take_then = match vals[0] {
                            Value::Bool(b) => *b,
                            _ => return Err(type_err(node, "selector is not logical")),
                        };
                        let pick = if take_then { f.inputs[1] } else { f.inputs[2] };
                        values[pick].clone().ok_or_else(|| {
                            ExecError::Malformed(format!(
                                "{node} selected a value that was never computed"
                            ))
                        })?
                    }
                    FunctionKind::LoopBody => {
                        let li = f.loop_idx.expect("loop index");
                        if loop_results[li].is_none() {
                            loop_results[li] = Some(self.run_loop(f, li, &vals, node)?);
                        }
                        let name = &g.variables[f.output].name;
                        loop_results[li]
                            .as_ref()
                            .unwrap()
                            .get(name)
                            .cloned()
                            .ok_or_else(|| {
                                ExecError::Malformed(format!("{node}: loop does not carry {name}"))
                            })?
                    }
                }
            };
            values[f.output] = Some(result);
        }
        Ok(values)
    }

    fn run_assign<T: Scalar>(
        &self,
        f: &CompiledFn,
        vals: &[&Value<T>],
        node: &str,
    ) -> Result<Value<T>, ExecError> {
        let rhs = eval(f.expr.as_ref().expect("assign expression"), vals, node)?;
        let Some(slot) = f.target_slot else {
            return store(rhs, f.out_type, node);
        };
        let Value::Array(prior) = vals[slot] else {
            return Err(type_err(node, "subscripted assignment to a scalar"));
        };
        let mut idx = Vec::with_capacity(f.indices.len());
        for i in &f.indices {
            let (v, _) = num(eval(i, vals, node)?, node)?;
            idx.push(index_of(v, node)?);
        }
        let off = prior.offset(&idx).ok_or_else(|| {
            domain(
                node,
                format!("subscript {idx:?} out of bounds {:?}", prior.dims),
            )
        })?;
        let mut a = prior.clone();
        a.data[off] = element(rhs, f.out_type, node)?;
        Ok(Value::Array(a))
    }

    fn run_loop<T: Scalar>(
        &self,
        f: &CompiledFn,
        li: usize,
        vals: &[&Value<T>],
        node: &str,
    ) -> Result<BTreeMap<String, Value<T>>, ExecError> {
        let plan = &self.loops[li];
        let bounds = f.bounds.as_ref().expect("loop bounds");
        let lo = num(eval(&bounds.lo, vals, node)?, node)?.0;
        let hi = num(eval(&bounds.hi, vals, node)?, node)?.0;
        let stride = match &bounds.stride {
            Some(s) => num(eval(s, vals, node)?, node)?.0,
            None => T::constant(1.0),
        };
        if stride.re() == 0.0 {
            return Err(domain(node, "DO loop with zero stride"));
        }
        let trips = ((hi.re() - lo.re() + stride.re()) / stride.re())
            .floor()
            .max(0.0);
        if !trips.is_finite() || trips > MAX_TRIPS {
            return Err(domain(
                node,
                format!("DO loop trip count {trips} is too large"),
            ));
        }
        let g = self.grfn;
        let mut env: BTreeMap<String, Value<T>> = BTreeMap::new();
        for (k, &i) in f.inputs.iter().enumerate() {
            env.insert(g.variables[i].name.clone(), vals[k].clone());
        }
        let body = &plan.body;
        let body_scope = body.grfn.scope.as_str();
        for c in plan.carried {
            if !env.contains_key(c) && c != plan.var {
                let probe = VariableNode {
                    id: format!("{body_scope}::{c}::0"),
                    name: c.clone(),
                    version: 0,
                    scope: body_scope.to_string(),
                    base_type: body
                        .grfn
                        .variables
                        .iter()
                        .find(|v| &v.name == c)
                        .map(|v| v.base_type)
                        .unwrap_or(BaseType::Real),
                };
                env.insert(c.clone(), body.default_value(&probe, &|_| None)?);
            }
        }
        for k in 0..trips as u64 {
            env.insert(
                plan.var.to_string(),
                Value::Num(lo + T::constant(k as f64) * stride),
            );
            let bind = |v: &VariableNode| -> Result<Value<T>, ExecError> {
                if v.scope == body_scope {
                    if let Some(x) = env.get(&v.name) {
                        return Ok(x.clone());
                    }
                }
                body.default_value(v, &|_| None)
            };
            let values = body.run_inner(&bind, EvalOrder::Forward)?;
            let outs = body.collect_outputs(values)?;
            env.extend(outs);
        }
        env.insert(
            plan.var.to_string(),
            Value::Num(lo + T::constant(trips) * stride),
        );
        Ok(env)
    }

    /// Inputs bound from the caller's map that are REAL scalars.
    fn differentiable_inputs(&self, inputs: &BTreeMap<String, f64>) -> Vec<String> {
        let mut out = Vec::new();
        for id in &self.grfn.inputs {
            let Some(v) = self.grfn.variable(id) else {
                continue;
            };
            let kind = self.decl(&v.scope, &v.name).map(|d| d.kind);
            let visible = v.scope == self.grfn.scope || kind == Some(DeclKind::Module);
            if visible
                && kind != Some(DeclKind::Constant)
                && v.base_type == BaseType::Real
                && inputs.contains_key(&v.name)
                && !out.contains(&v.name)
            {
                out.push(v.name.clone());
            }
        }
        out
    }
}

fn check_shape(f: &FunctionNode) -> Result<(), ExecError> {
    let ok = match f.kind {
        FunctionKind::Assign | FunctionKind::Condition => f.expression.is_some(),
        FunctionKind::Decision => f.inputs.len() == 3,
        FunctionKind::LoopBody => f.loop_id.is_some(),
    };
    if ok {
        Ok(())
    } else {
        Err(ExecError::Malformed(format!(
            "{} is not a well-formed {} node",
            f.id,
            f.kind.as_str()
        )))
    }
}

fn upper_keys(inputs: &BTreeMap<String, f64>) -> BTreeMap<String, f64> {
    inputs
        .iter()
        .map(|(k, v)| (k.to_ascii_uppercase(), *v))
        .collect()
}

/// Execute with scalar inputs; returns scalar outputs (logicals as 0/1).
pub fn execute(
    grfn: &Grfn,
    inputs: &BTreeMap<String, f64>,
) -> Result<BTreeMap<String, f64>, ExecError> {
    execute_ordered(grfn, inputs, EvalOrder::Forward)
}

pub fn execute_ordered(
    grfn: &Grfn,
    inputs: &BTreeMap<String, f64>,
    order: EvalOrder,
) -> Result<BTreeMap<String, f64>, ExecError> {
    let ex = Executor::new(grfn)?;
    let vals: BTreeMap<String, Value<f64>> = upper_keys(inputs)
        .into_iter()
        .map(|(k, v)| (k, Value::Num(v)))
        .collect();
    Ok(ex
        .run(&vals, order)?
        .into_iter()
        .filter_map(|(k, v)| v.as_f64().map(|x| (k, x)))
        .collect())
}

/// Partial derivatives of `output` with respect to every REAL scalar input
/// bound in `inputs`, one forward dual-number pass per input.
pub fn gradient(
    grfn: &Grfn,
    inputs: &BTreeMap<String, f64>,
    output: &str,
) -> Result<BTreeMap<String, f64>, ExecError> {
    let ex = Executor::new(grfn)?;
    let inputs = upper_keys(inputs);
    let out_name = output.to_ascii_uppercase();
    let out_var = grfn
        .output_var(&out_name)
        .ok_or_else(|| ExecError::UnknownOutput(output.to_string()))?;
    if out_var.base_type == BaseType::Logical {
        return Err(ExecError::NonDifferentiable {
            output: out_name,
            reason: "the output is LOGICAL".into(),
        });
    }
    let mut grad = BTreeMap::new();
    for x in ex.differentiable_inputs(&inputs) {
        let vals: BTreeMap<String, Value<Dual>> = inputs
            .iter()
            .map(|(k, v)| {
                let d = if *k == x {
                    Dual::variable(*v)
                } else {
                    Dual::new(*v, 0.0)
                };
                (k.clone(), Value::Num(d))
            })
            .collect();
        let out = ex.run(&vals, EvalOrder::Forward)?;
        match out.get(&out_var.name) {
            Some(Value::Num(d)) => {
                grad.insert(x, d.du);
            }
            _ => {
                return Err(ExecError::NonDifferentiable {
                    output: out_name,
                    reason: "the output is not a scalar number".into(),
                })
            }
        }
    }
    Ok(grad)
}
