//! Language-independent program analysis IR.
//!
//! A [`PairProgram`] is a flat list of [`Container`]s (one per program unit or
//! module procedure), each holding declarations, a statement tree and the
//! comment blocks found in its source range. All identifiers are stored
//! uppercase. Numeric literals keep their exact decimal spelling.

mod latex;
mod print;
pub mod sexpr;
mod validate;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub(crate) use latex::is_greek as latex_greek;
pub use latex::render_latex;
pub use print::{fortran_expr, print_container, print_program};
pub use validate::{validate, Diagnostic, Severity};

use crate::fortran::CommentBlock;

/// Intrinsics understood by the front-end, the interpreter and the LaTeX renderer.
pub const INTRINSICS: &[&str] = &[
    "EXP", "LOG", "SIN", "COS", "TAN", "SQRT", "ABS", "MIN", "MAX", "MOD",
];

pub fn is_intrinsic(name: &str) -> bool {
    INTRINSICS.iter().any(|i| i.eq_ignore_ascii_case(name))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum UnitKind {
    Program,
    Subroutine,
    Function,
    Module,
}

impl fmt::Display for UnitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UnitKind::Program => "PROGRAM",
            UnitKind::Subroutine => "SUBROUTINE",
            UnitKind::Function => "FUNCTION",
            UnitKind::Module => "MODULE",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BaseType {
    Real,
    Integer,
    Logical,
}

impl fmt::Display for BaseType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BaseType::Real => "REAL",
            BaseType::Integer => "INTEGER",
            BaseType::Logical => "LOGICAL",
        })
    }
}

/// One array dimension with inclusive bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dim {
    pub lower: Expression,
    pub upper: Expression,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decl {
    pub name: String,
    pub base_type: BaseType,
    /// Empty for scalars.
    pub dims: Vec<Dim>,
    /// Named constant (`PARAMETER`).
    pub parameter: bool,
    pub init: Option<Expression>,
}

impl Decl {
    pub fn scalar(name: impl Into<String>, base_type: BaseType) -> Self {
        Decl {
            name: name.into(),
            base_type,
            dims: Vec::new(),
            parameter: false,
            init: None,
        }
    }

    pub fn is_array(&self) -> bool {
        !self.dims.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Container {
    pub name: String,
    pub kind: UnitKind,
    pub params: Vec<String>,
    /// Every declaration in the unit, parameters included.
    pub locals: Vec<Decl>,
    pub body: Vec<Statement>,
    pub comments: Vec<CommentBlock>,
    pub uses: Vec<String>,
    /// Enclosing module for procedures that follow a module's `CONTAINS`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub host: Option<String>,
}

impl Container {
    pub fn new(name: impl Into<String>, kind: UnitKind) -> Self {
        Container {
            name: name.into(),
            kind,
            params: Vec::new(),
            locals: Vec::new(),
            body: Vec::new(),
            comments: Vec::new(),
            uses: Vec::new(),
            host: None,
        }
    }

    pub fn decl(&self, name: &str) -> Option<&Decl> {
        self.locals.iter().find(|d| d.name == name)
    }

    /// Name of the top-level unit this container belongs to.
    pub fn unit_name(&self) -> &str {
        self.host.as_deref().unwrap_or(&self.name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StmtId(pub u32);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceLoc {
    pub file: String,
    pub line: u32,
}

impl fmt::Display for SourceLoc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.file, self.line)
    }
}

/// A statement. Equality ignores the id so that reparsed programs compare equal.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Statement {
    pub id: StmtId,
    #[serde(flatten)]
    pub kind: StatementKind,
}

impl PartialEq for Statement {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

impl Statement {
    pub fn new(id: StmtId, kind: StatementKind) -> Self {
        Statement { id, kind }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "stmt", rename_all = "snake_case")]
pub enum StatementKind {
    Assign {
        target: String,
        indices: Vec<Expression>,
        rhs: Expression,
    },
    If {
        cond: Expression,
        then_body: Vec<Statement>,
        else_body: Vec<Statement>,
    },
    Do {
        var: String,
        lo: Expression,
        hi: Expression,
        stride: Option<Expression>,
        body: Vec<Statement>,
    },
    Call {
        callee: String,
        args: Vec<Expression>,
    },
    Return,
    OpaqueIo {
        text: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum UnaryOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
    Eqv,
    Neqv,
}

/// Binding strength, higher binds tighter. Shared by the Fortran and LaTeX
/// parsers and printers so that both sides agree on where parentheses go.
pub mod prec {
    pub const EQV: u8 = 1;
    pub const OR: u8 = 2;
    pub const AND: u8 = 3;
    pub const NOT: u8 = 4;
    pub const REL: u8 = 5;
    pub const ADD: u8 = 6;
    pub const MUL: u8 = 7;
    pub const NEG: u8 = 8;
    pub const POW: u8 = 9;
    pub const ATOM: u8 = 10;
}

impl BinaryOp {
    pub fn precedence(self) -> u8 {
        use BinaryOp::*;
        match self {
            Eqv | Neqv => prec::EQV,
            Or => prec::OR,
            And => prec::AND,
            Lt | Le | Gt | Ge | Eq | Ne => prec::REL,
            Add | Sub => prec::ADD,
            Mul | Div => prec::MUL,
            Pow => prec::POW,
        }
    }

    pub fn is_relational(self) -> bool {
        self.precedence() == prec::REL
    }

    pub fn is_logical(self) -> bool {
        matches!(
            self,
            BinaryOp::And | BinaryOp::Or | BinaryOp::Eqv | BinaryOp::Neqv
        )
    }

    pub fn is_arithmetic(self) -> bool {
        matches!(
            self,
            BinaryOp::Add | BinaryOp::Sub | BinaryOp::Mul | BinaryOp::Div | BinaryOp::Pow
        )
    }

    /// Prefix symbol used by the s-expression form.
    pub fn symbol(self) -> &'static str {
        use BinaryOp::*;
        match self {
            Add => "+",
            Sub => "-",
            Mul => "*",
            Div => "/",
            Pow => "**",
            Lt => "<",
            Le => "<=",
            Gt => ">",
            Ge => ">=",
            Eq => "==",
            Ne => "/=",
            And => "and",
            Or => "or",
            Eqv => "eqv",
            Neqv => "neqv",
        }
    }

    pub fn from_symbol(s: &str) -> Option<BinaryOp> {
        use BinaryOp::*;
        Some(match s {
            "+" => Add,
            "-" => Sub,
            "*" => Mul,
            "/" => Div,
            "**" => Pow,
            "<" => Lt,
            "<=" => Le,
            ">" => Gt,
            ">=" => Ge,
            "==" => Eq,
            "/=" => Ne,
            "and" => And,
            "or" => Or,
            "eqv" => Eqv,
            "neqv" => Neqv,
            _ => return None,
        })
    }
}

/// Exact decimal literal, e.g. `"0.104"` or `"2"`. A literal containing a
/// decimal point is REAL, otherwise INTEGER.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Literal(pub String);

impl Literal {
    pub fn new(text: impl Into<String>) -> Self {
        Literal(text.into())
    }

    pub fn is_integer(&self) -> bool {
        !self.0.contains('.')
    }

    pub fn value(&self) -> f64 {
        self.0.parse().unwrap_or(f64::NAN)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "expr", rename_all = "snake_case")]
pub enum Expression {
    Num {
        value: Literal,
    },
    Logical {
        value: bool,
    },
    Var {
        name: String,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        indices: Vec<Expression>,
    },
    Unary {
        op: UnaryOp,
        child: Box<Expression>,
    },
    Binary {
        op: BinaryOp,
        left: Box<Expression>,
        right: Box<Expression>,
    },
    Call {
        name: String,
        args: Vec<Expression>,
    },
}

impl Expression {
    pub fn num(text: impl Into<String>) -> Self {
        Expression::Num {
            value: Literal::new(text),
        }
    }

    pub fn var(name: impl Into<String>) -> Self {
        Expression::Var {
            name: name.into(),
            indices: Vec::new(),
        }
    }

    pub fn indexed(name: impl Into<String>, indices: Vec<Expression>) -> Self {
        Expression::Var {
            name: name.into(),
            indices,
        }
    }

    pub fn unary(op: UnaryOp, child: Expression) -> Self {
        Expression::Unary {
            op,
            child: Box::new(child),
        }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn neg(child: Expression) -> Self {
        Self::unary(UnaryOp::Neg, child)
    }

    pub fn binary(op: BinaryOp, left: Expression, right: Expression) -> Self {
        Expression::Binary {
            op,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn call(name: impl Into<String>, args: Vec<Expression>) -> Self {
        Expression::Call {
            name: name.into(),
            args,
        }
    }

    pub fn precedence(&self) -> u8 {
        match self {
            Expression::Unary {
                op: UnaryOp::Neg, ..
            } => prec::NEG,
            Expression::Unary {
                op: UnaryOp::Not, ..
            } => prec::NOT,
            Expression::Binary { op, .. } => op.precedence(),
            _ => prec::ATOM,
        }
    }

    /// Free variable names in order of first occurrence, index expressions included.
    pub fn free_vars(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut Vec<String>) {
        match self {
            Expression::Num { .. } | Expression::Logical { .. } => {}
            Expression::Var { name, indices } => {
                if !out.contains(name) {
                    out.push(name.clone());
                }
                for i in indices {
                    i.collect_vars(out);
                }
            }
            Expression::Unary { child, .. } => child.collect_vars(out),
            Expression::Binary { left, right, .. } => {
                left.collect_vars(out);
                right.collect_vars(out);
            }
            Expression::Call { args, .. } => {
                for a in args {
                    a.collect_vars(out);
                }
            }
        }
    }

    /// Visit every sub-expression, parents before children.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Expression)) {
        f(self);
        match self {
            Expression::Var { indices, .. } => indices.iter().for_each(|i| i.walk(f)),
            Expression::Unary { child, .. } => child.walk(f),
            Expression::Binary { left, right, .. } => {
                left.walk(f);
                right.walk(f);
            }
            Expression::Call { args, .. } => args.iter().for_each(|a| a.walk(f)),
            _ => {}
        }
    }

    pub fn walk_mut(&mut self, f: &mut impl FnMut(&mut Expression)) {
        f(self);
        match self {
            Expression::Var { indices, .. } => indices.iter_mut().for_each(|i| i.walk_mut(f)),
            Expression::Unary { child, .. } => child.walk_mut(f),
            Expression::Binary { left, right, .. } => {
                left.walk_mut(f);
                right.walk_mut(f);
            }
            Expression::Call { args, .. } => args.iter_mut().for_each(|a| a.walk_mut(f)),
            _ => {}
        }
    }

    pub fn node_count(&self) -> usize {
        let mut n = 0;
        self.walk(&mut |_| n += 1);
        n
    }
}

impl fmt::Display for Expression {
    /// Prefix s-expression text.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&sexpr::to_sexpr(self))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PairProgram {
    pub containers: Vec<Container>,
    pub source_map: BTreeMap<StmtId, SourceLoc>,
}

impl PairProgram {
    pub fn container(&self, name: &str) -> Option<&Container> {
        self.containers
            .iter()
            .find(|c| c.name.eq_ignore_ascii_case(name))
    }

    pub fn location(&self, id: StmtId) -> Option<&SourceLoc> {
        self.source_map.get(&id)
    }

    /// Names visible through `USE` and host association: declarations of the
    /// host module and every module reachable through `USE`, keyed by name
    /// with the owning module.
    pub fn module_names<'a>(&'a self, container: &'a Container) -> Vec<(&'a str, &'a Decl)> {
        let mut queue: Vec<&str> = container.uses.iter().map(String::as_str).collect();
        if let Some(host) = &container.host {
            queue.push(host);
        }
        let mut seen: Vec<&str> = Vec::new();
        let mut out = Vec::new();
        while !queue.is_empty() {
            let m = queue.remove(0);
            if seen.contains(&m) {
                continue;
            }
            seen.push(m);
            if let Some(module) = self
                .containers
                .iter()
                .find(|c| c.kind == UnitKind::Module && c.name == m)
            {
                for d in &module.locals {
                    out.push((module.name.as_str(), d));
                }
                queue.extend(module.uses.iter().map(String::as_str));
            }
        }
        out
    }

    /// Equality ignoring comments, statement ids and source positions.
    pub fn structurally_eq(&self, other: &PairProgram) -> bool {
        let strip = |p: &PairProgram| -> Vec<Container> {
            p.containers
                .iter()
                .cloned()
                .map(|mut c| {
                    c.comments.clear();
                    c
                })
                .collect()
        };
        strip(self) == strip(other)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("IR serializes")
    }
}

/// Walk every statement of a body, recursing into nested blocks.
pub fn walk_statements<'a>(body: &'a [Statement], f: &mut impl FnMut(&'a Statement)) {
    for s in body {
        f(s);
        match &s.kind {
            StatementKind::If {
                then_body,
                else_body,
                ..
            } => {
                walk_statements(then_body, f);
                walk_statements(else_body, f);
            }
            StatementKind::Do { body, .. } => walk_statements(body, f),
            _ => {}
        }
    }
}

/// Count statements recursively.
pub fn statement_count(body: &[Statement]) -> usize {
    let mut n = 0;
    walk_statements(body, &mut |_| n += 1);
    n
}
