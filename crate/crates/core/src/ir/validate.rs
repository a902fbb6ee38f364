use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{
    is_intrinsic, Container, Decl, Expression, PairProgram, SourceLoc, Statement, StatementKind,
    UnitKind,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub message: String,
    pub container: Option<String>,
    pub location: Option<SourceLoc>,
}

impl Diagnostic {
    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

pub(crate) fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_uppercase())
        && chars.all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '_')
}

/// Check the container invariants of a program. Returns an empty list iff
/// every invariant holds; the order follows containers and statements.
pub fn validate(program: &PairProgram) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for c in &program.containers {
        let key = c.name.to_ascii_uppercase();
        let count = seen.entry(key).or_insert(0);
        *count += 1;
        if *count == 2 {
            out.push(Diagnostic {
                severity: Severity::Error,
                message: format!("duplicate container name {}", c.name),
                container: Some(c.name.clone()),
                location: None,
            });
        }
    }
    for c in &program.containers {
        ContainerCheck::new(program, c, &mut out).run();
    }
    out
}

struct ContainerCheck<'a> {
    program: &'a PairProgram,
    container: &'a Container,
    visible: HashMap<&'a str, &'a Decl>,
    reported: BTreeSet<String>,
    out: &'a mut Vec<Diagnostic>,
}

impl<'a> ContainerCheck<'a> {
    fn new(
        program: &'a PairProgram,
        container: &'a Container,
        out: &'a mut Vec<Diagnostic>,
    ) -> Self {
        let mut visible = HashMap::new();
        for (_, d) in program.module_names(container) {
            visible.insert(d.name.as_str(), d);
        }
        for d in &container.locals {
            visible.insert(d.name.as_str(), d);
        }
        ContainerCheck {
            program,
            container,
            visible,
            reported: BTreeSet::new(),
            out,
        }
    }

    fn push(&mut self, severity: Severity, message: String, stmt: Option<&Statement>) {
        self.out.push(Diagnostic {
            severity,
            message,
            container: Some(self.container.name.clone()),
            location: stmt.and_then(|s| self.program.location(s.id).cloned()),
        });
    }

    fn run(&mut self) {
        let c = self.container;
        if !is_identifier(&c.name) {
            self.push(
                Severity::Error,
                format!("invalid unit name {}", c.name),
                None,
            );
        }
        let mut names = BTreeSet::new();
        for d in &c.locals {
            if !names.insert(d.name.as_str()) {
                self.push(
                    Severity::Error,
                    format!("duplicate declaration of {}", d.name),
                    None,
                );
            }
        }
        for p in &c.params {
            if !c.locals.iter().any(|d| &d.name == p) {
                self.push(
                    Severity::Error,
                    format!("parameter {p} of {} is not declared", c.name),
                    None,
                );
            }
        }
        if c.kind == UnitKind::Function && c.decl(&c.name).is_none() {
            self.push(
                Severity::Error,
                format!("result type of function {} is not declared", c.name),
                None,
            );
        }
        for m in &c.uses {
            let found = self
                .program
                .containers
                .iter()
                .any(|u| u.kind == UnitKind::Module && &u.name == m);
            if !found {
                self.push(
                    Severity::Warning,
                    format!("module {m} is not part of the program"),
                    None,
                );
            }
        }
        for d in &c.locals {
            for dim in &d.dims {
                self.expr(&dim.lower, None);
                self.expr(&dim.upper, None);
            }
            if let Some(init) = &d.init {
                self.expr(init, None);
            }
        }
        self.body(&c.body);
    }

    fn body(&mut self, body: &'a [Statement]) {
        for s in body {
            self.statement(s);
        }
    }

    fn statement(&mut self, s: &'a Statement) {
        match &s.kind {
            StatementKind::Assign {
                target,
                indices,
                rhs,
            } => {
                self.reference(target, indices.len(), Some(s));
                if let Some(d) = self.visible.get(target.as_str()) {
                    if d.parameter {
                        self.push(
                            Severity::Error,
                            format!("assignment to named constant {target}"),
                            Some(s),
                        );
                    }
                }
                for i in indices {
                    self.expr(i, Some(s));
                }
                self.expr(rhs, Some(s));
            }
            StatementKind::If {
                cond,
                then_body,
                else_body,
            } => {
                self.expr(cond, Some(s));
                self.body(then_body);
                self.body(else_body);
            }
            StatementKind::Do {
                var,
                lo,
                hi,
                stride,
                body,
            } => {
                self.reference(var, 0, Some(s));
                if let Some(d) = self.visible.get(var.as_str()) {
                    if d.base_type != super::BaseType::Integer {
                        self.push(
                            Severity::Warning,
                            format!("loop variable {var} is not INTEGER"),
                            Some(s),
                        );
                    }
                }
                self.expr(lo, Some(s));
                self.expr(hi, Some(s));
                if let Some(st) = stride {
                    self.expr(st, Some(s));
                }
                self.body(body);
            }
            StatementKind::Call { args, .. } => {
                for a in args {
                    self.expr(a, Some(s));
                }
            }
            StatementKind::Return | StatementKind::OpaqueIo { .. } => {}
        }
    }

    fn reference(&mut self, name: &str, n_indices: usize, stmt: Option<&Statement>) {
        match self.visible.get(name) {
            None => {
                if self.reported.insert(name.to_string()) {
                    self.push(
                        Severity::Error,
                        format!("undeclared identifier {name}"),
                        stmt,
                    );
                }
            }
            Some(d) => {
                if n_indices > 0 && d.dims.len() != n_indices {
                    self.push(
                        Severity::Error,
                        format!(
                            "{name} referenced with {n_indices} subscripts but declared with {}",
                            d.dims.len()
                        ),
                        stmt,
                    );
                }
            }
        }
    }

    fn expr(&mut self, e: &'a Expression, stmt: Option<&Statement>) {
        let mut refs: Vec<(&'a str, usize)> = Vec::new();
        let mut calls: Vec<(&'a str, usize)> = Vec::new();
        e.walk(&mut |sub| match sub {
            Expression::Var { name, indices } => refs.push((name, indices.len())),
            Expression::Call { name, args } => calls.push((name, args.len())),
            _ => {}
        });
        for (name, n) in refs {
            self.reference(name, n, stmt);
        }
        for (name, n) in calls {
            if is_intrinsic(name) {
                let ok = match name {
                    "MIN" | "MAX" => n >= 2,
                    "MOD" => n == 2,
                    _ => n == 1,
                };
                if !ok {
                    self.push(
                        Severity::Error,
                        format!("intrinsic {name} called with {n} arguments"),
                        stmt,
                    );
                }
                continue;
            }
            let is_function = self
                .program
                .containers
                .iter()
                .any(|c| c.kind == UnitKind::Function && c.name == name);
            let declared = self.visible.get(name).is_some_and(|d| !d.is_array());
            if !is_function && !declared && self.reported.insert(name.to_string()) {
                self.push(Severity::Error, format!("undeclared function {name}"), stmt);
            }
        }
    }
}
