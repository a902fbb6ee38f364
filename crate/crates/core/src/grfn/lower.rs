//! Lowering of PAIR containers to GrFN in SSA form.
//!
//! Version 0 of a variable stands for its value on entry and only exists
//! when something reads it before the first assignment. IF statements become
//! a CONDITION node plus one DECISION per merged variable; nodes inside a
//! branch carry a guard on the condition. DO loops become one LOOPBODY node
//! per carried variable, all sharing a nested body network. Calls to
//! subroutines and user functions are inlined into an instance scope.

use std::collections::{HashMap, HashSet};

use super::{
    var_id, DeclKind, Declaration, FunctionKind, FunctionNode, Grfn, Guard, LoopSpec, VariableNode,
};
use crate::ir::{
    is_intrinsic, render_latex, BaseType, Container, Decl, Expression, PairProgram, Statement,
    StatementKind, UnitKind,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LoweringError {
    #[error("no program unit named {0}")]
    UnknownContainer(String),
    #[error("{0} is a MODULE and has no executable body")]
    NotExecutable(String),
    #[error("call to {callee} in {caller} does not resolve to a unit of the program")]
    UnresolvedCall { caller: String, callee: String },
    #[error("recursive call chain {0}")]
    Recursion(String),
    #[error("{callee} takes {expected} arguments but {got} were passed")]
    Arity {
        callee: String,
        expected: usize,
        got: usize,
    },
    #[error("RETURN in {0} is only supported as the final statement")]
    EarlyReturn(String),
}

type Key = (String, String);

#[derive(Clone)]
struct Ctx<'p> {
    program: &'p PairProgram,
    container: &'p Container,
    /// Scope of the container's own names.
    scope: String,
    /// Inside a loop body, module variables live in the body scope too.
    module_scope: Option<String>,
    stack: Vec<String>,
}

impl<'p> Ctx<'p> {
    fn module_decl(&self, name: &str) -> Option<(&'p str, &'p Decl)> {
        self.program
            .module_names(self.container)
            .into_iter()
            .find(|(_, d)| d.name == name)
    }

    fn scope_of(&self, name: &str) -> String {
        if self.container.decl(name).is_some() || name.contains(['@', '#']) {
            return self.scope.clone();
        }
        match self.module_decl(name) {
            Some((m, _)) => self.module_scope.clone().unwrap_or_else(|| m.to_string()),
            None => self.scope.clone(),
        }
    }

    fn decl_type(&self, name: &str) -> Option<BaseType> {
        self.container
            .decl(name)
            .or_else(|| self.module_decl(name).map(|(_, d)| d))
            .map(|d| d.base_type)
    }
}

fn decl_kind(c: &Container, d: &Decl) -> DeclKind {
    if d.parameter {
        DeclKind::Constant
    } else if c.kind == UnitKind::Module {
        DeclKind::Module
    } else if c.params.contains(&d.name) {
        DeclKind::Param
    } else {
        DeclKind::Local
    }
}

fn declaration(scope: &str, c: &Container, d: &Decl) -> Declaration {
    Declaration {
        scope: scope.to_string(),
        name: d.name.clone(),
        base_type: d.base_type,
        kind: decl_kind(c, d),
        dims: d
            .dims
            .iter()
            .map(|x| (x.lower.clone(), x.upper.clone()))
            .collect(),
        init: d.init.clone(),
    }
}

struct Builder {
    scope: String,
    variables: Vec<VariableNode>,
    functions: Vec<FunctionNode>,
    loops: Vec<LoopSpec>,
    current: HashMap<Key, u32>,
    next: HashMap<Key, u32>,
    materialized: HashSet<Key>,
    types: HashMap<Key, BaseType>,
    inputs: Vec<String>,
    assigned: Vec<Key>,
    declarations: Vec<Declaration>,
    declared_scopes: HashSet<String>,
    guards: Vec<Guard>,
    n_fn: usize,
    n_cond: usize,
    n_loop: usize,
    n_call: usize,
    n_tmp: usize,
}

impl Builder {
    fn new(scope: &str) -> Self {
        Builder {
            scope: scope.to_string(),
            variables: Vec::new(),
            functions: Vec::new(),
            loops: Vec::new(),
            current: HashMap::new(),
            next: HashMap::new(),
            materialized: HashSet::new(),
            types: HashMap::new(),
            inputs: Vec::new(),
            assigned: Vec::new(),
            declarations: Vec::new(),
            declared_scopes: HashSet::new(),
            guards: Vec::new(),
            n_fn: 0,
            n_cond: 0,
            n_loop: 0,
            n_call: 0,
            n_tmp: 0,
        }
    }

    fn declare(&mut self, ctx: &Ctx<'_>) {
        if self.declared_scopes.insert(ctx.scope.clone()) {
            for d in &ctx.container.locals {
                self.declarations
                    .push(declaration(&ctx.scope, ctx.container, d));
            }
        }
        let mut modules: Vec<&str> = ctx.container.uses.iter().map(String::as_str).collect();
        if let Some(h) = &ctx.container.host {
            modules.push(h);
        }
        for m in modules {
            if let Some(module) = ctx
                .program
                .containers
                .iter()
                .find(|c| c.name == m && c.kind == UnitKind::Module)
            {
                if self.declared_scopes.insert(m.to_string()) {
                    for d in &module.locals {
                        self.declarations.push(declaration(m, module, d));
                    }
                }
            }
        }
    }

    fn key(&mut self, ctx: &Ctx<'_>, name: &str) -> Key {
        let key = (ctx.scope_of(name), name.to_string());
        if !self.types.contains_key(&key) {
            let ty = ctx.decl_type(name).unwrap_or(BaseType::Real);
            self.types.insert(key.clone(), ty);
        }
        key
    }

    fn add_var(&mut self, key: &Key, version: u32) -> String {
        let id = var_id(&key.0, &key.1, version);
        self.variables.push(VariableNode {
            id: id.clone(),
            name: key.1.clone(),
            version,
            scope: key.0.clone(),
            base_type: self.types[key],
        });
        id
    }

    fn read_key(&mut self, key: &Key) -> String {
        if let Some(v) = self.current.get(key) {
            return var_id(&key.0, &key.1, *v);
        }
        if self.materialized.contains(key) {
            return var_id(&key.0, &key.1, 0);
        }
        self.materialized.insert(key.clone());
        let id = self.add_var(key, 0);
        self.inputs.push(id.clone());
        id
    }

    fn read(&mut self, ctx: &Ctx<'_>, name: &str) -> String {
        let key = self.key(ctx, name);
        self.read_key(&key)
    }

    fn write_key(&mut self, key: &Key) -> String {
        let v = self.next.get(key).copied().unwrap_or(1);
        self.next.insert(key.clone(), v + 1);
        self.current.insert(key.clone(), v);
        if !self.assigned.contains(key) {
            self.assigned.push(key.clone());
        }
        self.add_var(key, v)
    }

    fn write(&mut self, ctx: &Ctx<'_>, name: &str) -> String {
        let key = self.key(ctx, name);
        self.write_key(&key)
    }

    fn temp(&mut self, ctx: &Ctx<'_>, prefix: char, ty: BaseType) -> String {
        self.n_tmp += 1;
        let name = format!("{prefix}@{}", self.n_tmp);
        self.types.insert((ctx.scope.clone(), name.clone()), ty);
        name
    }

    #[allow(clippy::too_many_arguments)]
    fn emit(
        &mut self,
        kind: FunctionKind,
        latex: Option<String>,
        inputs: Vec<String>,
        output: String,
        expression: Option<Expression>,
        indices: Vec<Expression>,
        loop_id: Option<String>,
    ) {
        let id = format!("{}::__{}__::{}", self.scope, kind.id_tag(), self.n_fn);
        self.n_fn += 1;
        self.functions.push(FunctionNode {
            id,
            kind,
            latex,
            inputs,
            output,
            expression,
            indices,
            guard: self.guards.clone(),
            loop_id,
        });
    }

    fn assign(
        &mut self,
        rhs_ctx: &Ctx<'_>,
        target_ctx: &Ctx<'_>,
        target: &str,
        indices: Vec<Expression>,
        rhs: Expression,
    ) {
        let mut inputs: Vec<String> = Vec::new();
        let mut push = |id: String| {
            if !inputs.contains(&id) {
                inputs.push(id);
            }
        };
        for v in rhs.free_vars() {
            push(self.read(rhs_ctx, &v));
        }
        for i in &indices {
            for v in i.free_vars() {
                push(self.read(target_ctx, &v));
            }
        }
        if !indices.is_empty() {
            push(self.read(target_ctx, target));
        }
        let output = self.write(target_ctx, target);
        let lhs = Expression::indexed(target, indices.clone());
        let latex = format!("{} = {}", render_latex(&lhs), render_latex(&rhs));
        self.emit(
            FunctionKind::Assign,
            Some(latex),
            inputs,
            output,
            Some(rhs),
            indices,
            None,
        );
    }

    fn lower_body(
        &mut self,
        ctx: &Ctx<'_>,
        body: &[Statement],
        tail: bool,
    ) -> Result<(), LoweringError> {
        for (i, s) in body.iter().enumerate() {
            self.lower_statement(ctx, s, tail && i + 1 == body.len())?;
        }
        Ok(())
    }

    fn lower_statement(
        &mut self,
        ctx: &Ctx<'_>,
        s: &Statement,
        tail: bool,
    ) -> Result<(), LoweringError> {
        match &s.kind {
            StatementKind::Assign {
                target,
                indices,
                rhs,
            } => {
                let indices = indices
                    .iter()
                    .map(|i| self.hoist(ctx, i))
                    .collect::<Result<Vec<_>, _>>()?;
                let rhs = self.hoist(ctx, rhs)?;
                self.assign(ctx, ctx, target, indices, rhs);
            }
            StatementKind::If {
                cond,
                then_body,
                else_body,
            } => self.lower_if(ctx, cond, then_body, else_body, tail)?,
            StatementKind::Do {
                var,
                lo,
                hi,
                stride,
                body,
            } => self.lower_do(ctx, var, lo, hi, stride.as_ref(), body)?,
            StatementKind::Call { callee, args } => {
                let args = args
                    .iter()
                    .map(|a| self.hoist(ctx, a))
                    .collect::<Result<Vec<_>, _>>()?;
                self.inline(ctx, callee, &args, UnitKind::Subroutine)?;
            }
            StatementKind::Return => {
                if !tail {
                    return Err(LoweringError::EarlyReturn(ctx.container.name.clone()));
                }
            }
            StatementKind::OpaqueIo { .. } => {}
        }
        Ok(())
    }

    fn lower_if(
        &mut self,
        ctx: &Ctx<'_>,
        cond: &Expression,
        then_body: &[Statement],
        else_body: &[Statement],
        tail: bool,
    ) -> Result<(), LoweringError> {
        let cond = self.hoist(ctx, cond)?;
        let inputs: Vec<String> = cond.free_vars().iter().map(|v| self.read(ctx, v)).collect();
        self.n_cond += 1;
        let cname = format!("COND#{}", self.n_cond);
        self.types
            .insert((ctx.scope.clone(), cname.clone()), BaseType::Logical);
        let cid = self.write(ctx, &cname);
        let latex = render_latex(&cond);
        self.emit(
            FunctionKind::Condition,
            Some(latex),
            inputs,
            cid.clone(),
            Some(cond),
            vec![],
            None,
        );

        let before = self.current.clone();
        let branch = |b: &mut Builder,
                      body: &[Statement],
                      value: bool|
         -> Result<HashMap<Key, u32>, LoweringError> {
            b.guards.push(Guard {
                cond: cid.clone(),
                value,
            });
            b.lower_body(ctx, body, tail)?;
            b.guards.pop();
            Ok(std::mem::replace(&mut b.current, before.clone()))
        };
        let after_then = branch(self, then_body, true)?;
        let after_else = branch(self, else_body, false)?;

        let inner = format!("{}.", ctx.scope);
        let mut keys: Vec<Key> = after_then
            .iter()
            .chain(after_else.iter())
            .filter(|(k, v)| **v > 0 && before.get(*k) != Some(*v))
            .map(|(k, _)| k.clone())
            .filter(|(scope, name)| !name.contains(['@', '#']) && !scope.starts_with(&inner))
            .collect();
        keys.sort();
        keys.dedup();
        for key in keys {
            let then_id = match after_then.get(&key).or(before.get(&key)) {
                Some(v) => var_id(&key.0, &key.1, *v),
                None => self.read_key(&key),
            };
            let else_id = match after_else.get(&key).or(before.get(&key)) {
                Some(v) => var_id(&key.0, &key.1, *v),
                None => self.read_key(&key),
            };
            let out = self.write_key(&key);
            self.emit(
                FunctionKind::Decision,
                None,
                vec![cid.clone(), then_id, else_id],
                out,
                None,
                vec![],
                None,
            );
        }
        Ok(())
    }

    fn lower_do(
        &mut self,
        ctx: &Ctx<'_>,
        var: &str,
        lo: &Expression,
        hi: &Expression,
        stride: Option<&Expression>,
        body: &[Statement],
    ) -> Result<(), LoweringError> {
        let lo = self.hoist(ctx, lo)?;
        let hi = self.hoist(ctx, hi)?;
        let stride = stride.map(|s| self.hoist(ctx, s)).transpose()?;
        self.n_loop += 1;
        let body_scope = format!("{}.DO{}", ctx.scope, self.n_loop);
        let child_ctx = Ctx {
            scope: body_scope.clone(),
            module_scope: Some(body_scope.clone()),
            ..ctx.clone()
        };
        let mut child = Builder::new(&body_scope);
        child.lower_body(&child_ctx, body, false)?;
        let mut body_grfn = child.finish();
        for d in std::mem::take(&mut body_grfn.declarations) {
            if !self
                .declarations
                .iter()
                .any(|e| e.scope == d.scope && e.name == d.name)
            {
                self.declarations.push(d);
            }
        }

        let body_reads: Vec<String> = body_grfn
            .inputs
            .iter()
            .filter_map(|id| body_grfn.variable(id))
            .filter(|v| v.scope == body_scope)
            .map(|v| v.name.clone())
            .collect();
        let mut carried: Vec<String> = body_grfn
            .outputs
            .iter()
            .filter_map(|id| body_grfn.variable(id))
            .filter(|v| v.scope == body_scope)
            .map(|v| v.name.clone())
            .collect();
        carried.push(var.to_string());
        carried.sort();
        carried.dedup();

        let mut reads: Vec<String> = Vec::new();
        let mut add = |n: &str| {
            if !reads.iter().any(|r| r == n) {
                reads.push(n.to_string());
            }
        };
        for e in std::iter::once(&lo)
            .chain(std::iter::once(&hi))
            .chain(stride.iter())
        {
            for v in e.free_vars() {
                add(&v);
            }
        }
        for n in body_reads.iter().filter(|n| *n != var) {
            add(n);
        }
        for c in carried.iter().filter(|c| *c != var) {
            let key = self.key(ctx, c);
            let live = self.current.contains_key(&key) || self.materialized.contains(&key);
            let incoming = match ctx.container.decl(c) {
                Some(d) => decl_kind(ctx.container, d) == DeclKind::Param,
                None => ctx.module_decl(c).is_some(),
            };
            if live || incoming {
                add(c);
            }
        }
        let inputs: Vec<String> = reads.iter().map(|n| self.read(ctx, n)).collect();
        let loop_id = format!("{}::__loop__::{}", self.scope, self.n_loop);
        self.loops.push(LoopSpec {
            id: loop_id.clone(),
            var: var.to_string(),
            lo,
            hi,
            stride,
            carried: carried.clone(),
            body: body_grfn,
        });
        for c in &carried {
            let out = self.write(ctx, c);
            self.emit(
                FunctionKind::LoopBody,
                None,
                inputs.clone(),
                out,
                None,
                vec![],
                Some(loop_id.clone()),
            );
        }
        Ok(())
    }

    /// Replace calls to user functions by temporaries holding their results.
    fn hoist(&mut self, ctx: &Ctx<'_>, e: &Expression) -> Result<Expression, LoweringError> {
        Ok(match e {
            Expression::Call { name, args } => {
                let args = args
                    .iter()
                    .map(|a| self.hoist(ctx, a))
                    .collect::<Result<Vec<_>, _>>()?;
                if is_intrinsic(name) {
                    Expression::call(name.clone(), args)
                } else {
                    let callee_ctx = self.inline(ctx, name, &args, UnitKind::Function)?;
                    let ty = callee_ctx.decl_type(name).unwrap_or(BaseType::Real);
                    let tmp = self.temp(ctx, 'F', ty);
                    self.assign(
                        &callee_ctx,
                        ctx,
                        &tmp,
                        vec![],
                        Expression::var(name.clone()),
                    );
                    Expression::var(tmp)
                }
            }
            Expression::Var { name, indices } => Expression::indexed(
                name.clone(),
                indices
                    .iter()
                    .map(|i| self.hoist(ctx, i))
                    .collect::<Result<Vec<_>, _>>()?,
            ),
            Expression::Unary { op, child } => Expression::unary(*op, self.hoist(ctx, child)?),
            Expression::Binary { op, left, right } => {
                Expression::binary(*op, self.hoist(ctx, left)?, self.hoist(ctx, right)?)
            }
            other => other.clone(),
        })
    }

    fn inline<'p>(
        &mut self,
        ctx: &Ctx<'p>,
        name: &str,
        args: &[Expression],
        kind: UnitKind,
    ) -> Result<Ctx<'p>, LoweringError> {
        let callee = ctx
            .program
            .containers
            .iter()
            .find(|c| c.name == name && c.kind == kind)
            .ok_or_else(|| LoweringError::UnresolvedCall {
                caller: ctx.container.name.clone(),
                callee: name.to_string(),
            })?;
        if ctx.stack.iter().any(|s| s == name) {
            let mut chain = ctx.stack.clone();
            chain.push(name.to_string());
            return Err(LoweringError::Recursion(chain.join(" -> ")));
        }
        if callee.params.len() != args.len() {
            return Err(LoweringError::Arity {
                callee: name.to_string(),
                expected: callee.params.len(),
                got: args.len(),
            });
        }
        self.n_call += 1;
        let mut stack = ctx.stack.clone();
        stack.push(name.to_string());
        let callee_ctx = Ctx {
            program: ctx.program,
            container: callee,
            scope: format!("{}.{}@{}", ctx.scope, name, self.n_call),
            module_scope: ctx.module_scope.clone(),
            stack,
        };
        self.declare(&callee_ctx);
        let mut init_versions = Vec::new();
        for (p, a) in callee.params.iter().zip(args) {
            if reads_before_write(&callee.body, p) {
                self.assign(ctx, &callee_ctx, p, vec![], a.clone());
                init_versions.push(
                    self.current
                        .get(&(callee_ctx.scope.clone(), p.clone()))
                        .copied(),
                );
            } else {
                init_versions.push(None);
            }
        }
        self.lower_body(&callee_ctx, &callee.body, true)?;
        for ((p, a), v0) in callee.params.iter().zip(args).zip(init_versions) {
            let Expression::Var { name: arg, indices } = a else {
                continue;
            };
            let changed = self
                .current
                .get(&(callee_ctx.scope.clone(), p.clone()))
                .copied()
                != v0;
            let constant = ctx
                .container
                .decl(arg)
                .or_else(|| ctx.module_decl(arg).map(|(_, d)| d))
                .is_some_and(|d| d.parameter);
            if !changed || constant {
                continue;
            }
            if indices.is_empty() {
                self.assign(&callee_ctx, ctx, arg, vec![], Expression::var(p.clone()));
            } else {
                let ty = callee_ctx.decl_type(p).unwrap_or(BaseType::Real);
                let tmp = self.temp(ctx, 'T', ty);
                self.assign(&callee_ctx, ctx, &tmp, vec![], Expression::var(p.clone()));
                self.assign(ctx, ctx, arg, indices.clone(), Expression::var(tmp));
            }
        }
        Ok(callee_ctx)
    }

    fn finish(self) -> Grfn {
        let mut edges = Vec::new();
        for f in &self.functions {
            for i in &f.inputs {
                edges.push((i.clone(), f.id.clone()));
            }
            edges.push((f.id.clone(), f.output.clone()));
        }
        let mut finals: Vec<&Key> = self
            .assigned
            .iter()
            .filter(|(scope, name)| {
                !name.contains(['@', '#']) && (*scope == self.scope || !scope.contains('.'))
            })
            .collect();
        finals.sort_by(|a, b| (&a.1, &a.0).cmp(&(&b.1, &b.0)));
        let outputs = finals
            .into_iter()
            .map(|k| var_id(&k.0, &k.1, self.current[k]))
            .collect();
        Grfn {
            variables: self.variables,
            functions: self.functions,
            edges,
            inputs: self.inputs,
            outputs,
            groundings: Vec::new(),
            scope: self.scope,
            declarations: self.declarations,
            loops: self.loops,
        }
    }
}

/// Whether `body` may observe the incoming value of `name`. Only reads that
/// can happen before a definite whole-variable assignment count; a
/// subscripted assignment reads the rest of the array.
fn reads_before_write(body: &[Statement], name: &str) -> bool {
    fn uses(e: &Expression, name: &str) -> bool {
        e.free_vars().iter().any(|v| v == name)
    }
    fn scan(body: &[Statement], name: &str, written: &mut bool) -> bool {
        for s in body {
            if *written {
                return false;
            }
            match &s.kind {
                StatementKind::Assign {
                    target,
                    indices,
                    rhs,
                } => {
                    if uses(rhs, name) || indices.iter().any(|i| uses(i, name)) {
                        return true;
                    }
                    if target == name {
                        if !indices.is_empty() {
                            return true;
                        }
                        *written = true;
                    }
                }
                StatementKind::If {
                    cond,
                    then_body,
                    else_body,
                } => {
                    if uses(cond, name) {
                        return true;
                    }
                    let (mut a, mut b) = (false, false);
                    if scan(then_body, name, &mut a) || scan(else_body, name, &mut b) {
                        return true;
                    }
                    *written = a && b;
                }
                StatementKind::Do {
                    var,
                    lo,
                    hi,
                    stride,
                    body,
                } => {
                    if var == name
                        || uses(lo, name)
                        || uses(hi, name)
                        || stride.as_ref().is_some_and(|e| uses(e, name))
                    {
                        return true;
                    }
                    if scan(body, name, &mut false) {
                        return true;
                    }
                }
                StatementKind::Call { args, .. } => {
                    if args.iter().any(|a| uses(a, name)) {
                        return true;
                    }
                }
                StatementKind::Return | StatementKind::OpaqueIo { .. } => {}
            }
        }
        false
    }
    scan(body, name, &mut false)
}

/// Lower one unit of `program`, inlining the units it calls.
pub fn lower_in(program: &PairProgram, name: &str) -> Result<Grfn, LoweringError> {
    let container = program
        .container(name)
        .ok_or_else(|| LoweringError::UnknownContainer(name.to_string()))?;
    if container.kind == UnitKind::Module {
        return Err(LoweringError::NotExecutable(container.name.clone()));
    }
    let ctx = Ctx {
        program,
        container,
        scope: container.name.clone(),
        module_scope: None,
        stack: vec![container.name.clone()],
    };
    let mut b = Builder::new(&container.name);
    b.declare(&ctx);
    b.lower_body(&ctx, &container.body, true)?;
    Ok(b.finish())
}

/// Lower a self-contained unit. Calls to other units are errors here; use
/// [`lower_in`] to resolve them against a program.
pub fn lower(container: &Container) -> Result<Grfn, LoweringError> {
    let program = PairProgram {
        containers: vec![container.clone()],
        ..Default::default()
    };
    lower_in(&program, &container.name)
}
