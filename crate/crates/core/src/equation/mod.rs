//! LaTeX equations to [`Expression`] trees.
//!
//! Letter runs such as `SWFAC` are split against the caller's known
//! identifiers, longest match first; whatever is left falls back to single
//! letters and the result carries a warning. `e^{..}` is the exponential,
//! `name(..)` is a call only for known function names and juxtaposition is
//! multiplication.

mod lexer;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ir::{is_intrinsic, BinaryOp, Expression, UnaryOp, INTRINSICS};
use lexer::{tokenize, Tok, Token};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("offset {position}: {message}")]
pub struct ParseError {
    /// Byte offset into the LaTeX source.
    pub position: usize,
    pub message: String,
}

impl ParseError {
    fn new(position: usize, message: impl Into<String>) -> Self {
        ParseError {
            position,
            message: message.into(),
        }
    }
}

/// A letter run that had to be split into single letters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AmbiguityWarning {
    pub position: usize,
    pub run: String,
    pub segments: Vec<String>,
}

impl std::fmt::Display for AmbiguityWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "offset {}: read '{}' as {}",
            self.position,
            self.run,
            self.segments.join("·")
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SymbolHints {
    pub known_identifiers: BTreeSet<String>,
    pub known_functions: BTreeSet<String>,
}

impl SymbolHints {
    /// Hints with the intrinsic functions and the given identifiers. Names
    /// that collide with a function are dropped from the identifiers.
    pub fn new<I, S>(identifiers: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let known_functions: BTreeSet<String> = INTRINSICS.iter().map(|s| s.to_string()).collect();
        let mut h = SymbolHints {
            known_identifiers: BTreeSet::new(),
            known_functions,
        };
        h.extend(identifiers);
        h
    }

    pub fn extend<I, S>(&mut self, identifiers: I)
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        for id in identifiers {
            let id = id.into();
            if !self.is_function(&id) {
                self.known_identifiers.insert(id);
            }
        }
    }

    pub fn is_function(&self, name: &str) -> bool {
        self.known_functions
            .iter()
            .any(|f| f.eq_ignore_ascii_case(name))
    }

    fn upper_identifiers(&self) -> Vec<String> {
        self.known_identifiers
            .iter()
            .map(|s| s.to_ascii_uppercase())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquationIR {
    pub lhs: Option<String>,
    #[serde(with = "crate::grfn::sexpr_one")]
    pub rhs: Expression,
    pub source: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<AmbiguityWarning>,
}

/// Parse an equation. A top-level `=` with a single identifier on the left
/// becomes `lhs`.
pub fn parse_latex(src: &str, hints: &SymbolHints) -> Result<EquationIR, ParseError> {
    let (expr, warnings) = parse_latex_expression(src, hints)?;
    let (lhs, rhs) = match expr {
        Expression::Binary {
            op: BinaryOp::Eq,
            left,
            right,
        } => match *left {
            Expression::Var { name, indices } if indices.is_empty() => (Some(name), *right),
            _ => {
                return Err(ParseError::new(
                    0,
                    "the left-hand side of an equation must be a single identifier",
                ))
            }
        },
        e => (None, e),
    };
    Ok(EquationIR {
        lhs,
        rhs,
        source: src.to_string(),
        warnings,
    })
}

/// Parse a LaTeX expression; `=` is the EQ relation here.
pub fn parse_latex_expression(
    src: &str,
    hints: &SymbolHints,
) -> Result<(Expression, Vec<AmbiguityWarning>), ParseError> {
    let toks = tokenize(src)?;
    let mut p = Parser {
        toks,
        i: 0,
        end: src.len(),
        hints,
        upper: hints.upper_identifiers(),
        warnings: Vec::new(),
    };
    if p.toks.is_empty() {
        return Err(ParseError::new(0, "empty equation"));
    }
    let e = p.expr()?;
    if let Some(t) = p.peek_tok() {
        return Err(ParseError::new(
            t.pos,
            format!("unexpected {}", describe(&t.tok)),
        ));
    }
    Ok((e, p.warnings))
}

/// One equation per non-blank line; `%` starts a comment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TexLine {
    pub line: usize,
    pub latex: String,
}

pub fn tex_lines(text: &str) -> Vec<TexLine> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let mut end = raw.len();
        let b = raw.as_bytes();
        for i in 0..b.len() {
            if b[i] == b'%' && (i == 0 || b[i - 1] != b'\\') {
                end = i;
                break;
            }
        }
        let l = raw[..end].trim();
        if !l.is_empty() {
            out.push(TexLine {
                line: n + 1,
                latex: l.to_string(),
            });
        }
    }
    out
}

pub fn read_tex(path: &Path) -> std::io::Result<Vec<TexLine>> {
    Ok(tex_lines(&std::fs::read_to_string(path)?))
}

/// Numeric value of an expression, looking names up in `env`. `None` for
/// unbound names, logical operators and out-of-domain intrinsics.
pub fn evaluate(e: &Expression, env: &BTreeMap<String, f64>) -> Option<f64> {
    Some(match e {
        Expression::Num { value } => value.value(),
        Expression::Var { name, indices } if indices.is_empty() => *env.get(name)?,
        Expression::Unary {
            op: UnaryOp::Neg,
            child,
        } => -evaluate(child, env)?,
        Expression::Binary { op, left, right } if op.is_arithmetic() => {
            let (a, b) = (evaluate(left, env)?, evaluate(right, env)?);
            match op {
                BinaryOp::Add => a + b,
                BinaryOp::Sub => a - b,
                BinaryOp::Mul => a * b,
                BinaryOp::Div => a / b,
                _ => a.powf(b),
            }
        }
        Expression::Call { name, args } => {
            let xs: Vec<f64> = args
                .iter()
                .map(|a| evaluate(a, env))
                .collect::<Option<_>>()?;
            match (name.as_str(), xs.as_slice()) {
                ("EXP", [x]) => x.exp(),
                ("LOG", [x]) if *x > 0.0 => x.ln(),
                ("SQRT", [x]) if *x >= 0.0 => x.sqrt(),
                ("SIN", [x]) => x.sin(),
                ("COS", [x]) => x.cos(),
                ("TAN", [x]) => x.tan(),
                ("ABS", [x]) => x.abs(),
                ("MIN", [_, ..]) => xs.iter().copied().fold(f64::INFINITY, f64::min),
                ("MAX", [_, ..]) => xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                ("MOD", [a, b]) if *b != 0.0 => a % b,
                _ => return None,
            }
        }
        _ => return None,
    })
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Run(s) | Tok::Num(s) => format!("'{s}'"),
        Tok::Cmd(c) => format!("'\\{c}'"),
        Tok::Sym(c) => format!("'{c}'"),
    }
}

const FUNCTION_COMMANDS: &[(&str, &str)] = &[
    ("exp", "EXP"),
    ("log", "LOG"),
    ("ln", "LOG"),
    ("sin", "SIN"),
    ("cos", "COS"),
    ("tan", "TAN"),
    ("min", "MIN"),
    ("max", "MAX"),
];

const TEXT_COMMANDS: &[&str] = &["mathrm", "text", "mathit", "textrm", "operatorname*"];

fn is_greek(name: &str) -> bool {
    crate::ir::latex_greek(name)
}

struct Parser<'h> {
    toks: Vec<Token>,
    i: usize,
    end: usize,
    hints: &'h SymbolHints,
    upper: Vec<String>,
    warnings: Vec<AmbiguityWarning>,
}

fn bin(op: BinaryOp, l: Expression, r: Expression) -> Expression {
    Expression::binary(op, l, r)
}

impl Parser<'_> {
    fn peek_tok(&self) -> Option<&Token> {
        self.toks.get(self.i)
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.i).map(|t| &t.tok)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.i).map_or(self.end, |t| t.pos)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.i).map(|t| t.tok.clone());
        self.i += 1;
        t
    }

    fn is_sym(&self, c: char) -> bool {
        self.peek() == Some(&Tok::Sym(c))
    }

    fn is_cmd(&self, names: &[&str]) -> bool {
        matches!(self.peek(), Some(Tok::Cmd(c)) if names.contains(&c.as_str()))
    }

    fn eat_sym(&mut self, c: char) -> bool {
        if self.is_sym(c) {
            self.i += 1;
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, c: char) -> Result<(), ParseError> {
        if self.eat_sym(c) {
            Ok(())
        } else {
            let found = self.peek().map_or("end of input".to_string(), describe);
            Err(ParseError::new(
                self.pos(),
                format!("expected '{c}', found {found}"),
            ))
        }
    }

    fn expr(&mut self) -> Result<Expression, ParseError> {
        self.eqv()
    }

    fn eqv(&mut self) -> Result<Expression, ParseError> {
        let mut l = self.or()?;
        loop {
            let op = if self.is_cmd(&["Leftrightarrow", "iff", "equiv"]) {
                BinaryOp::Eqv
            } else if self.is_cmd(&["oplus"]) {
                BinaryOp::Neqv
            } else {
                return Ok(l);
            };
            self.i += 1;
            l = bin(op, l, self.or()?);
        }
    }

    fn or(&mut self) -> Result<Expression, ParseError> {
        let mut l = self.and()?;
        while self.is_cmd(&["lor", "vee"]) {
            self.i += 1;
            l = bin(BinaryOp::Or, l, self.and()?);
        }
        Ok(l)
    }

    fn and(&mut self) -> Result<Expression, ParseError> {
        let mut l = self.not()?;
        while self.is_cmd(&["land", "wedge"]) {
            self.i += 1;
            l = bin(BinaryOp::And, l, self.not()?);
        }
        Ok(l)
    }

    fn not(&mut self) -> Result<Expression, ParseError> {
        if self.is_cmd(&["lnot", "neg"]) {
            self.i += 1;
            return Ok(Expression::unary(UnaryOp::Not, self.not()?));
        }
        self.rel()
    }

    fn rel_op(&self) -> Option<BinaryOp> {
        Some(match self.peek()? {
            Tok::Sym('<') => BinaryOp::Lt,
            Tok::Sym('>') => BinaryOp::Gt,
            Tok::Sym('=') => BinaryOp::Eq,
            Tok::Cmd(c) => match c.as_str() {
                "leq" | "le" => BinaryOp::Le,
                "geq" | "ge" => BinaryOp::Ge,
                "neq" | "ne" => BinaryOp::Ne,
                "lt" => BinaryOp::Lt,
                "gt" => BinaryOp::Gt,
                _ => return None,
            },
            _ => return None,
        })
    }

    fn rel(&mut self) -> Result<Expression, ParseError> {
        let l = self.add()?;
        let Some(op) = self.rel_op() else {
            return Ok(l);
        };
        self.i += 1;
        let r = self.add()?;
        if self.rel_op().is_some() {
            return Err(ParseError::new(
                self.pos(),
                "chained relations are not supported",
            ));
        }
        Ok(bin(op, l, r))
    }

    fn add(&mut self) -> Result<Expression, ParseError> {
        let mut l = self.mul()?;
        loop {
            let op = if self.is_sym('+') {
                BinaryOp::Add
            } else if self.is_sym('-') {
                BinaryOp::Sub
            } else {
                return Ok(l);
            };
            self.i += 1;
            l = bin(op, l, self.mul()?);
        }
    }

    fn starts_factor(&self) -> bool {
        match self.peek() {
            Some(Tok::Run(_) | Tok::Num(_)) => true,
            Some(Tok::Sym(c)) => matches!(c, '(' | '[' | '{'),
            Some(Tok::Cmd(c)) => {
                is_greek(c)
                    || FUNCTION_COMMANDS.iter().any(|(n, _)| n == c)
                    || TEXT_COMMANDS.contains(&c.as_str())
                    || matches!(
                        c.as_str(),
                        "frac"
                            | "dfrac"
                            | "tfrac"
                            | "sqrt"
                            | "left"
                            | "operatorname"
                            | "top"
                            | "bot"
                    )
            }
            None => false,
        }
    }

    fn mul(&mut self) -> Result<Expression, ParseError> {
        let mut factors = self.unary()?;
        let mut l = fold_mul(&mut factors);
        loop {
            let op = if self.is_cmd(&["cdot", "times", "ast"]) || self.is_sym('*') {
                self.i += 1;
                BinaryOp::Mul
            } else if self.is_cmd(&["div"]) || self.is_sym('/') {
                self.i += 1;
                BinaryOp::Div
            } else if self.starts_factor() {
                BinaryOp::Mul
            } else {
                return Ok(l);
            };
            let mut r = self.unary()?;
            let first = r.remove(0);
            l = bin(op, l, first);
            for f in r {
                l = bin(BinaryOp::Mul, l, f);
            }
        }
    }

    /// Unary minus binds tighter than products but looser than powers. A
    /// letter run can yield several factors; the sign applies to the first.
    fn unary(&mut self) -> Result<Vec<Expression>, ParseError> {
        if self.eat_sym('-') {
            let mut fs = self.unary()?;
            let first = fs.remove(0);
            fs.insert(0, Expression::neg(first));
            return Ok(fs);
        }
        if self.eat_sym('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Vec<Expression>, ParseError> {
        let mut fs = self.atom()?;
        while self.is_sym('^') {
            self.i += 1;
            let exp = self.script()?;
            let base = fs.pop().expect("atom yields a factor");
            let e = match base {
                Expression::Var {
                    ref name,
                    ref indices,
                } if name == "e" && indices.is_empty() => Expression::call("EXP", vec![exp]),
                b => bin(BinaryOp::Pow, b, exp),
            };
            fs.push(e);
        }
        Ok(fs)
    }

    /// Argument of `^`: a braced group or a single token.
    fn script(&mut self) -> Result<Expression, ParseError> {
        if self.eat_sym('{') {
            let e = self.expr()?;
            self.expect_sym('}')?;
            return Ok(e);
        }
        if self.eat_sym('-') {
            return Ok(Expression::neg(self.script()?));
        }
        let mut fs = self.atom()?;
        if fs.len() != 1 {
            return Err(ParseError::new(self.pos(), "ambiguous superscript"));
        }
        Ok(fs.remove(0))
    }

    fn group(&mut self) -> Result<Expression, ParseError> {
        self.expect_sym('{')?;
        let e = self.expr()?;
        self.expect_sym('}')?;
        Ok(e)
    }

    fn raw_group(&mut self) -> Result<String, ParseError> {
        self.expect_sym('{')?;
        let mut s = String::new();
        loop {
            match self.bump() {
                Some(Tok::Sym('}')) => return Ok(s),
                Some(Tok::Run(r)) | Some(Tok::Num(r)) => s.push_str(&r),
                Some(Tok::Sym('_')) => s.push('_'),
                Some(Tok::Sym('*')) => {}
                _ => {
                    return Err(ParseError::new(
                        self.pos(),
                        "expected a plain name in braces",
                    ))
                }
            }
        }
    }

    /// Call arguments: parenthesized comma list, a braced group or a
    /// single power-level operand (`\sin x`).
    fn call_args(&mut self) -> Result<Vec<Expression>, ParseError> {
        if self.is_cmd(&["left"])
            && matches!(
                self.toks.get(self.i + 1),
                Some(Token {
                    tok: Tok::Sym('('),
                    ..
                })
            )
        {
            self.i += 2;
            let args = self.arg_list()?;
            if !self.is_cmd(&["right"]) {
                return Err(ParseError::new(self.pos(), "expected '\\right)'"));
            }
            self.i += 1;
            self.expect_sym(')')?;
            return Ok(args);
        }
        if self.eat_sym('(') {
            let args = self.arg_list()?;
            self.expect_sym(')')?;
            return Ok(args);
        }
        if self.is_sym('{') {
            return Ok(vec![self.group()?]);
        }
        let mut fs = self.power()?;
        let first = fs.remove(0);
        if !fs.is_empty() {
            return Err(ParseError::new(self.pos(), "ambiguous function argument"));
        }
        Ok(vec![first])
    }

    fn arg_list(&mut self) -> Result<Vec<Expression>, ParseError> {
        let mut args = vec![self.expr()?];
        while self.eat_sym(',') {
            args.push(self.expr()?);
        }
        Ok(args)
    }

    fn atom(&mut self) -> Result<Vec<Expression>, ParseError> {
        let pos = self.pos();
        let Some(tok) = self.bump() else {
            return Err(ParseError::new(pos, "unexpected end of input"));
        };
        match tok {
            Tok::Num(n) => Ok(vec![Expression::num(n)]),
            Tok::Run(run) => self.run(run, pos),
            Tok::Sym('(') => {
                let e = self.expr()?;
                self.expect_sym(')')?;
                Ok(vec![e])
            }
            Tok::Sym('[') => {
                let e = self.expr()?;
                self.expect_sym(']')?;
                Ok(vec![e])
            }
            Tok::Sym('{') => {
                let e = self.expr()?;
                self.expect_sym('}')?;
                Ok(vec![e])
            }
            Tok::Sym('|') => {
                let e = self.expr()?;
                self.expect_sym('|')?;
                Ok(vec![Expression::call("ABS", vec![e])])
            }
            Tok::Cmd(c) => self.command(&c, pos),
            t => Err(ParseError::new(pos, format!("unexpected {}", describe(&t)))),
        }
    }

    fn command(&mut self, c: &str, pos: usize) -> Result<Vec<Expression>, ParseError> {
        if is_greek(c) {
            let v = self.subscripted(c.to_string(), false)?;
            return Ok(vec![v]);
        }
        if let Some((_, f)) = FUNCTION_COMMANDS.iter().find(|(n, _)| *n == c) {
            // \exp^{2}(x) style powers of functions are not supported
            return Ok(vec![Expression::call(*f, self.call_args()?)]);
        }
        if TEXT_COMMANDS.contains(&c) {
            let name = self.raw_group()?;
            let v = self.subscripted(name, true)?;
            return Ok(vec![v]);
        }
        match c {
            "frac" | "dfrac" | "tfrac" => {
                let n = self.group()?;
                let d = self.group()?;
                Ok(vec![bin(BinaryOp::Div, n, d)])
            }
            "sqrt" => {
                if self.is_sym('[') {
                    return Err(ParseError::new(
                        self.pos(),
                        "only square roots are supported",
                    ));
                }
                Ok(vec![Expression::call("SQRT", vec![self.group()?])])
            }
            "operatorname" => {
                let name = self.raw_group()?.to_ascii_uppercase();
                Ok(vec![Expression::call(name, self.call_args()?)])
            }
            "top" => Ok(vec![Expression::Logical { value: true }]),
            "bot" => Ok(vec![Expression::Logical { value: false }]),
            "left" => {
                let open = self.bump();
                let close = match open {
                    Some(Tok::Sym('(')) => ')',
                    Some(Tok::Sym('[')) => ']',
                    Some(Tok::Sym('|')) => '|',
                    Some(Tok::Sym('{')) => '}',
                    _ => return Err(ParseError::new(pos, "unsupported \\left delimiter")),
                };
                let e = self.expr()?;
                if !self.is_cmd(&["right"]) {
                    return Err(ParseError::new(self.pos(), "expected \\right"));
                }
                self.i += 1;
                self.expect_sym(close)?;
                Ok(vec![if close == '|' {
                    Expression::call("ABS", vec![e])
                } else {
                    e
                }])
            }
            _ => Err(ParseError::new(pos, format!("unsupported command \\{c}"))),
        }
    }

    /// Attach a `_` subscript to `name`. A plain name or number in the
    /// subscript is folded into the identifier (`N_{max}` is `N_max`);
    /// anything else becomes array indices. `\mathrm` bases always index.
    fn subscripted(&mut self, name: String, verbatim: bool) -> Result<Expression, ParseError> {
        if !self.eat_sym('_') {
            return Ok(Expression::var(name));
        }
        if !self.is_sym('{') {
            let sub = match self.bump() {
                Some(Tok::Run(r)) | Some(Tok::Num(r)) if !verbatim => r,
                Some(Tok::Cmd(g)) if is_greek(&g) && !verbatim => g,
                Some(Tok::Run(r)) => {
                    return Ok(Expression::indexed(name, vec![Expression::var(r)]))
                }
                Some(Tok::Num(r)) => {
                    return Ok(Expression::indexed(name, vec![Expression::num(r)]))
                }
                _ => return Err(ParseError::new(self.pos(), "bad subscript")),
            };
            return Ok(Expression::var(format!("{name}_{sub}")));
        }
        // brace-delimited
        let start = self.i;
        if !verbatim {
            let mut text = String::new();
            let mut j = self.i + 1;
            while let Some(t) = self.toks.get(j) {
                match &t.tok {
                    Tok::Run(r) | Tok::Num(r) => text.push_str(r),
                    Tok::Sym('}') => break,
                    _ => {
                        text.clear();
                        break;
                    }
                }
                j += 1;
            }
            if !text.is_empty() && self.toks.get(j).is_some_and(|t| t.tok == Tok::Sym('}')) {
                self.i = j + 1;
                return Ok(Expression::var(format!("{name}_{text}")));
            }
        }
        self.i = start;
        self.expect_sym('{')?;
        let indices = self.arg_list()?;
        self.expect_sym('}')?;
        Ok(Expression::indexed(name, indices))
    }

    /// Split a letter run into identifiers and apply any call or subscript
    /// to the last one.
    fn run(&mut self, run: String, pos: usize) -> Result<Vec<Expression>, ParseError> {
        if self.hints.is_function(&run) && self.is_sym('(') {
            let args = self.call_args()?;
            let name = if is_intrinsic(&run) {
                run.to_ascii_uppercase()
            } else {
                run
            };
            return Ok(vec![Expression::call(name, args)]);
        }
        let segments = self.segment(&run, pos);
        let mut fs: Vec<Expression> = Vec::with_capacity(segments.len());
        let n = segments.len();
        for (k, s) in segments.into_iter().enumerate() {
            if k + 1 == n {
                fs.push(self.subscripted(s, false)?);
            } else {
                fs.push(Expression::var(s));
            }
        }
        Ok(fs)
    }

    fn segment(&mut self, run: &str, pos: usize) -> Vec<String> {
        let upper = run.to_ascii_uppercase();
        let b = run.as_bytes();
        let mut out = Vec::new();
        let mut fallback = false;
        let mut i = 0;
        while i < run.len() {
            let best = self
                .upper
                .iter()
                .filter(|h| {
                    let end = i + h.len();
                    !h.is_empty()
                        && upper[i..].starts_with(h.as_str())
                        && !(end < b.len() && b[end].is_ascii_digit())
                })
                .map(String::len)
                .max();
            let len = match best {
                Some(l) => l,
                None => {
                    if run.len() > 1 {
                        fallback = true;
                    }
                    let mut j = i + 1;
                    while j < b.len() && b[j].is_ascii_digit() {
                        j += 1;
                    }
                    j - i
                }
            };
            out.push(run[i..i + len].to_string());
            i += len;
        }
        if fallback && out.len() > 1 {
            self.warnings.push(AmbiguityWarning {
                position: pos,
                run: run.to_string(),
                segments: out.clone(),
            });
        }
        out
    }
}

fn fold_mul(fs: &mut Vec<Expression>) -> Expression {
    let mut it = fs.drain(..);
    let first = it.next().expect("at least one factor");
    it.fold(first, |l, r| bin(BinaryOp::Mul, l, r))
}
