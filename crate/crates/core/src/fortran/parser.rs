//! Recursive-descent parser for the supported free-form Fortran subset.

use std::collections::{BTreeMap, HashMap, HashSet};

use super::comments::{classify, extract_comments, LineClass};
use super::lexer::{tokenize, Tok, Token};
use super::ParseError;
use crate::ir::{
    is_intrinsic, validate, BaseType, BinaryOp, Container, Decl, Dim, Expression, Literal,
    PairProgram, Severity, SourceLoc, Statement, StatementKind, StmtId, UnaryOp, UnitKind,
};

#[derive(Debug, Clone)]
pub(crate) struct LogicalStmt {
    pub line: u32,
    /// 0-based column of the statement text within its first line.
    pub col0: u32,
    pub label: Option<u32>,
    pub text: String,
    pub toks: Vec<Token>,
}

fn split_semicolons(s: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut quote: Option<char> = None;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match quote {
            Some(q) if c == q => quote = None,
            Some(_) => {}
            None if c == '\'' || c == '"' => quote = Some(c),
            None if c == ';' => {
                out.push((start, &s[start..i]));
                start = i + 1;
            }
            None => {}
        }
    }
    out.push((start, &s[start..]));
    out
}

/// Join continuation lines, drop comments, split on `;` and tokenize.
pub(crate) fn logical_statements(file: &str, text: &str) -> Result<Vec<LogicalStmt>, ParseError> {
    let mut out = Vec::new();
    let mut buf = String::new();
    let mut buf_line = 0u32;
    let mut continuing = false;
    let flush =
        |buf: &mut String, line: u32, out: &mut Vec<LogicalStmt>| -> Result<(), ParseError> {
            for (offset, piece) in split_semicolons(buf) {
                let lead = piece.len() - piece.trim_start().len();
                let mut text = piece.trim();
                if text.is_empty() {
                    continue;
                }
                let mut col0 = (offset + lead) as u32;
                let mut label = None;
                let digits = text.chars().take_while(|c| c.is_ascii_digit()).count();
                if digits > 0 && text[digits..].starts_with(char::is_whitespace) {
                    label = text[..digits].parse().ok();
                    let rest = text[digits..].trim_start();
                    col0 += (text.len() - rest.len()) as u32;
                    text = rest;
                }
                let toks = tokenize(text).map_err(|e| ParseError::Syntax {
                    file: file.to_string(),
                    line,
                    column: col0 + e.col + 1,
                    message: e.message,
                })?;
                out.push(LogicalStmt {
                    line,
                    col0,
                    label,
                    text: text.to_string(),
                    toks,
                });
            }
            buf.clear();
            Ok(())
        };
    for (i, raw) in text.lines().enumerate() {
        let line_no = i as u32 + 1;
        let code = match classify(raw) {
            LineClass::Code { code, .. } => code,
            _ => continue,
        };
        let piece = if continuing {
            buf.push(' ');
            let t = code.trim_start();
            t.strip_prefix('&').unwrap_or(t)
        } else {
            buf_line = line_no;
            code
        };
        let trimmed = piece.trim_end();
        if let Some(head) = trimmed.strip_suffix('&') {
            buf.push_str(head);
            continuing = true;
        } else {
            buf.push_str(piece);
            continuing = false;
            flush(&mut buf, buf_line, &mut out)?;
        }
    }
    if !buf.trim().is_empty() {
        flush(&mut buf, buf_line, &mut out)?;
    }
    Ok(out)
}

/// Token cursor over one logical statement.
struct Cur<'s> {
    file: &'s str,
    stmt: &'s LogicalStmt,
    i: usize,
}

impl<'s> Cur<'s> {
    fn new(file: &'s str, stmt: &'s LogicalStmt, i: usize) -> Self {
        Cur { file, stmt, i }
    }

    fn peek(&self) -> Option<&'s Tok> {
        self.stmt.toks.get(self.i).map(|t| &t.tok)
    }

    fn next(&mut self) -> Option<&'s Tok> {
        let t = self.peek();
        if t.is_some() {
            self.i += 1;
        }
        t
    }

    fn at_end(&self) -> bool {
        self.i >= self.stmt.toks.len()
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == Some(tok) {
            self.i += 1;
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Ident(s)) if s == kw) {
            self.i += 1;
            true
        } else {
            false
        }
    }

    fn column(&self) -> u32 {
        let col = match self.stmt.toks.get(self.i) {
            Some(t) => t.col,
            None => self.stmt.text.chars().count() as u32,
        };
        self.stmt.col0 + col + 1
    }

    fn error(&self, message: impl Into<String>) -> ParseError {
        ParseError::Syntax {
            file: self.file.to_string(),
            line: self.stmt.line,
            column: self.column(),
            message: message.into(),
        }
    }

    fn unsupported(&self, feature: impl Into<String>) -> ParseError {
        ParseError::UnsupportedFeature {
            file: self.file.to_string(),
            line: self.stmt.line,
            column: self.column(),
            feature: feature.into(),
        }
    }

    fn expect(&mut self, tok: &Tok, what: &str) -> Result<(), ParseError> {
        if self.eat(tok) {
            Ok(())
        } else {
            Err(self.error(format!("expected {what}")))
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, ParseError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                self.i += 1;
                Ok(s.clone())
            }
            _ => Err(self.error(format!("expected {what}"))),
        }
    }

    fn end(&self) -> Result<(), ParseError> {
        if self.at_end() {
            Ok(())
        } else {
            Err(self.error("unexpected tokens at end of statement"))
        }
    }

    fn rest_text(&self) -> String {
        match self.stmt.toks.get(self.i) {
            Some(t) => self
                .stmt
                .text
                .chars()
                .skip(t.col as usize)
                .collect::<String>()
                .trim()
                .to_string(),
            None => String::new(),
        }
    }

    // --- expressions -----------------------------------------------------

    fn expr(&mut self) -> Result<Expression, ParseError> {
        let mut left = self.or_expr()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Eqv) => BinaryOp::Eqv,
                Some(Tok::Neqv) => BinaryOp::Neqv,
                _ => return Ok(left),
            };
            self.i += 1;
            left = Expression::binary(op, left, self.or_expr()?);
        }
    }

    fn or_expr(&mut self) -> Result<Expression, ParseError> {
        let mut left = self.and_expr()?;
        while self.eat(&Tok::Or) {
            left = Expression::binary(BinaryOp::Or, left, self.and_expr()?);
        }
        Ok(left)
    }

    fn and_expr(&mut self) -> Result<Expression, ParseError> {
        let mut left = self.not_expr()?;
        while self.eat(&Tok::And) {
            left = Expression::binary(BinaryOp::And, left, self.not_expr()?);
        }
        Ok(left)
    }

    fn not_expr(&mut self) -> Result<Expression, ParseError> {
        if self.eat(&Tok::Not) {
            return Ok(Expression::unary(UnaryOp::Not, self.not_expr()?));
        }
        self.rel_expr()
    }

    fn rel_expr(&mut self) -> Result<Expression, ParseError> {
        let left = self.add_expr()?;
        let op = match self.peek() {
            Some(Tok::Lt) => BinaryOp::Lt,
            Some(Tok::Le) => BinaryOp::Le,
            Some(Tok::Gt) => BinaryOp::Gt,
            Some(Tok::Ge) => BinaryOp::Ge,
            Some(Tok::EqEq) => BinaryOp::Eq,
            Some(Tok::Ne) => BinaryOp::Ne,
            _ => return Ok(left),
        };
        self.i += 1;
        Ok(Expression::binary(op, left, self.add_expr()?))
    }

    fn add_expr(&mut self) -> Result<Expression, ParseError> {
        let mut left = self.mul_expr()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Plus) => BinaryOp::Add,
                Some(Tok::Minus) => BinaryOp::Sub,
                _ => return Ok(left),
            };
            self.i += 1;
            left = Expression::binary(op, left, self.mul_expr()?);
        }
    }

    fn mul_expr(&mut self) -> Result<Expression, ParseError> {
        let mut left = self.unary_expr()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Star) => BinaryOp::Mul,
                Some(Tok::Slash) => BinaryOp::Div,
                _ => return Ok(left),
            };
            self.i += 1;
            left = Expression::binary(op, left, self.unary_expr()?);
        }
    }

    fn unary_expr(&mut self) -> Result<Expression, ParseError> {
        if self.eat(&Tok::Minus) {
            return Ok(Expression::neg(self.unary_expr()?));
        }
        if self.eat(&Tok::Plus) {
            return self.unary_expr();
        }
        self.pow_expr()
    }

    fn pow_expr(&mut self) -> Result<Expression, ParseError> {
        let base = self.primary()?;
        if self.eat(&Tok::Pow) {
            let exponent = self.unary_expr()?;
            return Ok(Expression::binary(BinaryOp::Pow, base, exponent));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expression, ParseError> {
        let tok = match self.peek() {
            Some(t) => t,
            None => return Err(self.error("expected an expression")),
        };
        match tok {
            Tok::Int(s) | Tok::Real(s) => {
                self.i += 1;
                Ok(Expression::Num {
                    value: Literal::new(s.clone()),
                })
            }
            Tok::True | Tok::False => {
                self.i += 1;
                Ok(Expression::Logical {
                    value: *tok == Tok::True,
                })
            }
            Tok::LParen => {
                self.i += 1;
                let e = self.expr()?;
                self.expect(&Tok::RParen, "')'")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.i += 1;
                if self.eat(&Tok::LParen) {
                    let args = self.args()?;
                    Ok(Expression::call(name.clone(), args))
                } else {
                    Ok(Expression::var(name.clone()))
                }
            }
            Tok::Str(_) => Err(self.unsupported("character expressions")),
            Tok::Other(o) if o == "%" => Err(self.unsupported("derived types")),
            _ => Err(self.error("expected an expression")),
        }
    }

    /// Comma-separated arguments after an opening parenthesis, through `)`.
    fn args(&mut self) -> Result<Vec<Expression>, ParseError> {
        let mut args = Vec::new();
        if self.eat(&Tok::RParen) {
            return Ok(args);
        }
        loop {
            if self.peek() == Some(&Tok::Colon) {
                return Err(self.unsupported("array sections"));
            }
            args.push(self.expr()?);
            match self.next() {
                Some(Tok::Comma) => continue,
                Some(Tok::RParen) => return Ok(args),
                Some(Tok::Colon) => return Err(self.unsupported("array sections")),
                Some(Tok::Assign) => return Err(self.unsupported("keyword arguments")),
                _ => {
                    self.i = self.i.saturating_sub(1);
                    return Err(self.error("expected ',' or ')'"));
                }
            }
        }
    }
}

const IO_KEYWORDS: &[&str] = &[
    "READ",
    "WRITE",
    "PRINT",
    "OPEN",
    "CLOSE",
    "FORMAT",
    "INQUIRE",
    "REWIND",
    "BACKSPACE",
    "ENDFILE",
];

const UNSUPPORTED_EXEC: &[(&str, &str)] = &[
    ("GOTO", "GOTO"),
    ("GO", "GOTO"),
    ("ENTRY", "ENTRY"),
    ("SELECT", "SELECT CASE"),
    ("CASE", "SELECT CASE"),
    ("WHERE", "WHERE"),
    ("FORALL", "FORALL"),
    ("ALLOCATE", "allocatable arrays"),
    ("DEALLOCATE", "allocatable arrays"),
    ("NULLIFY", "pointers"),
    ("EXIT", "EXIT"),
    ("CYCLE", "CYCLE"),
    ("PAUSE", "PAUSE"),
    ("ASSIGN", "ASSIGN"),
    ("INCLUDE", "INCLUDE"),
    ("BLOCK", "BLOCK"),
];

const UNSUPPORTED_SPEC: &[(&str, &str)] = &[
    ("CHARACTER", "CHARACTER declarations"),
    ("COMPLEX", "COMPLEX declarations"),
    ("TYPE", "derived types"),
    ("CLASS", "derived types"),
    ("DATA", "DATA statements"),
    ("COMMON", "COMMON blocks"),
    ("EQUIVALENCE", "EQUIVALENCE"),
    ("NAMELIST", "NAMELIST"),
    ("INTERFACE", "interface blocks"),
    ("ALLOCATABLE", "allocatable arrays"),
    ("POINTER", "pointers"),
    ("TARGET", "pointers"),
];

const SPEC_KEYWORDS: &[&str] = &[
    "USE",
    "IMPLICIT",
    "REAL",
    "INTEGER",
    "LOGICAL",
    "DOUBLE",
    "DOUBLEPRECISION",
    "PARAMETER",
    "DIMENSION",
    "EXTERNAL",
    "INTRINSIC",
    "SAVE",
    "PRIVATE",
    "PUBLIC",
];

fn first_ident(st: &LogicalStmt) -> Option<&str> {
    match st.toks.first() {
        Some(Token {
            tok: Tok::Ident(s), ..
        }) => Some(s),
        _ => None,
    }
}

fn ident_at(st: &LogicalStmt, i: usize) -> Option<&str> {
    match st.toks.get(i) {
        Some(Token {
            tok: Tok::Ident(s), ..
        }) => Some(s),
        _ => None,
    }
}

/// `NAME = ...` or `NAME(...) = ...`.
fn is_assignment(st: &LogicalStmt) -> bool {
    if first_ident(st).is_none() {
        return false;
    }
    match st.toks.get(1).map(|t| &t.tok) {
        Some(Tok::Assign) => true,
        Some(Tok::LParen) => {
            let mut depth = 0usize;
            for (k, t) in st.toks.iter().enumerate().skip(1) {
                match t.tok {
                    Tok::LParen => depth += 1,
                    Tok::RParen => {
                        depth -= 1;
                        if depth == 0 {
                            return matches!(st.toks.get(k + 1).map(|t| &t.tok), Some(Tok::Assign));
                        }
                    }
                    _ => {}
                }
            }
            false
        }
        _ => false,
    }
}

fn type_keyword(kw: &str) -> bool {
    matches!(
        kw,
        "REAL" | "INTEGER" | "LOGICAL" | "DOUBLE" | "DOUBLEPRECISION"
    )
}

/// True when the statement opens a program unit.
fn is_unit_header(st: &LogicalStmt) -> bool {
    if is_assignment(st) {
        return false;
    }
    let mut k = 0;
    while matches!(ident_at(st, k), Some("PURE" | "ELEMENTAL" | "RECURSIVE")) {
        k += 1;
    }
    match ident_at(st, k) {
        Some("PROGRAM" | "SUBROUTINE" | "FUNCTION") => true,
        Some("MODULE") => ident_at(st, k + 1) != Some("PROCEDURE"),
        Some(kw) if type_keyword(kw) => st
            .toks
            .iter()
            .any(|t| matches!(&t.tok, Tok::Ident(s) if s == "FUNCTION")),
        _ => false,
    }
}

fn unit_end_kind(st: &LogicalStmt) -> Option<Option<UnitKind>> {
    let kind_of = |s: &str| match s {
        "PROGRAM" => Some(UnitKind::Program),
        "SUBROUTINE" => Some(UnitKind::Subroutine),
        "FUNCTION" => Some(UnitKind::Function),
        "MODULE" => Some(UnitKind::Module),
        _ => None,
    };
    match first_ident(st)? {
        "END" => match ident_at(st, 1) {
            None if st.toks.len() == 1 => Some(None),
            Some(k) => kind_of(k).map(Some),
            None => None,
        },
        s => s.strip_prefix("END").and_then(kind_of).map(Some),
    }
}

#[derive(Debug)]
enum BlockEnd {
    UnitEnd,
    Contains,
    ElseIf(Expression, u32),
    Else,
    EndIf,
    EndDo,
    Label(u32),
}

struct Header {
    kind: UnitKind,
    name: String,
    params: Vec<String>,
    result_type: Option<BaseType>,
}

pub(crate) struct UnitParser<'s> {
    file: &'s str,
    stmts: &'s [LogicalStmt],
    pos: usize,
    next_id: u32,
    pub containers: Vec<Container>,
    pub source_map: BTreeMap<StmtId, SourceLoc>,
    /// (container index, first line, last line)
    spans: Vec<(usize, u32, u32)>,
    pub header_locs: HashMap<String, SourceLoc>,
}

impl<'s> UnitParser<'s> {
    pub fn new(file: &'s str, stmts: &'s [LogicalStmt], first_id: u32) -> Self {
        UnitParser {
            file,
            stmts,
            pos: 0,
            next_id: first_id,
            containers: Vec::new(),
            source_map: BTreeMap::new(),
            spans: Vec::new(),
            header_locs: HashMap::new(),
        }
    }

    pub fn next_id(&self) -> u32 {
        self.next_id
    }

    fn cur(&self) -> Option<&'s LogicalStmt> {
        self.stmts.get(self.pos)
    }

    fn cursor(&self, st: &'s LogicalStmt) -> Cur<'s> {
        Cur::new(self.file, st, 0)
    }

    fn eof_error(&self, message: &str) -> ParseError {
        let line = self.stmts.last().map(|s| s.line).unwrap_or(1);
        ParseError::Syntax {
            file: self.file.to_string(),
            line,
            column: 1,
            message: message.to_string(),
        }
    }

    fn new_statement(&mut self, line: u32, kind: StatementKind) -> Statement {
        let id = StmtId(self.next_id);
        self.next_id += 1;
        self.source_map.insert(
            id,
            SourceLoc {
                file: self.file.to_string(),
                line,
            },
        );
        Statement::new(id, kind)
    }

    pub fn parse_all(&mut self) -> Result<(), ParseError> {
        if self.stmts.is_empty() {
            return Err(ParseError::Syntax {
                file: self.file.to_string(),
                line: 1,
                column: 1,
                message: "no program units found".into(),
            });
        }
        while let Some(st) = self.cur() {
            if !is_unit_header(st) {
                return Err(self
                    .cursor(st)
                    .error("expected a program unit (PROGRAM, SUBROUTINE, FUNCTION or MODULE)"));
            }
            self.parse_unit(None)?;
        }
        Ok(())
    }

    fn parse_header(&self, st: &'s LogicalStmt) -> Result<Header, ParseError> {
        let mut c = self.cursor(st);
        let mut result_type = None;
        loop {
            if c.eat_kw("PURE") || c.eat_kw("ELEMENTAL") {
                continue;
            }
            if matches!(c.peek(), Some(Tok::Ident(s)) if s == "RECURSIVE") {
                return Err(c.unsupported("recursive procedures"));
            }
            break;
        }
        if matches!(c.peek(), Some(Tok::Ident(s)) if type_keyword(s)) {
            result_type = Some(type_spec(&mut c)?);
        }
        let kind = match c.ident("unit keyword")?.as_str() {
            "PROGRAM" => UnitKind::Program,
            "SUBROUTINE" => UnitKind::Subroutine,
            "FUNCTION" => UnitKind::Function,
            "MODULE" => UnitKind::Module,
            _ => return Err(c.error("expected a program unit")),
        };
        if result_type.is_some() && kind != UnitKind::Function {
            return Err(c.error("type prefix is only valid on FUNCTION"));
        }
        let name = c.ident("unit name")?;
        let mut params = Vec::new();
        if matches!(kind, UnitKind::Subroutine | UnitKind::Function) && c.eat(&Tok::LParen) {
            if !c.eat(&Tok::RParen) {
                loop {
                    if c.eat(&Tok::Star) {
                        return Err(c.unsupported("alternate returns"));
                    }
                    params.push(c.ident("dummy argument name")?);
                    if c.eat(&Tok::Comma) {
                        continue;
                    }
                    c.expect(&Tok::RParen, "')'")?;
                    break;
                }
            }
        } else if kind == UnitKind::Function {
            return Err(c.error("expected '(' after function name"));
        }
        if c.eat_kw("RESULT") {
            return Err(c.unsupported("RESULT clauses"));
        }
        c.end()?;
        Ok(Header {
            kind,
            name,
            params,
            result_type,
        })
    }

    fn parse_unit(&mut self, host: Option<String>) -> Result<(), ParseError> {
        let st = self.cur().expect("caller checked");
        let header = self.parse_header(st)?;
        let start_line = st.line;
        self.pos += 1;
        if self.containers.iter().any(|c| c.name == header.name) {
            return Err(self
                .cursor(st)
                .error(format!("duplicate program unit {}", header.name)));
        }
        self.header_locs.insert(
            header.name.clone(),
            SourceLoc {
                file: self.file.to_string(),
                line: start_line,
            },
        );
        let idx = self.containers.len();
        let mut container = Container::new(header.name.clone(), header.kind);
        container.params = header.params;
        container.host = host;
        if let Some(t) = header.result_type {
            container.locals.push(Decl::scalar(header.name.clone(), t));
        }
        self.containers.push(container);

        // specification part
        while let Some(st) = self.cur() {
            if is_assignment(st) || is_unit_header(st) || unit_end_kind(st).is_some() {
                break;
            }
            match first_ident(st) {
                Some(kw)
                    if SPEC_KEYWORDS.contains(&kw)
                        || UNSUPPORTED_SPEC.iter().any(|(k, _)| *k == kw) =>
                {
                    self.parse_spec(idx, st)?;
                    self.pos += 1;
                }
                _ => break,
            }
        }

        if header.kind == UnitKind::Module {
            let st = self
                .cur()
                .ok_or_else(|| self.eof_error("missing END MODULE"))?;
            if first_ident(st) == Some("CONTAINS") && st.toks.len() == 1 {
                self.pos += 1;
                loop {
                    let st = self
                        .cur()
                        .ok_or_else(|| self.eof_error("missing END MODULE"))?;
                    if unit_end_kind(st).is_some() {
                        break;
                    }
                    if !is_unit_header(st) {
                        return Err(self
                            .cursor(st)
                            .error("expected a module procedure or END MODULE"));
                    }
                    self.parse_unit(Some(header.name.clone()))?;
                }
            } else if unit_end_kind(st).is_none() {
                return Err(self
                    .cursor(st)
                    .error("executable statements are not allowed in a MODULE"));
            }
        } else {
            let mut open = Vec::new();
            let (body, end) = self.parse_block(&mut open)?;
            match end {
                BlockEnd::UnitEnd => {}
                BlockEnd::Contains => {
                    let st = self.cur().unwrap();
                    return Err(self.cursor(st).unsupported("internal procedures"));
                }
                other => {
                    let st = self.stmts[self.pos - 1..].first().unwrap();
                    return Err(self
                        .cursor(st)
                        .error(format!("unexpected {}", block_end_name(&other))));
                }
            }
            self.containers[idx].body = body;
        }

        let st = self
            .cur()
            .ok_or_else(|| self.eof_error("missing END statement"))?;
        let mut c = self.cursor(st);
        let kind = unit_end_kind(st).ok_or_else(|| c.error("expected END"))?;
        if let Some(k) = kind {
            if k != header.kind {
                return Err(c.error(format!(
                    "END {k} does not close {} {}",
                    header.kind, header.name
                )));
            }
        }
        c.next();
        if kind.is_some() && first_ident(st) == Some("END") {
            c.next();
        }
        if let Some(Tok::Ident(n)) = c.peek() {
            if *n != header.name {
                return Err(c.error(format!("END names {n} but the unit is {}", header.name)));
            }
            c.next();
        }
        c.end()?;
        self.spans.push((idx, start_line, st.line));
        self.pos += 1;
        Ok(())
    }

    fn decl_mut(&mut self, idx: usize, c: &Cur<'_>, name: &str) -> Result<&mut Decl, ParseError> {
        self.containers[idx]
            .locals
            .iter_mut()
            .find(|d| d.name == name)
            .ok_or_else(|| c.error(format!("{name} must be declared before this statement")))
    }

    fn parse_spec(&mut self, idx: usize, st: &'s LogicalStmt) -> Result<(), ParseError> {
        let mut c = self.cursor(st);
        let kw = first_ident(st).unwrap();
        if let Some((_, feature)) = UNSUPPORTED_SPEC.iter().find(|(k, _)| *k == kw) {
            return Err(c.unsupported(*feature));
        }
        match kw {
            "USE" => {
                c.next();
                let m = c.ident("module name")?;
                let uses = &mut self.containers[idx].uses;
                if !uses.contains(&m) {
                    uses.push(m);
                }
            }
            "IMPLICIT" => {
                c.next();
                if !c.eat_kw("NONE") {
                    return Err(c.unsupported("implicit typing"));
                }
                c.end()?;
            }
            "PARAMETER" => {
                c.next();
                c.expect(&Tok::LParen, "'('")?;
                loop {
                    let name = c.ident("constant name")?;
                    c.expect(&Tok::Assign, "'='")?;
                    let value = c.expr()?;
                    let d = self.decl_mut(idx, &c, &name)?;
                    d.parameter = true;
                    d.init = Some(value);
                    if c.eat(&Tok::Comma) {
                        continue;
                    }
                    c.expect(&Tok::RParen, "')'")?;
                    break;
                }
                c.end()?;
            }
            "DIMENSION" => {
                c.next();
                loop {
                    let name = c.ident("array name")?;
                    c.expect(&Tok::LParen, "'('")?;
                    let dims = dim_list(&mut c)?;
                    self.decl_mut(idx, &c, &name)?.dims = dims;
                    if !c.eat(&Tok::Comma) {
                        break;
                    }
                }
                c.end()?;
            }
            "EXTERNAL" | "INTRINSIC" | "SAVE" | "PRIVATE" | "PUBLIC" => {}
            _ => self.parse_type_decl(idx, &mut c)?,
        }
        Ok(())
    }

    fn parse_type_decl(&mut self, idx: usize, c: &mut Cur<'s>) -> Result<(), ParseError> {
        let base = type_spec(c)?;
        let mut parameter = false;
        let mut default_dims: Vec<Dim> = Vec::new();
        while c.eat(&Tok::Comma) {
            let attr = c.ident("attribute")?;
            match attr.as_str() {
                "PARAMETER" => parameter = true,
                "DIMENSION" => {
                    c.expect(&Tok::LParen, "'('")?;
                    default_dims = dim_list(c)?;
                }
                "INTENT" => {
                    c.expect(&Tok::LParen, "'('")?;
                    c.ident("intent")?;
                    c.expect(&Tok::RParen, "')'")?;
                }
                "SAVE" | "EXTERNAL" | "INTRINSIC" | "OPTIONAL" | "PRIVATE" | "PUBLIC" => {}
                "ALLOCATABLE" => return Err(c.unsupported("allocatable arrays")),
                "POINTER" | "TARGET" => return Err(c.unsupported("pointers")),
                other => return Err(c.error(format!("unknown attribute {other}"))),
            }
        }
        c.eat(&Tok::DColon);
        loop {
            let name = c.ident("variable name")?;
            let mut dims = default_dims.clone();
            if c.eat(&Tok::LParen) {
                dims = dim_list(c)?;
            }
            let init = if c.eat(&Tok::Assign) {
                Some(c.expr()?)
            } else {
                None
            };
            if parameter && init.is_none() {
                return Err(c.error(format!("named constant {name} needs a value")));
            }
            let locals = &mut self.containers[idx].locals;
            if locals.iter().any(|d| d.name == name) {
                return Err(c.error(format!("{name} is declared twice")));
            }
            locals.push(Decl {
                name,
                base_type: base,
                dims,
                parameter,
                init,
            });
            if !c.eat(&Tok::Comma) {
                break;
            }
        }
        c.end()
    }

    fn parse_block(
        &mut self,
        open: &mut Vec<u32>,
    ) -> Result<(Vec<Statement>, BlockEnd), ParseError> {
        let mut body = Vec::new();
        loop {
            let st = self
                .cur()
                .ok_or_else(|| self.eof_error("unexpected end of input"))?;
            if unit_end_kind(st).is_some() {
                return Ok((body, BlockEnd::UnitEnd));
            }
            if is_unit_header(st) {
                return Err(self
                    .cursor(st)
                    .error("missing END before a new program unit"));
            }
            let mut c = self.cursor(st);
            match first_ident(st) {
                Some("CONTAINS") if st.toks.len() == 1 => return Ok((body, BlockEnd::Contains)),
                Some("ELSEIF") | Some("ELSE") if !is_assignment(st) => {
                    c.next();
                    let is_elseif = first_ident(st) == Some("ELSEIF") || c.eat_kw("IF");
                    if is_elseif {
                        c.expect(&Tok::LParen, "'('")?;
                        let cond = c.expr()?;
                        c.expect(&Tok::RParen, "')'")?;
                        if !c.eat_kw("THEN") {
                            return Err(c.error("expected THEN"));
                        }
                        c.end()?;
                        self.pos += 1;
                        return Ok((body, BlockEnd::ElseIf(cond, st.line)));
                    }
                    c.end()?;
                    self.pos += 1;
                    return Ok((body, BlockEnd::Else));
                }
                Some("ENDIF") if st.toks.len() == 1 => {
                    self.pos += 1;
                    return Ok((body, BlockEnd::EndIf));
                }
                Some("ENDDO") if st.toks.len() == 1 => {
                    self.pos += 1;
                    return Ok((body, BlockEnd::EndDo));
                }
                Some("END") => {
                    c.next();
                    let end = if c.eat_kw("IF") {
                        BlockEnd::EndIf
                    } else if c.eat_kw("DO") {
                        BlockEnd::EndDo
                    } else {
                        return Err(c.error("unrecognized END statement"));
                    };
                    c.end()?;
                    self.pos += 1;
                    return Ok((body, end));
                }
                Some(kw)
                    if !is_assignment(st)
                        && (SPEC_KEYWORDS.contains(&kw)
                            || UNSUPPORTED_SPEC.iter().any(|(k, _)| *k == kw)) =>
                {
                    if let Some((_, feature)) = UNSUPPORTED_SPEC.iter().find(|(k, _)| *k == kw) {
                        return Err(c.unsupported(*feature));
                    }
                    return Err(c.error("declaration after executable statement"));
                }
                _ => {}
            }
            let label = st.label;
            let (stmt, hit) = self.parse_executable(st, open)?;
            body.extend(stmt);
            if let Some(l) = hit.or(label) {
                if open.contains(&l) {
                    return Ok((body, BlockEnd::Label(l)));
                }
            }
        }
    }

    fn parse_executable(
        &mut self,
        st: &'s LogicalStmt,
        open: &mut Vec<u32>,
    ) -> Result<(Option<Statement>, Option<u32>), ParseError> {
        let mut c = self.cursor(st);
        match first_ident(st) {
            Some("IF") if !is_assignment(st) => {
                c.next();
                c.expect(&Tok::LParen, "'('")?;
                let cond = c.expr()?;
                c.expect(&Tok::RParen, "')'")?;
                if c.eat_kw("THEN") {
                    c.end()?;
                    self.pos += 1;
                    let s = self.parse_if_rest(cond, st.line, open)?;
                    return Ok((Some(s), None));
                }
                if c.at_end() {
                    return Err(c.error("expected THEN or a statement after IF condition"));
                }
                if matches!(c.peek(), Some(Tok::Int(_))) {
                    return Err(c.unsupported("arithmetic IF"));
                }
                let inner = self.simple_statement(&mut c)?;
                self.pos += 1;
                let then_body: Vec<Statement> = inner
                    .into_iter()
                    .map(|k| self.new_statement(st.line, k))
                    .collect();
                let s = self.new_statement(
                    st.line,
                    StatementKind::If {
                        cond,
                        then_body,
                        else_body: Vec::new(),
                    },
                );
                Ok((Some(s), None))
            }
            Some("DO") if !is_assignment(st) => self.parse_do(st, open),
            _ => {
                let kind = self.simple_statement(&mut c)?;
                self.pos += 1;
                Ok((kind.map(|k| self.new_statement(st.line, k)), None))
            }
        }
    }

    /// Statements that fit on one line and may follow a logical IF.
    fn simple_statement(&mut self, c: &mut Cur<'s>) -> Result<Option<StatementKind>, ParseError> {
        let start = c.i;
        let kw = match c.peek() {
            Some(Tok::Ident(s)) => s.as_str(),
            _ => return Err(c.error("expected a statement")),
        };
        // assignment?
        let mut probe = Cur::new(c.file, c.stmt, start + 1);
        let assign_like = match probe.peek() {
            Some(Tok::Assign) => true,
            Some(Tok::LParen) => {
                probe.next();
                probe.args().is_ok() && probe.peek() == Some(&Tok::Assign)
            }
            _ => false,
        };
        if assign_like {
            let target = c.ident("variable")?;
            let mut indices = Vec::new();
            if c.eat(&Tok::LParen) {
                indices = c.args()?;
            }
            c.expect(&Tok::Assign, "'='")?;
            let rhs = c.expr()?;
            c.end()?;
            return Ok(Some(StatementKind::Assign {
                target,
                indices,
                rhs,
            }));
        }
        if IO_KEYWORDS.contains(&kw) {
            return Ok(Some(StatementKind::OpaqueIo {
                text: c.rest_text(),
            }));
        }
        if let Some((_, feature)) = UNSUPPORTED_EXEC.iter().find(|(k, _)| *k == kw) {
            return Err(c.unsupported(*feature));
        }
        match kw {
            "CALL" => {
                c.next();
                let callee = c.ident("subroutine name")?;
                let args = if c.eat(&Tok::LParen) {
                    c.args()?
                } else {
                    Vec::new()
                };
                c.end()?;
                Ok(Some(StatementKind::Call { callee, args }))
            }
            "RETURN" => {
                c.next();
                c.end()?;
                Ok(Some(StatementKind::Return))
            }
            "STOP" => Ok(Some(StatementKind::Return)),
            "CONTINUE" => {
                c.next();
                c.end()?;
                Ok(None)
            }
            "IF" | "DO" => Err(c.error("block construct not allowed here")),
            _ => Err(c.error(format!("unrecognized statement '{}'", c.rest_text()))),
        }
    }

    fn parse_if_rest(
        &mut self,
        cond: Expression,
        line: u32,
        open: &mut Vec<u32>,
    ) -> Result<Statement, ParseError> {
        let (then_body, end) = self.parse_block(open)?;
        let else_body = match end {
            BlockEnd::EndIf => Vec::new(),
            BlockEnd::Else => {
                let (else_body, end2) = self.parse_block(open)?;
                match end2 {
                    BlockEnd::EndIf => else_body,
                    other => return Err(self.block_error(line, "END IF", &other)),
                }
            }
            BlockEnd::ElseIf(c2, l2) => vec![self.parse_if_rest(c2, l2, open)?],
            other => return Err(self.block_error(line, "END IF", &other)),
        };
        Ok(self.new_statement(
            line,
            StatementKind::If {
                cond,
                then_body,
                else_body,
            },
        ))
    }

    fn block_error(&self, line: u32, expected: &str, got: &BlockEnd) -> ParseError {
        ParseError::Syntax {
            file: self.file.to_string(),
            line,
            column: 1,
            message: format!(
                "expected {expected} for block opened here, found {}",
                block_end_name(got)
            ),
        }
    }

    fn parse_do(
        &mut self,
        st: &'s LogicalStmt,
        open: &mut Vec<u32>,
    ) -> Result<(Option<Statement>, Option<u32>), ParseError> {
        let mut c = self.cursor(st);
        c.next();
        if c.at_end() {
            return Err(c.unsupported("DO without loop control"));
        }
        if c.eat_kw("WHILE") {
            return Err(c.unsupported("DO WHILE"));
        }
        let label = match c.peek() {
            Some(Tok::Int(s)) => {
                c.next();
                c.eat(&Tok::Comma);
                Some(s.parse::<u32>().map_err(|_| c.error("bad label"))?)
            }
            _ => None,
        };
        if c.eat_kw("WHILE") {
            return Err(c.unsupported("DO WHILE"));
        }
        let var = c.ident("loop variable")?;
        c.expect(&Tok::Assign, "'='")?;
        let lo = c.expr()?;
        c.expect(&Tok::Comma, "','")?;
        let hi = c.expr()?;
        let stride = if c.eat(&Tok::Comma) {
            Some(c.expr()?)
        } else {
            None
        };
        c.end()?;
        self.pos += 1;
        let body = match label {
            Some(l) => {
                open.push(l);
                let (body, end) = self.parse_block(open)?;
                open.pop();
                match end {
                    BlockEnd::Label(x) if x == l => body,
                    other => {
                        return Err(self.block_error(
                            st.line,
                            &format!("statement labelled {l}"),
                            &other,
                        ))
                    }
                }
            }
            None => {
                let (body, end) = self.parse_block(open)?;
                match end {
                    BlockEnd::EndDo => body,
                    other => return Err(self.block_error(st.line, "END DO", &other)),
                }
            }
        };
        let s = self.new_statement(
            st.line,
            StatementKind::Do {
                var,
                lo,
                hi,
                stride,
                body,
            },
        );
        Ok((Some(s), label))
    }

    /// Spans of units that are not module procedures, in source order.
    pub fn top_level_spans(&self) -> Vec<(usize, u32, u32)> {
        let mut v: Vec<_> = self
            .spans
            .iter()
            .copied()
            .filter(|(idx, _, _)| self.containers[*idx].host.is_none())
            .collect();
        v.sort_by_key(|s| s.1);
        v
    }

    /// Attach comment blocks of `text` to the innermost unit containing their anchor.
    pub fn attach_comments(&mut self, text: &str) {
        for block in extract_comments(text) {
            let best = self
                .spans
                .iter()
                .filter(|(_, lo, hi)| *lo <= block.anchor && block.anchor <= *hi)
                .min_by_key(|(_, lo, hi)| hi - lo)
                .map(|(idx, _, _)| *idx);
            if let Some(idx) = best {
                self.containers[idx].comments.push(block);
            }
        }
    }
}

fn block_end_name(end: &BlockEnd) -> &'static str {
    match end {
        BlockEnd::UnitEnd => "END of unit",
        BlockEnd::Contains => "CONTAINS",
        BlockEnd::ElseIf(..) => "ELSE IF",
        BlockEnd::Else => "ELSE",
        BlockEnd::EndIf => "END IF",
        BlockEnd::EndDo => "END DO",
        BlockEnd::Label(_) => "a DO termination label",
    }
}

fn type_spec(c: &mut Cur<'_>) -> Result<BaseType, ParseError> {
    let kw = c.ident("type")?;
    let base = match kw.as_str() {
        "REAL" => BaseType::Real,
        "INTEGER" => BaseType::Integer,
        "LOGICAL" => BaseType::Logical,
        "DOUBLEPRECISION" => BaseType::Real,
        "DOUBLE" => {
            if !c.eat_kw("PRECISION") {
                return Err(c.error("expected PRECISION"));
            }
            BaseType::Real
        }
        _ => return Err(c.error("expected a type")),
    };
    if c.eat(&Tok::Star) {
        match c.next() {
            Some(Tok::Int(_)) => {}
            _ => return Err(c.error("expected kind length")),
        }
    } else if c.peek() == Some(&Tok::LParen) {
        let mut depth = 0;
        loop {
            match c.next() {
                Some(Tok::LParen) => depth += 1,
                Some(Tok::RParen) => {
                    depth -= 1;
                    if depth == 0 {
                        break;
                    }
                }
                Some(_) => {}
                None => return Err(c.error("unbalanced kind selector")),
            }
        }
    }
    Ok(base)
}

/// Dimension specs after `(`, through `)`.
fn dim_list(c: &mut Cur<'_>) -> Result<Vec<Dim>, ParseError> {
    let mut dims = Vec::new();
    loop {
        if c.peek() == Some(&Tok::Star) {
            return Err(c.unsupported("assumed-size arrays"));
        }
        if c.peek() == Some(&Tok::Colon) {
            return Err(c.unsupported("assumed-shape arrays"));
        }
        let first = c.expr()?;
        let dim = if c.eat(&Tok::Colon) {
            if c.peek() == Some(&Tok::Star) {
                return Err(c.unsupported("assumed-size arrays"));
            }
            Dim {
                lower: first,
                upper: c.expr()?,
            }
        } else {
            Dim {
                lower: Expression::num("1"),
                upper: first,
            }
        };
        dims.push(dim);
        if c.eat(&Tok::Comma) {
            continue;
        }
        c.expect(&Tok::RParen, "')'")?;
        return Ok(dims);
    }
}

/// Rewrite provisional `NAME(args)` calls into array references where NAME
/// is a visible array, then run validation and turn errors into syntax errors.
pub(crate) fn finish(
    mut program: PairProgram,
    header_locs: &HashMap<String, SourceLoc>,
) -> Result<PairProgram, ParseError> {
    let arrays: Vec<HashSet<String>> = program
        .containers
        .iter()
        .map(|c| {
            let mut set: HashSet<String> = c
                .locals
                .iter()
                .filter(|d| d.is_array())
                .map(|d| d.name.clone())
                .collect();
            for (_, d) in program.module_names(c) {
                if d.is_array() && c.decl(&d.name).is_none() {
                    set.insert(d.name.clone());
                }
            }
            set
        })
        .collect();
    for (c, arrays) in program.containers.iter_mut().zip(&arrays) {
        let mut fix = |e: &mut Expression| {
            e.walk_mut(&mut |sub| {
                if let Expression::Call { name, args } = sub {
                    if arrays.contains(name.as_str()) {
                        *sub = Expression::indexed(name.clone(), std::mem::take(args));
                    }
                }
            })
        };
        for d in &mut c.locals {
            for dim in &mut d.dims {
                fix(&mut dim.lower);
                fix(&mut dim.upper);
            }
            if let Some(i) = &mut d.init {
                fix(i);
            }
        }
        fix_body(&mut c.body, &mut fix);
    }
    for c in &program.containers {
        if let Some(name) = find_reserved_call(c) {
            let loc = header_locs.get(&c.name);
            return Err(ParseError::Syntax {
                file: loc.map(|l| l.file.clone()).unwrap_or_default(),
                line: loc.map(|l| l.line).unwrap_or(1),
                column: 1,
                message: format!("{name} is both an intrinsic and a program unit"),
            });
        }
    }
    if let Some(d) = validate(&program)
        .into_iter()
        .find(|d| d.severity == Severity::Error)
    {
        let loc = d.location.clone().or_else(|| {
            d.container
                .as_ref()
                .and_then(|c| header_locs.get(c).cloned())
        });
        return Err(ParseError::Syntax {
            file: loc.as_ref().map(|l| l.file.clone()).unwrap_or_default(),
            line: loc.map(|l| l.line).unwrap_or(1),
            column: 1,
            message: d.message,
        });
    }
    Ok(program)
}

fn find_reserved_call(c: &Container) -> Option<String> {
    if is_intrinsic(&c.name) && c.kind == UnitKind::Function {
        return Some(c.name.clone());
    }
    None
}

fn fix_body(body: &mut [Statement], fix: &mut impl FnMut(&mut Expression)) {
    for s in body {
        match &mut s.kind {
            StatementKind::Assign { indices, rhs, .. } => {
                indices.iter_mut().for_each(&mut *fix);
                fix(rhs);
            }
            StatementKind::If {
                cond,
                then_body,
                else_body,
            } => {
                fix(cond);
                fix_body(then_body, fix);
                fix_body(else_body, fix);
            }
            StatementKind::Do {
                lo,
                hi,
                stride,
                body,
                ..
            } => {
                fix(lo);
                fix(hi);
                if let Some(s) = stride {
                    fix(s);
                }
                fix_body(body, fix);
            }
            StatementKind::Call { args, .. } => args.iter_mut().for_each(&mut *fix),
            StatementKind::Return | StatementKind::OpaqueIo { .. } => {}
        }
    }
}
