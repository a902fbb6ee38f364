//! Front-end for a free-form Fortran subset.

mod comments;
mod lexer;
mod parser;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use comments::{extract_comments, CommentBlock, Placement};

use crate::ir::{PairProgram, UnitKind};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("{file}:{line}:{column}: syntax error: {message}")]
    Syntax {
        file: String,
        line: u32,
        column: u32,
        message: String,
    },
    #[error("{file}:{line}:{column}: unsupported feature: {feature}")]
    UnsupportedFeature {
        file: String,
        line: u32,
        column: u32,
        feature: String,
    },
}

impl ParseError {
    /// Stable short code: `E-SYNTAX` or `E-UNSUPPORTED`.
    pub fn code(&self) -> &'static str {
        match self {
            ParseError::Syntax { .. } => "E-SYNTAX",
            ParseError::UnsupportedFeature { .. } => "E-UNSUPPORTED",
        }
    }

    pub fn line(&self) -> u32 {
        match self {
            ParseError::Syntax { line, .. } | ParseError::UnsupportedFeature { line, .. } => *line,
        }
    }

    pub fn column(&self) -> u32 {
        match self {
            ParseError::Syntax { column, .. } | ParseError::UnsupportedFeature { column, .. } => {
                *column
            }
        }
    }
}

/// One top-level program unit as it appears in a file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceUnit {
    pub path: String,
    pub kind: UnitKind,
    pub name: String,
    pub text: String,
}

pub const SOURCE_EXTENSIONS: &[&str] = &["f", "f90", "for"];

/// Parse one source text. Positions in errors use the file name `<source>`.
pub fn parse_source(text: &str) -> Result<PairProgram, ParseError> {
    parse_named("<source>", text)
}

/// Parse one source text, reporting positions against `file`.
pub fn parse_named(file: &str, text: &str) -> Result<PairProgram, ParseError> {
    parse_sources(&[(file.to_string(), text.to_string())])
}

/// Parse several files into one program; names resolve across files.
pub fn parse_sources(files: &[(String, String)]) -> Result<PairProgram, ParseError> {
    let mut program = PairProgram::default();
    let mut header_locs = std::collections::HashMap::new();
    let mut next_id = 0;
    for (file, text) in files {
        let stmts = parser::logical_statements(file, text)?;
        let mut p = parser::UnitParser::new(file, &stmts, next_id);
        p.parse_all()?;
        p.attach_comments(text);
        next_id = p.next_id();
        for c in &p.containers {
            if program.containers.iter().any(|o| o.name == c.name) {
                let loc = &p.header_locs[&c.name];
                return Err(ParseError::Syntax {
                    file: loc.file.clone(),
                    line: loc.line,
                    column: 1,
                    message: format!("duplicate program unit {}", c.name),
                });
            }
        }
        program.containers.extend(p.containers);
        program.source_map.extend(p.source_map);
        header_locs.extend(p.header_locs);
    }
    parser::finish(program, &header_locs)
}

/// Read a source file as UTF-8, mapping invalid input through Latin-1.
pub fn read_source(path: &Path) -> std::io::Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(match String::from_utf8(bytes) {
        Ok(s) => s,
        Err(e) => e.into_bytes().iter().map(|&b| b as char).collect(),
    })
}

/// Read and parse a set of files.
pub fn parse_files(paths: &[impl AsRef<Path>]) -> Result<PairProgram, FileError> {
    let mut files = Vec::new();
    for p in paths {
        let p = p.as_ref();
        let text = read_source(p).map_err(|e| FileError::Io(p.display().to_string(), e))?;
        files.push((p.display().to_string(), text));
    }
    Ok(parse_sources(&files)?)
}

#[derive(Debug, thiserror::Error)]
pub enum FileError {
    #[error("{0}: {1}")]
    Io(String, std::io::Error),
    #[error(transparent)]
    Parse(#[from] ParseError),
}

/// Split a file into its top-level program units without resolving names.
pub fn source_units(path: &str, text: &str) -> Result<Vec<SourceUnit>, ParseError> {
    let stmts = parser::logical_statements(path, text)?;
    let mut p = parser::UnitParser::new(path, &stmts, 0);
    p.parse_all()?;
    let lines: Vec<&str> = text.lines().collect();
    let mut out = Vec::new();
    for (idx, lo, hi) in p.top_level_spans() {
        let c = &p.containers[idx];
        out.push(SourceUnit {
            path: path.to_string(),
            kind: c.kind,
            name: c.name.clone(),
            text: lines[(lo - 1) as usize..hi as usize].join("\n"),
        });
    }
    Ok(out)
}
