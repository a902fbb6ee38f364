use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Placement {
    Header,
    Inline,
    Trailing,
}

/// Contiguous comment lines with the marker stripped, anchored to a code line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommentBlock {
    pub lines: Vec<String>,
    pub anchor: u32,
    pub placement: Placement,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum LineClass<'a> {
    Blank,
    Comment(&'a str),
    Code {
        code: &'a str,
        inline: Option<&'a str>,
    },
}

/// `C`/`c` in column 1 starts a fixed-form comment unless the line reads as
/// code: an identifier starting with C, or an assignment to a variable `C`.
fn fixed_form_c_comment(line: &str) -> bool {
    let mut chars = line.chars();
    if !matches!(chars.next(), Some('C' | 'c')) {
        return false;
    }
    let rest = chars.as_str();
    match rest.chars().next() {
        None => true,
        Some(ch) if ch.is_ascii_alphanumeric() || ch == '_' => false,
        Some(_) => {
            let t = rest.trim_start();
            !(t.starts_with('=') && !t.starts_with("==") || t.starts_with('('))
        }
    }
}

pub(crate) fn classify(line: &str) -> LineClass<'_> {
    let line = line.trim_end_matches(['\r', '\n']);
    if line.trim().is_empty() {
        return LineClass::Blank;
    }
    if let Some(rest) = line.strip_prefix('*') {
        return LineClass::Comment(rest.trim());
    }
    if fixed_form_c_comment(line) {
        return LineClass::Comment(line[1..].trim());
    }
    let trimmed = line.trim_start();
    if let Some(rest) = trimmed.strip_prefix('!') {
        return LineClass::Comment(rest.trim());
    }
    match inline_bang(line) {
        Some(i) => LineClass::Code {
            code: &line[..i],
            inline: Some(line[i + 1..].trim()),
        },
        None => LineClass::Code {
            code: line,
            inline: None,
        },
    }
}

/// Byte offset of a `!` outside string literals.
fn inline_bang(line: &str) -> Option<usize> {
    let mut quote: Option<char> = None;
    for (i, c) in line.char_indices() {
        match quote {
            Some(q) if c == q => quote = None,
            Some(_) => {}
            None if c == '\'' || c == '"' => quote = Some(c),
            None if c == '!' => return Some(i),
            None => {}
        }
    }
    None
}

/// Group every comment in `text` into blocks.
///
/// Full-line comments are grouped by contiguity (a blank line ends a group)
/// and anchored as HEADER to the next code line; end-of-line comments become
/// INLINE blocks on their own line; groups after the last code line are
/// TRAILING and anchored to that line.
pub fn extract_comments(text: &str) -> Vec<CommentBlock> {
    let mut out = Vec::new();
    let mut pending: Vec<(u32, Vec<String>)> = Vec::new();
    let mut open = false;
    let mut last_code: Option<u32> = None;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i as u32 + 1;
        match classify(raw) {
            LineClass::Blank => open = false,
            LineClass::Comment(c) => {
                if open {
                    pending.last_mut().unwrap().1.push(c.to_string());
                } else {
                    pending.push((line_no, vec![c.to_string()]));
                    open = true;
                }
            }
            LineClass::Code { inline, .. } => {
                open = false;
                for (_, lines) in pending.drain(..) {
                    out.push(CommentBlock {
                        lines,
                        anchor: line_no,
                        placement: Placement::Header,
                    });
                }
                if let Some(c) = inline {
                    out.push(CommentBlock {
                        lines: vec![c.to_string()],
                        anchor: line_no,
                        placement: Placement::Inline,
                    });
                }
                last_code = Some(line_no);
            }
        }
    }
    for (first, lines) in pending {
        out.push(CommentBlock {
            lines,
            anchor: last_code.unwrap_or(first),
            placement: Placement::Trailing,
        });
    }
    out
}
