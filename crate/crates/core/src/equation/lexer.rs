use super::ParseError;

#[derive(Debug, Clone, PartialEq)]
pub(super) enum Tok {
    /// A run of letters and digits starting with a letter.
    Run(String),
    Num(String),
    /// `\name`, without the backslash.
    Cmd(String),
    Sym(char),
}

#[derive(Debug, Clone, PartialEq)]
pub(super) struct Token {
    pub tok: Tok,
    pub pos: usize,
}

/// Commands that only affect spacing or layout.
const IGNORED: &[&str] = &[
    "displaystyle",
    "textstyle",
    "quad",
    "qquad",
    "nonumber",
    "notag",
    ",",
    ";",
    ":",
    "!",
    " ",
];

/// Commands whose braced argument is metadata, dropped with the command.
const DROPPED_WITH_ARG: &[&str] = &["label", "tag", "tag*", "begin", "end"];

fn skip_group(b: &[u8], mut i: usize) -> Result<usize, ParseError> {
    while i < b.len() && b[i].is_ascii_whitespace() {
        i += 1;
    }
    if i >= b.len() || b[i] != b'{' {
        return Ok(i);
    }
    let start = i;
    let mut depth = 0;
    while i < b.len() {
        match b[i] {
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Ok(i + 1);
                }
            }
            _ => {}
        }
        i += 1;
    }
    Err(ParseError::new(start, "unbalanced braces"))
}

pub(super) fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    let b = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    // after ^ or _ without braces only one character is taken
    let mut single = false;
    while i < b.len() {
        let c = b[i];
        let pos = i;
        if c.is_ascii_whitespace() || c == b'~' || c == b'&' || c == b'$' {
            i += 1;
            continue;
        }
        let one = std::mem::take(&mut single);
        if c == b'\\' {
            i += 1;
            if i >= b.len() {
                return Err(ParseError::new(pos, "dangling backslash"));
            }
            let name = if b[i].is_ascii_alphabetic() {
                let s = i;
                while i < b.len() && b[i].is_ascii_alphabetic() {
                    i += 1;
                }
                if i < b.len() && b[i] == b'*' {
                    i += 1;
                }
                &src[s..i]
            } else {
                i += 1;
                &src[i - 1..i]
            };
            match name {
                "\\" | "[" | "]" => {}
                "{" => out.push(Token {
                    tok: Tok::Sym('{'),
                    pos,
                }),
                "}" => out.push(Token {
                    tok: Tok::Sym('}'),
                    pos,
                }),
                "|" => out.push(Token {
                    tok: Tok::Sym('|'),
                    pos,
                }),
                n if DROPPED_WITH_ARG.contains(&n) => i = skip_group(b, i)?,
                n if IGNORED.contains(&n) => {}
                // \left. and \right. are invisible delimiters
                "left" | "right" if i < b.len() && b[i] == b'.' => i += 1,
                n => out.push(Token {
                    tok: Tok::Cmd(n.to_string()),
                    pos,
                }),
            }
            continue;
        }
        if c.is_ascii_alphabetic() {
            let s = i;
            i += 1;
            if !one {
                while i < b.len() && b[i].is_ascii_alphanumeric() {
                    i += 1;
                }
            }
            out.push(Token {
                tok: Tok::Run(src[s..i].to_string()),
                pos,
            });
            continue;
        }
        if c.is_ascii_digit() || (c == b'.' && b.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            let s = i;
            i += 1;
            if !one {
                while i < b.len() && b[i].is_ascii_digit() {
                    i += 1;
                }
                if i + 1 < b.len()
                    && b[i] == b'.'
                    && b[i + 1].is_ascii_digit()
                    && !src[s..i].contains('.')
                {
                    i += 1;
                    while i < b.len() && b[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            out.push(Token {
                tok: Tok::Num(src[s..i].to_string()),
                pos,
            });
            continue;
        }
        if !c.is_ascii() {
            let ch = src[i..].chars().next().unwrap();
            return Err(ParseError::new(pos, format!("unexpected character '{ch}'")));
        }
        if c == b'^' || c == b'_' {
            let mut j = i + 1;
            while j < b.len() && b[j].is_ascii_whitespace() {
                j += 1;
            }
            single = j < b.len() && b[j] != b'{';
        }
        i += 1;
        match c {
            b'+' | b'-' | b'*' | b'/' | b'=' | b'(' | b')' | b'[' | b']' | b'{' | b'}' | b'^'
            | b'_' | b',' | b'|' | b'<' | b'>' | b'.' => out.push(Token {
                tok: Tok::Sym(c as char),
                pos,
            }),
            _ => {
                return Err(ParseError::new(
                    pos,
                    format!("unexpected character '{}'", c as char),
                ))
            }
        }
    }
    // trailing sentence punctuation after a displayed equation
    while matches!(
        out.last(),
        Some(Token {
            tok: Tok::Sym('.' | ','),
            ..
        })
    ) {
        out.pop();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<Tok> {
        tokenize(s).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn runs_numbers_commands() {
        assert_eq!(
            toks("EMP2 \\cdot 0.104x"),
            vec![
                Tok::Run("EMP2".into()),
                Tok::Cmd("cdot".into()),
                Tok::Num("0.104".into()),
                Tok::Run("x".into())
            ]
        );
    }

    #[test]
    fn single_character_scripts() {
        assert_eq!(
            toks("x^23"),
            vec![
                Tok::Run("x".into()),
                Tok::Sym('^'),
                Tok::Num("2".into()),
                Tok::Num("3".into())
            ]
        );
        assert_eq!(toks("x_ab").len(), 4);
    }

    #[test]
    fn labels_and_spacing_vanish() {
        assert_eq!(toks("a \\label{eq:a} \\, = b \\tag{3}."), toks("a=b"));
        assert_eq!(toks("\\begin{equation} a \\end{equation}"), toks("a"));
    }
}
