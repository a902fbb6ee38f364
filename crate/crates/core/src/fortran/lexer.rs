//! Tokenizer for one logical Fortran statement.

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Ident(String),
    Int(String),
    Real(String),
    Str(String),
    True,
    False,
    Plus,
    Minus,
    Star,
    Slash,
    Pow,
    LParen,
    RParen,
    Comma,
    Assign,
    DColon,
    Colon,
    Lt,
    Le,
    Gt,
    Ge,
    EqEq,
    Ne,
    And,
    Or,
    Not,
    Eqv,
    Neqv,
    /// Tokens outside the subset (`%`, `//`, `=>`).
    Other(String),
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Token {
    pub tok: Tok,
    /// 0-based char column within the statement text.
    pub col: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LexError {
    pub col: u32,
    pub message: String,
}

fn dotted(word: &str) -> Option<Tok> {
    Some(match word {
        "EQ" => Tok::EqEq,
        "NE" => Tok::Ne,
        "LT" => Tok::Lt,
        "LE" => Tok::Le,
        "GT" => Tok::Gt,
        "GE" => Tok::Ge,
        "AND" => Tok::And,
        "OR" => Tok::Or,
        "NOT" => Tok::Not,
        "EQV" => Tok::Eqv,
        "NEQV" => Tok::Neqv,
        "TRUE" => Tok::True,
        "FALSE" => Tok::False,
        _ => return None,
    })
}

/// If `chars[i]` is '.', try to read a dotted operator like `.GT.`.
fn dotted_at(chars: &[char], i: usize) -> Option<(Tok, usize)> {
    if chars.get(i) != Some(&'.') {
        return None;
    }
    let mut j = i + 1;
    while j < chars.len() && chars[j].is_ascii_alphabetic() {
        j += 1;
    }
    if j == i + 1 || chars.get(j) != Some(&'.') {
        return None;
    }
    let word: String = chars[i + 1..j]
        .iter()
        .collect::<String>()
        .to_ascii_uppercase();
    dotted(&word).map(|t| (t, j + 1))
}

/// Rewrite a literal with an exponent as plain decimal text, exactly.
pub(crate) fn plain_decimal(int_part: &str, frac_part: &str, exponent: i64) -> String {
    let digits = format!("{int_part}{frac_part}");
    let point = int_part.len() as i64 + exponent;
    let mut s = if point <= 0 {
        format!("0.{}{}", "0".repeat((-point) as usize), digits)
    } else if point as usize >= digits.len() {
        format!("{}{}.0", digits, "0".repeat(point as usize - digits.len()))
    } else {
        let p = point as usize;
        format!("{}.{}", &digits[..p], &digits[p..])
    };
    let lead = s.find('.').unwrap_or(s.len());
    let zeros = s[..lead].chars().take_while(|&c| c == '0').count();
    let strip = zeros.min(lead.saturating_sub(1));
    s.drain(..strip);
    if s.ends_with('.') {
        s.push('0');
    }
    s
}

pub(crate) fn tokenize(text: &str) -> Result<Vec<Token>, LexError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i as u32;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c.is_ascii_alphabetic() {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            out.push(Token {
                tok: Tok::Ident(word.to_ascii_uppercase()),
                col,
            });
            continue;
        }
        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()))
        {
            let (tok, next) = number(&chars, i).map_err(|message| LexError { col, message })?;
            out.push(Token { tok, col });
            i = next;
            continue;
        }
        if let Some((tok, next)) = dotted_at(&chars, i) {
            out.push(Token { tok, col });
            i = next;
            continue;
        }
        if c == '\'' || c == '"' {
            let mut j = i + 1;
            let mut s = String::new();
            loop {
                match chars.get(j) {
                    None => {
                        return Err(LexError {
                            col,
                            message: "unterminated string literal".into(),
                        })
                    }
                    Some(&q) if q == c => {
                        if chars.get(j + 1) == Some(&c) {
                            s.push(c);
                            j += 2;
                        } else {
                            j += 1;
                            break;
                        }
                    }
                    Some(&o) => {
                        s.push(o);
                        j += 1;
                    }
                }
            }
            out.push(Token {
                tok: Tok::Str(s),
                col,
            });
            i = j;
            continue;
        }
        let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
        let (tok, len) = match two.as_str() {
            "**" => (Tok::Pow, 2),
            "/=" => (Tok::Ne, 2),
            "==" => (Tok::EqEq, 2),
            "<=" => (Tok::Le, 2),
            ">=" => (Tok::Ge, 2),
            "::" => (Tok::DColon, 2),
            "//" | "=>" => (Tok::Other(two.clone()), 2),
            _ => match c {
                '+' => (Tok::Plus, 1),
                '-' => (Tok::Minus, 1),
                '*' => (Tok::Star, 1),
                '/' => (Tok::Slash, 1),
                '(' => (Tok::LParen, 1),
                ')' => (Tok::RParen, 1),
                ',' => (Tok::Comma, 1),
                '=' => (Tok::Assign, 1),
                ':' => (Tok::Colon, 1),
                '<' => (Tok::Lt, 1),
                '>' => (Tok::Gt, 1),
                '%' => (Tok::Other("%".into()), 1),
                other => {
                    return Err(LexError {
                        col,
                        message: format!("unexpected character '{other}'"),
                    })
                }
            },
        };
        out.push(Token { tok, col });
        i += len;
    }
    Ok(out)
}

fn number(chars: &[char], start: usize) -> Result<(Tok, usize), String> {
    let mut i = start;
    let digits = |i: &mut usize| {
        let s = *i;
        while *i < chars.len() && chars[*i].is_ascii_digit() {
            *i += 1;
        }
        chars[s..*i].iter().collect::<String>()
    };
    let int_part = digits(&mut i);
    let mut frac_part = None;
    if chars.get(i) == Some(&'.') && dotted_at(chars, i).is_none() {
        i += 1;
        frac_part = Some(digits(&mut i));
    }
    let mut exponent = None;
    if let Some(e) = chars.get(i) {
        if matches!(e, 'E' | 'e' | 'D' | 'd') {
            let mut j = i + 1;
            let mut sign = 1i64;
            if let Some(s) = chars.get(j) {
                if *s == '+' || *s == '-' {
                    if *s == '-' {
                        sign = -1;
                    }
                    j += 1;
                }
            }
            if chars.get(j).is_some_and(|d| d.is_ascii_digit()) {
                let mut k = j;
                let exp_digits = digits(&mut k);
                let value: i64 = exp_digits
                    .parse()
                    .map_err(|_| "exponent out of range".to_string())?;
                if value > 4000 {
                    return Err("exponent out of range".into());
                }
                exponent = Some(sign * value);
                i = k;
            }
        }
    }
    // kind suffix such as 1.0_8
    if chars.get(i) == Some(&'_') {
        i += 1;
        while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
            i += 1;
        }
    }
    let int_part = if int_part.is_empty() {
        "0".to_string()
    } else {
        int_part
    };
    let tok = match (frac_part, exponent) {
        (None, None) => Tok::Int(int_part),
        (frac, Some(e)) => Tok::Real(plain_decimal(&int_part, &frac.unwrap_or_default(), e)),
        (Some(frac), None) => Tok::Real(plain_decimal(&int_part, &frac, 0)),
    };
    Ok((tok, i))
}
