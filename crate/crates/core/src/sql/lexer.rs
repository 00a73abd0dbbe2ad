use super::SqlError;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    /// Identifier or keyword. Unquoted identifiers are folded to lower case;
    /// backtick-quoted ones keep their case and are never keywords.
    Ident { text: String, quoted: bool },
    Str(String),
    Int(i64),
    Float(f64),
    Comma,
    Dot,
    LParen,
    RParen,
    Star,
    Semicolon,
    Minus,
    Op(&'static str),
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident { text, .. } => text.clone(),
            Tok::Str(s) => format!("\"{s}\""),
            Tok::Int(i) => i.to_string(),
            Tok::Float(f) => f.to_string(),
            Tok::Comma => ",".into(),
            Tok::Dot => ".".into(),
            Tok::LParen => "(".into(),
            Tok::RParen => ")".into(),
            Tok::Star => "*".into(),
            Tok::Semicolon => ";".into(),
            Tok::Minus => "-".into(),
            Tok::Op(o) => (*o).into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub line: u32,
    pub column: u32,
}

pub fn tokenize(input: &str) -> Result<Vec<Token>, SqlError> {
    let chars: Vec<char> = input.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);

    macro_rules! bump {
        () => {{
            if chars[i] == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            i += 1;
        }};
    }

    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        if c.is_whitespace() {
            bump!();
            continue;
        }
        if c == '-' && chars.get(i + 1) == Some(&'-') {
            while i < chars.len() && chars[i] != '\n' {
                bump!();
            }
            continue;
        }
        let tok = if c.is_ascii_alphabetic() || c == '_' {
            let mut s = String::new();
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                s.push(chars[i].to_ascii_lowercase());
                bump!();
            }
            Tok::Ident { text: s, quoted: false }
        } else if c == '`' {
            bump!();
            let mut s = String::new();
            loop {
                match chars.get(i) {
                    None => return Err(SqlError::syntax(tl, tc, "unterminated quoted identifier", "`")),
                    Some('`') if chars.get(i + 1) == Some(&'`') => {
                        s.push('`');
                        bump!();
                        bump!();
                    }
                    Some('`') => {
                        bump!();
                        break;
                    }
                    Some(&ch) => {
                        s.push(ch);
                        bump!();
                    }
                }
            }
            if s.is_empty() {
                return Err(SqlError::syntax(tl, tc, "non-empty identifier", "``"));
            }
            Tok::Ident { text: s, quoted: true }
        } else if c == '"' || c == '\'' {
            let quote = c;
            bump!();
            let mut s = String::new();
            loop {
                match chars.get(i) {
                    None => return Err(SqlError::syntax(tl, tc, "closing quote", "end of input")),
                    Some(&ch) if ch == quote && chars.get(i + 1) == Some(&quote) => {
                        s.push(quote);
                        bump!();
                        bump!();
                    }
                    Some(&ch) if ch == quote => {
                        bump!();
                        break;
                    }
                    Some(&ch) => {
                        s.push(ch);
                        bump!();
                    }
                }
            }
            Tok::Str(s)
        } else if c.is_ascii_digit() || (c == '-' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let mut s = String::new();
            if c == '-' {
                s.push('-');
                bump!();
            }
            let mut is_float = false;
            while i < chars.len() && chars[i].is_ascii_digit() {
                s.push(chars[i]);
                bump!();
            }
            if i < chars.len() && chars[i] == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()) {
                is_float = true;
                s.push('.');
                bump!();
                while i < chars.len() && chars[i].is_ascii_digit() {
                    s.push(chars[i]);
                    bump!();
                }
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let sign = chars.get(i + 1).is_some_and(|c| *c == '-' || *c == '+');
                let digit_at = if sign { i + 2 } else { i + 1 };
                if chars.get(digit_at).is_some_and(|d| d.is_ascii_digit()) {
                    is_float = true;
                    s.push('e');
                    bump!();
                    if sign {
                        s.push(chars[i]);
                        bump!();
                    }
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        s.push(chars[i]);
                        bump!();
                    }
                }
            }
            if is_float {
                match s.parse::<f64>() {
                    Ok(f) if f.is_finite() => Tok::Float(f),
                    _ => return Err(SqlError::syntax(tl, tc, "finite number", &s)),
                }
            } else {
                match s.parse::<i64>() {
                    Ok(v) => Tok::Int(v),
                    Err(_) => return Err(SqlError::syntax(tl, tc, "64-bit integer", &s)),
                }
            }
        } else {
            let two: String = chars[i..chars.len().min(i + 2)].iter().collect();
            let op2 = match two.as_str() {
                "==" => Some("=="),
                "!=" => Some("!="),
                "<>" => Some("<>"),
                "<=" => Some("<="),
                ">=" => Some(">="),
                _ => None,
            };
            if let Some(op) = op2 {
                bump!();
                bump!();
                Tok::Op(op)
            } else {
                let t = match c {
                    ',' => Tok::Comma,
                    '.' => Tok::Dot,
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    '*' => Tok::Star,
                    ';' => Tok::Semicolon,
                    '-' => Tok::Minus,
                    '=' => Tok::Op("="),
                    '<' => Tok::Op("<"),
                    '>' => Tok::Op(">"),
                    other => {
                        return Err(SqlError::syntax(tl, tc, "a token", &other.to_string()));
                    }
                };
                bump!();
                t
            }
        };
        out.push(Token { tok, line: tl, column: tc });
    }
    out.push(Token { tok: Tok::Eof, line, column: col });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<Tok> {
        tokenize(s).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn folds_unquoted_identifiers() {
        assert_eq!(
            toks("SELECT Movies `Keep`"),
            vec![
                Tok::Ident { text: "select".into(), quoted: false },
                Tok::Ident { text: "movies".into(), quoted: false },
                Tok::Ident { text: "Keep".into(), quoted: true },
                Tok::Eof
            ]
        );
    }

    #[test]
    fn strings_numbers_operators() {
        assert_eq!(
            toks(r#"'it''s' "a""b" 3 -4 2.5 1e3 == != <> <= >= = ;"#),
            vec![
                Tok::Str("it's".into()),
                Tok::Str("a\"b".into()),
                Tok::Int(3),
                Tok::Int(-4),
                Tok::Float(2.5),
                Tok::Float(1000.0),
                Tok::Op("=="),
                Tok::Op("!="),
                Tok::Op("<>"),
                Tok::Op("<="),
                Tok::Op(">="),
                Tok::Op("="),
                Tok::Semicolon,
                Tok::Eof
            ]
        );
    }

    #[test]
    fn positions_track_lines() {
        let t = tokenize("SELECT\n  a").unwrap();
        assert_eq!((t[1].line, t[1].column), (2, 3));
    }

    #[test]
    fn unterminated_string() {
        assert!(matches!(tokenize("'abc"), Err(SqlError::Syntax { line: 1, column: 1, .. })));
    }
}
