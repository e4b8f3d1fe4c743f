use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    /// Upper-cased reserved word.
    Kw(&'static str),
    Num(f64),
    Str(String),
    LParen,
    RParen,
    Comma,
    Dot,
    Star,
    Plus,
    Minus,
    Slash,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Kw(k) => format!("keyword {k}"),
            Tok::Num(x) => format!("number {x}"),
            Tok::Str(s) => format!("string '{s}'"),
            Tok::Eof => "end of input".into(),
            other => format!("`{}`", other.symbol()),
        }
    }

    fn symbol(&self) -> &'static str {
        match self {
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::Comma => ",",
            Tok::Dot => ".",
            Tok::Star => "*",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Slash => "/",
            Tok::Eq => "=",
            Tok::Ne => "<>",
            Tok::Lt => "<",
            Tok::Le => "<=",
            Tok::Gt => ">",
            Tok::Ge => ">=",
            _ => "",
        }
    }
}

pub const KEYWORDS: &[&str] = &[
    "USE", "AS", "SELECT", "FROM", "WHERE", "GROUP", "BY", "WHEN", "UPDATE", "OUTPUT", "FOR", "PRE", "POST", "AND",
    "OR", "NOT", "IN", "COUNT", "SUM", "AVG", "HOWTOUPDATE", "LIMIT", "TOMAXIMIZE", "TOMINIMIZE", "THEN", "L1", "COST",
    "SUCH", "THAT",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
}

pub fn syntax_error(line: usize, col: usize, message: impl Into<String>) -> Error {
    Error::SyntaxError { line, col, message: message.into() }
}

/// Splits query text into tokens with 1-based line/column positions.
pub fn tokenize(text: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        let advance = |n: usize, i: &mut usize, col: &mut usize| {
            *i += n;
            *col += n;
        };
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            advance(1, &mut i, &mut col);
            continue;
        }
        if c == '-' && chars.get(i + 1) == Some(&'-') {
            while i < chars.len() && chars[i] != '\n' {
                advance(1, &mut i, &mut col);
            }
            continue;
        }
        let push = |tok: Tok, out: &mut Vec<Token>| out.push(Token { tok, line: tl, col: tc });
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                advance(1, &mut i, &mut col);
            }
            let word: String = chars[start..i].iter().collect();
            let upper = word.to_ascii_uppercase();
            match KEYWORDS.iter().find(|k| **k == upper) {
                Some(k) => push(Tok::Kw(k), &mut out),
                None => push(Tok::Ident(word), &mut out),
            }
            continue;
        }
        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                advance(1, &mut i, &mut col);
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                    }
                    let n = j - i;
                    advance(n, &mut i, &mut col);
                }
            }
            let lit: String = chars[start..i].iter().collect();
            let x: f64 = lit.parse().map_err(|_| syntax_error(tl, tc, format!("malformed number `{lit}`")))?;
            push(Tok::Num(x), &mut out);
            continue;
        }
        if c == '\'' {
            let mut s = String::new();
            advance(1, &mut i, &mut col);
            loop {
                match chars.get(i) {
                    None => return Err(syntax_error(tl, tc, "unterminated string literal")),
                    Some('\'') if chars.get(i + 1) == Some(&'\'') => {
                        s.push('\'');
                        advance(2, &mut i, &mut col);
                    }
                    Some('\'') => {
                        advance(1, &mut i, &mut col);
                        break;
                    }
                    Some('\n') => {
                        s.push('\n');
                        i += 1;
                        line += 1;
                        col = 1;
                    }
                    Some(&ch) => {
                        s.push(ch);
                        advance(1, &mut i, &mut col);
                    }
                }
            }
            push(Tok::Str(s), &mut out);
            continue;
        }
        let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
        let (tok, n) = match two.as_str() {
            "<=" => (Tok::Le, 2),
            ">=" => (Tok::Ge, 2),
            "<>" | "!=" => (Tok::Ne, 2),
            _ => match c {
                '(' => (Tok::LParen, 1),
                ')' => (Tok::RParen, 1),
                ',' => (Tok::Comma, 1),
                '.' => (Tok::Dot, 1),
                '*' | '×' => (Tok::Star, 1),
                '+' => (Tok::Plus, 1),
                '-' | '−' => (Tok::Minus, 1),
                '/' => (Tok::Slash, 1),
                '=' => (Tok::Eq, 1),
                '<' => (Tok::Lt, 1),
                '>' => (Tok::Gt, 1),
                '≤' => (Tok::Le, 1),
                '≥' => (Tok::Ge, 1),
                '≠' => (Tok::Ne, 1),
                '’' | '‘' => return Err(syntax_error(tl, tc, "typographic quote; use ' for strings")),
                other => return Err(syntax_error(tl, tc, format!("unexpected character `{other}`"))),
            },
        };
        push(tok, &mut out);
        advance(n, &mut i, &mut col);
    }
    out.push(Token { tok: Tok::Eof, line, col });
    Ok(out)
}
