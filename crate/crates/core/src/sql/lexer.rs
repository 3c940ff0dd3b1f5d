use alloc::string::String;
use alloc::vec::Vec;

use super::SqlError;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    /// Unquoted word: keyword or identifier.
    Word(String),
    /// `"x"`, `` `x` `` or `[x]`.
    Quoted(String),
    Integer(i64),
    Real(f64),
    Str(String),
    Sym(&'static str),
    End,
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub tok: Tok,
    pub offset: usize,
}

const SYMBOLS: [&str; 17] =
    ["<=", ">=", "<>", "!=", "||", "(", ")", ",", ".", "*", ";", "=", "<", ">", "+", "-", "/"];

pub(crate) fn tokenize(src: &str) -> Result<Vec<Token>, SqlError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if c == b'-' && bytes.get(i + 1) == Some(&b'-') {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        if c == b'/' && bytes.get(i + 1) == Some(&b'*') {
            let end = src[i + 2..]
                .find("*/")
                .ok_or_else(|| SqlError::syntax("unterminated comment", i))?;
            i += end + 4;
            continue;
        }
        let start = i;
        if c.is_ascii_alphabetic() || c == b'_' || c >= 0x80 {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_' || bytes[i] >= 0x80) {
                i += 1;
            }
            out.push(Token { tok: Tok::Word(src[start..i].into()), offset: start });
            continue;
        }
        if c.is_ascii_digit() || (c == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            let (tok, len) = number(&src[i..]).ok_or_else(|| SqlError::syntax("malformed number", i))?;
            i += len;
            out.push(Token { tok, offset: start });
            continue;
        }
        match c {
            b'\'' => {
                let (s, len) = delimited(&src[i..], b'\'', b'\'').ok_or_else(|| SqlError::syntax("unterminated string", i))?;
                out.push(Token { tok: Tok::Str(s), offset: start });
                i += len;
                continue;
            }
            b'"' | b'`' | b'[' => {
                let close = if c == b'[' { b']' } else { c };
                let (s, len) = delimited(&src[i..], c, close).ok_or_else(|| SqlError::syntax("unterminated identifier", i))?;
                if s.is_empty() {
                    return Err(SqlError::syntax("empty quoted identifier", i));
                }
                out.push(Token { tok: Tok::Quoted(s), offset: start });
                i += len;
                continue;
            }
            _ => {}
        }
        let sym = SYMBOLS
            .iter()
            .find(|s| src[i..].starts_with(**s))
            .ok_or_else(|| SqlError::syntax(alloc::format!("unexpected character `{}`", src[i..].chars().next().unwrap_or('?')), i))?;
        i += sym.len();
        out.push(Token { tok: Tok::Sym(sym), offset: start });
    }
    out.push(Token { tok: Tok::End, offset: src.len() });
    Ok(out)
}

/// Reads a quoted run starting at `open`; a doubled `close` escapes itself.
fn delimited(src: &str, open: u8, close: u8) -> Option<(String, usize)> {
    let bytes = src.as_bytes();
    debug_assert_eq!(bytes[0], open);
    let mut out = String::new();
    let mut i = 1;
    let mut run_start = 1;
    while i < bytes.len() {
        if bytes[i] == close {
            out.push_str(&src[run_start..i]);
            if open == close && bytes.get(i + 1) == Some(&close) {
                out.push(close as char);
                i += 2;
                run_start = i;
                continue;
            }
            return Some((out, i + 1));
        }
        i += 1;
    }
    None
}

fn number(src: &str) -> Option<(Tok, usize)> {
    let bytes = src.as_bytes();
    let mut i = 0;
    let mut real = false;
    while i < bytes.len() && bytes[i].is_ascii_digit() {
        i += 1;
    }
    if i < bytes.len() && bytes[i] == b'.' {
        real = true;
        i += 1;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
    }
    if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
        let mut j = i + 1;
        if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
            j += 1;
        }
        if j < bytes.len() && bytes[j].is_ascii_digit() {
            while j < bytes.len() && bytes[j].is_ascii_digit() {
                j += 1;
            }
            real = true;
            i = j;
        }
    }
    if i < bytes.len() && (bytes[i].is_ascii_alphabetic() || bytes[i] == b'_') {
        return None;
    }
    let text = &src[..i];
    if !real {
        if let Ok(v) = text.parse::<i64>() {
            return Some((Tok::Integer(v), i));
        }
    }
    let v: f64 = text.parse().ok()?;
    v.is_finite().then_some((Tok::Real(v), i))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<Tok> {
        tokenize(s).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn basic_tokens() {
        assert_eq!(
            toks("SELECT a.b, 'it''s' FROM \"T x\" -- c\n WHERE x>=1.5e2;"),
            alloc::vec![
                Tok::Word("SELECT".into()),
                Tok::Word("a".into()),
                Tok::Sym("."),
                Tok::Word("b".into()),
                Tok::Sym(","),
                Tok::Str("it's".into()),
                Tok::Word("FROM".into()),
                Tok::Quoted("T x".into()),
                Tok::Word("WHERE".into()),
                Tok::Word("x".into()),
                Tok::Sym(">="),
                Tok::Real(150.0),
                Tok::Sym(";"),
                Tok::End,
            ]
        );
    }

    #[test]
    fn integers_and_overflow() {
        assert_eq!(toks("42")[0], Tok::Integer(42));
        assert_eq!(toks("99999999999999999999")[0], Tok::Real(1e20));
        assert_eq!(toks(".5")[0], Tok::Real(0.5));
    }

    #[test]
    fn errors() {
        assert!(tokenize("'open").is_err());
        assert!(tokenize("a ? b").is_err());
        assert!(tokenize("12abc").is_err());
        assert!(tokenize("/* never closed").is_err());
    }
}
