use super::CypherError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub(super) enum Tok {
    Ident(String),
    Str(String),
    Number(String),
    Punct(char),
    Eof,
}

impl Tok {
    pub(super) fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Str(s) => format!("string '{s}'"),
            Tok::Number(n) => format!("number {n}"),
            Tok::Punct(c) => format!("`{c}`"),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub(super) struct Token {
    pub tok: Tok,
    pub pos: usize,
}

pub(super) fn lex(text: &str) -> Result<Vec<Token>, CypherError> {
    let mut out = Vec::new();
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c == '/' && chars.get(i + 1).is_some_and(|(_, n)| *n == '/') {
            while i < chars.len() && chars[i].1 != '\n' {
                i += 1;
            }
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].1.is_alphanumeric() || chars[i].1 == '_') {
                i += 1;
            }
            let word: String = chars[start..i].iter().map(|(_, c)| c).collect();
            out.push(Token { tok: Tok::Ident(word), pos });
            continue;
        }
        if c == '`' {
            let mut word = String::new();
            i += 1;
            loop {
                match chars.get(i) {
                    Some((_, '`')) => break,
                    Some((_, ch)) => word.push(*ch),
                    None => {
                        return Err(CypherError::SyntaxError {
                            position: text.len(),
                            expected: vec!["closing backtick".into()],
                            found: "end of input".into(),
                        })
                    }
                }
                i += 1;
            }
            i += 1;
            out.push(Token { tok: Tok::Ident(word), pos });
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && (chars[i].1.is_ascii_digit() || chars[i].1 == '.') {
                i += 1;
            }
            let num: String = chars[start..i].iter().map(|(_, c)| c).collect();
            out.push(Token { tok: Tok::Number(num), pos });
            continue;
        }
        if c == '\'' || c == '"' {
            let quote = c;
            let mut s = String::new();
            i += 1;
            loop {
                match chars.get(i) {
                    None => {
                        return Err(CypherError::SyntaxError {
                            position: text.len(),
                            expected: vec![format!("closing {quote}")],
                            found: "end of input".into(),
                        })
                    }
                    Some((_, '\\')) => {
                        let escaped = chars.get(i + 1).map(|(_, c)| *c);
                        match escaped {
                            Some('n') => s.push('\n'),
                            Some('t') => s.push('\t'),
                            Some(other) => s.push(other),
                            None => continue,
                        }
                        i += 2;
                    }
                    Some((_, ch)) if *ch == quote => {
                        i += 1;
                        break;
                    }
                    Some((_, ch)) => {
                        s.push(*ch);
                        i += 1;
                    }
                }
            }
            out.push(Token { tok: Tok::Str(s), pos });
            continue;
        }
        out.push(Token { tok: Tok::Punct(c), pos });
        i += 1;
    }
    out.push(Token {
        tok: Tok::Eof,
        pos: text.len(),
    });
    Ok(out)
}
