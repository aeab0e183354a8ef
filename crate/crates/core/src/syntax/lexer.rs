use super::{ParseError, ParseErrorKind};

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Ident(String),
    Int(u64),
    Str(String),
    LBrace,
    RBrace,
    LParen,
    RParen,
    Semi,
    Colon,
    Comma,
    Dot,
    Eq,
    Arrow,
    FatArrow,
    Backslash,
    Plus,
    Minus,
    At,
    Question,
    Hash,
    Eof,
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
}

pub(crate) fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);

    let err = |line, col, message: String| ParseError { kind: ParseErrorKind::Syntax, line, col, message };

    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let simple = match c {
            '{' => Some(Tok::LBrace),
            '}' => Some(Tok::RBrace),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            ';' => Some(Tok::Semi),
            ':' => Some(Tok::Colon),
            ',' => Some(Tok::Comma),
            '.' => Some(Tok::Dot),
            '\\' => Some(Tok::Backslash),
            '+' => Some(Tok::Plus),
            '@' => Some(Tok::At),
            '?' => Some(Tok::Question),
            '#' => Some(Tok::Hash),
            _ => None,
        };
        if let Some(tok) = simple {
            out.push(Token { tok, line: tl, col: tc });
            i += 1;
            col += 1;
            continue;
        }
        match c {
            '-' if chars.get(i + 1) == Some(&'>') => {
                out.push(Token { tok: Tok::Arrow, line: tl, col: tc });
                i += 2;
                col += 2;
            }
            '-' => {
                out.push(Token { tok: Tok::Minus, line: tl, col: tc });
                i += 1;
                col += 1;
            }
            '=' if chars.get(i + 1) == Some(&'>') => {
                out.push(Token { tok: Tok::FatArrow, line: tl, col: tc });
                i += 2;
                col += 2;
            }
            '=' => {
                out.push(Token { tok: Tok::Eq, line: tl, col: tc });
                i += 1;
                col += 1;
            }
            '"' => {
                let mut s = String::new();
                i += 1;
                col += 1;
                loop {
                    let Some(&ch) = chars.get(i) else {
                        return Err(err(tl, tc, "unterminated string literal".into()));
                    };
                    match ch {
                        '"' => {
                            i += 1;
                            col += 1;
                            break;
                        }
                        '\\' => {
                            let esc = chars.get(i + 1).copied();
                            let decoded = match esc {
                                Some('"') => '"',
                                Some('\\') => '\\',
                                Some('n') => '\n',
                                Some('t') => '\t',
                                Some('r') => '\r',
                                _ => return Err(err(line, col, "invalid escape sequence".into())),
                            };
                            s.push(decoded);
                            i += 2;
                            col += 2;
                        }
                        '\n' => return Err(err(tl, tc, "newline in string literal".into())),
                        other => {
                            s.push(other);
                            i += 1;
                            col += 1;
                        }
                    }
                }
                out.push(Token { tok: Tok::Str(s), line: tl, col: tc });
            }
            d if d.is_ascii_digit() => {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                col += i - start;
                let n = text.parse::<u64>().map_err(|_| err(tl, tc, format!("integer literal {text} out of range")))?;
                out.push(Token { tok: Tok::Int(n), line: tl, col: tc });
            }
            a if a.is_alphabetic() || a == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                col += i - start;
                out.push(Token { tok: Tok::Ident(chars[start..i].iter().collect()), line: tl, col: tc });
            }
            other => return Err(err(tl, tc, format!("unexpected character {other:?}"))),
        }
    }
    out.push(Token { tok: Tok::Eof, line, col });
    Ok(out)
}
