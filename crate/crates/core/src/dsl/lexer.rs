//! Hand-rolled lexer. `//` starts a line comment.

use crate::dsl::diag::{Diagnostic, Loc};

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    Real(f64),
    // keywords
    Type,
    Origin,
    Random,
    Guaranteed,
    Obs,
    Query,
    If,
    Then,
    Else,
    Elseif,
    Null,
    True,
    False,
    Mod,
    // punctuation
    LParen,
    RParen,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Comma,
    Semi,
    Eq,
    Ne,
    Tilde,
    Plus,
    Minus,
    Star,
    Slash,
    Hash,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Int(v) => format!("integer `{v}`"),
            Tok::Real(v) => format!("real `{v}`"),
            Tok::Eof => "end of input".to_string(),
            other => format!("`{}`", other.text()),
        }
    }

    fn text(&self) -> &'static str {
        match self {
            Tok::Type => "type",
            Tok::Origin => "origin",
            Tok::Random => "random",
            Tok::Guaranteed => "guaranteed",
            Tok::Obs => "obs",
            Tok::Query => "query",
            Tok::If => "if",
            Tok::Then => "then",
            Tok::Else => "else",
            Tok::Elseif => "elseif",
            Tok::Null => "null",
            Tok::True => "true",
            Tok::False => "false",
            Tok::Mod => "mod",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBrace => "{",
            Tok::RBrace => "}",
            Tok::LBracket => "[",
            Tok::RBracket => "]",
            Tok::Comma => ",",
            Tok::Semi => ";",
            Tok::Eq => "=",
            Tok::Ne => "!=",
            Tok::Tilde => "~",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::Slash => "/",
            Tok::Hash => "#",
            _ => "",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub loc: Loc,
}

pub fn lex(source: &str) -> Result<Vec<Token>, Diagnostic> {
    let mut out = Vec::new();
    let chars: Vec<char> = source.chars().collect();
    let mut i = 0usize;
    let mut line = 1u32;
    let mut col = 1u32;

    macro_rules! push {
        ($tok:expr, $loc:expr) => {
            out.push(Token { tok: $tok, loc: $loc })
        };
    }

    while i < chars.len() {
        let c = chars[i];
        let loc = Loc::new(line, col);
        match c {
            '\n' => {
                line += 1;
                col = 1;
                i += 1;
            }
            c if c.is_whitespace() => {
                col += 1;
                i += 1;
            }
            '/' if i + 1 < chars.len() && chars[i + 1] == '/' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            '(' => {
                push!(Tok::LParen, loc);
                i += 1;
                col += 1;
            }
            ')' => {
                push!(Tok::RParen, loc);
                i += 1;
                col += 1;
            }
            '{' => {
                push!(Tok::LBrace, loc);
                i += 1;
                col += 1;
            }
            '}' => {
                push!(Tok::RBrace, loc);
                i += 1;
                col += 1;
            }
            '[' => {
                push!(Tok::LBracket, loc);
                i += 1;
                col += 1;
            }
            ']' => {
                push!(Tok::RBracket, loc);
                i += 1;
                col += 1;
            }
            ',' => {
                push!(Tok::Comma, loc);
                i += 1;
                col += 1;
            }
            ';' => {
                push!(Tok::Semi, loc);
                i += 1;
                col += 1;
            }
            '~' => {
                push!(Tok::Tilde, loc);
                i += 1;
                col += 1;
            }
            '+' => {
                push!(Tok::Plus, loc);
                i += 1;
                col += 1;
            }
            '-' => {
                push!(Tok::Minus, loc);
                i += 1;
                col += 1;
            }
            '*' => {
                push!(Tok::Star, loc);
                i += 1;
                col += 1;
            }
            '/' => {
                push!(Tok::Slash, loc);
                i += 1;
                col += 1;
            }
            '#' => {
                push!(Tok::Hash, loc);
                i += 1;
                col += 1;
            }
            '=' => {
                push!(Tok::Eq, loc);
                i += 1;
                col += 1;
            }
            '!' if i + 1 < chars.len() && chars[i + 1] == '=' => {
                push!(Tok::Ne, loc);
                i += 2;
                col += 2;
            }
            c if c.is_ascii_digit() || c == '.' => {
                let start = i;
                let mut seen_dot = false;
                while i < chars.len() && (chars[i].is_ascii_digit() || (chars[i] == '.' && !seen_dot))
                {
                    if chars[i] == '.' {
                        // a lone '.' is not a number
                        if i + 1 >= chars.len() || !chars[i + 1].is_ascii_digit() {
                            break;
                        }
                        seen_dot = true;
                    }
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                col += (i - start) as u32;
                if text == "." || text.is_empty() {
                    return Err(Diagnostic::error(loc, "unexpected character `.`"));
                }
                if seen_dot {
                    let v: f64 = text
                        .parse()
                        .map_err(|_| Diagnostic::error(loc, format!("bad real literal `{text}`")))?;
                    push!(Tok::Real(v), loc);
                } else {
                    let v: i64 = text
                        .parse()
                        .map_err(|_| Diagnostic::error(loc, format!("bad integer literal `{text}`")))?;
                    push!(Tok::Int(v), loc);
                }
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                col += (i - start) as u32;
                let tok = match text.as_str() {
                    "type" => Tok::Type,
                    "origin" => Tok::Origin,
                    "random" => Tok::Random,
                    "guaranteed" => Tok::Guaranteed,
                    "obs" => Tok::Obs,
                    "query" => Tok::Query,
                    "if" => Tok::If,
                    "then" => Tok::Then,
                    "else" => Tok::Else,
                    "elseif" => Tok::Elseif,
                    "null" => Tok::Null,
                    "true" => Tok::True,
                    "false" => Tok::False,
                    "mod" => Tok::Mod,
                    _ => Tok::Ident(text),
                };
                push!(tok, loc);
            }
            other => {
                return Err(Diagnostic::error(
                    loc,
                    format!("unexpected character `{other}`"),
                ));
            }
        }
    }
    out.push(Token {
        tok: Tok::Eof,
        loc: Loc::new(line, col),
    });
    Ok(out)
}
