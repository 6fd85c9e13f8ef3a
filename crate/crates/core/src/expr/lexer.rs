use serde::{Deserialize, Serialize};

use super::ExprError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TokenKind {
    Number,
    Plus,
    Minus,
    Star,
    Slash,
    LParen,
    RParen,
}

impl TokenKind {
    pub fn symbol(self) -> &'static str {
        match self {
            TokenKind::Number => "number",
            TokenKind::Plus => "+",
            TokenKind::Minus => "-",
            TokenKind::Star => "*",
            TokenKind::Slash => "/",
            TokenKind::LParen => "(",
            TokenKind::RParen => ")",
        }
    }
}

/// A lexeme of the calculator language. `position` is a 0-based character
/// offset into the source string.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub kind: TokenKind,
    pub lexeme: String,
    pub position: usize,
}

/// Splits an already-normalized equation into tokens.
///
/// Numbers are `[0-9]+(\.[0-9]+)?`; signs are always separate `Minus`
/// tokens. Any other character, including a `.` that is not followed by a
/// digit, is a [`ExprError::Lex`].
pub fn tokenize(src: &str) -> Result<Vec<Token>, ExprError> {
    let chars: Vec<char> = src.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;

    while i < chars.len() {
        let c = chars[i];
        let single = match c {
            '+' => Some(TokenKind::Plus),
            '-' => Some(TokenKind::Minus),
            '*' => Some(TokenKind::Star),
            '/' => Some(TokenKind::Slash),
            '(' => Some(TokenKind::LParen),
            ')' => Some(TokenKind::RParen),
            _ => None,
        };
        if let Some(kind) = single {
            tokens.push(Token {
                kind,
                lexeme: c.to_string(),
                position: i,
            });
            i += 1;
            continue;
        }

        if !c.is_ascii_digit() {
            return Err(ExprError::Lex { position: i, ch: c });
        }

        let start = i;
        while i < chars.len() && chars[i].is_ascii_digit() {
            i += 1;
        }
        if i < chars.len() && chars[i] == '.' {
            if i + 1 < chars.len() && chars[i + 1].is_ascii_digit() {
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            } else {
                return Err(ExprError::Lex { position: i, ch: '.' });
            }
        }
        tokens.push(Token {
            kind: TokenKind::Number,
            lexeme: chars[start..i].iter().collect(),
            position: start,
        });
    }

    Ok(tokens)
}
