//! Recursive-descent parser over the token stream:
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := Number | '-' factor | '(' expr ')'
//! ```

use std::fmt;

use serde::{Deserialize, Serialize};

use super::ast::{BinaryOp, Expr};
use super::lexer::{Token, TokenKind};
use super::ExprError;

/// Nesting limit for parentheses and unary minus.
pub const MAX_NESTING: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Expected {
    Factor,
    RParen,
    EndOfInput,
}

impl fmt::Display for Expected {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Expected::Factor => "factor",
            Expected::RParen => "')'",
            Expected::EndOfInput => "end of input",
        })
    }
}

pub fn parse(tokens: &[Token]) -> Result<Expr, ExprError> {
    let mut parser = Parser {
        tokens,
        pos: 0,
        nesting: 0,
    };
    let expr = parser.expr()?;
    if parser.pos < tokens.len() {
        return Err(parser.error(Expected::EndOfInput));
    }
    Ok(expr)
}

struct Parser<'a> {
    tokens: &'a [Token],
    pos: usize,
    nesting: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<TokenKind> {
        self.tokens.get(self.pos).map(|t| t.kind)
    }

    /// Character offset of the current token, or one past the last token.
    fn offset(&self) -> usize {
        match self.tokens.get(self.pos) {
            Some(t) => t.position,
            None => self
                .tokens
                .last()
                .map(|t| t.position + t.lexeme.chars().count())
                .unwrap_or(0),
        }
    }

    fn error(&self, expected: Expected) -> ExprError {
        ExprError::Parse {
            position: self.offset(),
            expected,
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut left = self.term()?;
        loop {
            let op = match self.peek() {
                Some(TokenKind::Plus) => BinaryOp::Add,
                Some(TokenKind::Minus) => BinaryOp::Sub,
                _ => return Ok(left),
            };
            self.pos += 1;
            let right = self.term()?;
            left = Expr::binary(op, left, right);
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut left = self.factor()?;
        loop {
            let op = match self.peek() {
                Some(TokenKind::Star) => BinaryOp::Mul,
                Some(TokenKind::Slash) => BinaryOp::Div,
                _ => return Ok(left),
            };
            self.pos += 1;
            let right = self.factor()?;
            left = Expr::binary(op, left, right);
        }
    }

    fn factor(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            Some(TokenKind::Number) => {
                let text = self.tokens[self.pos].lexeme.clone();
                self.pos += 1;
                Ok(Expr::Number(text))
            }
            Some(TokenKind::Minus) => {
                self.enter()?;
                self.pos += 1;
                let operand = self.factor()?;
                self.nesting -= 1;
                Ok(Expr::neg(operand))
            }
            Some(TokenKind::LParen) => {
                self.enter()?;
                self.pos += 1;
                let inner = self.expr()?;
                if self.peek() != Some(TokenKind::RParen) {
                    return Err(self.error(Expected::RParen));
                }
                self.pos += 1;
                self.nesting -= 1;
                Ok(Expr::paren(inner))
            }
            _ => Err(self.error(Expected::Factor)),
        }
    }

    fn enter(&mut self) -> Result<(), ExprError> {
        self.nesting += 1;
        if self.nesting > MAX_NESTING {
            return Err(ExprError::TooDeep {
                position: self.offset(),
            });
        }
        Ok(())
    }
}
