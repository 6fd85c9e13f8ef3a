use std::fmt;

use serde::{Deserialize, Serialize};

use super::ExprError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinaryOp {
    pub fn symbol(self) -> char {
        match self {
            BinaryOp::Add => '+',
            BinaryOp::Sub => '-',
            BinaryOp::Mul => '*',
            BinaryOp::Div => '/',
        }
    }

    /// Binding strength: `*` and `/` bind tighter than `+` and `-`.
    pub fn precedence(self) -> u8 {
        match self {
            BinaryOp::Add | BinaryOp::Sub => 1,
            BinaryOp::Mul | BinaryOp::Div => 2,
        }
    }
}

/// Parse tree of a calculator expression.
///
/// Number literals keep their source text so that printing a tree and
/// parsing it again yields the same tree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Expr {
    Number(String),
    Neg(Box<Expr>),
    Binary {
        op: BinaryOp,
        left: Box<Expr>,
        right: Box<Expr>,
    },
    Paren(Box<Expr>),
}

impl Expr {
    pub fn number(text: impl Into<String>) -> Self {
        Expr::Number(text.into())
    }

    #[allow(clippy::should_implement_trait)]
    pub fn neg(operand: Expr) -> Self {
        Expr::Neg(Box::new(operand))
    }

    pub fn binary(op: BinaryOp, left: Expr, right: Expr) -> Self {
        Expr::Binary {
            op,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn paren(inner: Expr) -> Self {
        Expr::Paren(Box::new(inner))
    }

    /// Precedence level of the node as it appears in printed form; atoms
    /// (numbers, negations, parenthesised groups) bind tightest.
    pub fn precedence(&self) -> u8 {
        match self {
            Expr::Binary { op, .. } => op.precedence(),
            _ => 3,
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Expr::Number(_) => 1,
            Expr::Neg(inner) | Expr::Paren(inner) => 1 + inner.depth(),
            Expr::Binary { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    /// Evaluates the tree in IEEE-754 double precision.
    pub fn evaluate(&self) -> Result<f64, ExprError> {
        let value = match self {
            Expr::Number(text) => text
                .parse::<f64>()
                .map_err(|_| ExprError::InvalidNumber(text.clone()))?,
            Expr::Neg(inner) => -inner.evaluate()?,
            Expr::Paren(inner) => inner.evaluate()?,
            Expr::Binary { op, left, right } => {
                let l = left.evaluate()?;
                let r = right.evaluate()?;
                match op {
                    BinaryOp::Add => l + r,
                    BinaryOp::Sub => l - r,
                    BinaryOp::Mul => l * r,
                    BinaryOp::Div => {
                        if r == 0.0 {
                            return Err(ExprError::DivisionByZero {
                                subexpression: self.to_string(),
                            });
                        }
                        l / r
                    }
                }
            }
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(ExprError::Overflow {
                subexpression: self.to_string(),
            })
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Number(text) => f.write_str(text),
            Expr::Neg(inner) => write!(f, "-{inner}"),
            Expr::Paren(inner) => write!(f, "({inner})"),
            Expr::Binary { op, left, right } => write!(f, "{left}{}{right}", op.symbol()),
        }
    }
}

pub fn evaluate(expr: &Expr) -> Result<f64, ExprError> {
    expr.evaluate()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn printing_is_compact() {
        let e = Expr::binary(
            BinaryOp::Mul,
            Expr::paren(Expr::binary(
                BinaryOp::Div,
                Expr::number("1280"),
                Expr::number("1366"),
            )),
            Expr::number("100"),
        );
        assert_eq!(e.to_string(), "(1280/1366)*100");
        assert_eq!(e.depth(), 4);
    }

    #[test]
    fn division_by_exact_zero() {
        let e = Expr::binary(
            BinaryOp::Div,
            Expr::number("1"),
            Expr::paren(Expr::binary(BinaryOp::Sub, Expr::number("2"), Expr::number("2"))),
        );
        assert_eq!(
            e.evaluate(),
            Err(ExprError::DivisionByZero {
                subexpression: "1/(2-2)".into()
            })
        );
    }

    #[test]
    fn non_finite_results_are_overflow() {
        let big = "9".repeat(200);
        let e = Expr::binary(BinaryOp::Mul, Expr::number(big.clone()), Expr::number(big));
        assert!(matches!(e.evaluate(), Err(ExprError::Overflow { .. })));
    }

    #[test]
    fn negation_is_not_subtraction() {
        let e = Expr::binary(
            BinaryOp::Sub,
            Expr::number("1"),
            Expr::neg(Expr::number("2")),
        );
        assert_eq!(e.to_string(), "1--2");
        assert_eq!(e.evaluate(), Ok(3.0));
    }
}
