//! Test-only exact-rational evaluator and random expression generator.
#![allow(dead_code)]

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use numqa_core::expr::{BinaryOp, Expr};
use rand::Rng;

#[derive(Debug, PartialEq, Eq)]
pub enum OracleError {
    DivisionByZero,
}

fn literal(text: &str) -> BigRational {
    match text.split_once('.') {
        None => BigRational::from_integer(text.parse::<BigInt>().unwrap()),
        Some((int, frac)) => {
            let digits: BigInt = format!("{int}{frac}").parse().unwrap();
            let denom = num_traits::pow(BigInt::from(10), frac.len());
            BigRational::new(digits, denom)
        }
    }
}

pub fn rational_eval(e: &Expr) -> Result<BigRational, OracleError> {
    Ok(match e {
        Expr::Number(t) => literal(t),
        Expr::Neg(inner) => -rational_eval(inner)?,
        Expr::Paren(inner) => rational_eval(inner)?,
        Expr::Binary { op, left, right } => {
            let l = rational_eval(left)?;
            let r = rational_eval(right)?;
            match op {
                BinaryOp::Add => l + r,
                BinaryOp::Sub => l - r,
                BinaryOp::Mul => l * r,
                BinaryOp::Div => {
                    if r.is_zero() {
                        return Err(OracleError::DivisionByZero);
                    }
                    l / r
                }
            }
        }
    })
}

pub fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap()
}

/// Relative error of `approx` against the exact value (absolute when exact is 0).
pub fn relative_error(approx: f64, exact: &BigRational) -> f64 {
    let e = to_f64(exact);
    if e == 0.0 {
        approx.abs()
    } else {
        ((approx - e) / e).abs()
    }
}

pub struct GenOptions {
    pub max_depth: usize,
    pub max_digits: usize,
    pub decimals: bool,
}

fn random_number(rng: &mut impl Rng, opts: &GenOptions) -> Expr {
    let digits = rng.gen_range(1..=opts.max_digits);
    let mut text: String = (0..digits)
        .map(|_| char::from(b'0' + rng.gen_range(0..10u8)))
        .collect();
    if opts.decimals && rng.gen_bool(0.3) {
        let frac = rng.gen_range(1..=3);
        text.push('.');
        text.extend((0..frac).map(|_| char::from(b'0' + rng.gen_range(0..10u8))));
    }
    Expr::Number(text)
}

/// Random tree of depth <= `max_depth`, parenthesised exactly where the
/// printed form would otherwise parse differently.
pub fn random_expr(rng: &mut impl Rng, opts: &GenOptions) -> Expr {
    fn go(rng: &mut impl Rng, depth: usize, opts: &GenOptions) -> Expr {
        if depth <= 1 || rng.gen_bool(0.25) {
            return random_number(rng, opts);
        }
        match rng.gen_range(0..10) {
            0 if depth >= 2 => Expr::neg(atomize(go(rng, depth - 1, opts))),
            1 if depth >= 2 => Expr::paren(go(rng, depth - 1, opts)),
            _ if depth >= 3 => {
                let op = [BinaryOp::Add, BinaryOp::Sub, BinaryOp::Mul, BinaryOp::Div]
                    [rng.gen_range(0..4)];
                // A parenthesised operand costs one extra level.
                let mut left = go(rng, depth - 2, opts);
                let mut right = go(rng, depth - 2, opts);
                if left.precedence() < op.precedence() {
                    left = Expr::paren(left);
                }
                if right.precedence() <= op.precedence() {
                    right = Expr::paren(right);
                }
                Expr::binary(op, left, right)
            }
            _ => random_number(rng, opts),
        }
    }
    go(rng, opts.max_depth, opts)
}

fn atomize(e: Expr) -> Expr {
    if e.precedence() < 3 {
        Expr::paren(e)
    } else {
        e
    }
}
