//! Symbolic math expressions: parsing, evaluation, and numeric equivalence.
//!
//! The grammar covers rationals and decimals, the constants `pi` and `e`,
//! variables, `+ - * / ^` (with `^` right-associative and binding above unary
//! minus), the single-argument functions `sqrt abs ln log10 sin cos tan exp`,
//! and implicit multiplication in the usual written forms (`2x`, `2(x+1)`,
//! `(a)(b)`, `3 sqrt(2)`).
//!
//! Equivalence checking ([`math_equiv`]) is a two-route decision: expressions
//! that both fold to exact rationals compare exactly (so `0.1 + 0.2` equals
//! `3/10` despite floating-point), and everything else is compared numerically
//! at seeded pseudorandom assignments of the variables, rejecting points where
//! either side is undefined or astronomically large. The check is symmetric,
//! reflexive for defined expressions, and deterministic for a fixed seed.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use rand::Rng;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

use crate::rng::StreamId;

/// Errors from parsing or equivalence checking.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum MathError {
    /// The input is not a well-formed expression.
    #[error("syntax error at byte {byte_offset}: {message}")]
    Syntax {
        /// Byte position of the offending token.
        byte_offset: usize,
        /// Human-oriented description.
        message: String,
    },
    /// No valid sample point was found while comparing numerically.
    #[error("expressions undefined at every sampled point")]
    UndefinedEverywhere,
}

fn syntax(byte_offset: usize, message: impl Into<String>) -> MathError {
    MathError::Syntax { byte_offset, message: message.into() }
}

/// Named mathematical constants.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NamedConstant {
    /// The circle constant π.
    Pi,
    /// Euler's number.
    E,
}

/// Binary operators.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

/// Single-argument functions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MathFunction {
    Sqrt,
    Abs,
    Ln,
    Log10,
    Sin,
    Cos,
    Tan,
    Exp,
}

impl MathFunction {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sqrt" => MathFunction::Sqrt,
            "abs" => MathFunction::Abs,
            "ln" => MathFunction::Ln,
            "log10" => MathFunction::Log10,
            "sin" => MathFunction::Sin,
            "cos" => MathFunction::Cos,
            "tan" => MathFunction::Tan,
            "exp" => MathFunction::Exp,
            _ => return None,
        })
    }
}

/// Abstract syntax tree of a math expression.
///
/// Numeric literals are stored as exact rationals (`3.14` is 314/100), which
/// is what makes the exact-fold equivalence route possible.
#[derive(Clone, Debug, PartialEq)]
pub enum MathExpr {
    /// Integer or decimal literal, held exactly.
    Literal(BigRational),
    /// `pi` or `e`.
    Constant(NamedConstant),
    /// A free variable.
    Variable(String),
    /// Unary negation.
    Neg(Box<MathExpr>),
    /// Binary operation.
    Binary(BinaryOp, Box<MathExpr>, Box<MathExpr>),
    /// Function application.
    Call(MathFunction, Box<MathExpr>),
}

impl MathExpr {
    /// The set of free variable names.
    pub fn variables(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_variables(&mut out);
        out
    }

    fn collect_variables(&self, out: &mut BTreeSet<String>) {
        match self {
            MathExpr::Literal(_) | MathExpr::Constant(_) => {}
            MathExpr::Variable(name) => {
                out.insert(name.clone());
            }
            MathExpr::Neg(inner) => inner.collect_variables(out),
            MathExpr::Binary(_, lhs, rhs) => {
                lhs.collect_variables(out);
                rhs.collect_variables(out);
            }
            MathExpr::Call(_, arg) => arg.collect_variables(out),
        }
    }

    /// Evaluates at a variable assignment; `None` means undefined there
    /// (division by zero, log of a non-positive value, square root of a
    /// negative, a non-finite intermediate, or an unassigned variable).
    pub fn eval(&self, vars: &BTreeMap<String, f64>) -> Option<f64> {
        let v = match self {
            MathExpr::Literal(r) => r.to_f64()?,
            MathExpr::Constant(NamedConstant::Pi) => std::f64::consts::PI,
            MathExpr::Constant(NamedConstant::E) => std::f64::consts::E,
            MathExpr::Variable(name) => *vars.get(name)?,
            MathExpr::Neg(inner) => -inner.eval(vars)?,
            MathExpr::Binary(op, lhs, rhs) => {
                let a = lhs.eval(vars)?;
                let b = rhs.eval(vars)?;
                match op {
                    BinaryOp::Add => a + b,
                    BinaryOp::Sub => a - b,
                    BinaryOp::Mul => a * b,
                    BinaryOp::Div => {
                        if b == 0.0 {
                            return None;
                        }
                        a / b
                    }
                    BinaryOp::Pow => a.powf(b),
                }
            }
            MathExpr::Call(f, arg) => {
                let x = arg.eval(vars)?;
                match f {
                    MathFunction::Sqrt => x.sqrt(),
                    MathFunction::Abs => x.abs(),
                    MathFunction::Ln => x.ln(),
                    MathFunction::Log10 => x.log10(),
                    MathFunction::Sin => x.sin(),
                    MathFunction::Cos => x.cos(),
                    MathFunction::Tan => x.tan(),
                    MathFunction::Exp => x.exp(),
                }
            }
        };
        v.is_finite().then_some(v)
    }

    /// Folds a constant expression to an exact rational where possible:
    /// literals, negation, `+ - * /` with nonzero denominators, integer
    /// powers, and `abs`. Anything involving variables, `pi`/`e`, or
    /// transcendental functions returns `None` and is left to the numeric
    /// route.
    pub fn fold_rational(&self) -> Option<BigRational> {
        match self {
            MathExpr::Literal(r) => Some(r.clone()),
            MathExpr::Constant(_) | MathExpr::Variable(_) => None,
            MathExpr::Neg(inner) => Some(-inner.fold_rational()?),
            MathExpr::Binary(op, lhs, rhs) => {
                let a = lhs.fold_rational()?;
                let b = rhs.fold_rational()?;
                match op {
                    BinaryOp::Add => Some(a + b),
                    BinaryOp::Sub => Some(a - b),
                    BinaryOp::Mul => Some(a * b),
                    BinaryOp::Div => (!b.is_zero()).then(|| a / b),
                    BinaryOp::Pow => {
                        if !b.is_integer() {
                            return None;
                        }
                        let exp = b.to_integer().to_i32()?;
                        // Keep exact powers small; astronomically large
                        // exponents fall through to the numeric route.
                        if exp.unsigned_abs() > 4096 || (a.is_zero() && exp <= 0) {
                            return None;
                        }
                        Some(rational_pow(a, exp))
                    }
                }
            }
            MathExpr::Call(MathFunction::Abs, arg) => Some(arg.fold_rational()?.abs()),
            MathExpr::Call(_, _) => None,
        }
    }
}

fn rational_pow(base: BigRational, exp: i32) -> BigRational {
    let positive = base.pow(exp.unsigned_abs() as i32);
    if exp < 0 {
        positive.recip()
    } else {
        positive
    }
}

// ---------------------------------------------------------------------------
// Tokenizer
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
enum Token {
    Number(BigRational),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

#[derive(Clone, Debug)]
struct Spanned {
    token: Token,
    offset: usize,
}

fn tokenize(input: &str) -> Result<Vec<Spanned>, MathError> {
    let bytes = input.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        match b {
            b' ' | b'\t' | b'\r' | b'\n' => i += 1,
            b'+' | b'-' | b'*' | b'/' | b'^' | b'(' | b')' => {
                let token = match b {
                    b'+' => Token::Plus,
                    b'-' => Token::Minus,
                    b'*' => Token::Star,
                    b'/' => Token::Slash,
                    b'^' => Token::Caret,
                    b'(' => Token::LParen,
                    _ => Token::RParen,
                };
                tokens.push(Spanned { token, offset: i });
                i += 1;
            }
            b'0'..=b'9' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let mut scale = 0u32;
                if i < bytes.len() && bytes[i] == b'.' {
                    let frac_start = i + 1;
                    let mut j = frac_start;
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    if j == frac_start {
                        return Err(syntax(i, "expected digits after decimal point"));
                    }
                    scale = (j - frac_start) as u32;
                    i = j;
                }
                let digits: String = input[start..i].chars().filter(|c| *c != '.').collect();
                let numerator: BigInt = digits.parse().expect("digit run parses as integer");
                let denominator = BigInt::from(10u32).pow(scale);
                tokens.push(Spanned {
                    token: Token::Number(BigRational::new(numerator, denominator)),
                    offset: start,
                });
            }
            b'A'..=b'Z' | b'a'..=b'z' | b'_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                tokens.push(Spanned { token: Token::Ident(input[start..i].to_owned()), offset: start });
            }
            _ => {
                return Err(syntax(i, format!("unexpected character {:?}", input[i..].chars().next().unwrap())));
            }
        }
    }
    Ok(tokens)
}

// ---------------------------------------------------------------------------
// Recursive-descent parser
// ---------------------------------------------------------------------------

struct Parser<'a> {
    tokens: &'a [Spanned],
    pos: usize,
    input_len: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&'a Token> {
        self.tokens.get(self.pos).map(|s| &s.token)
    }

    fn peek_offset(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.input_len, |s| s.offset)
    }

    fn advance(&mut self) -> Option<&'a Spanned> {
        let s = self.tokens.get(self.pos);
        self.pos += 1;
        s
    }

    fn expect(&mut self, token: &Token, what: &str) -> Result<(), MathError> {
        match self.peek() {
            Some(t) if t == token => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(syntax(self.peek_offset(), format!("expected {what}"))),
        }
    }

    // expr := term (('+'|'-') term)*
    fn expr(&mut self) -> Result<MathExpr, MathError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(Token::Plus) => BinaryOp::Add,
                Some(Token::Minus) => BinaryOp::Sub,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = MathExpr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    // term := factor (('*'|'/') factor | implicit-factor)*
    //
    // An implicit factor begins wherever an identifier or '(' directly follows
    // a completed factor ("2x", "2(x+1)", "(a)(b)"). A following number is
    // deliberately not an implicit product: "2 3" is a syntax error.
    fn term(&mut self) -> Result<MathExpr, MathError> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Some(Token::Star) => {
                    self.pos += 1;
                    let rhs = self.factor()?;
                    lhs = MathExpr::Binary(BinaryOp::Mul, Box::new(lhs), Box::new(rhs));
                }
                Some(Token::Slash) => {
                    self.pos += 1;
                    let rhs = self.factor()?;
                    lhs = MathExpr::Binary(BinaryOp::Div, Box::new(lhs), Box::new(rhs));
                }
                Some(Token::Ident(_)) | Some(Token::LParen) => {
                    let rhs = self.factor()?;
                    lhs = MathExpr::Binary(BinaryOp::Mul, Box::new(lhs), Box::new(rhs));
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    // factor := '-' factor | power
    fn factor(&mut self) -> Result<MathExpr, MathError> {
        if matches!(self.peek(), Some(Token::Minus)) {
            self.pos += 1;
            return Ok(MathExpr::Neg(Box::new(self.factor()?)));
        }
        self.power()
    }

    // power := primary ('^' factor)?   (right-associative; exponent may be signed)
    fn power(&mut self) -> Result<MathExpr, MathError> {
        let base = self.primary()?;
        if matches!(self.peek(), Some(Token::Caret)) {
            self.pos += 1;
            let exp = self.factor()?;
            return Ok(MathExpr::Binary(BinaryOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    // primary := number | constant | variable | function '(' expr ')' | '(' expr ')'
    fn primary(&mut self) -> Result<MathExpr, MathError> {
        let offset = self.peek_offset();
        match self.advance() {
            Some(Spanned { token: Token::Number(r), .. }) => Ok(MathExpr::Literal(r.clone())),
            Some(Spanned { token: Token::Ident(name), .. }) => {
                if let Some(f) = MathFunction::from_name(name) {
                    self.expect(&Token::LParen, &format!("'(' after function {name}"))?;
                    let arg = self.expr()?;
                    self.expect(&Token::RParen, "')'")?;
                    Ok(MathExpr::Call(f, Box::new(arg)))
                } else if name == "pi" {
                    Ok(MathExpr::Constant(NamedConstant::Pi))
                } else if name == "e" {
                    Ok(MathExpr::Constant(NamedConstant::E))
                } else {
                    Ok(MathExpr::Variable(name.clone()))
                }
            }
            Some(Spanned { token: Token::LParen, .. }) => {
                let inner = self.expr()?;
                self.expect(&Token::RParen, "')'")?;
                Ok(inner)
            }
            _ => Err(syntax(offset, "expected a number, variable, function, or '('")),
        }
    }
}

/// Parses an expression string.
pub fn parse_math(input: &str) -> Result<MathExpr, MathError> {
    let tokens = tokenize(input)?;
    if tokens.is_empty() {
        return Err(syntax(0, "empty expression"));
    }
    let mut parser = Parser { tokens: &tokens, pos: 0, input_len: input.len() };
    let expr = parser.expr()?;
    if parser.pos != tokens.len() {
        return Err(syntax(parser.peek_offset(), "unexpected trailing tokens"));
    }
    Ok(expr)
}

// ---------------------------------------------------------------------------
// Equivalence
// ---------------------------------------------------------------------------

/// Tunables for [`math_equiv`]; the defaults are the verification defaults.
#[derive(Clone, Debug)]
pub struct EquivConfig {
    /// Relative tolerance for numeric agreement.
    pub rel_tol: f64,
    /// Absolute agreement floor near zero.
    pub abs_floor: f64,
    /// Sample points whose magnitude exceeds this are rejected as unstable.
    pub magnitude_cap: f64,
    /// Number of valid sample points required for a numeric "equivalent".
    pub sample_points: usize,
    /// Total candidate points drawn before giving up on finding valid ones.
    pub max_attempts: usize,
    /// Root seed of the sample-point streams.
    pub seed: u64,
}

impl Default for EquivConfig {
    fn default() -> Self {
        EquivConfig {
            rel_tol: 1e-6,
            abs_floor: 1e-9,
            magnitude_cap: 1e12,
            sample_points: 16,
            max_attempts: 256,
            seed: 0xA0_7071,
        }
    }
}

fn numerically_close(a: f64, b: f64, cfg: &EquivConfig) -> bool {
    (a - b).abs() <= f64::max(cfg.abs_floor, cfg.rel_tol * f64::max(a.abs(), b.abs()))
}

/// Decides whether two expressions are equivalent.
///
/// Returns true when (a) both sides fold to equal exact rationals, or
/// (b) the sides agree within `rel_tol` (with an absolute floor near zero) at
/// `sample_points` pseudorandom assignments of the union of their variables,
/// drawn uniformly from [-10, 10]. Points where either side is undefined or
/// exceeds `magnitude_cap` in magnitude are rejected; if no valid point turns
/// up within `max_attempts` draws, the comparison itself is undefined and
/// [`MathError::UndefinedEverywhere`] is returned.
///
/// A variable appearing on only one side makes that side vary while the other
/// stays put, so the check fails unless the expression is constant in it —
/// `x - x` against `0` passes, `x` against `0` does not. Expressions equal
/// except on a measure-zero set (`(x^2-1)/(x-1)` vs `x+1`) are reported
/// equivalent, which is the behavior wanted from a numeric checker.
pub fn math_equiv(a: &MathExpr, b: &MathExpr, cfg: &EquivConfig) -> Result<bool, MathError> {
    if let (Some(ra), Some(rb)) = (a.fold_rational(), b.fold_rational()) {
        if ra == rb {
            return Ok(true);
        }
    }

    let variables: BTreeSet<String> = {
        let mut v = a.variables();
        v.extend(b.variables());
        v
    };

    let mut valid = 0usize;
    for attempt in 0..cfg.max_attempts {
        let mut rng = StreamId::new(cfg.seed).with_str("equiv-point").with_num(attempt as u64).rng();
        let assignment: BTreeMap<String, f64> = variables
            .iter()
            .map(|name| (name.clone(), rng.random_range(-10.0..=10.0)))
            .collect();
        let (Some(va), Some(vb)) = (a.eval(&assignment), b.eval(&assignment)) else {
            continue;
        };
        if va.abs() > cfg.magnitude_cap || vb.abs() > cfg.magnitude_cap {
            continue;
        }
        if !numerically_close(va, vb, cfg) {
            return Ok(false);
        }
        valid += 1;
        if valid >= cfg.sample_points {
            return Ok(true);
        }
    }

    if valid == 0 {
        Err(MathError::UndefinedEverywhere)
    } else {
        // Fewer valid points than requested, but every one of them agreed.
        Ok(true)
    }
}
