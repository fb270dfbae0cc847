//! A small expression language for spatially varying coefficients.
//!
//! Expressions are written in the single variable `x` (alias `xi`) and may use
//! `+ - * / ^`, unary minus, the functions `sin cos exp tanh sqrt abs`, and the
//! constants `pi` and `e`. Precedence from tightest to loosest is `^`, unary
//! minus, `* /`, `+ -`. All binary operators are left-associative except `^`.
//!
//! Positivity of a coefficient is checked by dense sampling, not symbolically.
//! A profile that passes [`validate_profile`] can still dip below its reported
//! lower bound between sample points.

use std::fmt;

use thiserror::Error;

/// Number of sample points used when a caller does not pick one.
pub const DEFAULT_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at offset {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("non-finite value {value} at x = {xi}")]
    NonFinite { xi: f64, value: f64 },
    #[error("coefficient is not positive: value {value} at x = {xi}")]
    Nonpositive { xi: f64, value: f64 },
    #[error("invalid interval [{0}, {1}]")]
    InvalidInterval(f64, f64),
    #[error("at least 2 samples are required, got {0}")]
    TooFewSamples(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinaryOp {
    fn symbol(self) -> char {
        match self {
            BinaryOp::Add => '+',
            BinaryOp::Sub => '-',
            BinaryOp::Mul => '*',
            BinaryOp::Div => '/',
            BinaryOp::Pow => '^',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Function {
    Sin,
    Cos,
    Exp,
    Tanh,
    Sqrt,
    Abs,
}

impl Function {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Function::Sin,
            "cos" => Function::Cos,
            "exp" => Function::Exp,
            "tanh" => Function::Tanh,
            "sqrt" => Function::Sqrt,
            "abs" => Function::Abs,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Function::Sin => "sin",
            Function::Cos => "cos",
            Function::Exp => "exp",
            Function::Tanh => "tanh",
            Function::Sqrt => "sqrt",
            Function::Abs => "abs",
        }
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Function::Sin => v.sin(),
            Function::Cos => v.cos(),
            Function::Exp => v.exp(),
            Function::Tanh => v.tanh(),
            Function::Sqrt => v.sqrt(),
            Function::Abs => v.abs(),
        }
    }
}

/// Expression tree. Constants produced by the parser are never negative;
/// a leading minus is always a [`UnaryOp::Neg`] node.
#[derive(Debug, Clone, PartialEq)]
pub enum ExprNode {
    Constant(f64),
    Variable,
    Unary(UnaryOp, Box<ExprNode>),
    Binary(BinaryOp, Box<ExprNode>, Box<ExprNode>),
    Call(Function, Box<ExprNode>),
}

impl ExprNode {
    pub fn constant(v: f64) -> Self {
        ExprNode::Constant(v)
    }

    /// Evaluates at `xi`, failing on any non-finite intermediate result.
    pub fn eval(&self, xi: f64) -> Result<f64, ExprError> {
        let value = self.eval_raw(xi);
        if value.is_finite() {
            Ok(value)
        } else {
            Err(ExprError::NonFinite { xi, value })
        }
    }

    /// Value and first derivative by forward-mode differentiation.
    pub fn eval_with_derivative(&self, xi: f64) -> Result<(f64, f64), ExprError> {
        let (value, slope) = self.dual(xi);
        if !value.is_finite() {
            return Err(ExprError::NonFinite { xi, value });
        }
        if !slope.is_finite() {
            return Err(ExprError::NonFinite { xi, value: slope });
        }
        Ok((value, slope))
    }

    fn dual(&self, xi: f64) -> (f64, f64) {
        match self {
            ExprNode::Constant(c) => (*c, 0.0),
            ExprNode::Variable => (xi, 1.0),
            ExprNode::Unary(UnaryOp::Neg, a) => {
                let (v, d) = a.dual(xi);
                (-v, -d)
            }
            ExprNode::Binary(op, a, b) => {
                let ((av, ad), (bv, bd)) = (a.dual(xi), b.dual(xi));
                match op {
                    BinaryOp::Add => (av + bv, ad + bd),
                    BinaryOp::Sub => (av - bv, ad - bd),
                    BinaryOp::Mul => (av * bv, ad * bv + av * bd),
                    BinaryOp::Div => (av / bv, (ad * bv - av * bd) / (bv * bv)),
                    BinaryOp::Pow => {
                        let v = av.powf(bv);
                        let mut d = if ad == 0.0 {
                            0.0
                        } else {
                            bv * av.powf(bv - 1.0) * ad
                        };
                        if bd != 0.0 {
                            d += v * av.ln() * bd;
                        }
                        (v, d)
                    }
                }
            }
            ExprNode::Call(f, a) => {
                let (v, d) = a.dual(xi);
                let slope = match f {
                    Function::Sin => v.cos(),
                    Function::Cos => -v.sin(),
                    Function::Exp => v.exp(),
                    Function::Tanh => 1.0 - v.tanh().powi(2),
                    Function::Sqrt => 0.5 / v.sqrt(),
                    Function::Abs => v.signum(),
                };
                (f.apply(v), if d == 0.0 { 0.0 } else { slope * d })
            }
        }
    }

    // NaN and infinities propagate, so checking only the root is enough.
    fn eval_raw(&self, xi: f64) -> f64 {
        match self {
            ExprNode::Constant(c) => *c,
            ExprNode::Variable => xi,
            ExprNode::Unary(UnaryOp::Neg, a) => -a.eval_raw(xi),
            ExprNode::Binary(op, a, b) => {
                let (a, b) = (a.eval_raw(xi), b.eval_raw(xi));
                match op {
                    BinaryOp::Add => a + b,
                    BinaryOp::Sub => a - b,
                    BinaryOp::Mul => a * b,
                    BinaryOp::Div => a / b,
                    BinaryOp::Pow => a.powf(b),
                }
            }
            ExprNode::Call(f, a) => f.apply(a.eval_raw(xi)),
        }
    }
}

/// Fully parenthesized rendering that re-parses to the same tree.
impl fmt::Display for ExprNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExprNode::Constant(c) => write!(f, "{c:?}"),
            ExprNode::Variable => write!(f, "x"),
            ExprNode::Unary(UnaryOp::Neg, a) => write!(f, "(-{a})"),
            ExprNode::Binary(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            ExprNode::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Number(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

fn tokenize(text: &str) -> Result<Vec<(usize, Token)>, ExprError> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == b'.' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            // exponent only when digits actually follow, so `2e` stays `2 e`
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let literal = &text[start..i];
            let value = literal.parse::<f64>().map_err(|_| ExprError::Syntax {
                offset: start,
                message: format!("malformed number `{literal}`"),
            })?;
            tokens.push((start, Token::Number(value)));
        } else if c.is_ascii_alphabetic() || c == b'_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            tokens.push((start, Token::Ident(text[start..i].to_string())));
        } else {
            let token = match c {
                b'+' | b'-' | b'*' | b'/' | b'^' => Token::Op(c as char),
                b'(' => Token::LParen,
                b')' => Token::RParen,
                _ => {
                    let ch = text[i..].chars().next().unwrap_or('?');
                    return Err(ExprError::Syntax {
                        offset: i,
                        message: format!("unexpected character `{ch}`"),
                    });
                }
            };
            tokens.push((i, token));
            i += 1;
        }
    }
    Ok(tokens)
}

struct Parser {
    tokens: Vec<(usize, Token)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.end, |(o, _)| *o)
    }

    fn error(&self, message: impl Into<String>) -> ExprError {
        ExprError::Syntax {
            offset: self.offset(),
            message: message.into(),
        }
    }

    fn eat_op(&mut self, ops: &[char]) -> Option<char> {
        match self.peek() {
            Some(Token::Op(c)) if ops.contains(c) => {
                let c = *c;
                self.pos += 1;
                Some(c)
            }
            _ => None,
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ExprError> {
        if self.peek() == Some(&Token::RParen) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error("expected `)`"))
        }
    }

    fn expr(&mut self) -> Result<ExprNode, ExprError> {
        let mut lhs = self.term()?;
        while let Some(op) = self.eat_op(&['+', '-']) {
            let rhs = self.term()?;
            let op = if op == '+' {
                BinaryOp::Add
            } else {
                BinaryOp::Sub
            };
            lhs = ExprNode::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<ExprNode, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.eat_op(&['*', '/']) {
            let rhs = self.unary()?;
            let op = if op == '*' {
                BinaryOp::Mul
            } else {
                BinaryOp::Div
            };
            lhs = ExprNode::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<ExprNode, ExprError> {
        if self.eat_op(&['-']).is_some() {
            let operand = self.unary()?;
            return Ok(ExprNode::Unary(UnaryOp::Neg, Box::new(operand)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<ExprNode, ExprError> {
        let base = self.primary()?;
        if self.eat_op(&['^']).is_some() {
            // right-associative; the exponent may carry its own unary minus
            let exponent = self.unary()?;
            return Ok(ExprNode::Binary(
                BinaryOp::Pow,
                Box::new(base),
                Box::new(exponent),
            ));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<ExprNode, ExprError> {
        let offset = self.offset();
        let token = match self.tokens.get(self.pos) {
            Some((_, t)) => t.clone(),
            None => return Err(self.error("unexpected end of input")),
        };
        match token {
            Token::Number(v) => {
                self.pos += 1;
                Ok(ExprNode::Constant(v))
            }
            Token::LParen => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Token::Ident(name) => {
                self.pos += 1;
                match name.as_str() {
                    "x" | "xi" => return Ok(ExprNode::Variable),
                    "pi" => return Ok(ExprNode::Constant(std::f64::consts::PI)),
                    "e" => return Ok(ExprNode::Constant(std::f64::consts::E)),
                    _ => {}
                }
                let func = Function::from_name(&name).ok_or(ExprError::UnknownIdentifier {
                    name: name.clone(),
                    offset,
                })?;
                if self.peek() != Some(&Token::LParen) {
                    return Err(self.error(format!("expected `(` after `{name}`")));
                }
                self.pos += 1;
                let arg = self.expr()?;
                self.expect_rparen()?;
                Ok(ExprNode::Call(func, Box::new(arg)))
            }
            Token::Op(c) => Err(self.error(format!("unexpected operator `{c}`"))),
            Token::RParen => Err(self.error("unexpected `)`")),
        }
    }
}

pub fn parse(text: &str) -> Result<ExprNode, ExprError> {
    let tokens = tokenize(text)?;
    if tokens.is_empty() {
        return Err(ExprError::Syntax {
            offset: 0,
            message: "empty expression".into(),
        });
    }
    let mut parser = Parser {
        tokens,
        pos: 0,
        end: text.len(),
    };
    let node = parser.expr()?;
    if parser.pos < parser.tokens.len() {
        return Err(parser.error("unexpected trailing input"));
    }
    Ok(node)
}

/// A coefficient with sampled bounds `0 < lower <= f(x) <= upper` on `interval`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientProfile {
    expr: ExprNode,
    interval: (f64, f64),
    lower: f64,
    upper: f64,
}

impl CoefficientProfile {
    /// Unit coefficient on `interval`.
    pub fn constant(value: f64, interval: (f64, f64)) -> Result<Self, ExprError> {
        validate_profile(&ExprNode::Constant(value), interval, 2)
    }

    pub fn expr(&self) -> &ExprNode {
        &self.expr
    }

    pub fn interval(&self) -> (f64, f64) {
        self.interval
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    /// Evaluates the profile. Points outside the validated interval are allowed
    /// but carry no positivity guarantee.
    pub fn eval(&self, xi: f64) -> Result<f64, ExprError> {
        self.expr.eval(xi)
    }
}

/// Samples `expr` at `samples` uniformly spaced points (endpoints included) and
/// records the extreme values.
pub fn validate_profile(
    expr: &ExprNode,
    interval: (f64, f64),
    samples: usize,
) -> Result<CoefficientProfile, ExprError> {
    let (a, b) = interval;
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(ExprError::InvalidInterval(a, b));
    }
    if samples < 2 {
        return Err(ExprError::TooFewSamples(samples));
    }
    let mut lower = f64::INFINITY;
    let mut upper = f64::NEG_INFINITY;
    let step = (b - a) / (samples - 1) as f64;
    for i in 0..samples {
        let xi = if i == samples - 1 {
            b
        } else {
            a + step * i as f64
        };
        let value = expr.eval(xi)?;
        if value <= 0.0 {
            return Err(ExprError::Nonpositive { xi, value });
        }
        lower = lower.min(value);
        upper = upper.max(value);
    }
    Ok(CoefficientProfile {
        expr: expr.clone(),
        interval,
        lower,
        upper,
    })
}
