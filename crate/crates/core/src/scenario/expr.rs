//! A small arithmetic expression language for scenario files.
//!
//! Grammar (lowest to highest precedence):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := ('-' | '+') unary | power
//! power   := primary ('^' unary)?          right associative
//! primary := number | 'pi' | var | func '(' expr ')' | '(' expr ')'
//! var     := 'q' index | 'p' index          index is 1-based
//! func    := sin | cos | tan | exp | ln | sqrt
//! ```
//!
//! Expressions are differentiated symbolically, so scenario Jacobians are
//! exact up to rounding.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("parse error at position {position}: {message}")]
    Parse { position: usize, message: String },
    #[error("unknown identifier `{0}`")]
    UnknownIdentifier(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("{func} outside its domain at argument {arg}")]
    Domain { func: &'static str, arg: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    /// Zero-based configuration coordinate.
    Q(usize),
    /// Zero-based momentum coordinate.
    P(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Ln,
    Sqrt,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
        }
    }

    fn from_name(s: &str) -> Option<Func> {
        Some(match s {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "ln" | "log" => Func::Ln,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }

    fn apply(self, x: f64) -> Result<f64, ExprError> {
        let v = match self {
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Tan => x.tan(),
            Func::Exp => x.exp(),
            Func::Ln => {
                if x <= 0.0 {
                    return Err(ExprError::Domain { func: "ln", arg: x });
                }
                x.ln()
            }
            Func::Sqrt => {
                if x < 0.0 {
                    return Err(ExprError::Domain {
                        func: "sqrt",
                        arg: x,
                    });
                }
                x.sqrt()
            }
        };
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr, ExprError> {
        let mut parser = Parser::new(src);
        let e = parser.expr()?;
        parser.skip_ws();
        if parser.pos < parser.src.len() {
            return Err(parser.error("unexpected trailing input"));
        }
        Ok(e)
    }

    pub fn num(x: f64) -> Expr {
        Expr::Num(x)
    }

    pub fn q(i: usize) -> Expr {
        Expr::Var(Var::Q(i))
    }

    pub fn p(i: usize) -> Expr {
        Expr::Var(Var::P(i))
    }

    fn as_num(&self) -> Option<f64> {
        match self {
            Expr::Num(x) => Some(*x),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_num() == Some(0.0)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn add(a: Expr, b: Expr) -> Expr {
        match (a.as_num(), b.as_num()) {
            (Some(x), Some(y)) => Expr::Num(x + y),
            (Some(0.0), _) => b,
            (_, Some(0.0)) => a,
            _ => Expr::Add(Box::new(a), Box::new(b)),
        }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn sub(a: Expr, b: Expr) -> Expr {
        match (a.as_num(), b.as_num()) {
            (Some(x), Some(y)) => Expr::Num(x - y),
            (Some(0.0), _) => Expr::neg(b),
            (_, Some(0.0)) => a,
            _ => Expr::Sub(Box::new(a), Box::new(b)),
        }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn mul(a: Expr, b: Expr) -> Expr {
        match (a.as_num(), b.as_num()) {
            (Some(x), Some(y)) => Expr::Num(x * y),
            (Some(0.0), _) | (_, Some(0.0)) => Expr::Num(0.0),
            (Some(1.0), _) => b,
            (_, Some(1.0)) => a,
            _ => Expr::Mul(Box::new(a), Box::new(b)),
        }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn div(a: Expr, b: Expr) -> Expr {
        match (a.as_num(), b.as_num()) {
            (Some(0.0), _) => Expr::Num(0.0),
            (_, Some(1.0)) => a,
            _ => Expr::Div(Box::new(a), Box::new(b)),
        }
    }

    pub fn pow(a: Expr, b: Expr) -> Expr {
        match (a.as_num(), b.as_num()) {
            (_, Some(0.0)) => Expr::Num(1.0),
            (_, Some(1.0)) => a,
            _ => Expr::Pow(Box::new(a), Box::new(b)),
        }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn neg(a: Expr) -> Expr {
        match a {
            Expr::Num(x) => Expr::Num(-x),
            Expr::Neg(inner) => *inner,
            other => Expr::Neg(Box::new(other)),
        }
    }

    pub fn call(f: Func, a: Expr) -> Expr {
        Expr::Call(f, Box::new(a))
    }

    /// Evaluate at configuration `q` and momenta `p`.
    pub fn eval(&self, q: &[f64], p: &[f64]) -> Result<f64, ExprError> {
        Ok(match self {
            Expr::Num(x) => *x,
            Expr::Var(Var::Q(i)) => *q
                .get(*i)
                .ok_or_else(|| ExprError::UnknownIdentifier(format!("q{}", i + 1)))?,
            Expr::Var(Var::P(i)) => *p
                .get(*i)
                .ok_or_else(|| ExprError::UnknownIdentifier(format!("p{}", i + 1)))?,
            Expr::Neg(a) => -a.eval(q, p)?,
            Expr::Add(a, b) => a.eval(q, p)? + b.eval(q, p)?,
            Expr::Sub(a, b) => a.eval(q, p)? - b.eval(q, p)?,
            Expr::Mul(a, b) => a.eval(q, p)? * b.eval(q, p)?,
            Expr::Div(a, b) => {
                let den = b.eval(q, p)?;
                if den == 0.0 {
                    return Err(ExprError::DivisionByZero);
                }
                a.eval(q, p)? / den
            }
            Expr::Pow(a, b) => {
                let base = a.eval(q, p)?;
                match b.as_num() {
                    Some(e) if e.fract() == 0.0 && e.abs() <= 64.0 => {
                        if base == 0.0 && e < 0.0 {
                            return Err(ExprError::DivisionByZero);
                        }
                        base.powi(e as i32)
                    }
                    _ => base.powf(b.eval(q, p)?),
                }
            }
            Expr::Call(f, a) => f.apply(a.eval(q, p)?)?,
        })
    }

    /// Evaluation that maps any error to NaN, for use inside numeric closures
    /// whose callers check finiteness.
    pub fn value(&self, q: &[f64], p: &[f64]) -> f64 {
        self.eval(q, p).unwrap_or(f64::NAN)
    }

    /// Symbolic partial derivative with light constant folding.
    pub fn derivative(&self, var: Var) -> Expr {
        match self {
            Expr::Num(_) => Expr::Num(0.0),
            Expr::Var(v) => Expr::Num(if *v == var { 1.0 } else { 0.0 }),
            Expr::Neg(a) => Expr::neg(a.derivative(var)),
            Expr::Add(a, b) => Expr::add(a.derivative(var), b.derivative(var)),
            Expr::Sub(a, b) => Expr::sub(a.derivative(var), b.derivative(var)),
            Expr::Mul(a, b) => Expr::add(
                Expr::mul(a.derivative(var), (**b).clone()),
                Expr::mul((**a).clone(), b.derivative(var)),
            ),
            Expr::Div(a, b) => {
                let da = a.derivative(var);
                let db = b.derivative(var);
                if db.is_zero() {
                    Expr::div(da, (**b).clone())
                } else {
                    Expr::div(
                        Expr::sub(Expr::mul(da, (**b).clone()), Expr::mul((**a).clone(), db)),
                        Expr::pow((**b).clone(), Expr::Num(2.0)),
                    )
                }
            }
            Expr::Pow(a, b) => {
                let da = a.derivative(var);
                let db = b.derivative(var);
                if let Some(c) = b.as_num() {
                    Expr::mul(
                        Expr::mul(Expr::Num(c), Expr::pow((**a).clone(), Expr::Num(c - 1.0))),
                        da,
                    )
                } else {
                    // a^b (b' ln a + b a' / a)
                    Expr::mul(
                        self.clone(),
                        Expr::add(
                            Expr::mul(db, Expr::call(Func::Ln, (**a).clone())),
                            Expr::div(Expr::mul((**b).clone(), da), (**a).clone()),
                        ),
                    )
                }
            }
            Expr::Call(f, a) => {
                let da = a.derivative(var);
                if da.is_zero() {
                    return Expr::Num(0.0);
                }
                let inner = (**a).clone();
                let outer = match f {
                    Func::Sin => Expr::call(Func::Cos, inner),
                    Func::Cos => Expr::neg(Expr::call(Func::Sin, inner)),
                    Func::Tan => Expr::div(
                        Expr::Num(1.0),
                        Expr::pow(Expr::call(Func::Cos, inner), Expr::Num(2.0)),
                    ),
                    Func::Exp => self.clone(),
                    Func::Ln => Expr::div(Expr::Num(1.0), inner),
                    Func::Sqrt => Expr::div(Expr::Num(0.5), self.clone()),
                };
                Expr::mul(outer, da)
            }
        }
    }

    /// Visit every variable referenced by the expression.
    pub fn variables(&self) -> Vec<Var> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out.sort();
        out.dedup();
        out
    }

    fn collect_vars(&self, out: &mut Vec<Var>) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(v) => out.push(*v),
            Expr::Neg(a) | Expr::Call(_, a) => a.collect_vars(out),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    pub fn depends_on(&self, var: Var) -> bool {
        self.variables().contains(&var)
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(..) => 3,
            Expr::Pow(..) => 4,
            Expr::Num(x) if *x < 0.0 => 3,
            _ => 5,
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn child(f: &mut fmt::Formatter<'_>, e: &Expr, min_prec: u8) -> fmt::Result {
            if e.precedence() < min_prec {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        }
        match self {
            Expr::Num(x) => {
                if x.is_finite() {
                    write!(f, "{x:?}")
                } else {
                    write!(f, "(0/0)")
                }
            }
            Expr::Var(Var::Q(i)) => write!(f, "q{}", i + 1),
            Expr::Var(Var::P(i)) => write!(f, "p{}", i + 1),
            Expr::Neg(a) => {
                write!(f, "-")?;
                child(f, a, 4)
            }
            Expr::Add(a, b) => {
                child(f, a, 1)?;
                write!(f, " + ")?;
                child(f, b, 2)
            }
            Expr::Sub(a, b) => {
                child(f, a, 1)?;
                write!(f, " - ")?;
                child(f, b, 2)
            }
            Expr::Mul(a, b) => {
                child(f, a, 2)?;
                write!(f, "*")?;
                child(f, b, 4)
            }
            Expr::Div(a, b) => {
                child(f, a, 2)?;
                write!(f, "/")?;
                child(f, b, 4)
            }
            Expr::Pow(a, b) => {
                child(f, a, 5)?;
                write!(f, "^")?;
                child(f, b, 5)
            }
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Parser {
            src: src.as_bytes(),
            pos: 0,
        }
    }

    fn error(&self, message: &str) -> ExprError {
        ExprError::Parse {
            position: self.pos,
            message: message.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat(b'-') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(b'*') {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat(b'/') {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.eat(b'-') {
            let inner = self.unary()?;
            return Ok(match inner {
                Expr::Num(x) => Expr::Num(-x),
                other => Expr::Neg(Box::new(other)),
            });
        }
        if self.eat(b'+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.primary()?;
        if self.eat(b'^') {
            let exp = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            None => Err(self.error("unexpected end of expression")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.error("expected `)`"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.identifier(),
            Some(c) => Err(self.error(&format!("unexpected character `{}`", c as char))),
        }
    }

    fn number(&mut self) -> Result<Expr, ExprError> {
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_digit() || self.src[self.pos] == b'.')
        {
            self.pos += 1;
        }
        if self.pos < self.src.len() && (self.src[self.pos] == b'e' || self.src[self.pos] == b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < self.src.len()
                && (self.src[self.pos] == b'+' || self.src[self.pos] == b'-')
            {
                self.pos += 1;
            }
            let digits = self.pos;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if self.pos == digits {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        text.parse::<f64>()
            .map(Expr::Num)
            .map_err(|_| ExprError::Parse {
                position: start,
                message: format!("invalid number `{text}`"),
            })
    }

    fn identifier(&mut self) -> Result<Expr, ExprError> {
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        if let Some(func) = Func::from_name(name) {
            if !self.eat(b'(') {
                return Err(self.error(&format!("expected `(` after `{name}`")));
            }
            let arg = self.expr()?;
            if !self.eat(b')') {
                return Err(self.error("expected `)`"));
            }
            return Ok(Expr::Call(func, Box::new(arg)));
        }
        if name == "pi" {
            return Ok(Expr::Num(std::f64::consts::PI));
        }
        let (head, tail) = name.split_at(1);
        if let Ok(index) = tail.parse::<usize>() {
            if index >= 1 {
                match head {
                    "q" => return Ok(Expr::q(index - 1)),
                    "p" => return Ok(Expr::p(index - 1)),
                    _ => {}
                }
            }
        }
        Err(ExprError::UnknownIdentifier(name.to_string()))
    }
}

/// A parsed expression shared between numeric closures.
pub type SharedExpr = Arc<Expr>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluates_mixed_expression() {
        let e = Expr::parse("q1*p2 + sin(q2)").unwrap();
        let v = e
            .eval(&[0.0, std::f64::consts::FRAC_PI_2], &[0.0, 3.0])
            .unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fd_gradient_matches_hand_values() {
        let e = Expr::parse("q3 - q1*q2").unwrap();
        let q = [1.0, 2.0, 3.0];
        let h = 1e-6;
        let expected = [-2.0, -1.0, 1.0];
        for i in 0..3 {
            let mut qp = q;
            let mut qm = q;
            qp[i] += h;
            qm[i] -= h;
            let g = (e.eval(&qp, &[]).unwrap() - e.eval(&qm, &[]).unwrap()) / (2.0 * h);
            assert!((g - expected[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn malformed_input_reports_position() {
        match Expr::parse("q1 +") {
            Err(ExprError::Parse { position, .. }) => assert_eq!(position, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(matches!(Expr::parse("(q1"), Err(ExprError::Parse { .. })));
        assert!(matches!(Expr::parse("q1 q2"), Err(ExprError::Parse { .. })));
    }

    #[test]
    fn unknown_identifier_and_division_by_zero() {
        assert_eq!(
            Expr::parse("x + 1"),
            Err(ExprError::UnknownIdentifier("x".into()))
        );
        let e = Expr::parse("1/(q1 - 1)").unwrap();
        assert_eq!(e.eval(&[1.0], &[]), Err(ExprError::DivisionByZero));
        let e = Expr::parse("q4").unwrap();
        assert!(matches!(
            e.eval(&[1.0], &[]),
            Err(ExprError::UnknownIdentifier(_))
        ));
    }

    #[test]
    fn precedence_and_associativity() {
        let v = |s: &str| Expr::parse(s).unwrap().eval(&[2.0], &[]).unwrap();
        assert_eq!(v("-q1^2"), -4.0);
        assert_eq!(v("2^3^2"), 512.0);
        assert_eq!(v("1 - 2 - 3"), -4.0);
        assert_eq!(v("8/2/2"), 2.0);
        assert_eq!(v("2*-q1"), -4.0);
        assert_eq!(v("1.5e1 + 2E-1"), 15.2);
        assert!((v("pi") - std::f64::consts::PI).abs() < 1e-15);
    }

    #[test]
    fn symbolic_derivatives() {
        let e = Expr::parse("q1^3 + sin(q1*q2) + exp(q2)/q1 + sqrt(1 + q1^2) + ln(q2)").unwrap();
        let q = [0.7, 1.3];
        let d1 = e.derivative(Var::Q(0)).eval(&q, &[]).unwrap();
        let d2 = e.derivative(Var::Q(1)).eval(&q, &[]).unwrap();
        let (x, y) = (q[0], q[1]);
        let e1 = 3.0 * x * x + y * (x * y).cos() - y.exp() / (x * x) + x / (1.0 + x * x).sqrt();
        let e2 = x * (x * y).cos() + y.exp() / x + 1.0 / y;
        assert!((d1 - e1).abs() < 1e-13);
        assert!((d2 - e2).abs() < 1e-13);
    }

    #[test]
    fn display_round_trips() {
        for s in [
            "q1*p2 + sin(q2)",
            "-(q1 + q2)^2",
            "1/(q1 - q2/3)",
            "q1 - (q2 - q3)",
            "2^(q1^2)",
            "-0.5*q1 + -3*q2",
            "exp(-q1)*cos(q2)",
        ] {
            let e = Expr::parse(s).unwrap();
            let printed = e.to_string();
            let back = Expr::parse(&printed).unwrap();
            let q = [0.3, -0.8, 1.1];
            let p = [0.2, 0.5, -0.4];
            assert_eq!(
                e.eval(&q, &p).unwrap(),
                back.eval(&q, &p).unwrap(),
                "{s} -> {printed}"
            );
        }
    }

    #[test]
    fn variables_are_collected() {
        let e = Expr::parse("q2*p1 + q2").unwrap();
        assert_eq!(e.variables(), vec![Var::Q(1), Var::P(0)]);
    }
}
