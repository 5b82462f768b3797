//! Arithmetic expression ASTs over variables `x1..xn` with exact analytic
//! differentiation. Expressions are parsed once, differentiated
//! symbolically (transform-then-evaluate), and evaluated as plain trees.
//! Domain violations (log/sqrt outside their domain, division by zero)
//! evaluate to NaN and propagate; solvers treat NaN as a rejected trial
//! point rather than an error.

use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
#[error("parse error at offset {offset}: {message}")]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    /// Zero-based variable index; `x1` parses to `Var(0)`.
    Var(usize),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    /// Integer power with arbitrary (possibly negative) exponent.
    Pow(Box<Expr>, i32),
    Neg(Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Exp(Box<Expr>),
    Log(Box<Expr>),
    Sqrt(Box<Expr>),
}

impl Expr {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => x[*i],
            Expr::Add(a, b) => a.eval(x) + b.eval(x),
            Expr::Sub(a, b) => a.eval(x) - b.eval(x),
            Expr::Mul(a, b) => a.eval(x) * b.eval(x),
            Expr::Div(a, b) => a.eval(x) / b.eval(x),
            Expr::Pow(a, k) => a.eval(x).powi(*k),
            Expr::Neg(a) => -a.eval(x),
            Expr::Sin(a) => a.eval(x).sin(),
            Expr::Cos(a) => a.eval(x).cos(),
            Expr::Exp(a) => a.eval(x).exp(),
            Expr::Log(a) => {
                let v = a.eval(x);
                if v > 0.0 {
                    v.ln()
                } else {
                    f64::NAN
                }
            }
            Expr::Sqrt(a) => {
                let v = a.eval(x);
                if v >= 0.0 {
                    v.sqrt()
                } else {
                    f64::NAN
                }
            }
        }
    }

    /// Partial derivative with respect to variable `i`, with light
    /// simplification so repeated differentiation stays manageable.
    pub fn diff(&self, i: usize) -> Expr {
        match self {
            Expr::Const(_) => Expr::Const(0.0),
            Expr::Var(j) => Expr::Const(if *j == i { 1.0 } else { 0.0 }),
            Expr::Add(a, b) => add(a.diff(i), b.diff(i)),
            Expr::Sub(a, b) => sub(a.diff(i), b.diff(i)),
            Expr::Mul(a, b) => add(
                mul(a.diff(i), (**b).clone()),
                mul((**a).clone(), b.diff(i)),
            ),
            Expr::Div(a, b) => {
                // (a/b)' = a'/b - a b' / b^2
                sub(
                    div(a.diff(i), (**b).clone()),
                    div(mul((**a).clone(), b.diff(i)), pow((**b).clone(), 2)),
                )
            }
            Expr::Pow(a, k) => {
                if *k == 0 {
                    Expr::Const(0.0)
                } else {
                    mul(
                        mul(Expr::Const(f64::from(*k)), pow((**a).clone(), k - 1)),
                        a.diff(i),
                    )
                }
            }
            Expr::Neg(a) => neg(a.diff(i)),
            Expr::Sin(a) => mul(Expr::Cos(a.clone()), a.diff(i)),
            Expr::Cos(a) => neg(mul(Expr::Sin(a.clone()), a.diff(i))),
            Expr::Exp(a) => mul(Expr::Exp(a.clone()), a.diff(i)),
            Expr::Log(a) => div(a.diff(i), (**a).clone()),
            Expr::Sqrt(a) => div(
                a.diff(i),
                mul(Expr::Const(2.0), Expr::Sqrt(a.clone())),
            ),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Const(c) if *c == 0.0)
    }
}

// Smart constructors with constant folding; they keep derivative trees from
// exploding with 0 and 1 factors.

fn add(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x + y),
        _ if a.is_zero() => b,
        _ if b.is_zero() => a,
        _ => Expr::Add(Box::new(a), Box::new(b)),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x - y),
        _ if b.is_zero() => a,
        _ if a.is_zero() => neg(b),
        _ => Expr::Sub(Box::new(a), Box::new(b)),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x * y),
        _ if a.is_zero() || b.is_zero() => Expr::Const(0.0),
        (Expr::Const(c), _) if *c == 1.0 => b,
        (_, Expr::Const(c)) if *c == 1.0 => a,
        _ => Expr::Mul(Box::new(a), Box::new(b)),
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    if a.is_zero() {
        return Expr::Const(0.0);
    }
    if let Expr::Const(c) = &b {
        if *c == 1.0 {
            return a;
        }
    }
    Expr::Div(Box::new(a), Box::new(b))
}

fn pow(a: Expr, k: i32) -> Expr {
    match k {
        0 => Expr::Const(1.0),
        1 => a,
        _ => match a {
            Expr::Const(c) => Expr::Const(c.powi(k)),
            _ => Expr::Pow(Box::new(a), k),
        },
    }
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Const(c) => Expr::Const(-c),
        Expr::Neg(inner) => *inner,
        _ => Expr::Neg(Box::new(a)),
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(i) => write!(f, "x{}", i + 1),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, k) => write!(f, "({a}^{k})"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Sin(a) => write!(f, "sin({a})"),
            Expr::Cos(a) => write!(f, "cos({a})"),
            Expr::Exp(a) => write!(f, "exp({a})"),
            Expr::Log(a) => write!(f, "log({a})"),
            Expr::Sqrt(a) => write!(f, "sqrt({a})"),
        }
    }
}

/// Recursive-descent parser with byte-offset diagnostics.
///
/// Grammar (standard precedence, `^` binds tightest and takes an integer
/// literal exponent):
///
/// ```text
/// expr   := term (('+' | '-') term)*
/// term   := unary (('*' | '/') unary)*
/// unary  := '-' unary | power
/// power  := atom ('^' '-'? integer)?
/// atom   := number | 'x'<digits> | func '(' expr ')' | '(' expr ')'
/// func   := sin | cos | exp | log | sqrt
/// ```
pub fn parse_expr(text: &str, n: usize) -> Result<Expr, ParseError> {
    let mut p = Parser { bytes: text.as_bytes(), pos: 0, n };
    p.skip_ws();
    let e = p.expr()?;
    p.skip_ws();
    if p.pos != p.bytes.len() {
        return Err(p.err("unexpected trailing input"));
    }
    Ok(e)
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
    n: usize,
}

impl<'a> Parser<'a> {
    fn err(&self, message: &str) -> ParseError {
        ParseError { offset: self.pos, message: message.to_string() }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(b' ' | b'\t' | b'\n' | b'\r')) {
            self.pos += 1;
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            self.skip_ws();
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    self.skip_ws();
                    let rhs = self.term()?;
                    lhs = Expr::Add(Box::new(lhs), Box::new(rhs));
                }
                Some(b'-') => {
                    self.pos += 1;
                    self.skip_ws();
                    let rhs = self.term()?;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            self.skip_ws();
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    self.skip_ws();
                    let rhs = self.unary()?;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(rhs));
                }
                Some(b'/') => {
                    self.pos += 1;
                    self.skip_ws();
                    let rhs = self.unary()?;
                    lhs = Expr::Div(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        self.skip_ws();
        if self.peek() == Some(b'-') {
            self.pos += 1;
            let inner = self.unary()?;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        self.skip_ws();
        if self.peek() == Some(b'^') {
            self.pos += 1;
            self.skip_ws();
            let mut sign = 1i32;
            if self.peek() == Some(b'-') {
                sign = -1;
                self.pos += 1;
            }
            let start = self.pos;
            while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                self.pos += 1;
            }
            if self.pos == start {
                return Err(self.err("expected integer exponent after '^'"));
            }
            let digits = std::str::from_utf8(&self.bytes[start..self.pos]).unwrap();
            let k: i32 = digits
                .parse()
                .map_err(|_| ParseError { offset: start, message: "exponent out of range".into() })?;
            return Ok(Expr::Pow(Box::new(base), sign * k));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        self.skip_ws();
        match self.peek() {
            None => Err(self.err("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.skip_ws();
                if self.peek() != Some(b')') {
                    return Err(self.err("expected ')'"));
                }
                self.pos += 1;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.identifier(),
            Some(_) => Err(self.err("expected a number, identifier or '('")),
        }
    }

    fn number(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit() || c == b'.') {
            self.pos += 1;
        }
        // Scientific notation tail.
        if matches!(self.peek(), Some(b'e' | b'E')) {
            let mark = self.pos;
            self.pos += 1;
            if matches!(self.peek(), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                    self.pos += 1;
                }
            } else {
                self.pos = mark;
            }
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos]).unwrap();
        text.parse::<f64>()
            .map(Expr::Const)
            .map_err(|_| ParseError { offset: start, message: format!("malformed number '{text}'") })
    }

    fn identifier(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric()) {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.bytes[start..self.pos]).unwrap();
        if let Some(rest) = name.strip_prefix('x') {
            if !rest.is_empty() && rest.bytes().all(|c| c.is_ascii_digit()) {
                let idx: usize = rest.parse().map_err(|_| ParseError {
                    offset: start,
                    message: format!("variable index out of range in '{name}'"),
                })?;
                if idx == 0 || idx > self.n {
                    return Err(ParseError {
                        offset: start,
                        message: format!("unknown variable '{name}' (valid: x1..x{})", self.n),
                    });
                }
                return Ok(Expr::Var(idx - 1));
            }
        }
        let func = match name {
            "sin" | "cos" | "exp" | "log" | "sqrt" => name.to_string(),
            _ => {
                return Err(ParseError {
                    offset: start,
                    message: format!("unknown identifier '{name}'"),
                })
            }
        };
        self.skip_ws();
        if self.peek() != Some(b'(') {
            return Err(self.err(&format!("expected '(' after '{func}'")));
        }
        self.pos += 1;
        let arg = self.expr()?;
        self.skip_ws();
        if self.peek() != Some(b')') {
            return Err(self.err("expected ')'"));
        }
        self.pos += 1;
        let boxed = Box::new(arg);
        Ok(match func.as_str() {
            "sin" => Expr::Sin(boxed),
            "cos" => Expr::Cos(boxed),
            "exp" => Expr::Exp(boxed),
            "log" => Expr::Log(boxed),
            _ => Expr::Sqrt(boxed),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_eval() {
        let e = parse_expr("x1 + 2*x2", 2).unwrap();
        assert_eq!(e.eval(&[1.0, 1.0]), 3.0);
        let e = parse_expr("(x1 - 1)^2 + sin(x2)", 2).unwrap();
        assert!((e.eval(&[3.0, 0.0]) - 4.0).abs() < 1e-15);
        let e = parse_expr("2^3", 1).unwrap();
        assert_eq!(e.eval(&[0.0]), 8.0);
        let e = parse_expr("x1^-2", 1).unwrap();
        assert_eq!(e.eval(&[2.0]), 0.25);
        let e = parse_expr("1.5e2 - x1", 1).unwrap();
        assert_eq!(e.eval(&[50.0]), 100.0);
    }

    #[test]
    fn precedence_and_unary_minus() {
        let e = parse_expr("-x1^2", 1).unwrap();
        // Unary minus applies after the power: -(x1^2).
        assert_eq!(e.eval(&[3.0]), -9.0);
        let e = parse_expr("2 - 3 - 4", 1).unwrap();
        assert_eq!(e.eval(&[0.0]), -5.0);
        let e = parse_expr("2 + 3 * 4", 1).unwrap();
        assert_eq!(e.eval(&[0.0]), 14.0);
        let e = parse_expr("8 / 2 / 2", 1).unwrap();
        assert_eq!(e.eval(&[0.0]), 2.0);
    }

    #[test]
    fn parse_error_positions() {
        let err = parse_expr("x1 +", 2).unwrap_err();
        assert_eq!(err.offset, 4);
        let err = parse_expr("x3 + 1", 2).unwrap_err();
        assert_eq!(err.offset, 0);
        assert!(err.message.contains("x3"));
        let err = parse_expr("sin x1", 2).unwrap_err();
        assert!(err.message.contains("expected '('"));
        let err = parse_expr("x1 ^ x2", 2).unwrap_err();
        assert!(err.message.contains("integer exponent"));
    }

    #[test]
    fn hessian_of_x1sq_x2sq() {
        // f = x1^2 * x2^2: at (1,1) the Hessian is [[2, 4], [4, 2]].
        let e = parse_expr("x1^2 * x2^2", 2).unwrap();
        let d1 = e.diff(0);
        let d11 = d1.diff(0);
        let d12 = d1.diff(1);
        let d2 = e.diff(1);
        let d22 = d2.diff(1);
        let x = [1.0, 1.0];
        assert_eq!(d11.eval(&x), 2.0);
        assert_eq!(d12.eval(&x), 4.0);
        assert_eq!(d22.eval(&x), 2.0);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let samples = [
            ("x1*x2 + sin(x1) - exp(x2/2)", 2),
            ("sqrt(x1 + 3) * log(x2 + 4)", 2),
            ("(x1 - x2)^3 / (1 + x1^2)", 2),
            ("cos(x1)^2 + x1/x2", 2),
        ];
        let x = [0.7, 1.3];
        let h = 1e-5;
        for (text, n) in samples {
            let e = parse_expr(text, n).unwrap();
            for i in 0..n {
                let d = e.diff(i);
                let mut xp = x;
                let mut xm = x;
                xp[i] += h;
                xm[i] -= h;
                let fd = (e.eval(&xp) - e.eval(&xm)) / (2.0 * h);
                let an = d.eval(&x);
                assert!(
                    (fd - an).abs() <= 1e-4 * (1.0 + an.abs()),
                    "{text} d{i}: fd={fd} analytic={an}"
                );
            }
        }
    }

    #[test]
    fn domain_guards_produce_nan() {
        let e = parse_expr("log(x1)", 1).unwrap();
        assert!(e.eval(&[-1.0]).is_nan());
        assert!(e.eval(&[0.0]).is_nan());
        let e = parse_expr("sqrt(x1)", 1).unwrap();
        assert!(e.eval(&[-1.0]).is_nan());
        let e = parse_expr("1/x1", 1).unwrap();
        assert!(e.eval(&[0.0]).is_infinite());
    }
}
