//! Expression trees for fundamental functions.
//!
//! User metrics arrive as a single plain-text expression over `x1..xn`,
//! `p1..pn` with `+ - * / ^` (integer powers), `sqrt(...)` and parentheses.
//! Built-in metrics are assembled programmatically as the same trees, so
//! both paths evaluate identically on plain floats and on jets. The float
//! evaluator is the one the finite-difference oracle uses; it never touches
//! jet arithmetic.

use std::fmt;

use crate::error::{CartanError, Result};
use crate::jets::Jet;

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    /// Base coordinate, 0-based.
    X(usize),
    /// Momentum, 0-based.
    P(usize),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Pow(Box<Expr>, i32),
    Sqrt(Box<Expr>),
}

impl Expr {
    pub fn add(a: Expr, b: Expr) -> Expr {
        Expr::Add(Box::new(a), Box::new(b))
    }
    pub fn sub(a: Expr, b: Expr) -> Expr {
        Expr::Sub(Box::new(a), Box::new(b))
    }
    pub fn mul(a: Expr, b: Expr) -> Expr {
        Expr::Mul(Box::new(a), Box::new(b))
    }
    pub fn div(a: Expr, b: Expr) -> Expr {
        Expr::Div(Box::new(a), Box::new(b))
    }
    pub fn pow(a: Expr, n: i32) -> Expr {
        Expr::Pow(Box::new(a), n)
    }
    pub fn sqrt(a: Expr) -> Expr {
        Expr::Sqrt(Box::new(a))
    }
    pub fn sum(terms: impl IntoIterator<Item = Expr>) -> Expr {
        let mut it = terms.into_iter();
        let first = it.next().expect("sum of no terms");
        it.fold(first, Expr::add)
    }

    /// Largest coordinate index referenced, for dimension validation.
    pub fn max_index(&self) -> Option<usize> {
        match self {
            Expr::Const(_) => None,
            Expr::X(i) | Expr::P(i) => Some(*i),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.max_index().into_iter().chain(b.max_index()).max()
            }
            Expr::Neg(a) | Expr::Sqrt(a) => a.max_index(),
            Expr::Pow(a, _) => a.max_index(),
        }
    }

    pub fn eval_f64(&self, x: &[f64], p: &[f64]) -> Result<f64> {
        Ok(match self {
            Expr::Const(c) => *c,
            Expr::X(i) => x[*i],
            Expr::P(i) => p[*i],
            Expr::Add(a, b) => a.eval_f64(x, p)? + b.eval_f64(x, p)?,
            Expr::Sub(a, b) => a.eval_f64(x, p)? - b.eval_f64(x, p)?,
            Expr::Mul(a, b) => a.eval_f64(x, p)? * b.eval_f64(x, p)?,
            Expr::Div(a, b) => {
                let d = b.eval_f64(x, p)?;
                if d == 0.0 {
                    return Err(CartanError::Singularity("division by zero".into()));
                }
                a.eval_f64(x, p)? / d
            }
            Expr::Neg(a) => -a.eval_f64(x, p)?,
            Expr::Pow(a, n) => a.eval_f64(x, p)?.powi(*n),
            Expr::Sqrt(a) => {
                let v = a.eval_f64(x, p)?;
                if v <= 0.0 {
                    return Err(CartanError::Domain(format!(
                        "sqrt of non-positive value {v:.3e}"
                    )));
                }
                v.sqrt()
            }
        })
    }

    pub fn eval_jet(&self, x: &[Jet], p: &[Jet]) -> Result<Jet> {
        Ok(match self {
            Expr::Const(c) => Jet::constant(x[0].space(), *c),
            Expr::X(i) => x[*i].clone(),
            Expr::P(i) => p[*i].clone(),
            Expr::Add(a, b) => &a.eval_jet(x, p)? + &b.eval_jet(x, p)?,
            Expr::Sub(a, b) => &a.eval_jet(x, p)? - &b.eval_jet(x, p)?,
            Expr::Mul(a, b) => &a.eval_jet(x, p)? * &b.eval_jet(x, p)?,
            Expr::Div(a, b) => a.eval_jet(x, p)?.div(&b.eval_jet(x, p)?)?,
            Expr::Neg(a) => -&a.eval_jet(x, p)?,
            Expr::Pow(a, n) => a.eval_jet(x, p)?.powi(*n)?,
            Expr::Sqrt(a) => a.eval_jet(x, p)?.sqrt()?,
        })
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::X(i) => write!(f, "x{}", i + 1),
            Expr::P(i) => write!(f, "p{}", i + 1),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Pow(a, n) => write!(f, "({a}^{n})"),
            Expr::Sqrt(a) => write!(f, "sqrt({a})"),
        }
    }
}

// ---------------------------------------------------------------------------
// Parser: recursive descent over a small token stream.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

fn tokenize(src: &str) -> Result<Vec<Tok>> {
    let mut out = vec![];
    let bytes: Vec<char> = src.chars().collect();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '+' => {
                out.push(Tok::Plus);
                i += 1;
            }
            '-' => {
                out.push(Tok::Minus);
                i += 1;
            }
            '*' => {
                out.push(Tok::Star);
                i += 1;
            }
            '/' => {
                out.push(Tok::Slash);
                i += 1;
            }
            '^' => {
                out.push(Tok::Caret);
                i += 1;
            }
            '(' => {
                out.push(Tok::LParen);
                i += 1;
            }
            ')' => {
                out.push(Tok::RParen);
                i += 1;
            }
            '0'..='9' | '.' => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_digit()
                        || bytes[i] == '.'
                        || bytes[i] == 'e'
                        || bytes[i] == 'E'
                        || ((bytes[i] == '+' || bytes[i] == '-')
                            && i > start
                            && (bytes[i - 1] == 'e' || bytes[i - 1] == 'E')))
                {
                    i += 1;
                }
                let text: String = bytes[start..i].iter().collect();
                let v = text
                    .parse::<f64>()
                    .map_err(|_| CartanError::Parse(format!("bad number literal `{text}`")))?;
                out.push(Tok::Num(v));
            }
            'a'..='z' | 'A'..='Z' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == '_') {
                    i += 1;
                }
                out.push(Tok::Ident(bytes[start..i].iter().collect()));
            }
            other => {
                return Err(CartanError::Parse(format!(
                    "unexpected character `{other}` at offset {i}"
                )))
            }
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, t: Tok) -> Result<()> {
        match self.next() {
            Some(got) if got == t => Ok(()),
            got => Err(CartanError::Parse(format!("expected {t:?}, found {got:?}"))),
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.pos += 1;
                    acc = Expr::add(acc, self.term()?);
                }
                Some(Tok::Minus) => {
                    self.pos += 1;
                    acc = Expr::sub(acc, self.term()?);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut acc = self.unary()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.pos += 1;
                    acc = Expr::mul(acc, self.unary()?);
                }
                Some(Tok::Slash) => {
                    self.pos += 1;
                    acc = Expr::div(acc, self.unary()?);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if matches!(self.peek(), Some(Tok::Minus)) {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if matches!(self.peek(), Some(Tok::Caret)) {
            self.pos += 1;
            let neg = if matches!(self.peek(), Some(Tok::Minus)) {
                self.pos += 1;
                true
            } else {
                false
            };
            let n = match self.next() {
                Some(Tok::Num(v)) if v.fract() == 0.0 => v as i32,
                got => {
                    return Err(CartanError::Parse(format!(
                        "exponent must be an integer literal, found {got:?}"
                    )))
                }
            };
            return Ok(Expr::pow(base, if neg { -n } else { n }));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.next() {
            Some(Tok::Num(v)) => Ok(Expr::Const(v)),
            Some(Tok::Ident(name)) => {
                if name == "sqrt" {
                    self.expect(Tok::LParen)?;
                    let inner = self.expr()?;
                    self.expect(Tok::RParen)?;
                    return Ok(Expr::sqrt(inner));
                }
                let (kind, digits) = name.split_at(1);
                let idx: usize = digits.parse().map_err(|_| {
                    CartanError::Parse(format!("unknown identifier `{name}`"))
                })?;
                if idx == 0 {
                    return Err(CartanError::Parse(format!(
                        "coordinate indices are 1-based, found `{name}`"
                    )));
                }
                match kind {
                    "x" => Ok(Expr::X(idx - 1)),
                    "p" => Ok(Expr::P(idx - 1)),
                    _ => Err(CartanError::Parse(format!("unknown identifier `{name}`"))),
                }
            }
            Some(Tok::LParen) => {
                let inner = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(inner)
            }
            got => Err(CartanError::Parse(format!("unexpected token {got:?}"))),
        }
    }
}

/// Parses one expression; the whole input must be consumed.
pub fn parse(src: &str) -> Result<Expr> {
    let toks = tokenize(src)?;
    if toks.is_empty() {
        return Err(CartanError::Parse("empty expression".into()));
    }
    let mut p = Parser { toks, pos: 0 };
    let e = p.expr()?;
    if p.pos != p.toks.len() {
        return Err(CartanError::Parse(format!(
            "trailing input after expression at token {}",
            p.pos
        )));
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn parses_and_evaluates() {
        let e = parse("sqrt(p1^2 + p2^2) + 0.3*p1").unwrap();
        let v = e.eval_f64(&[0.0, 0.0], &[3.0, 4.0]).unwrap();
        assert_relative_eq!(v, 5.9, max_relative = 1e-15);
    }

    #[test]
    fn respects_precedence_and_unary_minus() {
        let e = parse("1 - 2*p1 + p1^2/2").unwrap();
        let v = e.eval_f64(&[], &[4.0]).unwrap();
        assert_relative_eq!(v, 1.0 - 8.0 + 8.0, max_relative = 1e-15);
        let e = parse("-p1^2").unwrap();
        assert_relative_eq!(e.eval_f64(&[], &[3.0]).unwrap(), -9.0, max_relative = 1e-15);
    }

    #[test]
    fn negative_exponents() {
        let e = parse("p1^-2").unwrap();
        assert_relative_eq!(e.eval_f64(&[], &[2.0]).unwrap(), 0.25, max_relative = 1e-15);
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse("p1 +").is_err());
        assert!(parse("q1 + 1").is_err());
        assert!(parse("p1^p2").is_err());
        assert!(parse("p0").is_err());
        assert!(parse("(p1").is_err());
        assert!(parse("").is_err());
        assert!(parse("p1 ) 2").is_err());
    }

    #[test]
    fn float_and_jet_paths_agree() {
        use crate::jets::{DerivSpec, Jet, JetSpace};
        use crate::point::PhasePoint;
        let e = parse("(sqrt(p1^2 + p2^2 + 1) + 0.2*x1*p1)^2 / (1 + x2^2)").unwrap();
        let z = PhasePoint::new(vec![0.3, -0.7], vec![1.2, 0.4]);
        let space = JetSpace::get(DerivSpec::full(2));
        let (xs, ps) = Jet::coords(&space, &z);
        let jet = e.eval_jet(&xs, &ps).unwrap();
        let v = e.eval_f64(&z.x, &z.p).unwrap();
        assert_relative_eq!(jet.value(), v, max_relative = 1e-14);
    }
}
