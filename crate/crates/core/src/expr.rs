//! Tiny arithmetic expressions for data functions in configuration files:
//! float literals, `pi`, the variables `t`, `x`, `y`, binary `+ - *`, unary
//! minus, integer powers `^`, `sin`, `cos`, `exp` and parentheses.
//!
//! Expressions differentiate symbolically, so boundary data, initial data
//! and manufactured-solution factors defined in a run configuration carry
//! the analytic derivatives the solver and the forcing terms need — no
//! numerical differentiation and no embedded scripting language.

use std::fmt;

use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Var {
    T,
    X,
    Y,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Pow(Box<Expr>, u32),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Exp(Box<Expr>),
}

impl Expr {
    pub fn eval<T: Scalar>(&self, t: T, p: [T; 2]) -> T {
        match self {
            Expr::Const(c) => T::cst(*c),
            Expr::Var(Var::T) => t,
            Expr::Var(Var::X) => p[0],
            Expr::Var(Var::Y) => p[1],
            Expr::Add(a, b) => a.eval(t, p) + b.eval(t, p),
            Expr::Sub(a, b) => a.eval(t, p) - b.eval(t, p),
            Expr::Mul(a, b) => a.eval(t, p) * b.eval(t, p),
            Expr::Neg(a) => -a.eval(t, p),
            Expr::Pow(a, n) => a.eval(t, p).powi(*n as i32),
            Expr::Sin(a) => a.eval(t, p).sin(),
            Expr::Cos(a) => a.eval(t, p).cos(),
            Expr::Exp(a) => a.eval(t, p).exp(),
        }
    }

    /// True when no variable other than the given ones occurs.
    pub fn uses_only(&self, allowed: &[Var]) -> bool {
        match self {
            Expr::Const(_) => true,
            Expr::Var(v) => allowed.contains(v),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => {
                a.uses_only(allowed) && b.uses_only(allowed)
            }
            Expr::Neg(a) | Expr::Sin(a) | Expr::Cos(a) | Expr::Exp(a) => a.uses_only(allowed),
            Expr::Pow(a, _) => a.uses_only(allowed),
        }
    }

    /// Symbolic derivative with respect to `var`, lightly simplified.
    pub fn diff(&self, var: Var) -> Expr {
        let d = match self {
            Expr::Const(_) => Expr::Const(0.0),
            Expr::Var(v) => Expr::Const(if *v == var { 1.0 } else { 0.0 }),
            Expr::Add(a, b) => Expr::Add(Box::new(a.diff(var)), Box::new(b.diff(var))),
            Expr::Sub(a, b) => Expr::Sub(Box::new(a.diff(var)), Box::new(b.diff(var))),
            Expr::Mul(a, b) => Expr::Add(
                Box::new(Expr::Mul(Box::new(a.diff(var)), b.clone())),
                Box::new(Expr::Mul(a.clone(), Box::new(b.diff(var)))),
            ),
            Expr::Neg(a) => Expr::Neg(Box::new(a.diff(var))),
            Expr::Pow(a, n) => {
                if *n == 0 {
                    Expr::Const(0.0)
                } else {
                    Expr::Mul(
                        Box::new(Expr::Mul(
                            Box::new(Expr::Const(*n as f64)),
                            Box::new(Expr::Pow(a.clone(), n - 1)),
                        )),
                        Box::new(a.diff(var)),
                    )
                }
            }
            Expr::Sin(a) => Expr::Mul(Box::new(Expr::Cos(a.clone())), Box::new(a.diff(var))),
            Expr::Cos(a) => Expr::Neg(Box::new(Expr::Mul(
                Box::new(Expr::Sin(a.clone())),
                Box::new(a.diff(var)),
            ))),
            Expr::Exp(a) => Expr::Mul(Box::new(Expr::Exp(a.clone())), Box::new(a.diff(var))),
        };
        d.simplified()
    }

    /// Constant folding and unit/zero elimination.
    #[allow(clippy::redundant_guards)] // float literals cannot be matched directly
    pub fn simplified(self) -> Expr {
        match self {
            Expr::Add(a, b) => match (a.simplified(), b.simplified()) {
                (Expr::Const(x), Expr::Const(y)) => Expr::Const(x + y),
                (Expr::Const(c), e) | (e, Expr::Const(c)) if c == 0.0 => e,
                (a, b) => Expr::Add(Box::new(a), Box::new(b)),
            },
            Expr::Sub(a, b) => match (a.simplified(), b.simplified()) {
                (Expr::Const(x), Expr::Const(y)) => Expr::Const(x - y),
                (e, Expr::Const(c)) if c == 0.0 => e,
                (a, b) => Expr::Sub(Box::new(a), Box::new(b)),
            },
            Expr::Mul(a, b) => match (a.simplified(), b.simplified()) {
                (Expr::Const(x), Expr::Const(y)) => Expr::Const(x * y),
                (Expr::Const(c), _) | (_, Expr::Const(c)) if c == 0.0 => Expr::Const(0.0),
                (Expr::Const(c), e) | (e, Expr::Const(c)) if c == 1.0 => e,
                (a, b) => Expr::Mul(Box::new(a), Box::new(b)),
            },
            Expr::Neg(a) => match a.simplified() {
                Expr::Const(x) => Expr::Const(-x),
                e => Expr::Neg(Box::new(e)),
            },
            Expr::Pow(a, n) => match (a.simplified(), n) {
                (_, 0) => Expr::Const(1.0),
                (e, 1) => e,
                (Expr::Const(x), n) => Expr::Const(x.powi(n as i32)),
                (e, n) => Expr::Pow(Box::new(e), n),
            },
            Expr::Sin(a) => Expr::Sin(Box::new(a.simplified())),
            Expr::Cos(a) => Expr::Cos(Box::new(a.simplified())),
            Expr::Exp(a) => Expr::Exp(Box::new(a.simplified())),
            other => other,
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(Var::T) => write!(f, "t"),
            Expr::Var(Var::X) => write!(f, "x"),
            Expr::Var(Var::Y) => write!(f, "y"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Pow(a, n) => write!(f, "{a}^{n}"),
            Expr::Sin(a) => write!(f, "sin({a})"),
            Expr::Cos(a) => write!(f, "cos({a})"),
            Expr::Exp(a) => write!(f, "exp({a})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Token {
    Number(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Caret,
    LParen,
    RParen,
}

fn tokenize(src: &str) -> Result<Vec<Token>, String> {
    let mut tokens = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            ' ' | '\t' => i += 1,
            '+' => {
                tokens.push(Token::Plus);
                i += 1;
            }
            '-' => {
                tokens.push(Token::Minus);
                i += 1;
            }
            '*' => {
                tokens.push(Token::Star);
                i += 1;
            }
            '^' => {
                tokens.push(Token::Caret);
                i += 1;
            }
            '(' => {
                tokens.push(Token::LParen);
                i += 1;
            }
            ')' => {
                tokens.push(Token::RParen);
                i += 1;
            }
            '0'..='9' | '.' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                // scientific notation
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        i = j;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text: String = chars[start..i].iter().collect();
                let value = text
                    .parse::<f64>()
                    .map_err(|_| format!("invalid number literal '{text}'"))?;
                tokens.push(Token::Number(value));
            }
            'a'..='z' | 'A'..='Z' => {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_alphanumeric() {
                    i += 1;
                }
                tokens.push(Token::Ident(chars[start..i].iter().collect()));
            }
            other => return Err(format!("unexpected character '{other}'")),
        }
    }
    Ok(tokens)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Token) -> Result<(), String> {
        match self.next() {
            Some(t) if t == want => Ok(()),
            Some(t) => Err(format!("expected {want:?}, found {t:?}")),
            None => Err(format!("expected {want:?}, found end of expression")),
        }
    }

    fn expr(&mut self) -> Result<Expr, String> {
        let mut acc = self.term()?;
        while let Some(tok) = self.peek() {
            match tok {
                Token::Plus => {
                    self.pos += 1;
                    acc = Expr::Add(Box::new(acc), Box::new(self.term()?));
                }
                Token::Minus => {
                    self.pos += 1;
                    acc = Expr::Sub(Box::new(acc), Box::new(self.term()?));
                }
                _ => break,
            }
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<Expr, String> {
        let mut acc = self.factor()?;
        while let Some(Token::Star) = self.peek() {
            self.pos += 1;
            acc = Expr::Mul(Box::new(acc), Box::new(self.factor()?));
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<Expr, String> {
        if let Some(Token::Minus) = self.peek() {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.factor()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, String> {
        let base = self.atom()?;
        if let Some(Token::Caret) = self.peek() {
            self.pos += 1;
            match self.next() {
                Some(Token::Number(n)) if n >= 0.0 && n.fract() == 0.0 && n <= u32::MAX as f64 => {
                    Ok(Expr::Pow(Box::new(base), n as u32))
                }
                other => Err(format!(
                    "exponent must be a nonnegative integer literal, found {other:?}"
                )),
            }
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<Expr, String> {
        match self.next() {
            Some(Token::Number(v)) => Ok(Expr::Const(v)),
            Some(Token::Ident(name)) => match name.as_str() {
                "t" => Ok(Expr::Var(Var::T)),
                "x" => Ok(Expr::Var(Var::X)),
                "y" => Ok(Expr::Var(Var::Y)),
                "pi" => Ok(Expr::Const(std::f64::consts::PI)),
                "sin" | "cos" | "exp" => {
                    self.expect(Token::LParen)?;
                    let inner = self.expr()?;
                    self.expect(Token::RParen)?;
                    Ok(match name.as_str() {
                        "sin" => Expr::Sin(Box::new(inner)),
                        "cos" => Expr::Cos(Box::new(inner)),
                        _ => Expr::Exp(Box::new(inner)),
                    })
                }
                other => Err(format!(
                    "unknown identifier '{other}' (variables: t, x, y; functions: sin, cos, exp; constant: pi)"
                )),
            },
            Some(Token::LParen) => {
                let inner = self.expr()?;
                self.expect(Token::RParen)?;
                Ok(inner)
            }
            other => Err(format!("unexpected token {other:?}")),
        }
    }
}

/// Parse an expression; errors describe the offending token.
pub fn parse_expr(src: &str) -> Result<Expr, String> {
    let tokens = tokenize(src)?;
    if tokens.is_empty() {
        return Err("empty expression".into());
    }
    let mut parser = Parser { tokens, pos: 0 };
    let e = parser.expr()?;
    if parser.pos != parser.tokens.len() {
        return Err(format!(
            "trailing input after expression: {:?}",
            &parser.tokens[parser.pos..]
        ));
    }
    Ok(e.simplified())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn eval(src: &str, t: f64, x: f64, y: f64) -> f64 {
        parse_expr(src).unwrap().eval(t, [x, y])
    }

    #[test]
    fn parses_and_evaluates() {
        assert_eq!(eval("1 + 2*3", 0.0, 0.0, 0.0), 7.0);
        assert_eq!(eval("x*(1 - x)", 0.0, 0.25, 0.0), 0.1875);
        assert_relative_eq!(eval("sin(pi*x)*sin(pi*y)", 0.0, 0.5, 0.5), 1.0);
        assert_relative_eq!(eval("exp(-0.5*t)", 2.0, 0.0, 0.0), (-1.0f64).exp());
        assert_eq!(eval("-x^2 + y^2", 0.0, 2.0, 3.0), 5.0);
        assert_eq!(eval("2e-2 * x", 0.0, 1.0, 0.0), 0.02);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(parse_expr("").is_err());
        assert!(parse_expr("foo + 1").is_err());
        assert!(parse_expr("x +").is_err());
        assert!(parse_expr("sin x").is_err());
        assert!(parse_expr("x ^ y").is_err());
        assert!(parse_expr("x ) y").is_err());
        assert!(parse_expr("x / y").is_err());
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let sources = [
            "sin(pi*x)*cos(pi*y)",
            "x^3 + x*y^2 - 2*y",
            "exp(-0.5*t)*x",
            "(1 + 0.5*t)*(x - y)^2",
        ];
        let h = 1e-6;
        for src in sources {
            let e = parse_expr(src).unwrap();
            for (var, idx) in [(Var::T, 0usize), (Var::X, 1), (Var::Y, 2)] {
                let d = e.diff(var);
                let mut args = [0.3, 0.4, 0.6];
                let analytic = d.eval(args[0], [args[1], args[2]]);
                args[idx] += h;
                let up = e.eval(args[0], [args[1], args[2]]);
                args[idx] -= 2.0 * h;
                let down = e.eval(args[0], [args[1], args[2]]);
                let numeric = (up - down) / (2.0 * h);
                assert_relative_eq!(analytic, numeric, max_relative = 1e-6, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn second_derivatives_work() {
        let e = parse_expr("sin(pi*x)*sin(pi*y)").unwrap();
        let lap = |x: f64, y: f64| {
            e.diff(Var::X).diff(Var::X).eval(0.0, [x, y])
                + e.diff(Var::Y).diff(Var::Y).eval(0.0, [x, y])
        };
        let pi = std::f64::consts::PI;
        assert_relative_eq!(
            lap(0.3, 0.7),
            -2.0 * pi * pi * (pi * 0.3).sin() * (pi * 0.7).sin(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn variable_restriction() {
        let e = parse_expr("t + x").unwrap();
        assert!(e.uses_only(&[Var::T, Var::X]));
        assert!(!e.uses_only(&[Var::X, Var::Y]));
    }

    #[test]
    fn f32_evaluation() {
        let e = parse_expr("0.5*x + 1").unwrap();
        let v: f32 = e.eval(0.0f32, [2.0, 0.0]);
        assert_eq!(v, 2.0f32);
    }
}
