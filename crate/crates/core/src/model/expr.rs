//! Arithmetic expressions in `t, x1, …, xn`.
//!
//! Grammar (positions in errors are 1-based character offsets):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := '-' factor | atom ('^' factor)?
//! atom   := number | 't' | 'x' digits | '(' expr ')'
//! ```
//!
//! Power binds tighter than unary minus and is right associative, so
//! `-x1^2^3` reads `-(x1^(2^3))`.

use std::fmt;

use thiserror::Error;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at position {position}: {message}")]
pub struct ParseError {
    pub position: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    T,
    /// `x_j`, 1-based as written.
    X(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
}

/// A parsed expression together with the largest variable index it uses.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionTree {
    root: Expr,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Tok {
    Num(f64),
    T,
    X(usize),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

struct Lexer<'a> {
    chars: Vec<(usize, char)>,
    idx: usize,
    src: &'a str,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            chars: src.chars().enumerate().map(|(i, c)| (i + 1, c)).collect(),
            idx: 0,
            src,
        }
    }

    fn peek_char(&self) -> Option<char> {
        self.chars.get(self.idx).map(|&(_, c)| c)
    }

    fn end_pos(&self) -> usize {
        self.chars.len() + 1
    }

    fn tokenize(mut self) -> std::result::Result<Vec<(usize, Tok)>, ParseError> {
        let mut out = Vec::new();
        loop {
            while self.peek_char().is_some_and(char::is_whitespace) {
                self.idx += 1;
            }
            let Some(&(pos, c)) = self.chars.get(self.idx) else {
                out.push((self.end_pos(), Tok::End));
                return Ok(out);
            };
            let tok = match c {
                '+' => Tok::Plus,
                '-' => Tok::Minus,
                '*' => Tok::Star,
                '/' => Tok::Slash,
                '^' => Tok::Caret,
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                't' => Tok::T,
                'x' => {
                    self.idx += 1;
                    let start = self.idx;
                    while self.peek_char().is_some_and(|c| c.is_ascii_digit()) {
                        self.idx += 1;
                    }
                    if start == self.idx {
                        return Err(ParseError {
                            position: pos,
                            message: "expected digits after 'x'".into(),
                        });
                    }
                    let digits: String = self.chars[start..self.idx].iter().map(|&(_, c)| c).collect();
                    let j = digits.parse::<usize>().map_err(|_| ParseError {
                        position: pos,
                        message: format!("variable index 'x{digits}' too large"),
                    })?;
                    out.push((pos, Tok::X(j)));
                    continue;
                }
                c if c.is_ascii_digit() || c == '.' => {
                    let num = self.number()?;
                    out.push((pos, Tok::Num(num)));
                    continue;
                }
                other => {
                    return Err(ParseError {
                        position: pos,
                        message: format!("unexpected character '{other}'"),
                    })
                }
            };
            self.idx += 1;
            out.push((pos, tok));
        }
    }

    fn number(&mut self) -> std::result::Result<f64, ParseError> {
        let (pos, _) = self.chars[self.idx];
        let start = self.idx;
        let mut digits = 0;
        while self.peek_char().is_some_and(|c| c.is_ascii_digit()) {
            self.idx += 1;
            digits += 1;
        }
        if self.peek_char() == Some('.') {
            self.idx += 1;
            while self.peek_char().is_some_and(|c| c.is_ascii_digit()) {
                self.idx += 1;
                digits += 1;
            }
        }
        if digits == 0 {
            return Err(ParseError {
                position: pos,
                message: "malformed number".into(),
            });
        }
        if matches!(self.peek_char(), Some('e' | 'E')) {
            let save = self.idx;
            self.idx += 1;
            if matches!(self.peek_char(), Some('+' | '-')) {
                self.idx += 1;
            }
            let exp_start = self.idx;
            while self.peek_char().is_some_and(|c| c.is_ascii_digit()) {
                self.idx += 1;
            }
            if exp_start == self.idx {
                // not an exponent after all
                self.idx = save;
                let (epos, _) = self.chars[save];
                return Err(ParseError {
                    position: epos,
                    message: "malformed exponent".into(),
                });
            }
        }
        let text: String = self.chars[start..self.idx].iter().map(|&(_, c)| c).collect();
        let _ = self.src;
        text.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or(ParseError {
            position: pos,
            message: format!("number '{text}' out of range"),
        })
    }
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    idx: usize,
    depth: usize,
}

/// Nesting limit; keeps recursion bounded on adversarial input.
const MAX_DEPTH: usize = 256;

impl Parser {
    fn peek(&self) -> Tok {
        self.toks[self.idx].1
    }

    fn pos(&self) -> usize {
        self.toks[self.idx].0
    }

    fn bump(&mut self) -> Tok {
        let t = self.peek();
        if t != Tok::End {
            self.idx += 1;
        }
        t
    }

    fn err<T>(&self, message: impl Into<String>) -> std::result::Result<T, ParseError> {
        Err(ParseError {
            position: self.pos(),
            message: message.into(),
        })
    }

    fn enter(&mut self) -> std::result::Result<(), ParseError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return self.err("expression nested too deeply");
        }
        Ok(())
    }

    fn expr(&mut self) -> std::result::Result<Expr, ParseError> {
        self.enter()?;
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Tok::Minus => {
                    self.bump();
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => break,
            }
        }
        self.depth -= 1;
        Ok(lhs)
    }

    fn term(&mut self) -> std::result::Result<Expr, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Tok::Star => {
                    self.bump();
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.factor()?));
                }
                Tok::Slash => {
                    self.bump();
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.factor()?));
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> std::result::Result<Expr, ParseError> {
        self.enter()?;
        let out = if self.peek() == Tok::Minus {
            self.bump();
            Expr::Neg(Box::new(self.factor()?))
        } else {
            let base = self.atom()?;
            if self.peek() == Tok::Caret {
                self.bump();
                Expr::Pow(Box::new(base), Box::new(self.factor()?))
            } else {
                base
            }
        };
        self.depth -= 1;
        Ok(out)
    }

    fn atom(&mut self) -> std::result::Result<Expr, ParseError> {
        match self.peek() {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr::Const(v))
            }
            Tok::T => {
                self.bump();
                Ok(Expr::T)
            }
            Tok::X(j) => {
                self.bump();
                Ok(Expr::X(j))
            }
            Tok::LParen => {
                self.bump();
                let inner = self.expr()?;
                if self.peek() != Tok::RParen {
                    return self.err("expected ')'");
                }
                self.bump();
                Ok(inner)
            }
            Tok::End => self.err("unexpected end of input"),
            _ => self.err("expected a number, 't', a variable or '('"),
        }
    }
}

/// Parses `src` into an expression tree. `x0` is rejected as an unknown
/// variable; upper bounds on variable indices are checked against the arity
/// when the tree is bound to a nonlinearity.
pub fn parse_expression(src: &str) -> Result<ExpressionTree> {
    let toks = Lexer::new(src).tokenize()?;
    let mut p = Parser { toks, idx: 0, depth: 0 };
    let root = p.expr()?;
    if p.peek() != Tok::End {
        return Err(p.err::<()>("unexpected trailing input").unwrap_err().into());
    }
    let tree = ExpressionTree { root };
    if tree.uses_variable(0) {
        return Err(Error::UnknownVariable { name: "x0".into() });
    }
    Ok(tree)
}

impl ExpressionTree {
    pub fn new(root: Expr) -> Self {
        ExpressionTree { root }
    }

    pub fn root(&self) -> &Expr {
        &self.root
    }

    /// Largest `j` such that `x_j` occurs, 0 when none does.
    pub fn max_variable(&self) -> usize {
        fn walk(e: &Expr) -> usize {
            match e {
                Expr::Const(_) | Expr::T => 0,
                Expr::X(j) => *j,
                Expr::Neg(a) => walk(a),
                Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                    walk(a).max(walk(b))
                }
            }
        }
        walk(&self.root)
    }

    /// Whether `x_j` occurs (1-based).
    pub fn uses_variable(&self, j: usize) -> bool {
        fn walk(e: &Expr, j: usize) -> bool {
            match e {
                Expr::Const(_) | Expr::T => false,
                Expr::X(i) => *i == j,
                Expr::Neg(a) => walk(a, j),
                Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                    walk(a, j) || walk(b, j)
                }
            }
        }
        walk(&self.root, j)
    }

    /// Evaluates at `(t, x)` with `x[j − 1]` bound to `x_j`.
    pub fn eval(&self, t: f64, x: &[f64]) -> Result<f64> {
        eval(&self.root, t, x)
    }
}

fn eval(e: &Expr, t: f64, x: &[f64]) -> Result<f64> {
    Ok(match e {
        Expr::Const(v) => *v,
        Expr::T => t,
        Expr::X(j) => *x
            .get(j.wrapping_sub(1))
            .ok_or_else(|| Error::UnknownVariable { name: format!("x{j}") })?,
        Expr::Neg(a) => -eval(a, t, x)?,
        Expr::Add(a, b) => eval(a, t, x)? + eval(b, t, x)?,
        Expr::Sub(a, b) => eval(a, t, x)? - eval(b, t, x)?,
        Expr::Mul(a, b) => eval(a, t, x)? * eval(b, t, x)?,
        Expr::Div(a, b) => {
            let num = eval(a, t, x)?;
            let den = eval(b, t, x)?;
            if den == 0.0 {
                return Err(Error::domain("division by zero"));
            }
            num / den
        }
        Expr::Pow(a, b) => power(eval(a, t, x)?, eval(b, t, x)?)?,
    })
}

fn power(base: f64, exp: f64) -> Result<f64> {
    if base > 0.0 {
        Ok(base.powf(exp))
    } else if base == 0.0 {
        if exp > 0.0 {
            Ok(0.0)
        } else if exp == 0.0 {
            Ok(1.0)
        } else {
            Err(Error::domain(format!("0 raised to negative power {exp}")))
        }
    } else if exp.fract() == 0.0 {
        Ok(base.powf(exp))
    } else {
        Err(Error::domain(format!(
            "negative base {base} raised to non-integer power {exp}"
        )))
    }
}

// Binding strength used by the printer.
fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Add(..) | Expr::Sub(..) => 1,
        Expr::Mul(..) | Expr::Div(..) => 2,
        Expr::Neg(..) => 3,
        Expr::Pow(..) => 4,
        Expr::Const(_) | Expr::T | Expr::X(_) => 5,
    }
}

fn write_expr(f: &mut fmt::Formatter<'_>, e: &Expr, min_prec: u8) -> fmt::Result {
    let paren = prec(e) < min_prec;
    if paren {
        f.write_str("(")?;
    }
    match e {
        Expr::Const(v) => write!(f, "{v}")?,
        Expr::T => f.write_str("t")?,
        Expr::X(j) => write!(f, "x{j}")?,
        Expr::Neg(a) => {
            f.write_str("-")?;
            write_expr(f, a, 3)?;
        }
        Expr::Add(a, b) | Expr::Sub(a, b) => {
            write_expr(f, a, 1)?;
            f.write_str(if matches!(e, Expr::Add(..)) { " + " } else { " - " })?;
            write_expr(f, b, 2)?;
        }
        Expr::Mul(a, b) | Expr::Div(a, b) => {
            write_expr(f, a, 2)?;
            f.write_str(if matches!(e, Expr::Mul(..)) { " * " } else { " / " })?;
            write_expr(f, b, 3)?;
        }
        Expr::Pow(a, b) => {
            write_expr(f, a, 5)?;
            f.write_str("^")?;
            write_expr(f, b, 3)?;
        }
    }
    if paren {
        f.write_str(")")?;
    }
    Ok(())
}

impl fmt::Display for ExpressionTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(f, &self.root, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(src: &str, t: f64, x: &[f64]) -> f64 {
        parse_expression(src).unwrap().eval(t, x).unwrap()
    }

    fn syntax_pos(src: &str) -> usize {
        match parse_expression(src) {
            Err(Error::Syntax(e)) => e.position,
            other => panic!("expected syntax error for {src:?}, got {other:?}"),
        }
    }

    #[test]
    fn documented_values() {
        assert_eq!(ev("x1^(-0.5) * t", 0.5, &[4.0]), 0.25);
        assert_eq!(ev("t*(1-t)", 0.25, &[]), 0.1875);
        assert_eq!(syntax_pos("x1 +"), 5);
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(ev("1 - 2 - 3", 0.0, &[]), -4.0);
        assert_eq!(ev("8 / 4 / 2", 0.0, &[]), 1.0);
        assert_eq!(ev("2^3^2", 0.0, &[]), 512.0);
        assert_eq!(ev("-2^2", 0.0, &[]), -4.0);
        assert_eq!(ev("2^-1", 0.0, &[]), 0.5);
        assert_eq!(ev("1 + 2 * 3", 0.0, &[]), 7.0);
        assert_eq!(ev("--3", 0.0, &[]), 3.0);
        assert_eq!(ev("1.5e2 + .5 + 2E-1", 0.0, &[]), 150.7);
        assert_eq!(ev("x2 * x1", 0.0, &[3.0, 5.0]), 15.0);
    }

    #[test]
    fn syntax_errors_report_position() {
        assert_eq!(syntax_pos(""), 1);
        assert_eq!(syntax_pos("(t"), 3);
        assert_eq!(syntax_pos("t t"), 3);
        assert_eq!(syntax_pos("2 $ 3"), 3);
        assert_eq!(syntax_pos("x + 1"), 1);
        assert_eq!(syntax_pos("1e+"), 2);
        assert_eq!(syntax_pos("*2"), 1);
        assert_eq!(syntax_pos("2^"), 3);
    }

    #[test]
    fn unknown_variables() {
        assert!(matches!(parse_expression("x0 + 1"), Err(Error::UnknownVariable { .. })));
        let e = parse_expression("x3").unwrap();
        assert_eq!(e.max_variable(), 3);
        assert!(matches!(e.eval(0.0, &[1.0]), Err(Error::UnknownVariable { .. })));
    }

    #[test]
    fn domain_errors() {
        let e = parse_expression("x1^(-0.5)").unwrap();
        assert!(matches!(e.eval(0.0, &[0.0]), Err(Error::DomainViolation { .. })));
        assert!(matches!(e.eval(0.0, &[-1.0]), Err(Error::DomainViolation { .. })));
        assert_eq!(ev("(-2)^3", 0.0, &[]), -8.0);
        assert_eq!(ev("0^0", 0.0, &[]), 1.0);
        assert!(matches!(
            parse_expression("1/t").unwrap().eval(0.0, &[]),
            Err(Error::DomainViolation { .. })
        ));
    }

    #[test]
    fn deep_nesting_is_an_error_not_a_crash() {
        let src = "(".repeat(10_000) + "1" + &")".repeat(10_000);
        assert!(matches!(parse_expression(&src), Err(Error::Syntax(_))));
        let src = "-".repeat(10_000) + "1";
        assert!(matches!(parse_expression(&src), Err(Error::Syntax(_))));
    }

    #[test]
    fn printer_minimal_parentheses() {
        let cases = [
            ("x1^(-0.5) * t", "x1^-0.5 * t"),
            ("(t)", "t"),
            ("(1 - t) - (2 - t)", "1 - t - (2 - t)"),
            ("(x1^2)^3", "(x1^2)^3"),
            ("(-x1)^2", "(-x1)^2"),
            ("2 * (3 * t)", "2 * (3 * t)"),
            ("-(t + 1)", "-(t + 1)"),
        ];
        for (src, want) in cases {
            assert_eq!(parse_expression(src).unwrap().to_string(), want);
        }
    }
}
