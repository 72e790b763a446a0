//! Arithmetic expressions over state variables `x1..xn`.
//!
//! This is the surface syntax used to declare vector field components and
//! cell dynamics in config files. The grammar is standard infix:
//!
//! * binary operators `+ - * / ^`, unary `-`, parentheses
//! * precedence, tightest first: `^` (right-associative), unary `-`,
//!   `* /`, `+ -`
//! * function-call syntax `f(arg)` for `sin`, `cos`, `exp`, `sqrt`
//! * variables `x1`, `x2`, ... (1-based in the syntax, 0-based in [`Expr::Var`])
//!
//! Evaluation errors out on any non-finite intermediate result instead of
//! propagating NaN or infinity into downstream residual statistics.

use std::fmt;

use thiserror::Error;

/// Parsed expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    /// A finite real literal.
    Literal(f64),
    /// Zero-based variable index; `Var(0)` is `x1`.
    Var(usize),
    /// Unary negation.
    Neg(Box<Expr>),
    /// Binary operation.
    Binary(BinOp, Box<Expr>, Box<Expr>),
    /// Single-argument function call.
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        match name {
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "exp" => Some(Func::Exp),
            "sqrt" => Some(Func::Sqrt),
            _ => None,
        }
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Exp => x.exp(),
            Func::Sqrt => x.sqrt(),
        }
    }
}

/// Syntax error, with the byte offset into the source string.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {pos}: {message}")]
    Syntax { pos: usize, message: String },
    #[error("unknown function `{name}` at byte {pos} (available: sin, cos, exp, sqrt)")]
    UnknownFunction { pos: usize, name: String },
    #[error("variable x{var} at byte {pos} exceeds the declared dimension {dim}")]
    VarOutOfRange { pos: usize, var: usize, dim: usize },
}

/// Runtime evaluation failure.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("non-finite result from `{op}`")]
    NonFinite { op: &'static str },
    #[error("variable x{var} is unbound (only {available} value(s) supplied)")]
    UnboundVariable { var: usize, available: usize },
}

impl Expr {
    /// Evaluates with `vars[i]` bound to `x{i+1}`.
    pub fn eval(&self, vars: &[f64]) -> Result<f64, EvalError> {
        match self {
            Expr::Literal(v) => Ok(*v),
            Expr::Var(i) => vars.get(*i).copied().ok_or(EvalError::UnboundVariable {
                var: *i + 1,
                available: vars.len(),
            }),
            Expr::Neg(inner) => Ok(-inner.eval(vars)?),
            Expr::Binary(op, lhs, rhs) => {
                let a = lhs.eval(vars)?;
                let b = rhs.eval(vars)?;
                if *op == BinOp::Div && b == 0.0 {
                    return Err(EvalError::DivisionByZero);
                }
                let v = match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => pow(a, b),
                };
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(EvalError::NonFinite { op: op.symbol() })
                }
            }
            Expr::Call(f, arg) => {
                let a = arg.eval(vars)?;
                let v = f.apply(a);
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(EvalError::NonFinite { op: f.name() })
                }
            }
        }
    }

    /// Largest zero-based variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Literal(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Neg(e) | Expr::Call(_, e) => e.max_var(),
            Expr::Binary(_, a, b) => match (a.max_var(), b.max_var()) {
                (Some(x), Some(y)) => Some(x.max(y)),
                (x, None) => x,
                (None, y) => y,
            },
        }
    }
}

// Integer exponents go through powi so that small powers stay a plain
// multiplication chain instead of a libm pow call.
fn pow(base: f64, exp: f64) -> f64 {
    if exp.fract() == 0.0 && exp.abs() <= i32::MAX as f64 {
        base.powi(exp as i32)
    } else {
        base.powf(exp)
    }
}

// Precedence levels used by both the parser and the printer.
const PREC_ADD: u8 = 1;
const PREC_MUL: u8 = 2;
const PREC_NEG: u8 = 3;
const PREC_POW: u8 = 4;
const PREC_ATOM: u8 = 5;

impl Expr {
    fn prec(&self) -> u8 {
        match self {
            Expr::Binary(BinOp::Add | BinOp::Sub, ..) => PREC_ADD,
            Expr::Binary(BinOp::Mul | BinOp::Div, ..) => PREC_MUL,
            Expr::Neg(_) => PREC_NEG,
            Expr::Binary(BinOp::Pow, ..) => PREC_POW,
            _ => PREC_ATOM,
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn paren(f: &mut fmt::Formatter<'_>, e: &Expr, min: u8) -> fmt::Result {
            if e.prec() < min {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        }
        match self {
            Expr::Literal(v) => write!(f, "{v}"),
            Expr::Var(i) => write!(f, "x{}", i + 1),
            Expr::Neg(e) => {
                write!(f, "-")?;
                // The operand of unary minus must bind at least as tightly,
                // and a `^` operand would capture the minus, so force parens
                // below PREC_POW only when needed: -(a^b) prints as -a^b is
                // wrong, so require > PREC_NEG.
                paren(f, e, PREC_NEG + 1)
            }
            Expr::Binary(op, a, b) => {
                let (lp, rp) = match op {
                    // left-associative: right operand needs strictly higher
                    BinOp::Add | BinOp::Sub => (PREC_ADD, PREC_ADD + 1),
                    BinOp::Mul | BinOp::Div => (PREC_MUL, PREC_MUL + 1),
                    // right-associative, binds tighter than unary minus on
                    // the left; the right side may be a unary expression
                    BinOp::Pow => (PREC_ATOM, PREC_NEG),
                };
                paren(f, a, lp)?;
                write!(f, " {} ", op.symbol())?;
                paren(f, b, rp)
            }
            Expr::Call(func, arg) => write!(f, "{}({arg})", func.name()),
        }
    }
}

/// Parses an expression without bounding variable indices.
///
/// Used for cell dynamics, whose argument count is only known once the cell
/// is wired into a network.
pub fn parse(src: &str) -> Result<Expr, ParseError> {
    Parser::new(src)?.parse_complete()
}

/// Parses an expression and rejects references past `x{dim}`.
pub fn parse_with_dim(src: &str, dim: usize) -> Result<Expr, ParseError> {
    let expr = parse(src)?;
    if let Some(max) = expr.max_var() {
        if max >= dim {
            // re-scan for the position of the offending variable
            let needle = format!("x{}", max + 1);
            let pos = src.find(&needle).unwrap_or(0);
            return Err(ParseError::VarOutOfRange {
                pos,
                var: max + 1,
                dim,
            });
        }
    }
    Ok(expr)
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
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

struct Parser {
    tokens: Vec<(usize, Token)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn new(src: &str) -> Result<Parser, ParseError> {
        let tokens = tokenize(src)?;
        Ok(Parser {
            tokens,
            pos: 0,
            end: src.len(),
        })
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(_, t)| t)
    }

    fn here(&self) -> usize {
        self.tokens
            .get(self.pos)
            .map(|(p, _)| *p)
            .unwrap_or(self.end)
    }

    fn bump(&mut self) -> Option<(usize, Token)> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expect(&mut self, want: &Token, what: &str) -> Result<(), ParseError> {
        match self.bump() {
            Some((_, ref t)) if t == want => Ok(()),
            Some((p, _)) => Err(ParseError::Syntax {
                pos: p,
                message: format!("expected {what}"),
            }),
            None => Err(ParseError::Syntax {
                pos: self.end,
                message: format!("expected {what}, found end of input"),
            }),
        }
    }

    fn parse_complete(&mut self) -> Result<Expr, ParseError> {
        let e = self.expr()?;
        if let Some((p, _)) = self.tokens.get(self.pos) {
            return Err(ParseError::Syntax {
                pos: *p,
                message: "unexpected trailing input".into(),
            });
        }
        Ok(e)
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(Token::Plus) => BinOp::Add,
                Some(Token::Minus) => BinOp::Sub,
                _ => break,
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(Token::Star) => BinOp::Mul,
                Some(Token::Slash) => BinOp::Div,
                _ => break,
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if matches!(self.peek(), Some(Token::Minus)) {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if matches!(self.peek(), Some(Token::Caret)) {
            self.bump();
            // right-associative; the exponent may itself be negated
            let exp = self.unary()?;
            return Ok(Expr::Binary(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.bump() {
            Some((_, Token::Num(v))) => Ok(Expr::Literal(v)),
            Some((p, Token::Ident(name))) => self.ident(p, name),
            Some((_, Token::LParen)) => {
                let e = self.expr()?;
                self.expect(&Token::RParen, "closing `)`")?;
                Ok(e)
            }
            Some((p, t)) => Err(ParseError::Syntax {
                pos: p,
                message: format!("unexpected token `{t:?}`"),
            }),
            None => Err(ParseError::Syntax {
                pos: self.end,
                message: "unexpected end of input".into(),
            }),
        }
    }

    fn ident(&mut self, pos: usize, name: String) -> Result<Expr, ParseError> {
        if let Some(rest) = name.strip_prefix('x') {
            if !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()) {
                let idx: usize = rest.parse().map_err(|_| ParseError::Syntax {
                    pos,
                    message: format!("variable index `{rest}` is out of range"),
                })?;
                if idx == 0 {
                    return Err(ParseError::Syntax {
                        pos,
                        message: "variable indices start at x1".into(),
                    });
                }
                return Ok(Expr::Var(idx - 1));
            }
        }
        if let Some(func) = Func::from_name(&name) {
            self.expect(&Token::LParen, "`(` after function name")?;
            let arg = self.expr()?;
            self.expect(&Token::RParen, "closing `)`")?;
            return Ok(Expr::Call(func, Box::new(arg)));
        }
        if matches!(self.peek(), Some(Token::LParen)) {
            return Err(ParseError::UnknownFunction { pos, name });
        }
        Err(ParseError::Syntax {
            pos,
            message: format!("unknown identifier `{name}`"),
        })
    }
}

fn tokenize(src: &str) -> Result<Vec<(usize, Token)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        let tok = match b {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' => Token::Plus,
            b'-' => Token::Minus,
            b'*' => Token::Star,
            b'/' => Token::Slash,
            b'^' => Token::Caret,
            b'(' => Token::LParen,
            b')' => Token::RParen,
            b'0'..=b'9' | b'.' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                if i < bytes.len() && bytes[i] == b'.' {
                    i += 1;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        i = j;
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text = &src[start..i];
                let v: f64 = text.parse().map_err(|_| ParseError::Syntax {
                    pos: start,
                    message: format!("malformed number `{text}`"),
                })?;
                if !v.is_finite() {
                    return Err(ParseError::Syntax {
                        pos: start,
                        message: format!("literal `{text}` is out of range"),
                    });
                }
                out.push((start, Token::Num(v)));
                continue;
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                out.push((start, Token::Ident(src[start..i].to_string())));
                continue;
            }
            other => {
                return Err(ParseError::Syntax {
                    pos: i,
                    message: format!("unexpected character `{}`", other as char),
                })
            }
        };
        out.push((i, tok));
        i += 1;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval_str(src: &str, vars: &[f64]) -> Result<f64, EvalError> {
        parse(src).expect("parse").eval(vars)
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(eval_str("2+3*4", &[]).unwrap(), 14.0);
        assert_eq!(eval_str("(2+3)*4", &[]).unwrap(), 20.0);
        assert_eq!(eval_str("1-2-3", &[]).unwrap(), -4.0);
        assert_eq!(eval_str("6/3/2", &[]).unwrap(), 1.0);
        assert_eq!(eval_str("2^3^2", &[]).unwrap(), 512.0);
        assert_eq!(eval_str("-2^2", &[]).unwrap(), -4.0);
        assert_eq!(eval_str("2^-2", &[]).unwrap(), 0.25);
        assert_eq!(eval_str("2*3^2", &[]).unwrap(), 18.0);
        assert_eq!(eval_str("2--3", &[]).unwrap(), 5.0);
    }

    #[test]
    fn variables_are_one_based() {
        assert_eq!(eval_str("x1 + 2*x2", &[1.0, 3.0]).unwrap(), 7.0);
        let err = parse("x0").unwrap_err();
        assert!(matches!(err, ParseError::Syntax { .. }));
    }

    #[test]
    fn dim_bound_is_enforced() {
        assert!(parse_with_dim("x2 + 1", 2).is_ok());
        let err = parse_with_dim("x3", 2).unwrap_err();
        assert_eq!(
            err,
            ParseError::VarOutOfRange {
                pos: 0,
                var: 3,
                dim: 2
            }
        );
    }

    #[test]
    fn unknown_function_is_reported() {
        let err = parse("tan(1)").unwrap_err();
        assert!(matches!(err, ParseError::UnknownFunction { ref name, .. } if name == "tan"));
    }

    #[test]
    fn syntax_errors_carry_positions() {
        match parse("1 + ").unwrap_err() {
            ParseError::Syntax { pos, .. } => assert_eq!(pos, 4),
            other => panic!("unexpected {other:?}"),
        }
        match parse("1 2").unwrap_err() {
            ParseError::Syntax { pos, .. } => assert_eq!(pos, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse("(1").is_err());
        assert!(parse(")").is_err());
        assert!(parse("").is_err());
        assert!(parse("1 @ 2").is_err());
    }

    #[test]
    fn division_by_zero_is_an_error() {
        assert_eq!(
            eval_str("1/(x1-x1)", &[7.0]).unwrap_err(),
            EvalError::DivisionByZero
        );
        assert_eq!(eval_str("1/0", &[]).unwrap_err(), EvalError::DivisionByZero);
    }

    #[test]
    fn non_finite_results_are_errors() {
        assert_eq!(
            eval_str("sqrt(0-1)", &[]).unwrap_err(),
            EvalError::NonFinite { op: "sqrt" }
        );
        assert_eq!(
            eval_str("exp(1000)", &[]).unwrap_err(),
            EvalError::NonFinite { op: "exp" }
        );
        assert_eq!(
            eval_str("10^400", &[]).unwrap_err(),
            EvalError::NonFinite { op: "^" }
        );
    }

    #[test]
    fn scientific_literals() {
        assert_eq!(eval_str("1e3 + 2.5e-2", &[]).unwrap(), 1000.025);
    }

    #[test]
    fn display_round_trips_shape() {
        for src in [
            "-x1 - 2*x2 + (x1 - x2)*x1^3",
            "sin(x1)*x2/x3",
            "2^-2",
            "-(x1 + 1)^2",
            "1 - (2 - 3)",
        ] {
            let e = parse(src).unwrap();
            let printed = e.to_string();
            let e2 = parse(&printed).unwrap_or_else(|err| {
                panic!("reparse of `{printed}` failed: {err}");
            });
            let vars = [0.7, -1.3, 2.1];
            assert_eq!(e.eval(&vars), e2.eval(&vars), "src `{src}` via `{printed}`");
        }
    }
}
