//! A small expression language for scalar functions of one nonnegative
//! variable.
//!
//! Weights, nonlinearities and custom `phi` functions are written as strings
//! in run configs, e.g. `"6/(1+r^2)"` or `"c*asinh(t)^q"`. The variable may be
//! spelled `r`, `t`, `s` or `x`; all four denote the same argument. Any other
//! identifier must be a named parameter supplied at parse time, or one of the
//! constants `pi` and `e`.
//!
//! Grammar (lowest to highest precedence):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?          (right associative)
//! atom   := number | ident | ident '(' args ')' | '(' expr ')'
//! ```
//!
//! Functions: `exp ln sqrt sinh asinh abs` (one argument), `min max` (two).

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

/// Identifiers that all denote the single free variable.
pub const VARIABLE_NAMES: [&str; 4] = ["r", "t", "s", "x"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at offset {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("function `{name}` at offset {offset} takes {expected} argument(s), got {got}")]
    Arity {
        name: String,
        offset: usize,
        expected: usize,
        got: usize,
    },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match self {
            ParseError::Syntax { offset, .. }
            | ParseError::UnknownIdentifier { offset, .. }
            | ParseError::Arity { offset, .. } => *offset,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("non-finite result in {0}")]
    Overflow(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Ln,
    Sqrt,
    Sinh,
    Asinh,
    Abs,
    Min,
    Max,
}

impl Func {
    fn lookup(name: &str) -> Option<Func> {
        Some(match name {
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "sqrt" => Func::Sqrt,
            "sinh" => Func::Sinh,
            "asinh" => Func::Asinh,
            "abs" => Func::Abs,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
            Func::Sinh => "sinh",
            Func::Asinh => "asinh",
            Func::Abs => "abs",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }
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
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }
}

/// Parsed expression tree. Immutable once built; named parameters have already
/// been folded into literals.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var,
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

impl Expr {
    /// Parse `source`, binding identifiers found in `params` to their values.
    pub fn parse(source: &str, params: &BTreeMap<String, f64>) -> Result<Expr, ParseError> {
        let tokens = lex(source)?;
        let mut parser = Parser {
            tokens,
            pos: 0,
            params,
            end: source.len(),
        };
        if parser.tokens.is_empty() {
            return Err(ParseError::Syntax {
                offset: 0,
                message: "empty expression".into(),
            });
        }
        let expr = parser.expr()?;
        if let Some(tok) = parser.peek() {
            return Err(ParseError::Syntax {
                offset: tok.offset,
                message: format!("unexpected {}", tok.kind),
            });
        }
        Ok(expr)
    }

    /// Parse with no named parameters.
    pub fn parse_plain(source: &str) -> Result<Expr, ParseError> {
        Expr::parse(source, &BTreeMap::new())
    }

    /// True when the expression does not mention the variable.
    pub fn is_constant(&self) -> bool {
        match self {
            Expr::Num(_) => true,
            Expr::Var => false,
            Expr::Neg(e) => e.is_constant(),
            Expr::Bin(_, a, b) => a.is_constant() && b.is_constant(),
            Expr::Call(_, args) => args.iter().all(Expr::is_constant),
        }
    }

    pub fn eval(&self, x: f64) -> Result<f64, EvalError> {
        if !(x >= 0.0) || !x.is_finite() {
            return Err(EvalError::Domain(format!(
                "argument {x} is not a finite nonnegative real"
            )));
        }
        self.eval_at(x)
    }

    fn eval_at(&self, x: f64) -> Result<f64, EvalError> {
        let value = match self {
            Expr::Num(v) => *v,
            Expr::Var => x,
            Expr::Neg(e) => -e.eval_at(x)?,
            Expr::Bin(op, a, b) => {
                let a = a.eval_at(x)?;
                let b = b.eval_at(x)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(EvalError::Domain("division by zero".into()));
                        }
                        a / b
                    }
                    BinOp::Pow => power(a, b)?,
                }
            }
            Expr::Call(func, args) => {
                let a = args[0].eval_at(x)?;
                match func {
                    Func::Exp => a.exp(),
                    Func::Ln => {
                        if a <= 0.0 {
                            return Err(EvalError::Domain(format!("ln of nonpositive {a}")));
                        }
                        a.ln()
                    }
                    Func::Sqrt => {
                        if a < 0.0 {
                            return Err(EvalError::Domain(format!("sqrt of negative {a}")));
                        }
                        a.sqrt()
                    }
                    Func::Sinh => a.sinh(),
                    Func::Asinh => a.asinh(),
                    Func::Abs => a.abs(),
                    Func::Min => a.min(args[1].eval_at(x)?),
                    Func::Max => a.max(args[1].eval_at(x)?),
                }
            }
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(EvalError::Overflow(self.to_string()))
        }
    }
}

fn power(base: f64, exponent: f64) -> Result<f64, EvalError> {
    if base == 0.0 && exponent < 0.0 {
        return Err(EvalError::Domain("0 raised to a negative power".into()));
    }
    if base < 0.0 && exponent.fract() != 0.0 {
        return Err(EvalError::Domain(format!(
            "negative base {base} with non-integer exponent {exponent}"
        )));
    }
    Ok(base.powf(exponent))
}

// Printing: every compound subexpression is parenthesized, so the output
// re-parses to the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) if *v < 0.0 || (*v == 0.0 && v.is_sign_negative()) => write!(f, "({v:?})"),
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Var => f.write_str("r"),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Bin(op, a, b) => write!(f, "({a}{}{b})", op.symbol()),
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, arg) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{arg}")?;
                }
                f.write_str(")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum TokenKind {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenKind::Num(v) => write!(f, "number {v}"),
            TokenKind::Ident(s) => write!(f, "identifier `{s}`"),
            TokenKind::Op(c) => write!(f, "`{c}`"),
            TokenKind::LParen => f.write_str("`(`"),
            TokenKind::RParen => f.write_str("`)`"),
            TokenKind::Comma => f.write_str("`,`"),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokenKind,
    offset: usize,
}

fn lex(source: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = source.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let kind = if c.is_ascii_digit() || c == '.' {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            // exponent part: 1e-3, 2.5E+4
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
            let text = &source[start..i];
            let value: f64 = text.parse().map_err(|_| ParseError::Syntax {
                offset: start,
                message: format!("malformed number `{text}`"),
            })?;
            TokenKind::Num(value)
        } else if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            TokenKind::Ident(source[start..i].to_string())
        } else {
            i += 1;
            match c {
                '+' | '-' | '*' | '/' | '^' => TokenKind::Op(c),
                '(' => TokenKind::LParen,
                ')' => TokenKind::RParen,
                ',' => TokenKind::Comma,
                _ => {
                    return Err(ParseError::Syntax {
                        offset: start,
                        message: format!("unexpected character `{c}`"),
                    })
                }
            }
        };
        tokens.push(Token { kind, offset: start });
    }
    Ok(tokens)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    params: &'a BTreeMap<String, f64>,
    end: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let tok = self.tokens.get(self.pos).cloned();
        if tok.is_some() {
            self.pos += 1;
        }
        tok
    }

    fn eat_op(&mut self, ops: &[char]) -> Option<char> {
        match self.peek() {
            Some(Token {
                kind: TokenKind::Op(c), ..
            }) if ops.contains(c) => {
                let c = *c;
                self.pos += 1;
                Some(c)
            }
            _ => None,
        }
    }

    fn here(&self) -> usize {
        self.peek().map_or(self.end, |t| t.offset)
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        while let Some(c) = self.eat_op(&['+', '-']) {
            let rhs = self.term()?;
            let op = if c == '+' { BinOp::Add } else { BinOp::Sub };
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        while let Some(c) = self.eat_op(&['*', '/']) {
            let rhs = self.unary()?;
            let op = if c == '*' { BinOp::Mul } else { BinOp::Div };
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat_op(&['-']).is_some() {
            let inner = self.unary()?;
            return Ok(match inner {
                Expr::Num(v) => Expr::Num(-v),
                other => Expr::Neg(Box::new(other)),
            });
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.eat_op(&['^']).is_some() {
            let exponent = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let offset = self.here();
        let Some(tok) = self.next() else {
            return Err(ParseError::Syntax {
                offset,
                message: "unexpected end of input".into(),
            });
        };
        match tok.kind {
            TokenKind::Num(v) => Ok(Expr::Num(v)),
            TokenKind::LParen => {
                let inner = self.expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            TokenKind::Ident(name) => self.identifier(name, tok.offset),
            other => Err(ParseError::Syntax {
                offset: tok.offset,
                message: format!("unexpected {other}"),
            }),
        }
    }

    fn identifier(&mut self, name: String, offset: usize) -> Result<Expr, ParseError> {
        let is_call = matches!(
            self.peek(),
            Some(Token {
                kind: TokenKind::LParen,
                ..
            })
        );
        if is_call {
            let Some(func) = Func::lookup(&name) else {
                return Err(ParseError::UnknownIdentifier { name, offset });
            };
            self.pos += 1;
            let mut args = vec![self.expr()?];
            while matches!(
                self.peek(),
                Some(Token {
                    kind: TokenKind::Comma,
                    ..
                })
            ) {
                self.pos += 1;
                args.push(self.expr()?);
            }
            self.expect_rparen()?;
            if args.len() != func.arity() {
                return Err(ParseError::Arity {
                    name,
                    offset,
                    expected: func.arity(),
                    got: args.len(),
                });
            }
            return Ok(Expr::Call(func, args));
        }
        if VARIABLE_NAMES.contains(&name.as_str()) {
            return Ok(Expr::Var);
        }
        if let Some(v) = self.params.get(&name) {
            return Ok(Expr::Num(*v));
        }
        match name.as_str() {
            "pi" => Ok(Expr::Num(std::f64::consts::PI)),
            "e" => Ok(Expr::Num(std::f64::consts::E)),
            _ => Err(ParseError::UnknownIdentifier { name, offset }),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ParseError> {
        let offset = self.here();
        match self.next() {
            Some(Token {
                kind: TokenKind::RParen,
                ..
            }) => Ok(()),
            Some(tok) => Err(ParseError::Syntax {
                offset: tok.offset,
                message: format!("expected `)`, found {}", tok.kind),
            }),
            None => Err(ParseError::Syntax {
                offset,
                message: "expected `)`".into(),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn eval(src: &str, x: f64) -> Result<f64, EvalError> {
        Expr::parse_plain(src).unwrap().eval(x)
    }

    #[test]
    fn polynomial_and_min() {
        assert_eq!(eval("r^2 + 1", 2.0).unwrap(), 5.0);
        assert_eq!(eval("min(r, 4)", 9.0).unwrap(), 4.0);
        assert_eq!(eval("max(r, 4)", 9.0).unwrap(), 9.0);
    }

    #[test]
    fn trailing_operator_reports_offset() {
        let err = Expr::parse_plain("r +").unwrap_err();
        assert!(matches!(err, ParseError::Syntax { offset: 3, .. }), "{err:?}");
    }

    #[test]
    fn builtins() {
        assert_eq!(eval("asinh(r)", 0.0).unwrap(), 0.0);
        assert_eq!(eval("6/(1+r^2)", 1.0).unwrap(), 3.0);
        assert!((eval("exp(ln(r))", 3.0).unwrap() - 3.0).abs() < 1e-15);
        assert_eq!(eval("abs(-r)", 2.0).unwrap(), 2.0);
        assert_eq!(eval("sqrt(t)*sinh(0)", 4.0).unwrap(), 0.0);
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(eval("1/r", 0.0), Err(EvalError::Domain(_))));
        assert!(matches!(eval("ln(r)", 0.0), Err(EvalError::Domain(_))));
        assert!(matches!(eval("r^(-1)", 0.0), Err(EvalError::Domain(_))));
        assert!(matches!(eval("(r-2)^0.5", 1.0), Err(EvalError::Domain(_))));
        assert!(matches!(eval("exp(r)", 1000.0), Err(EvalError::Overflow(_))));
        assert!(matches!(eval("r", -1.0), Err(EvalError::Domain(_))));
    }

    #[test]
    fn negative_base_integer_power() {
        assert_eq!(eval("(r-3)^3", 1.0).unwrap(), -8.0);
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(eval("2^3^2", 0.0).unwrap(), 512.0);
        assert_eq!(eval("-2^2", 0.0).unwrap(), -4.0);
        assert_eq!(eval("8/2/2", 0.0).unwrap(), 2.0);
        assert_eq!(eval("1-2-3", 0.0).unwrap(), -4.0);
        assert_eq!(eval("2*r^-1", 4.0).unwrap(), 0.5);
        assert_eq!(eval("1e-3*1E3", 0.0).unwrap(), 1.0);
    }

    #[test]
    fn parameters_and_identifiers() {
        let mut params = BTreeMap::new();
        params.insert("sigma".to_string(), 2.0);
        let e = Expr::parse("(1+r)^(-sigma)", &params).unwrap();
        assert_eq!(e.eval(1.0).unwrap(), 0.25);
        assert!(e.eval(0.0).is_ok());
        let err = Expr::parse_plain("(1+r)^(-sigma)").unwrap_err();
        assert!(matches!(err, ParseError::UnknownIdentifier { ref name, offset: 8 } if name == "sigma"));
        let err = Expr::parse_plain("foo(r)").unwrap_err();
        assert!(matches!(err, ParseError::UnknownIdentifier { .. }));
        assert!(Expr::parse_plain("pi").unwrap().is_constant());
    }

    #[test]
    fn arity_mismatch() {
        let err = Expr::parse_plain("min(r)").unwrap_err();
        assert!(matches!(
            err,
            ParseError::Arity {
                expected: 2,
                got: 1,
                ..
            }
        ));
        let err = Expr::parse_plain("exp(r, 2)").unwrap_err();
        assert!(matches!(
            err,
            ParseError::Arity {
                expected: 1,
                got: 2,
                ..
            }
        ));
    }

    #[test]
    fn malformed_inputs() {
        for src in ["", "()", "r r", "(r", "r)", "2 $ r", "min(,r)"] {
            assert!(Expr::parse_plain(src).is_err(), "{src:?} should fail");
        }
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![(-50.0f64..50.0).prop_map(Expr::Num), Just(Expr::Var),];
        leaf.prop_recursive(5, 48, 3, |inner| {
            prop_oneof![
                inner.clone().prop_map(|e| match e {
                    Expr::Num(v) => Expr::Num(-v),
                    other => Expr::Neg(Box::new(other)),
                }),
                (
                    prop_oneof![
                        Just(BinOp::Add),
                        Just(BinOp::Sub),
                        Just(BinOp::Mul),
                        Just(BinOp::Div),
                        Just(BinOp::Pow)
                    ],
                    inner.clone(),
                    inner.clone()
                )
                    .prop_map(|(op, a, b)| Expr::Bin(op, Box::new(a), Box::new(b))),
                (
                    prop_oneof![
                        Just(Func::Exp),
                        Just(Func::Ln),
                        Just(Func::Sqrt),
                        Just(Func::Sinh),
                        Just(Func::Asinh),
                        Just(Func::Abs)
                    ],
                    inner.clone()
                )
                    .prop_map(|(f, a)| Expr::Call(f, vec![a])),
                (prop_oneof![Just(Func::Min), Just(Func::Max)], inner.clone(), inner)
                    .prop_map(|(f, a, b)| Expr::Call(f, vec![a, b])),
            ]
        })
    }

    proptest! {
        #[test]
        fn printed_form_reparses_identically(e in arb_expr()) {
            let printed = e.to_string();
            let reparsed = Expr::parse_plain(&printed).unwrap();
            prop_assert_eq!(reparsed, e);
        }

        #[test]
        fn evaluation_is_pure(e in arb_expr(), x in 0.0f64..100.0) {
            let a = e.eval(x);
            let b = e.eval(x);
            match (a, b) {
                (Ok(a), Ok(b)) => {
                    prop_assert!(a.is_finite());
                    prop_assert_eq!(a.to_bits(), b.to_bits());
                }
                (Err(a), Err(b)) => prop_assert_eq!(a, b),
                _ => prop_assert!(false, "evaluations disagree"),
            }
        }
    }
}
