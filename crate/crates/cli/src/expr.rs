//! Small arithmetic expression language for right hand sides and background
//! perturbations.
//!
//! Grammar (left associative, standard precedence):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := number | var | func '(' expr ')' | '(' expr ')' | '-' factor
//! func   := sin | cos | exp | log
//! var    := x1..x4 | y1..y4
//! ```
//!
//! Numbers are decimal literals with an optional exponent. `log` is the
//! natural logarithm.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: found {found}, expected one of {expected:?}")]
    Syntax {
        offset: usize,
        found: String,
        expected: Vec<&'static str>,
    },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { offset: usize, name: String },
    #[error("arity error at byte {offset}: `{func}` takes exactly one argument")]
    Arity { offset: usize, func: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
}

/// Expression tree. Variables are stored as the flat real-axis index:
/// `x_k -> 2(k-1)`, `y_k -> 2(k-1)+1`.
#[derive(Clone, Debug, PartialEq)]
pub enum Ast {
    Num(f64),
    Var(u8),
    Neg(Box<Ast>),
    Call(Func, Box<Ast>),
    Bin(Op, Box<Ast>, Box<Ast>),
}

/// A parsed expression together with its source text.
#[derive(Clone, Debug, PartialEq)]
pub struct PsiExpression {
    source: String,
    ast: Ast,
}

impl PsiExpression {
    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn ast(&self) -> &Ast {
        &self.ast
    }
}

pub fn parse_expr(src: &str) -> Result<PsiExpression, ExprError> {
    let tokens = lex(src)?;
    let mut parser = Parser { tokens, pos: 0 };
    let ast = parser.expr()?;
    parser.expect_eof()?;
    Ok(PsiExpression {
        source: src.to_string(),
        ast,
    })
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    LParen,
    RParen,
    Comma,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, ExprError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '+' => {
                out.push((Tok::Plus, i));
                i += 1;
            }
            '-' => {
                out.push((Tok::Minus, i));
                i += 1;
            }
            '*' => {
                out.push((Tok::Star, i));
                i += 1;
            }
            '/' => {
                out.push((Tok::Slash, i));
                i += 1;
            }
            '(' => {
                out.push((Tok::LParen, i));
                i += 1;
            }
            ')' => {
                out.push((Tok::RParen, i));
                i += 1;
            }
            ',' => {
                out.push((Tok::Comma, i));
                i += 1;
            }
            '0'..='9' | '.' => {
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
                    let mark = i;
                    i += 1;
                    if i < bytes.len() && (bytes[i] == b'+' || bytes[i] == b'-') {
                        i += 1;
                    }
                    if i < bytes.len() && bytes[i].is_ascii_digit() {
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            i += 1;
                        }
                    } else {
                        i = mark; // `e` belongs to an identifier, not this literal
                    }
                }
                let text = &src[start..i];
                let v: f64 = text.parse().map_err(|_| ExprError::Syntax {
                    offset: start,
                    found: format!("`{text}`"),
                    expected: vec!["number"],
                })?;
                out.push((Tok::Num(v), start));
            }
            'a'..='z' | 'A'..='Z' | '_' => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                out.push((Tok::Ident(src[start..i].to_string()), start));
            }
            _ => {
                return Err(ExprError::Syntax {
                    offset: i,
                    found: format!("`{c}`"),
                    expected: vec!["number", "variable", "function", "`(`", "`-`"],
                })
            }
        }
    }
    out.push((Tok::Eof, src.len()));
    Ok(out)
}

struct Parser {
    tokens: Vec<(Tok, usize)>,
    pos: usize,
}

const FACTOR_EXPECTED: [&str; 5] = ["number", "variable", "function", "`(`", "`-`"];

impl Parser {
    fn peek(&self) -> &(Tok, usize) {
        &self.tokens[self.pos]
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn expect_eof(&mut self) -> Result<(), ExprError> {
        match self.peek() {
            (Tok::Eof, _) => Ok(()),
            (tok, offset) => Err(ExprError::Syntax {
                offset: *offset,
                found: tok.describe(),
                expected: vec!["`+`", "`-`", "`*`", "`/`", "end of input"],
            }),
        }
    }

    fn expr(&mut self) -> Result<Ast, ExprError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek().0 {
                Tok::Plus => {
                    self.bump();
                    let rhs = self.term()?;
                    lhs = Ast::Bin(Op::Add, Box::new(lhs), Box::new(rhs));
                }
                Tok::Minus => {
                    self.bump();
                    let rhs = self.term()?;
                    lhs = Ast::Bin(Op::Sub, Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Ast, ExprError> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek().0 {
                Tok::Star => {
                    self.bump();
                    let rhs = self.factor()?;
                    lhs = Ast::Bin(Op::Mul, Box::new(lhs), Box::new(rhs));
                }
                Tok::Slash => {
                    self.bump();
                    let rhs = self.factor()?;
                    lhs = Ast::Bin(Op::Div, Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> Result<Ast, ExprError> {
        let (tok, offset) = self.bump();
        match tok {
            Tok::Num(v) => Ok(Ast::Num(v)),
            Tok::Minus => Ok(Ast::Neg(Box::new(self.factor()?))),
            Tok::LParen => {
                let inner = self.expr()?;
                self.close_paren()?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                if let Some(func) = match name.as_str() {
                    "sin" => Some(Func::Sin),
                    "cos" => Some(Func::Cos),
                    "exp" => Some(Func::Exp),
                    "log" => Some(Func::Log),
                    _ => None,
                } {
                    match self.bump() {
                        (Tok::LParen, _) => {}
                        (tok, offset) => {
                            return Err(ExprError::Syntax {
                                offset,
                                found: tok.describe(),
                                expected: vec!["`(`"],
                            })
                        }
                    }
                    let arg = self.expr()?;
                    if let (Tok::Comma, offset) = self.peek() {
                        return Err(ExprError::Arity {
                            offset: *offset,
                            func: func.name().to_string(),
                        });
                    }
                    self.close_paren()?;
                    return Ok(Ast::Call(func, Box::new(arg)));
                }
                if let Some(axis) = var_axis(&name) {
                    return Ok(Ast::Var(axis));
                }
                Err(ExprError::UnknownIdentifier { offset, name })
            }
            tok => Err(ExprError::Syntax {
                offset,
                found: tok.describe(),
                expected: FACTOR_EXPECTED.to_vec(),
            }),
        }
    }

    fn close_paren(&mut self) -> Result<(), ExprError> {
        match self.bump() {
            (Tok::RParen, _) => Ok(()),
            (tok, offset) => Err(ExprError::Syntax {
                offset,
                found: tok.describe(),
                expected: vec!["`)`", "`+`", "`-`", "`*`", "`/`"],
            }),
        }
    }
}

fn var_axis(name: &str) -> Option<u8> {
    let bytes = name.as_bytes();
    if bytes.len() != 2 {
        return None;
    }
    let idx = (bytes[1] as char).to_digit(10)?;
    if !(1..=4).contains(&idx) {
        return None;
    }
    match bytes[0] {
        b'x' => Some(2 * (idx as u8 - 1)),
        b'y' => Some(2 * (idx as u8 - 1) + 1),
        _ => None,
    }
}

pub fn var_name(axis: u8) -> String {
    let k = axis / 2 + 1;
    if axis % 2 == 0 {
        format!("x{k}")
    } else {
        format!("y{k}")
    }
}

/// Largest real-axis index referenced by the expression, if any.
pub fn max_axis(ast: &Ast) -> Option<u8> {
    match ast {
        Ast::Num(_) => None,
        Ast::Var(a) => Some(*a),
        Ast::Neg(x) | Ast::Call(_, x) => max_axis(x),
        Ast::Bin(_, a, b) => match (max_axis(a), max_axis(b)) {
            (Some(x), Some(y)) => Some(x.max(y)),
            (x, y) => x.or(y),
        },
    }
}

/// Evaluate at a point given its flat real coordinates.
pub fn eval(ast: &Ast, point: &[f64]) -> f64 {
    match ast {
        Ast::Num(v) => *v,
        Ast::Var(a) => point[*a as usize],
        Ast::Neg(x) => -eval(x, point),
        Ast::Call(Func::Sin, x) => eval(x, point).sin(),
        Ast::Call(Func::Cos, x) => eval(x, point).cos(),
        Ast::Call(Func::Exp, x) => eval(x, point).exp(),
        Ast::Call(Func::Log, x) => eval(x, point).ln(),
        Ast::Bin(Op::Add, a, b) => eval(a, point) + eval(b, point),
        Ast::Bin(Op::Sub, a, b) => eval(a, point) - eval(b, point),
        Ast::Bin(Op::Mul, a, b) => eval(a, point) * eval(b, point),
        Ast::Bin(Op::Div, a, b) => eval(a, point) / eval(b, point),
    }
}

fn num(v: f64) -> Ast {
    Ast::Num(v)
}

fn add(a: Ast, b: Ast) -> Ast {
    match (&a, &b) {
        (Ast::Num(x), Ast::Num(y)) => num(x + y),
        (Ast::Num(x), _) if *x == 0.0 => b,
        (_, Ast::Num(y)) if *y == 0.0 => a,
        _ => Ast::Bin(Op::Add, Box::new(a), Box::new(b)),
    }
}

fn sub(a: Ast, b: Ast) -> Ast {
    match (&a, &b) {
        (Ast::Num(x), Ast::Num(y)) => num(x - y),
        (_, Ast::Num(y)) if *y == 0.0 => a,
        (Ast::Num(x), _) if *x == 0.0 => Ast::Neg(Box::new(b)),
        _ => Ast::Bin(Op::Sub, Box::new(a), Box::new(b)),
    }
}

fn mul(a: Ast, b: Ast) -> Ast {
    match (&a, &b) {
        (Ast::Num(x), Ast::Num(y)) => num(x * y),
        (Ast::Num(x), _) if *x == 0.0 => num(0.0),
        (_, Ast::Num(y)) if *y == 0.0 => num(0.0),
        (Ast::Num(x), _) if *x == 1.0 => b,
        (_, Ast::Num(y)) if *y == 1.0 => a,
        _ => Ast::Bin(Op::Mul, Box::new(a), Box::new(b)),
    }
}

fn div(a: Ast, b: Ast) -> Ast {
    match (&a, &b) {
        (Ast::Num(x), _) if *x == 0.0 => num(0.0),
        (_, Ast::Num(y)) if *y == 1.0 => a,
        (Ast::Num(x), Ast::Num(y)) if *y != 0.0 => num(x / y),
        _ => Ast::Bin(Op::Div, Box::new(a), Box::new(b)),
    }
}

/// Symbolic partial derivative with respect to the flat axis index, with
/// light constant folding to keep repeated differentiation manageable.
pub fn derivative(ast: &Ast, axis: u8) -> Ast {
    match ast {
        Ast::Num(_) => num(0.0),
        Ast::Var(a) => num(if *a == axis { 1.0 } else { 0.0 }),
        Ast::Neg(x) => match derivative(x, axis) {
            Ast::Num(v) => num(-v),
            d => Ast::Neg(Box::new(d)),
        },
        Ast::Call(Func::Sin, x) => mul(Ast::Call(Func::Cos, x.clone()), derivative(x, axis)),
        Ast::Call(Func::Cos, x) => mul(
            Ast::Neg(Box::new(Ast::Call(Func::Sin, x.clone()))),
            derivative(x, axis),
        ),
        Ast::Call(Func::Exp, x) => mul(Ast::Call(Func::Exp, x.clone()), derivative(x, axis)),
        Ast::Call(Func::Log, x) => div(derivative(x, axis), (**x).clone()),
        Ast::Bin(Op::Add, a, b) => add(derivative(a, axis), derivative(b, axis)),
        Ast::Bin(Op::Sub, a, b) => sub(derivative(a, axis), derivative(b, axis)),
        Ast::Bin(Op::Mul, a, b) => add(
            mul(derivative(a, axis), (**b).clone()),
            mul((**a).clone(), derivative(b, axis)),
        ),
        Ast::Bin(Op::Div, a, b) => {
            // (a/b)' = a'/b - a b'/b^2
            sub(
                div(derivative(a, axis), (**b).clone()),
                div(
                    mul((**a).clone(), derivative(b, axis)),
                    mul((**b).clone(), (**b).clone()),
                ),
            )
        }
    }
}

fn precedence(ast: &Ast) -> u8 {
    match ast {
        Ast::Bin(Op::Add | Op::Sub, ..) => 1,
        Ast::Bin(Op::Mul | Op::Div, ..) => 2,
        Ast::Neg(_) => 3,
        _ => 4,
    }
}

impl fmt::Display for Ast {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ast::Num(v) => write!(f, "{v}"),
            Ast::Var(a) => write!(f, "{}", var_name(*a)),
            Ast::Neg(x) => {
                if precedence(x) < 3 {
                    write!(f, "-({x})")
                } else {
                    write!(f, "-{x}")
                }
            }
            Ast::Call(func, x) => write!(f, "{}({x})", func.name()),
            Ast::Bin(op, a, b) => {
                let p = precedence(self);
                let (sym, _) = match op {
                    Op::Add => ("+", 1),
                    Op::Sub => ("-", 1),
                    Op::Mul => ("*", 2),
                    Op::Div => ("/", 2),
                };
                if precedence(a) < p {
                    write!(f, "({a})")?;
                } else {
                    write!(f, "{a}")?;
                }
                write!(f, " {sym} ")?;
                // The right child keeps parens on equal precedence so the
                // reparse rebuilds the same left-leaning tree.
                if precedence(b) <= p {
                    write!(f, "({b})")
                } else {
                    write!(f, "{b}")
                }
            }
        }
    }
}

impl fmt::Display for PsiExpression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.ast)
    }
}
