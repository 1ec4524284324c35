//! Coordinate-expression language: parser, printer and jet evaluator.
//!
//! Grammar (usual precedence, `^` binds tightest and is right-associative):
//!
//! ```text
//! sum     := product (("+" | "-") product)*
//! product := unary (("*" | "/") unary)*
//! unary   := ("-" | "+") unary | power
//! power   := atom ("^" unary)?
//! atom    := number | "i" | "pi" | name | func "(" sum ")" | "(" sum ")"
//! ```
//!
//! Symbols are resolved against a [`Symbols`] table while parsing, so
//! evaluation is a plain slot lookup.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use thiserror::Error;

use crate::jet::{Jet, JetError, JetSpace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Sec,
    Cot,
    Sinh,
    Cosh,
    Tanh,
    Exp,
    Log,
    Sqrt,
    Atan,
    Acos,
    Asec,
    Acot,
    Arccot,
    Abs,
}

impl Func {
    pub const ALL: [Func; 17] = [
        Func::Sin,
        Func::Cos,
        Func::Tan,
        Func::Sec,
        Func::Cot,
        Func::Sinh,
        Func::Cosh,
        Func::Tanh,
        Func::Exp,
        Func::Log,
        Func::Sqrt,
        Func::Atan,
        Func::Acos,
        Func::Asec,
        Func::Acot,
        Func::Arccot,
        Func::Abs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Sec => "sec",
            Func::Cot => "cot",
            Func::Sinh => "sinh",
            Func::Cosh => "cosh",
            Func::Tanh => "tanh",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Atan => "atan",
            Func::Acos => "acos",
            Func::Asec => "asec",
            Func::Acot => "acot",
            Func::Arccot => "arccot",
            Func::Abs => "abs",
        }
    }

    pub fn from_name(s: &str) -> Option<Func> {
        Func::ALL.iter().copied().find(|f| f.name() == s)
    }

    fn apply_jet(self, u: &Jet) -> Result<Jet, JetError> {
        match self {
            Func::Sin => u.sin(),
            Func::Cos => u.cos(),
            Func::Tan => u.tan(),
            Func::Sec => u.sec(),
            Func::Cot => u.cot(),
            Func::Sinh => u.sinh(),
            Func::Cosh => u.cosh(),
            Func::Tanh => u.tanh(),
            Func::Exp => u.exp(),
            Func::Log => u.ln(),
            Func::Sqrt => u.sqrt(),
            Func::Atan => u.atan(),
            Func::Acos => u.acos(),
            Func::Asec => u.asec(),
            Func::Acot | Func::Arccot => u.acot(),
            Func::Abs => u.abs(),
        }
    }

    fn apply_scalar(self, z: C64) -> Result<C64, JetError> {
        let dom = |func| Err(JetError::Domain { func, value: z });
        let near0 = |w: C64| w.norm() < 1e-12;
        let r = match self {
            Func::Sin => z.sin(),
            Func::Cos => z.cos(),
            Func::Tan if near0(z.cos()) => return dom("tan"),
            Func::Tan => z.tan(),
            Func::Sec if near0(z.cos()) => return dom("sec"),
            Func::Sec => z.cos().inv(),
            Func::Cot if near0(z.sin()) => return dom("cot"),
            Func::Cot => z.cos() / z.sin(),
            Func::Sinh => z.sinh(),
            Func::Cosh => z.cosh(),
            Func::Tanh if near0(z.cosh()) => return dom("tanh"),
            Func::Tanh => z.tanh(),
            Func::Exp => z.exp(),
            Func::Log if z.norm() == 0.0 => return dom("log"),
            Func::Log => z.ln(),
            Func::Sqrt => z.sqrt(),
            Func::Atan if near0(C64::new(1.0, 0.0) + z * z) => return dom("atan"),
            Func::Atan => z.atan(),
            Func::Acos => z.acos(),
            Func::Asec if z.norm() == 0.0 => return dom("asec"),
            Func::Asec => z.inv().acos(),
            Func::Acot | Func::Arccot if z.norm() == 0.0 => return dom("acot"),
            Func::Acot | Func::Arccot => {
                let w = z.inv();
                if near0(C64::new(1.0, 0.0) + w * w) {
                    return dom("acot");
                }
                w.atan()
            }
            Func::Abs => {
                if z.im.abs() > 1e-12 * z.norm().max(1.0) {
                    return dom("abs");
                }
                C64::new(z.re.abs(), 0.0)
            }
        };
        if r.re.is_finite() && r.im.is_finite() {
            Ok(r)
        } else {
            dom(self.name())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(C64),
    Sym { slot: usize, name: Arc<str> },
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SymbolKind {
    Variable,
    Parameter,
    Binding,
}

/// Ordered symbol table; a symbol's slot is its position.
#[derive(Debug, Clone, Default)]
pub struct Symbols {
    names: Vec<String>,
    kinds: Vec<SymbolKind>,
}

impl Symbols {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(vars: &[&str], params: &[&str]) -> Self {
        let mut s = Symbols::new();
        for v in vars {
            s.push(v, SymbolKind::Variable);
        }
        for p in params {
            s.push(p, SymbolKind::Parameter);
        }
        s
    }

    /// Adds a symbol (or returns the existing slot of the same name).
    pub fn push(&mut self, name: &str, kind: SymbolKind) -> usize {
        if let Some(i) = self.slot(name) {
            return i;
        }
        self.names.push(name.to_string());
        self.kinds.push(kind);
        self.names.len() - 1
    }

    pub fn slot(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, slot: usize) -> &str {
        &self.names[slot]
    }

    pub fn kind(&self, slot: usize) -> SymbolKind {
        self.kinds[slot]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax,
    UnknownIdentifier,
    Arity,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("{kind:?} error at line {line}, column {col}: {message}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub line: usize,
    pub col: usize,
    pub message: String,
}

#[derive(Debug, Clone, Error, PartialEq)]
#[error("{source} in `{subexpr}`")]
pub struct EvalError {
    pub subexpr: String,
    pub source: JetError,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
    End,
}

struct Lexer<'a> {
    chars: Vec<char>,
    pos: usize,
    _src: &'a str,
}

impl<'a> Lexer<'a> {
    fn line_col(&self, pos: usize) -> (usize, usize) {
        let mut line = 1;
        let mut col = 1;
        for &c in &self.chars[..pos.min(self.chars.len())] {
            if c == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
        }
        (line, col)
    }

    fn tokenize(src: &'a str) -> Result<Vec<(Tok, usize)>, ParseError> {
        let mut lx = Lexer { chars: src.chars().collect(), pos: 0, _src: src };
        let mut out = Vec::new();
        while lx.pos < lx.chars.len() {
            let c = lx.chars[lx.pos];
            let start = lx.pos;
            if c.is_whitespace() {
                lx.pos += 1;
                continue;
            }
            if c.is_ascii_digit() || (c == '.' && lx.peek_digit(1)) {
                let mut end = lx.pos;
                while end < lx.chars.len() && (lx.chars[end].is_ascii_digit() || lx.chars[end] == '.') {
                    end += 1;
                }
                if end < lx.chars.len() && (lx.chars[end] == 'e' || lx.chars[end] == 'E') {
                    let mut k = end + 1;
                    if k < lx.chars.len() && (lx.chars[k] == '+' || lx.chars[k] == '-') {
                        k += 1;
                    }
                    if k < lx.chars.len() && lx.chars[k].is_ascii_digit() {
                        while k < lx.chars.len() && lx.chars[k].is_ascii_digit() {
                            k += 1;
                        }
                        end = k;
                    }
                }
                let text: String = lx.chars[start..end].iter().collect();
                let v: f64 = text.parse().map_err(|_| lx.err(start, ParseErrorKind::Syntax, format!("malformed number `{text}`")))?;
                out.push((Tok::Num(v), start));
                lx.pos = end;
                continue;
            }
            if c.is_alphabetic() || c == '_' {
                let mut end = lx.pos;
                while end < lx.chars.len() && (lx.chars[end].is_alphanumeric() || lx.chars[end] == '_') {
                    end += 1;
                }
                out.push((Tok::Ident(lx.chars[start..end].iter().collect()), start));
                lx.pos = end;
                continue;
            }
            let t = match c {
                '+' | '-' | '*' | '/' | '^' => Tok::Op(c),
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                ',' => Tok::Comma,
                _ => return Err(lx.err(start, ParseErrorKind::Syntax, format!("unexpected character `{c}`"))),
            };
            out.push((t, start));
            lx.pos += 1;
        }
        out.push((Tok::End, lx.chars.len()));
        Ok(out)
    }

    fn peek_digit(&self, off: usize) -> bool {
        self.chars.get(self.pos + off).is_some_and(|c| c.is_ascii_digit())
    }

    fn err(&self, pos: usize, kind: ParseErrorKind, message: String) -> ParseError {
        let (line, col) = self.line_col(pos);
        ParseError { kind, line, col, message }
    }
}

struct Parser<'s> {
    toks: Vec<(Tok, usize)>,
    i: usize,
    symbols: &'s Symbols,
    lexer: Lexer<'s>,
}

impl<'s> Parser<'s> {
    fn peek(&self) -> &Tok {
        &self.toks[self.i].0
    }

    fn pos(&self) -> usize {
        self.toks[self.i].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.i].0.clone();
        if self.i + 1 < self.toks.len() {
            self.i += 1;
        }
        t
    }

    fn err(&self, kind: ParseErrorKind, msg: impl Into<String>) -> ParseError {
        self.lexer.err(self.pos(), kind, msg.into())
    }

    fn sum(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.product()?;
        loop {
            let op = match self.peek() {
                Tok::Op('+') => BinOp::Add,
                Tok::Op('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.product()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn product(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Op('*') => BinOp::Mul,
                Tok::Op('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Tok::Op('-') => {
                self.bump();
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Tok::Op('+') => {
                self.bump();
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if matches!(self.peek(), Tok::Op('^')) {
            self.bump();
            let exp = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.bump() {
            Tok::Num(v) => Ok(Expr::Num(C64::new(v, 0.0))),
            Tok::LParen => {
                let e = self.sum()?;
                self.expect_rparen()?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if let Some(f) = Func::from_name(&name) {
                    if !matches!(self.peek(), Tok::LParen) {
                        return Err(self.err(ParseErrorKind::Syntax, format!("function `{name}` needs an argument list")));
                    }
                    self.bump();
                    if matches!(self.peek(), Tok::RParen) {
                        return Err(self.err(ParseErrorKind::Arity, format!("`{name}` takes exactly one argument, got 0")));
                    }
                    let arg = self.sum()?;
                    if matches!(self.peek(), Tok::Comma) {
                        return Err(self.err(ParseErrorKind::Arity, format!("`{name}` takes exactly one argument")));
                    }
                    self.expect_rparen()?;
                    return Ok(Expr::Call(f, Box::new(arg)));
                }
                if name == "i" {
                    return Ok(Expr::Num(C64::new(0.0, 1.0)));
                }
                if name == "pi" {
                    return Ok(Expr::Num(C64::new(std::f64::consts::PI, 0.0)));
                }
                match self.symbols.slot(&name) {
                    Some(slot) => {
                        if matches!(self.peek(), Tok::LParen) {
                            return Err(self.err(ParseErrorKind::Syntax, format!("`{name}` is not a function")));
                        }
                        Ok(Expr::Sym { slot, name: Arc::from(name.as_str()) })
                    }
                    None => {
                        self.i -= 1;
                        Err(self.err(ParseErrorKind::UnknownIdentifier, format!("unknown identifier `{name}`")))
                    }
                }
            }
            Tok::End => Err(self.err(ParseErrorKind::Syntax, "unexpected end of expression")),
            t => {
                self.i -= 1;
                Err(self.err(ParseErrorKind::Syntax, format!("unexpected token {t:?}")))
            }
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ParseError> {
        match self.peek() {
            Tok::RParen => {
                self.bump();
                Ok(())
            }
            _ => Err(self.err(ParseErrorKind::Syntax, "expected `)`")),
        }
    }
}

/// Parse `text` against the symbol table.
pub fn parse(text: &str, symbols: &Symbols) -> Result<Expr, ParseError> {
    let toks = Lexer::tokenize(text)?;
    let mut p = Parser { toks, i: 0, symbols, lexer: Lexer { chars: text.chars().collect(), pos: 0, _src: text } };
    let e = p.sum()?;
    if !matches!(p.peek(), Tok::End) {
        return Err(p.err(ParseErrorKind::Syntax, "trailing input"));
    }
    Ok(e)
}

fn fmt_num(z: C64, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if z.im == 0.0 {
        if z.re == std::f64::consts::PI {
            write!(f, "pi")
        } else if z.re < 0.0 {
            write!(f, "(-{:?})", -z.re)
        } else {
            write!(f, "{:?}", z.re)
        }
    } else if z.re == 0.0 && z.im == 1.0 {
        write!(f, "i")
    } else {
        write!(f, "({:?} + {:?}*i)", z.re, z.im)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(z) => fmt_num(*z, f),
            Expr::Sym { name, .. } => write!(f, "{name}"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Bin(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Expr::Pow(a, b) => write!(f, "({a}^{b})"),
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

impl Expr {
    pub fn constant(z: C64) -> Expr {
        Expr::Num(z)
    }

    /// Slots referenced anywhere in the tree.
    pub fn slots(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.visit(&mut |e| {
            if let Expr::Sym { slot, .. } = e {
                if !out.contains(slot) {
                    out.push(*slot);
                }
            }
        });
        out.sort_unstable();
        out
    }

    fn visit(&self, f: &mut impl FnMut(&Expr)) {
        f(self);
        match self {
            Expr::Neg(a) | Expr::Call(_, a) => a.visit(f),
            Expr::Bin(_, a, b) | Expr::Pow(a, b) => {
                a.visit(f);
                b.visit(f);
            }
            _ => {}
        }
    }

    fn wrap<T>(&self, r: Result<T, JetError>) -> Result<T, EvalError> {
        r.map_err(|source| EvalError { subexpr: self.to_string(), source })
    }

    /// Evaluate as a jet. `env[slot]` supplies each symbol's jet; constant
    /// literals are lifted into `space` at `order`.
    pub fn eval(&self, env: &[Jet], space: &Arc<JetSpace>, order: usize) -> Result<Jet, EvalError> {
        match self {
            Expr::Num(z) => Ok(Jet::constant(space, order, *z)),
            Expr::Sym { slot, .. } => Ok(env[*slot].clone()),
            Expr::Neg(a) => Ok(-&a.eval(env, space, order)?),
            Expr::Bin(op, a, b) => {
                let x = a.eval(env, space, order)?;
                let y = b.eval(env, space, order)?;
                match op {
                    BinOp::Add => Ok(&x + &y),
                    BinOp::Sub => Ok(&x - &y),
                    BinOp::Mul => Ok(&x * &y),
                    BinOp::Div => self.wrap(x.div_jet(&y)),
                }
            }
            Expr::Pow(a, b) => {
                let x = a.eval(env, space, order)?;
                let y = b.eval(env, space, order)?;
                self.wrap(x.pow_jet(&y))
            }
            Expr::Call(func, a) => {
                let x = a.eval(env, space, order)?;
                self.wrap(func.apply_jet(&x))
            }
        }
    }

    /// Plain complex evaluation with the same domain checks as [`Expr::eval`].
    pub fn eval_scalar(&self, env: &[C64]) -> Result<C64, EvalError> {
        match self {
            Expr::Num(z) => Ok(*z),
            Expr::Sym { slot, .. } => Ok(env[*slot]),
            Expr::Neg(a) => Ok(-a.eval_scalar(env)?),
            Expr::Bin(op, a, b) => {
                let x = a.eval_scalar(env)?;
                let y = b.eval_scalar(env)?;
                match op {
                    BinOp::Add => Ok(x + y),
                    BinOp::Sub => Ok(x - y),
                    BinOp::Mul => Ok(x * y),
                    BinOp::Div => {
                        if y.norm() == 0.0 {
                            self.wrap(Err(JetError::Domain { func: "1/x", value: y }))
                        } else {
                            Ok(x / y)
                        }
                    }
                }
            }
            Expr::Pow(a, b) => {
                let x = a.eval_scalar(env)?;
                let y = b.eval_scalar(env)?;
                if y.im == 0.0 && y.re.fract() == 0.0 && y.re.abs() < 1e9 {
                    if x.norm() == 0.0 && y.re < 0.0 {
                        return self.wrap(Err(JetError::Domain { func: "1/x", value: x }));
                    }
                    return Ok(x.powi(y.re as i32));
                }
                if x.norm() == 0.0 {
                    return self.wrap(Err(JetError::Domain { func: "pow", value: x }));
                }
                Ok(x.powc(y))
            }
            Expr::Call(func, a) => {
                let x = a.eval_scalar(env)?;
                self.wrap(func.apply_scalar(x))
            }
        }
    }
}

/// Ordered `name = expr` bindings followed by output expressions; each
/// binding may refer to the inputs and to earlier bindings.
#[derive(Debug, Clone)]
pub struct Program {
    symbols: Symbols,
    n_inputs: usize,
    bindings: Vec<Expr>,
    outputs: Vec<Expr>,
}

impl Program {
    pub fn compile(inputs: &Symbols, bindings: &[(String, String)], outputs: &[String]) -> Result<Program, ParseError> {
        let mut symbols = inputs.clone();
        let n_inputs = symbols.len();
        let mut compiled = Vec::with_capacity(bindings.len());
        for (name, text) in bindings {
            let e = parse(text, &symbols)?;
            if symbols.slot(name).is_some() {
                return Err(ParseError {
                    kind: ParseErrorKind::Syntax,
                    line: 1,
                    col: 1,
                    message: format!("binding `{name}` shadows an existing symbol"),
                });
            }
            symbols.push(name, SymbolKind::Binding);
            compiled.push(e);
        }
        let outputs = outputs.iter().map(|t| parse(t, &symbols)).collect::<Result<Vec<_>, _>>()?;
        Ok(Program { symbols, n_inputs, bindings: compiled, outputs })
    }

    pub fn symbols(&self) -> &Symbols {
        &self.symbols
    }

    pub fn n_outputs(&self) -> usize {
        self.outputs.len()
    }

    pub fn eval(&self, inputs: &[Jet], space: &Arc<JetSpace>, order: usize) -> Result<Vec<Jet>, EvalError> {
        assert_eq!(inputs.len(), self.n_inputs, "program input count");
        let mut env = inputs.to_vec();
        for b in &self.bindings {
            let v = b.eval(&env, space, order)?;
            env.push(v);
        }
        self.outputs.iter().map(|e| e.eval(&env, space, order)).collect()
    }

    pub fn eval_scalar(&self, inputs: &[C64]) -> Result<Vec<C64>, EvalError> {
        assert_eq!(inputs.len(), self.n_inputs, "program input count");
        let mut env = inputs.to_vec();
        for b in &self.bindings {
            let v = b.eval_scalar(&env)?;
            env.push(v);
        }
        self.outputs.iter().map(|e| e.eval_scalar(&env)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    #[test]
    fn parses_conformal_factor() {
        let s = Symbols::with(&["x", "y"], &["eps"]);
        let e = parse("cos(eps*x)*cos(eps*y)", &s).unwrap();
        assert_eq!(e.slots(), vec![0, 1, 2]);
        assert_eq!(s.kind(2), SymbolKind::Parameter);
        let v = e.eval_scalar(&[c(0.3), c(-0.2), c(1.0)]).unwrap();
        assert_abs_diff_eq!(v.re, 0.3f64.cos() * 0.2f64.cos(), epsilon = 1e-15);
    }

    #[test]
    fn errors_carry_position_and_kind() {
        let s = Symbols::with(&["x"], &[]);
        assert_eq!(parse("", &s).unwrap_err().kind, ParseErrorKind::Syntax);
        let e = parse("x +\n  foo", &s).unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::UnknownIdentifier);
        assert_eq!((e.line, e.col), (2, 3));
        assert_eq!(parse("sin(x, x)", &s).unwrap_err().kind, ParseErrorKind::Arity);
        assert_eq!(parse("sin()", &s).unwrap_err().kind, ParseErrorKind::Arity);
        assert!(parse("(x", &s).is_err());
        assert!(parse("x x", &s).is_err());
    }

    #[test]
    fn power_is_right_associative_and_binds_tighter_than_minus() {
        let s = Symbols::new();
        assert_abs_diff_eq!(parse("2^3^2", &s).unwrap().eval_scalar(&[]).unwrap().re, 512.0);
        assert_abs_diff_eq!(parse("-2^2", &s).unwrap().eval_scalar(&[]).unwrap().re, -4.0);
        assert_abs_diff_eq!(parse("2^-1", &s).unwrap().eval_scalar(&[]).unwrap().re, 0.5);
        assert_abs_diff_eq!(parse("1.5e-1*2E1", &s).unwrap().eval_scalar(&[]).unwrap().re, 3.0, epsilon = 1e-15);
    }

    #[test]
    fn imaginary_unit_is_reserved() {
        let s = Symbols::with(&["q1", "t"], &["hbar"]);
        let e = parse("exp(i*q1*t/hbar)", &s).unwrap();
        let sp = JetSpace::get(1, 2);
        let env = vec![Jet::constant(&sp, 2, c(0.7)), Jet::var(&sp, 2, 0, c(0.4)), Jet::constant(&sp, 2, c(1.3))];
        let j = e.eval(&env, &sp, 2).unwrap();
        let want = C64::new(0.0, 0.7 / 1.3) * j.value();
        assert_abs_diff_eq!((j.derivative(&[1]) - want).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn cosine_jet_coefficients() {
        let s = Symbols::with(&["x"], &["eps"]);
        let e = parse("cos(eps*x)", &s).unwrap();
        let sp = JetSpace::get(1, 2);
        let env = vec![Jet::var(&sp, 2, 0, c(0.0)), Jet::constant(&sp, 2, c(1.0))];
        let j = e.eval(&env, &sp, 2).unwrap();
        assert_abs_diff_eq!(j.coeffs()[0].re, 1.0);
        assert_abs_diff_eq!(j.coeffs()[1].norm(), 0.0);
        assert_abs_diff_eq!(j.coeffs()[2].re, -0.5, epsilon = 1e-15);
    }

    #[test]
    fn domain_error_names_subexpression() {
        let s = Symbols::with(&["x"], &[]);
        let e = parse("1 + sec(x)", &s).unwrap();
        let err = e.eval_scalar(&[c(std::f64::consts::FRAC_PI_2)]).unwrap_err();
        assert!(err.subexpr.contains("sec"));
        let sp = JetSpace::get(1, 1);
        let env = vec![Jet::var(&sp, 1, 0, c(std::f64::consts::FRAC_PI_2))];
        assert!(e.eval(&env, &sp, 1).is_err());
    }

    #[test]
    fn program_bindings_chain() {
        let s = Symbols::with(&["q"], &["eps"]);
        let p = Program::compile(
            &s,
            &[("a".into(), "sin(eps*q)".into()), ("b".into(), "a^2 + cos(eps*q)^2".into())],
            &["b".into(), "a/b".into()],
        )
        .unwrap();
        let out = p.eval_scalar(&[c(0.4), c(0.9)]).unwrap();
        assert_abs_diff_eq!(out[0].re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(out[1].re, (0.36f64).sin(), epsilon = 1e-15);
    }

    #[test]
    fn sec_matches_reciprocal_cosine() {
        use rand::{Rng, SeedableRng};
        let s = Symbols::with(&["x"], &["eps"]);
        let a = parse("sec(eps*x)", &s).unwrap();
        let b = parse("1/cos(eps*x)", &s).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let x = rng.gen_range(-1.2..1.2);
            let env = [c(x), c(1.0)];
            assert_abs_diff_eq!((a.eval_scalar(&env).unwrap() - b.eval_scalar(&env).unwrap()).norm(), 0.0, epsilon = 1e-13);
        }
    }

    fn arb_expr() -> impl Strategy<Value = String> {
        let leaf = prop_oneof![
            Just("x".to_string()),
            Just("y".to_string()),
            Just("eps".to_string()),
            Just("i".to_string()),
            (0.1f64..5.0).prop_map(|v| format!("{v}")),
        ];
        leaf.prop_recursive(4, 24, 2, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone(), prop_oneof![Just('+'), Just('-'), Just('*'), Just('/'), Just('^')])
                    .prop_map(|(a, b, op)| format!("({a}{op}{b})")),
                inner.clone().prop_map(|a| format!("-{a}")),
                (inner, prop::sample::select(Func::ALL.to_vec())).prop_map(|(a, f)| format!("{}({a})", f.name())),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_parse_roundtrip(src in arb_expr()) {
            let s = Symbols::with(&["x", "y"], &["eps"]);
            let e = parse(&src, &s).unwrap();
            let printed = e.to_string();
            let again = parse(&printed, &s).unwrap();
            prop_assert_eq!(&again, &e);
            prop_assert_eq!(again.to_string(), printed);
        }

        #[test]
        fn polynomial_jets_are_exact(a in -2.0f64..2.0, b in -2.0f64..2.0, x0 in -1.0f64..1.0, y0 in -1.0f64..1.0) {
            // p = a x^3 + b x y^2 + x y; coefficients known in closed form
            let s = Symbols::with(&["x", "y"], &["a", "b"]);
            let e = parse("a*x^3 + b*x*y^2 + x*y", &s).unwrap();
            let sp = JetSpace::get(2, 3);
            let env = vec![Jet::var(&sp, 3, 0, c(x0)), Jet::var(&sp, 3, 1, c(y0)), Jet::constant(&sp, 3, c(a)), Jet::constant(&sp, 3, c(b))];
            let j = e.eval(&env, &sp, 3).unwrap();
            let scale = 1.0 + a.abs() + b.abs();
            prop_assert!((j.derivative(&[3, 0]).re - 6.0 * a).abs() <= 1e-14 * scale * 6.0);
            prop_assert!((j.derivative(&[1, 2]).re - 2.0 * b).abs() <= 1e-14 * scale * 2.0);
            prop_assert!((j.derivative(&[1, 1]).re - (2.0 * b * y0 + 1.0)).abs() <= 1e-14 * scale * 4.0);
            prop_assert!((j.derivative(&[0, 2]).re - 2.0 * b * x0).abs() <= 1e-14 * scale * 4.0);
        }

        #[test]
        fn chain_rule_matches_composition(x0 in -0.8f64..0.8, y0 in -0.8f64..0.8) {
            // f(u) = exp(sin u), u = x*y + x: direct evaluation vs univariate composition
            let s = Symbols::with(&["x", "y"], &[]);
            let direct = parse("exp(sin(x*y + x))", &s).unwrap();
            let sp = JetSpace::get(2, 4);
            let env = vec![Jet::var(&sp, 4, 0, c(x0)), Jet::var(&sp, 4, 1, c(y0))];
            let d = direct.eval(&env, &sp, 4).unwrap();
            let u = parse("x*y + x", &s).unwrap().eval(&env, &sp, 4).unwrap();
            let sp1 = JetSpace::get(1, 4);
            let t = Jet::var(&sp1, 4, 0, u.value());
            let f = t.sin().unwrap().exp().unwrap();
            let composed = u.compose_series(f.coeffs());
            for (p, q) in d.coeffs().iter().zip(composed.coeffs()) {
                prop_assert!((p - q).norm() <= 1e-11);
            }
        }

        #[test]
        fn jet_product_commutative_associative(v in prop::collection::vec(-1.0f64..1.0, 30)) {
            let sp = JetSpace::get(2, 3);
            let mk = |o: usize| Jet::from_coeffs(&sp, 3, (0..10).map(|k| C64::new(v[o + k], v[(o + k + 7) % 30])).collect());
            let (a, b, cc) = (mk(0), mk(10), mk(20));
            let ab = &a * &b;
            let ba = &b * &a;
            let l = &ab * &cc;
            let r = &a * &(&b * &cc);
            for k in 0..10 {
                prop_assert!((ab.coeffs()[k] - ba.coeffs()[k]).norm() <= 1e-13);
                prop_assert!((l.coeffs()[k] - r.coeffs()[k]).norm() <= 1e-13);
            }
        }
    }
}
