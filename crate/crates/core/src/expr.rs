//! A small arithmetic expression language for coefficient functions of
//! `(x, t)`.
//!
//! Grammar, lowest precedence first:
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' unary)?          right-associative
//! primary := number | 'x' | 't' | ident '(' expr ')' | '(' expr ')'
//! ident   := sin | cos | exp | log | sqrt | tanh | abs
//! ```
//!
//! Unary minus binds looser than `^`, so `-x^2` is `-(x^2)`, while an
//! exponent may itself be negated (`2^-1`). There is no implicit
//! multiplication: `2x` is a syntax error.

use std::fmt;

use thiserror::Error;

/// Byte range of a node in the source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    fn join(a: Span, b: Span) -> Span {
        Span { start: a.start.min(b.start), end: a.end.max(b.end) }
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalErrorKind {
    DivisionByZero,
    SqrtOfNegative,
    LogOfNonPositive,
    PowDomain,
}

impl fmt::Display for EvalErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EvalErrorKind::DivisionByZero => "division by zero",
            EvalErrorKind::SqrtOfNegative => "square root of a negative number",
            EvalErrorKind::LogOfNonPositive => "logarithm of a non-positive number",
            EvalErrorKind::PowDomain => "non-integer power of a negative number",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at position {position}: {message}")]
    Syntax { position: usize, message: String },

    #[error("unknown identifier `{name}` at position {position}")]
    UnknownIdentifier { name: String, position: usize },

    #[error("{kind} in span {span} at x = {x}, t = {t}")]
    Eval { kind: EvalErrorKind, span: Span, x: f64, t: f64 },

    #[error("cannot differentiate `{func}` (span {span})")]
    UnsupportedDerivative { func: &'static str, span: Span },
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
    Log,
    Sqrt,
    Tanh,
    Abs,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "tanh" => Func::Tanh,
            "abs" => Func::Abs,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Tanh => "tanh",
            Func::Abs => "abs",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Num(f64),
    X,
    T,
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

/// Parsed expression tree. Evaluation walks the tree; nothing is re-parsed.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

impl Expr {
    fn new(kind: ExprKind, span: Span) -> Self {
        Self { kind, span }
    }

    fn num(v: f64, span: Span) -> Self {
        Self::new(ExprKind::Num(v), span)
    }

    pub fn parse(source: &str) -> Result<Expr, ExprError> {
        parse(source)
    }

    pub fn eval(&self, x: f64, t: f64) -> Result<f64, ExprError> {
        let err = |kind| ExprError::Eval { kind, span: self.span, x, t };
        Ok(match &self.kind {
            ExprKind::Num(v) => *v,
            ExprKind::X => x,
            ExprKind::T => t,
            ExprKind::Neg(a) => -a.eval(x, t)?,
            ExprKind::Bin(op, a, b) => {
                let (a, b) = (a.eval(x, t)?, b.eval(x, t)?);
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(err(EvalErrorKind::DivisionByZero));
                        }
                        a / b
                    }
                    BinOp::Pow => {
                        if a < 0.0 && b.fract() != 0.0 {
                            return Err(err(EvalErrorKind::PowDomain));
                        }
                        if a == 0.0 && b < 0.0 {
                            return Err(err(EvalErrorKind::DivisionByZero));
                        }
                        pow(a, b)
                    }
                }
            }
            ExprKind::Call(func, a) => {
                let a = a.eval(x, t)?;
                match func {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Exp => a.exp(),
                    Func::Log => {
                        if a <= 0.0 {
                            return Err(err(EvalErrorKind::LogOfNonPositive));
                        }
                        a.ln()
                    }
                    Func::Sqrt => {
                        if a < 0.0 {
                            return Err(err(EvalErrorKind::SqrtOfNegative));
                        }
                        a.sqrt()
                    }
                    Func::Tanh => a.tanh(),
                    Func::Abs => a.abs(),
                }
            }
        })
    }

    /// True if the expression reads `x`.
    pub fn depends_on_x(&self) -> bool {
        self.reads(&|k| matches!(k, ExprKind::X))
    }

    /// True if the expression reads `t`.
    pub fn depends_on_t(&self) -> bool {
        self.reads(&|k| matches!(k, ExprKind::T))
    }

    fn reads(&self, leaf: &dyn Fn(&ExprKind) -> bool) -> bool {
        match &self.kind {
            ExprKind::Neg(a) | ExprKind::Call(_, a) => a.reads(leaf),
            ExprKind::Bin(_, a, b) => a.reads(leaf) || b.reads(leaf),
            k => leaf(k),
        }
    }

    /// Symbolic partial derivative with respect to `x`.
    ///
    /// Only constant folding is applied to the result. `abs` is not
    /// differentiable at the kink, so trees containing it are refused.
    pub fn derivative(&self) -> Result<Expr, ExprError> {
        let sp = self.span;
        if !self.depends_on_x() {
            if let Some(span) = find_abs(self) {
                return Err(ExprError::UnsupportedDerivative { func: "abs", span });
            }
            return Ok(Expr::num(0.0, sp));
        }
        Ok(match &self.kind {
            ExprKind::Num(_) | ExprKind::T => Expr::num(0.0, sp),
            ExprKind::X => Expr::num(1.0, sp),
            ExprKind::Neg(a) => neg(a.derivative()?, sp),
            ExprKind::Bin(op, a, b) => {
                let (a, b) = (a.as_ref(), b.as_ref());
                match op {
                    BinOp::Add => add(a.derivative()?, b.derivative()?, sp),
                    BinOp::Sub => sub(a.derivative()?, b.derivative()?, sp),
                    BinOp::Mul => add(
                        mul(a.derivative()?, b.clone(), sp),
                        mul(a.clone(), b.derivative()?, sp),
                        sp,
                    ),
                    BinOp::Div => div(
                        sub(
                            mul(a.derivative()?, b.clone(), sp),
                            mul(a.clone(), b.derivative()?, sp),
                            sp,
                        ),
                        pow_e(b.clone(), Expr::num(2.0, sp), sp),
                        sp,
                    ),
                    BinOp::Pow => {
                        if !b.depends_on_x() {
                            // d(a^c) = c a^(c-1) a'
                            let c_minus_1 = sub(b.clone(), Expr::num(1.0, sp), sp);
                            mul(
                                mul(b.clone(), pow_e(a.clone(), c_minus_1, sp), sp),
                                a.derivative()?,
                                sp,
                            )
                        } else if !a.depends_on_x() {
                            // d(c^b) = c^b ln(c) b'
                            mul(
                                mul(self.clone(), call(Func::Log, a.clone(), sp), sp),
                                b.derivative()?,
                                sp,
                            )
                        } else {
                            // d(a^b) = a^b (b' ln a + b a'/a)
                            let inner = add(
                                mul(b.derivative()?, call(Func::Log, a.clone(), sp), sp),
                                div(mul(b.clone(), a.derivative()?, sp), a.clone(), sp),
                                sp,
                            );
                            mul(self.clone(), inner, sp)
                        }
                    }
                }
            }
            ExprKind::Call(func, a) => {
                let da = a.derivative()?;
                let a = a.as_ref().clone();
                let outer = match func {
                    Func::Sin => call(Func::Cos, a, sp),
                    Func::Cos => neg(call(Func::Sin, a, sp), sp),
                    Func::Exp => call(Func::Exp, a, sp),
                    Func::Log => div(Expr::num(1.0, sp), a, sp),
                    Func::Sqrt => div(
                        Expr::num(1.0, sp),
                        mul(Expr::num(2.0, sp), call(Func::Sqrt, a, sp), sp),
                        sp,
                    ),
                    Func::Tanh => sub(
                        Expr::num(1.0, sp),
                        pow_e(call(Func::Tanh, a, sp), Expr::num(2.0, sp), sp),
                        sp,
                    ),
                    Func::Abs => {
                        return Err(ExprError::UnsupportedDerivative { func: "abs", span: sp })
                    }
                };
                mul(outer, da, sp)
            }
        })
    }
}

fn find_abs(e: &Expr) -> Option<Span> {
    match &e.kind {
        ExprKind::Call(Func::Abs, _) => Some(e.span),
        ExprKind::Call(_, a) | ExprKind::Neg(a) => find_abs(a),
        ExprKind::Bin(_, a, b) => find_abs(a).or_else(|| find_abs(b)),
        _ => None,
    }
}

fn pow(a: f64, b: f64) -> f64 {
    if b.fract() == 0.0 && b.abs() <= i32::MAX as f64 {
        a.powi(b as i32)
    } else {
        a.powf(b)
    }
}

fn as_num(e: &Expr) -> Option<f64> {
    match e.kind {
        ExprKind::Num(v) => Some(v),
        _ => None,
    }
}

fn neg(a: Expr, sp: Span) -> Expr {
    match as_num(&a) {
        Some(v) => Expr::num(-v, sp),
        None => Expr::new(ExprKind::Neg(Box::new(a)), sp),
    }
}

fn bin(op: BinOp, a: Expr, b: Expr, sp: Span) -> Expr {
    Expr::new(ExprKind::Bin(op, Box::new(a), Box::new(b)), sp)
}

fn add(a: Expr, b: Expr, sp: Span) -> Expr {
    match (as_num(&a), as_num(&b)) {
        (Some(x), Some(y)) => Expr::num(x + y, sp),
        (Some(z), _) if z == 0.0 => b,
        (_, Some(z)) if z == 0.0 => a,
        _ => bin(BinOp::Add, a, b, sp),
    }
}

fn sub(a: Expr, b: Expr, sp: Span) -> Expr {
    match (as_num(&a), as_num(&b)) {
        (Some(x), Some(y)) => Expr::num(x - y, sp),
        (Some(z), _) if z == 0.0 => neg(b, sp),
        (_, Some(z)) if z == 0.0 => a,
        _ => bin(BinOp::Sub, a, b, sp),
    }
}

fn mul(a: Expr, b: Expr, sp: Span) -> Expr {
    match (as_num(&a), as_num(&b)) {
        (Some(x), Some(y)) => Expr::num(x * y, sp),
        (Some(z), _) | (_, Some(z)) if z == 0.0 => Expr::num(0.0, sp),
        (Some(o), _) if o == 1.0 => b,
        (_, Some(o)) if o == 1.0 => a,
        _ => bin(BinOp::Mul, a, b, sp),
    }
}

fn div(a: Expr, b: Expr, sp: Span) -> Expr {
    match (as_num(&a), as_num(&b)) {
        (Some(x), Some(y)) if y != 0.0 => Expr::num(x / y, sp),
        (Some(z), _) if z == 0.0 => Expr::num(0.0, sp),
        (_, Some(o)) if o == 1.0 => a,
        _ => bin(BinOp::Div, a, b, sp),
    }
}

fn pow_e(a: Expr, b: Expr, sp: Span) -> Expr {
    match as_num(&b) {
        Some(o) if o == 1.0 => a,
        Some(z) if z == 0.0 => Expr::num(1.0, sp),
        _ => bin(BinOp::Pow, a, b, sp),
    }
}

fn call(func: Func, a: Expr, sp: Span) -> Expr {
    Expr::new(ExprKind::Call(func, Box::new(a)), sp)
}

/// Canonical, fully parenthesised form. Re-parsing it reproduces the same
/// printed text.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ExprKind::Num(v) if *v < 0.0 => write!(f, "(-{})", -v),
            ExprKind::Num(v) => write!(f, "{v}"),
            ExprKind::X => f.write_str("x"),
            ExprKind::T => f.write_str("t"),
            ExprKind::Neg(a) => write!(f, "(-{a})"),
            ExprKind::Bin(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            ExprKind::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

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
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number `{v}`"),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Caret => "`^`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::End => "end of input".into(),
        }
    }
}

fn tokenize(src: &str) -> Result<Vec<(Tok, Span)>, ExprError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let single = match c {
            b'+' => Some(Tok::Plus),
            b'-' => Some(Tok::Minus),
            b'*' => Some(Tok::Star),
            b'/' => Some(Tok::Slash),
            b'^' => Some(Tok::Caret),
            b'(' => Some(Tok::LParen),
            b')' => Some(Tok::RParen),
            _ => None,
        };
        if let Some(tok) = single {
            i += 1;
            out.push((tok, Span { start, end: i }));
            continue;
        }
        if c.is_ascii_digit() || c == b'.' {
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
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                } else {
                    return Err(ExprError::Syntax {
                        position: j,
                        message: "expected digits in exponent".into(),
                    });
                }
            }
            let text = &src[start..i];
            let v: f64 = text.parse().map_err(|_| ExprError::Syntax {
                position: start,
                message: format!("malformed number `{text}`"),
            })?;
            out.push((Tok::Num(v), Span { start, end: i }));
            continue;
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(src[start..i].to_string()), Span { start, end: i }));
            continue;
        }
        let ch = src[i..].chars().next().unwrap_or('?');
        return Err(ExprError::Syntax { position: i, message: format!("unexpected character `{ch}`") });
    }
    out.push((Tok::End, Span { start: src.len(), end: src.len() }));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, Span)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn span(&self) -> Span {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> (Tok, Span) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expected(&self, what: &str) -> ExprError {
        ExprError::Syntax {
            position: self.span().start,
            message: format!("expected {what}, found {}", self.peek().describe()),
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            let sp = Span::join(lhs.span, rhs.span);
            lhs = bin(op, lhs, rhs, sp);
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            let sp = Span::join(lhs.span, rhs.span);
            lhs = bin(op, lhs, rhs, sp);
        }
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if *self.peek() == Tok::Minus {
            let (_, sp) = self.bump();
            let inner = self.unary()?;
            let span = Span::join(sp, inner.span);
            return Ok(Expr::new(ExprKind::Neg(Box::new(inner)), span));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.primary()?;
        if *self.peek() == Tok::Caret {
            self.bump();
            let exp = self.unary()?;
            let sp = Span::join(base.span, exp.span);
            return Ok(bin(BinOp::Pow, base, exp, sp));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ExprError> {
        match self.peek().clone() {
            Tok::Num(v) => {
                let (_, sp) = self.bump();
                Ok(Expr::num(v, sp))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.close_paren()?;
                Ok(e)
            }
            Tok::Ident(name) => {
                let (_, sp) = self.bump();
                match name.as_str() {
                    "x" => return Ok(Expr::new(ExprKind::X, sp)),
                    "t" => return Ok(Expr::new(ExprKind::T, sp)),
                    _ => {}
                }
                let func = Func::from_name(&name).ok_or(ExprError::UnknownIdentifier {
                    name: name.clone(),
                    position: sp.start,
                })?;
                if *self.peek() != Tok::LParen {
                    return Err(self.expected(&format!("`(` after `{name}`")));
                }
                self.bump();
                let arg = self.expr()?;
                let end = self.span();
                self.close_paren()?;
                Ok(call(func, arg, Span::join(sp, end)))
            }
            _ => Err(self.expected("a number, `x`, `t`, a function call or `(`")),
        }
    }

    fn close_paren(&mut self) -> Result<(), ExprError> {
        if *self.peek() != Tok::RParen {
            return Err(self.expected("`)`"));
        }
        self.bump();
        Ok(())
    }
}

/// Parses `source` according to the module grammar.
pub fn parse(source: &str) -> Result<Expr, ExprError> {
    let mut p = Parser { toks: tokenize(source)?, pos: 0 };
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(p.expected("an operator or end of input"));
    }
    Ok(e)
}
