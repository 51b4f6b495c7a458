//! Scalar arithmetic expressions over the state `x1..xn`, time `t` and named
//! parameters.
//!
//! Grammar (whitespace insignificant):
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | power
//! power := atom ('^' integer)?
//! atom  := number | ident | ident '(' args ')' | '(' expr ')'
//! ```
//!
//! Exponents are integer literals so that [`Expr::diff`] stays exact.

mod diff;
mod eval;
mod parser;
mod print;

pub use eval::EvalError;
pub use parser::ParseError;

use thiserror::Error;

/// Named parameters, resolved to an index at parse time and to a value at
/// evaluation time so a system can be re-parameterized without reparsing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamTable {
    names: Vec<String>,
    values: Vec<f64>,
}

impl ParamTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Insert or overwrite a parameter; returns its index.
    pub fn set(&mut self, name: &str, value: f64) -> usize {
        match self.index_of(name) {
            Some(i) => {
                self.values[i] = value;
                i
            }
            None => {
                self.names.push(name.to_string());
                self.values.push(value);
                self.names.len() - 1
            }
        }
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.index_of(name).map(|i| self.values[i])
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.names.iter().map(String::as_str).zip(self.values.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
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
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Ln,
    Abs,
    Sgn,
    Sqrt,
    Min,
    Max,
}

impl Func {
    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "abs" => Func::Abs,
            "sgn" => Func::Sgn,
            "sqrt" => Func::Sqrt,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Abs => "abs",
            Func::Sgn => "sgn",
            Func::Sqrt => "sqrt",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }

    /// Functions whose derivative is not classical everywhere.
    pub fn is_nonsmooth(self) -> bool {
        matches!(self, Func::Abs | Func::Sgn | Func::Min | Func::Max)
    }
}

/// Expression AST. `Var(i)` is the zero-based state index (`x1` is `Var(0)`).
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(usize),
    Time,
    Param(usize),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Call(Func, Vec<Expr>),
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("cannot differentiate non-smooth node `{node}`")]
pub struct DiffError {
    pub node: String,
}

impl Expr {
    /// Parse `src` for a state of dimension `n`, resolving identifiers against
    /// `params`.
    pub fn parse(src: &str, n: usize, params: &ParamTable) -> Result<Expr, ParseError> {
        parser::parse(src, n, params)
    }

    pub fn eval(&self, x: &[f64], t: f64, params: &[f64]) -> Result<f64, EvalError> {
        eval::eval(self, x, t, params)
    }

    /// Exact symbolic derivative with respect to `x_{var+1}`, lightly simplified.
    pub fn diff(&self, var: usize) -> Result<Expr, DiffError> {
        diff::diff(self, var)
    }

    pub fn simplify(self) -> Expr {
        diff::simplify(self)
    }

    /// Whether any `Var(var)` occurs.
    pub fn depends_on(&self, var: usize) -> bool {
        self.any(&|e| matches!(e, Expr::Var(i) if *i == var))
    }

    pub fn depends_on_state(&self) -> bool {
        self.any(&|e| matches!(e, Expr::Var(_)))
    }

    /// Largest state index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        let mut best = None;
        self.visit(&mut |e| {
            if let Expr::Var(i) = e {
                best = Some(best.map_or(*i, |b: usize| b.max(*i)));
            }
        });
        best
    }

    fn any(&self, pred: &dyn Fn(&Expr) -> bool) -> bool {
        if pred(self) {
            return true;
        }
        match self {
            Expr::Num(_) | Expr::Var(_) | Expr::Time | Expr::Param(_) => false,
            Expr::Neg(a) | Expr::Pow(a, _) => a.any(pred),
            Expr::Bin(_, a, b) => a.any(pred) || b.any(pred),
            Expr::Call(_, args) => args.iter().any(|a| a.any(pred)),
        }
    }

    fn visit(&self, f: &mut dyn FnMut(&Expr)) {
        f(self);
        match self {
            Expr::Num(_) | Expr::Var(_) | Expr::Time | Expr::Param(_) => {}
            Expr::Neg(a) | Expr::Pow(a, _) => a.visit(f),
            Expr::Bin(_, a, b) => {
                a.visit(f);
                b.visit(f);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| a.visit(f)),
        }
    }

    /// Render with parameter names from `params`.
    pub fn display<'a>(&'a self, params: &'a ParamTable) -> print::Display<'a> {
        print::Display { expr: self, params: Some(params) }
    }

    // Builders used by the PWA constructor and by differentiation.
    pub fn num(v: f64) -> Expr {
        Expr::Num(v)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn add(a: Expr, b: Expr) -> Expr {
        Expr::Bin(BinOp::Add, Box::new(a), Box::new(b))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn sub(a: Expr, b: Expr) -> Expr {
        Expr::Bin(BinOp::Sub, Box::new(a), Box::new(b))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn mul(a: Expr, b: Expr) -> Expr {
        Expr::Bin(BinOp::Mul, Box::new(a), Box::new(b))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn div(a: Expr, b: Expr) -> Expr {
        Expr::Bin(BinOp::Div, Box::new(a), Box::new(b))
    }

    pub fn call(f: Func, args: Vec<Expr>) -> Expr {
        Expr::Call(f, args)
    }
}

impl std::fmt::Display for Expr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        print::Display { expr: self, params: None }.fmt(f)
    }
}
