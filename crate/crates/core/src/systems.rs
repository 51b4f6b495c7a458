//! Bimodal Filippov plants, their switching geometry and output maps, and
//! Luenberger-like switched observers attached to them.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::exprparse::{EvalError, Expr, ParamTable, ParseError};

/// Half-width of the band `|h(x)| <= TOL_H` treated as the switching manifold.
pub const TOL_H: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SystemError {
    #[error("{field}: {source}")]
    Parse {
        field: String,
        #[source]
        source: ParseError,
    },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("input component {0} depends on the state; inputs must be functions of t only")]
    StateDependentInput(usize),
    #[error("system has no output map")]
    NoOutput,
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Which smooth vector field is active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Plus,
    Minus,
}

impl Mode {
    pub fn sign(self) -> f64 {
        match self {
            Mode::Plus => 1.0,
            Mode::Minus => -1.0,
        }
    }

    pub fn other(self) -> Mode {
        match self {
            Mode::Plus => Mode::Minus,
            Mode::Minus => Mode::Plus,
        }
    }
}

/// Location of a state relative to the switching manifold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Plus,
    Minus,
    Sigma,
}

/// A smooth map `R^n -> R^m` given componentwise by expressions, with a
/// symbolic Jacobian. Entries that cannot be differentiated symbolically fall
/// back to central differences.
#[derive(Debug, Clone)]
pub struct SmoothField {
    n: usize,
    components: Vec<Expr>,
    jacobian: Vec<Vec<Option<Expr>>>,
}

impl SmoothField {
    pub fn new(components: Vec<Expr>, n: usize) -> Self {
        let jacobian = components
            .iter()
            .map(|c| (0..n).map(|j| c.diff(j).ok()).collect())
            .collect();
        Self {
            n,
            components,
            jacobian,
        }
    }

    pub fn rows(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }

    /// True when every Jacobian entry has a symbolic form.
    pub fn is_fully_symbolic(&self) -> bool {
        self.jacobian.iter().flatten().all(Option::is_some)
    }

    pub fn symbolic_entry(&self, i: usize, j: usize) -> Option<&Expr> {
        self.jacobian[i][j].as_ref()
    }

    pub fn eval_into(&self, x: &[f64], t: f64, params: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        for (o, c) in out.iter_mut().zip(&self.components) {
            *o = c.eval(x, t, params)?;
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64], t: f64, params: &[f64]) -> Result<DVector<f64>, EvalError> {
        let mut out = DVector::zeros(self.rows());
        self.eval_into(x, t, params, out.as_mut_slice())?;
        Ok(out)
    }

    pub fn jacobian(&self, x: &[f64], t: f64, params: &[f64]) -> Result<DMatrix<f64>, EvalError> {
        let mut jac = DMatrix::zeros(self.rows(), self.n);
        for (i, row) in self.jacobian.iter().enumerate() {
            for (j, entry) in row.iter().enumerate() {
                jac[(i, j)] = match entry {
                    Some(e) => e.eval(x, t, params)?,
                    None => self.central_difference(i, j, x, t, params)?,
                };
            }
        }
        Ok(jac)
    }

    /// Central-difference Jacobian of all entries (the fallback path, also
    /// used to cross-check the symbolic one).
    pub fn fd_jacobian(&self, x: &[f64], t: f64, params: &[f64]) -> Result<DMatrix<f64>, EvalError> {
        let mut jac = DMatrix::zeros(self.rows(), self.n);
        for i in 0..self.rows() {
            for j in 0..self.n {
                jac[(i, j)] = self.central_difference(i, j, x, t, params)?;
            }
        }
        Ok(jac)
    }

    fn central_difference(&self, i: usize, j: usize, x: &[f64], t: f64, params: &[f64]) -> Result<f64, EvalError> {
        let step = 1e-6 * x[j].abs().max(1.0);
        let mut probe = x.to_vec();
        probe[j] = x[j] + step;
        let up = self.components[i].eval(&probe, t, params)?;
        probe[j] = x[j] - step;
        let down = self.components[i].eval(&probe, t, params)?;
        Ok((up - down) / (2.0 * step))
    }
}

/// Switching manifold `Σ = {h(x) = 0}`.
#[derive(Debug, Clone)]
pub struct SwitchingSurface {
    field: SmoothField,
}

impl SwitchingSurface {
    pub fn new(h: Expr, n: usize) -> Self {
        Self {
            field: SmoothField::new(vec![h], n),
        }
    }

    pub fn expr(&self) -> &Expr {
        &self.field.components[0]
    }

    pub fn h(&self, x: &[f64], params: &[f64]) -> Result<f64, EvalError> {
        self.field.components[0].eval(x, 0.0, params)
    }

    pub fn grad_into(&self, x: &[f64], params: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        let jac = self.field.jacobian(x, 0.0, params)?;
        for (o, v) in out.iter_mut().zip(jac.row(0).iter()) {
            *o = *v;
        }
        Ok(())
    }

    pub fn grad(&self, x: &[f64], params: &[f64]) -> Result<DVector<f64>, EvalError> {
        let mut g = DVector::zeros(self.field.n);
        self.grad_into(x, params, g.as_mut_slice())?;
        Ok(g)
    }
}

/// Raw matrices of a piecewise-affine system
/// `x' = A± x + b± + B u(t)`, `h(x) = normalᵀx + offset`, `y = C x`.
#[derive(Debug, Clone, PartialEq)]
pub struct PwaMatrices {
    pub a_plus: DMatrix<f64>,
    pub b_plus: DVector<f64>,
    pub a_minus: DMatrix<f64>,
    pub b_minus: DVector<f64>,
    /// `B` (n×m); `None` means no input.
    pub input_matrix: Option<DMatrix<f64>>,
    pub normal: DVector<f64>,
    pub offset: f64,
    /// `C` (p×n).
    pub output: Option<DMatrix<f64>>,
}

/// String form of an expression-defined system, as read from config.
#[derive(Debug, Clone, Default)]
pub struct ExprSystemDef {
    pub name: String,
    pub n: usize,
    pub params: ParamTable,
    pub f_plus: Vec<String>,
    pub f_minus: Vec<String>,
    pub h: String,
    pub g: Option<Vec<String>>,
    pub u: Option<Vec<String>>,
}

/// The plant: two smooth modes, a switching surface, an optional output map
/// and an optional exogenous input entering both modes identically.
#[derive(Debug, Clone)]
pub struct BimodalSystem {
    name: String,
    n: usize,
    params: ParamTable,
    f_plus: SmoothField,
    f_minus: SmoothField,
    surface: SwitchingSurface,
    output: Option<SmoothField>,
    input: Option<Vec<Expr>>,
    pwa: Option<PwaMatrices>,
}

fn parse_all(field: &str, srcs: &[String], n: usize, params: &ParamTable) -> Result<Vec<Expr>, SystemError> {
    srcs.iter()
        .enumerate()
        .map(|(i, s)| {
            Expr::parse(s, n, params).map_err(|source| SystemError::Parse {
                field: format!("{field}[{i}]"),
                source,
            })
        })
        .collect()
}

fn check_input(input: &[Expr]) -> Result<(), SystemError> {
    match input.iter().position(Expr::depends_on_state) {
        Some(i) => Err(SystemError::StateDependentInput(i)),
        None => Ok(()),
    }
}

/// `Σ_j m[(i, j)] x_j + c_i` as an expression, skipping exact zeros.
fn affine_row(m: &DMatrix<f64>, i: usize, c: f64) -> Expr {
    let mut acc: Option<Expr> = None;
    for j in 0..m.ncols() {
        let a = m[(i, j)];
        if a == 0.0 {
            continue;
        }
        let term = Expr::mul(Expr::Num(a), Expr::Var(j));
        acc = Some(match acc {
            None => term,
            Some(prev) => Expr::add(prev, term),
        });
    }
    match acc {
        None => Expr::Num(c),
        Some(e) if c == 0.0 => e,
        Some(e) => Expr::add(e, Expr::Num(c)),
    }
}

impl BimodalSystem {
    pub fn from_exprs(def: &ExprSystemDef) -> Result<Self, SystemError> {
        let n = def.n;
        if n == 0 {
            return Err(SystemError::Dimension("state dimension must be at least 1".into()));
        }
        for (label, v) in [("f_plus", &def.f_plus), ("f_minus", &def.f_minus)] {
            if v.len() != n {
                return Err(SystemError::Dimension(format!(
                    "{label} has {} components, expected {n}",
                    v.len()
                )));
            }
        }
        let params = &def.params;
        let f_plus = parse_all("f_plus", &def.f_plus, n, params)?;
        let f_minus = parse_all("f_minus", &def.f_minus, n, params)?;
        let h = Expr::parse(&def.h, n, params).map_err(|source| SystemError::Parse {
            field: "h".into(),
            source,
        })?;
        let output = match &def.g {
            Some(g) if g.is_empty() => {
                return Err(SystemError::Dimension("output map g has no components".into()))
            }
            Some(g) => Some(SmoothField::new(parse_all("g", g, n, params)?, n)),
            None => None,
        };
        let input = match &def.u {
            Some(u) => {
                if u.len() != n {
                    return Err(SystemError::Dimension(format!(
                        "input u has {} components, expected {n}",
                        u.len()
                    )));
                }
                let u = parse_all("u", u, n, params)?;
                check_input(&u)?;
                Some(u)
            }
            None => None,
        };
        Ok(Self {
            name: def.name.clone(),
            n,
            params: params.clone(),
            f_plus: SmoothField::new(f_plus, n),
            f_minus: SmoothField::new(f_minus, n),
            surface: SwitchingSurface::new(h, n),
            output,
            input,
            pwa: None,
        })
    }

    /// Build a piecewise-affine system from raw matrices. `input` holds the
    /// `m` scalar input signals (functions of `t`) multiplied by `B`.
    pub fn pwa(name: &str, m: PwaMatrices, input: &[String], params: ParamTable) -> Result<Self, SystemError> {
        let n = m.a_plus.nrows();
        let dim_err = |what: &str| SystemError::Dimension(format!("{what} inconsistent with n = {n}"));
        if n == 0 || m.a_plus.ncols() != n {
            return Err(dim_err("A+"));
        }
        if m.a_minus.shape() != (n, n) {
            return Err(dim_err("A-"));
        }
        if m.b_plus.len() != n || m.b_minus.len() != n {
            return Err(dim_err("b±"));
        }
        if m.normal.len() != n {
            return Err(dim_err("switching normal"));
        }
        if let Some(c) = &m.output {
            if c.ncols() != n || c.nrows() == 0 {
                return Err(dim_err("output matrix C"));
            }
        }
        let f_plus: Vec<Expr> = (0..n).map(|i| affine_row(&m.a_plus, i, m.b_plus[i])).collect();
        let f_minus: Vec<Expr> = (0..n).map(|i| affine_row(&m.a_minus, i, m.b_minus[i])).collect();
        let normal_row = DMatrix::from_row_slice(1, n, m.normal.as_slice());
        let h = affine_row(&normal_row, 0, m.offset);
        let output = m
            .output
            .as_ref()
            .map(|c| SmoothField::new((0..c.nrows()).map(|i| affine_row(c, i, 0.0)).collect(), n));

        let input_exprs = match &m.input_matrix {
            None => {
                if !input.is_empty() {
                    return Err(SystemError::Dimension("input signals given without an input matrix".into()));
                }
                None
            }
            Some(b) => {
                if b.nrows() != n || b.ncols() != input.len() {
                    return Err(SystemError::Dimension(format!(
                        "input matrix is {}x{}, expected {n}x{}",
                        b.nrows(),
                        b.ncols(),
                        input.len()
                    )));
                }
                let signals = parse_all("input", input, n, &params)?;
                check_input(&signals)?;
                let comps = (0..n)
                    .map(|i| {
                        let mut acc: Option<Expr> = None;
                        for (k, s) in signals.iter().enumerate() {
                            let coef = b[(i, k)];
                            if coef == 0.0 {
                                continue;
                            }
                            let term = Expr::mul(Expr::Num(coef), s.clone());
                            acc = Some(match acc {
                                None => term,
                                Some(prev) => Expr::add(prev, term),
                            });
                        }
                        acc.unwrap_or(Expr::Num(0.0))
                    })
                    .collect();
                Some(comps)
            }
        };

        Ok(Self {
            name: name.to_string(),
            n,
            params,
            f_plus: SmoothField::new(f_plus, n),
            f_minus: SmoothField::new(f_minus, n),
            surface: SwitchingSurface::new(h, n),
            output,
            input: input_exprs,
            pwa: Some(m),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn output_dim(&self) -> Option<usize> {
        self.output.as_ref().map(SmoothField::rows)
    }

    pub fn params(&self) -> &ParamTable {
        &self.params
    }

    pub fn pwa_matrices(&self) -> Option<&PwaMatrices> {
        self.pwa.as_ref()
    }

    pub fn field(&self, mode: Mode) -> &SmoothField {
        match mode {
            Mode::Plus => &self.f_plus,
            Mode::Minus => &self.f_minus,
        }
    }

    pub fn surface(&self) -> &SwitchingSurface {
        &self.surface
    }

    pub fn output_map(&self) -> Option<&SmoothField> {
        self.output.as_ref()
    }

    pub fn input_exprs(&self) -> Option<&[Expr]> {
        self.input.as_deref()
    }

    /// Copy with some parameter values replaced.
    pub fn with_params(&self, overrides: &[(String, f64)]) -> Result<Self, SystemError> {
        let mut out = self.clone();
        for (name, value) in overrides {
            if out.params.index_of(name).is_none() {
                return Err(SystemError::UnknownParam(name.clone()));
            }
            out.params.set(name, *value);
        }
        Ok(out)
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), SystemError> {
        if x.len() != self.n {
            return Err(SystemError::Dimension(format!(
                "state has length {}, expected {}",
                x.len(),
                self.n
            )));
        }
        Ok(())
    }

    pub fn h(&self, x: &[f64]) -> Result<f64, EvalError> {
        self.surface.h(x, self.params.values())
    }

    pub fn grad_h_into(&self, x: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        self.surface.grad_into(x, self.params.values(), out)
    }

    pub fn grad_h(&self, x: &[f64]) -> Result<DVector<f64>, EvalError> {
        self.surface.grad(x, self.params.values())
    }

    pub fn region(&self, x: &[f64]) -> Result<Region, EvalError> {
        let h = self.h(x)?;
        Ok(if h.abs() <= TOL_H {
            Region::Sigma
        } else if h > 0.0 {
            Region::Plus
        } else {
            Region::Minus
        })
    }

    pub fn input_into(&self, t: f64, out: &mut [f64]) -> Result<(), EvalError> {
        match &self.input {
            Some(u) => {
                for (o, e) in out.iter_mut().zip(u) {
                    *o = e.eval(&[], t, self.params.values())?;
                }
            }
            None => out.iter_mut().for_each(|o| *o = 0.0),
        }
        Ok(())
    }

    pub fn input(&self, t: f64) -> Result<DVector<f64>, EvalError> {
        let mut u = DVector::zeros(self.n);
        self.input_into(t, u.as_mut_slice())?;
        Ok(u)
    }

    /// `f^±(x) + u(t)` written into `out`.
    pub fn eval_field_into(&self, mode: Mode, x: &[f64], t: f64, out: &mut [f64]) -> Result<(), EvalError> {
        self.field(mode).eval_into(x, t, self.params.values(), out)?;
        if let Some(u) = &self.input {
            for (o, e) in out.iter_mut().zip(u) {
                *o += e.eval(&[], t, self.params.values())?;
            }
        }
        Ok(())
    }

    pub fn eval_field(&self, mode: Mode, x: &[f64], t: f64) -> Result<DVector<f64>, SystemError> {
        self.check_dim(x)?;
        let mut out = DVector::zeros(self.n);
        self.eval_field_into(mode, x, t, out.as_mut_slice())?;
        Ok(out)
    }

    /// `∂f^±/∂x` at `(x, t)`; the input does not depend on the state.
    pub fn jacobian(&self, mode: Mode, x: &[f64], t: f64) -> Result<DMatrix<f64>, SystemError> {
        self.check_dim(x)?;
        Ok(self.field(mode).jacobian(x, t, self.params.values())?)
    }

    pub fn output_into(&self, x: &[f64], out: &mut [f64]) -> Result<(), SystemError> {
        let g = self.output.as_ref().ok_or(SystemError::NoOutput)?;
        Ok(g.eval_into(x, 0.0, self.params.values(), out)?)
    }

    pub fn output(&self, x: &[f64]) -> Result<DVector<f64>, SystemError> {
        self.check_dim(x)?;
        let g = self.output.as_ref().ok_or(SystemError::NoOutput)?;
        Ok(g.eval(x, 0.0, self.params.values())?)
    }

    pub fn output_jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>, SystemError> {
        self.check_dim(x)?;
        let g = self.output.as_ref().ok_or(SystemError::NoOutput)?;
        Ok(g.jacobian(x, 0.0, self.params.values())?)
    }
}

/// Observer `x̂' = f^±(x̂) + L^±(y − g(x̂)) + u(t)` for a plant.
#[derive(Debug, Clone)]
pub struct ObserverSpec {
    system: Arc<BimodalSystem>,
    l_plus: DMatrix<f64>,
    l_minus: DMatrix<f64>,
}

impl ObserverSpec {
    pub fn new(system: Arc<BimodalSystem>, l_plus: DMatrix<f64>, l_minus: DMatrix<f64>) -> Result<Self, SystemError> {
        let p = system.output_dim().ok_or(SystemError::NoOutput)?;
        let n = system.dim();
        for (label, l) in [("L+", &l_plus), ("L-", &l_minus)] {
            if l.shape() != (n, p) {
                return Err(SystemError::Dimension(format!(
                    "{label} is {}x{}, expected {n}x{p}",
                    l.nrows(),
                    l.ncols()
                )));
            }
        }
        Ok(Self {
            system,
            l_plus,
            l_minus,
        })
    }

    pub fn system(&self) -> &Arc<BimodalSystem> {
        &self.system
    }

    pub fn gain(&self, mode: Mode) -> &DMatrix<f64> {
        match mode {
            Mode::Plus => &self.l_plus,
            Mode::Minus => &self.l_minus,
        }
    }

    /// Same plant, new gains.
    pub fn with_gains(&self, l_plus: DMatrix<f64>, l_minus: DMatrix<f64>) -> Result<Self, SystemError> {
        Self::new(self.system.clone(), l_plus, l_minus)
    }

    /// Same gains on another model of the plant.
    pub fn with_system(&self, system: Arc<BimodalSystem>) -> Result<Self, SystemError> {
        Self::new(system, self.l_plus.clone(), self.l_minus.clone())
    }

    pub fn output_dim(&self) -> usize {
        self.l_plus.ncols()
    }

    pub(crate) fn observer_field_into(
        &self,
        mode: Mode,
        xhat: &[f64],
        y: &[f64],
        t: f64,
        out: &mut [f64],
    ) -> Result<(), SystemError> {
        self.system.eval_field_into(mode, xhat, t, out)?;
        let p = self.output_dim();
        let mut yhat = vec![0.0; p];
        self.system.output_into(xhat, &mut yhat)?;
        let gain = self.gain(mode);
        for (k, (yk, yhk)) in y.iter().zip(&yhat).enumerate() {
            let innov = yk - yhk;
            if innov == 0.0 {
                continue;
            }
            for (i, o) in out.iter_mut().enumerate() {
                *o += gain[(i, k)] * innov;
            }
        }
        Ok(())
    }

    pub fn observer_field(&self, mode: Mode, xhat: &[f64], y: &[f64], t: f64) -> Result<DVector<f64>, SystemError> {
        self.system.check_dim(xhat)?;
        if y.len() != self.output_dim() {
            return Err(SystemError::Dimension(format!(
                "output has length {}, expected {}",
                y.len(),
                self.output_dim()
            )));
        }
        let mut out = DVector::zeros(self.system.dim());
        self.observer_field_into(mode, xhat, y, t, out.as_mut_slice())?;
        Ok(out)
    }

    /// `∂f^±/∂x̂ − L^± ∂g/∂x̂`.
    pub fn error_jacobian(&self, mode: Mode, xhat: &[f64], t: f64) -> Result<DMatrix<f64>, SystemError> {
        let jf = self.system.jacobian(mode, xhat, t)?;
        let jg = self.system.output_jacobian(xhat)?;
        Ok(jf - self.gain(mode) * jg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::builtin_example;

    #[test]
    fn example_fields() {
        let ex1 = builtin_example(1).unwrap();
        let f = ex1.system.eval_field(Mode::Plus, &[1.0, 0.0], 0.0).unwrap();
        assert_eq!(f.as_slice(), &[-30.0, 0.0]);

        let ex2 = builtin_example(2).unwrap();
        let f = ex2.system.eval_field(Mode::Minus, &[0.0, 0.0], 0.0).unwrap();
        assert_eq!(f.as_slice(), &[2.0, 4.0]);

        let ex3 = builtin_example(3).unwrap();
        let f = ex3.system.eval_field(Mode::Plus, &[0.0, 1.0], 0.0).unwrap();
        assert!((f[0] - 1.0).abs() < 1e-15);
        assert!((f[1] + 0.2).abs() < 1e-15, "{}", f[1]);
    }

    #[test]
    fn observer_fields() {
        let ex1 = builtin_example(1).unwrap();
        let obs = ex1.observer.unwrap();
        let v = obs.observer_field(Mode::Plus, &[1.0, 1.0], &[4.0], 0.0).unwrap();
        assert_eq!(v.as_slice(), &[-36.0, -4.0]);

        // zero innovation reduces to the plant field
        let xh = [0.7, -0.2];
        let y = ex1.system.output(&xh).unwrap();
        let a = obs.observer_field(Mode::Minus, &xh, y.as_slice(), 0.3).unwrap();
        let b = ex1.system.eval_field(Mode::Minus, &xh, 0.3).unwrap();
        assert_eq!(a, b);

        let ex2 = builtin_example(2).unwrap();
        let obs2 = ex2.observer.unwrap();
        let y = 0.3 + 0.3;
        let t = 0.1;
        let v = obs2.observer_field(Mode::Plus, &[0.0, 0.0], &[y], t).unwrap();
        let u = 4.0 * (2.0 * std::f64::consts::PI * t).sin();
        assert!((v[0] - (-1.0 + 0.6)).abs() < 1e-14);
        assert!((v[1] - (-3.0 + 0.6 + u)).abs() < 1e-14);

        assert!(matches!(
            obs.observer_field(Mode::Plus, &[1.0, 1.0], &[4.0, 1.0], 0.0),
            Err(SystemError::Dimension(_))
        ));
    }

    #[test]
    fn jacobians() {
        let ex1 = builtin_example(1).unwrap();
        let j = ex1.system.jacobian(Mode::Plus, &[1.0, 0.0], 0.0).unwrap();
        assert_eq!(j, DMatrix::from_row_slice(2, 2, &[-15.0, 0.0, 0.0, -4.0]));
        let dg = ex1.system.output_jacobian(&[0.0, 0.0]).unwrap();
        assert_eq!(dg.as_slice(), &[0.0, 0.0]);

        let ex2 = builtin_example(2).unwrap();
        let a1 = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 2.0, -2.0]);
        for x in [[0.0, 0.0], [3.0, -7.5], [1e3, 2.0]] {
            assert_eq!(ex2.system.jacobian(Mode::Plus, &x, 1.3).unwrap(), a1);
        }
    }

    #[test]
    fn regions_and_tolerance() {
        let ex1 = builtin_example(1).unwrap();
        let s = &ex1.system;
        assert_eq!(s.region(&[0.5, 0.0]).unwrap(), Region::Plus);
        assert_eq!(s.region(&[-0.5, 0.0]).unwrap(), Region::Minus);
        assert_eq!(s.region(&[5e-10, 0.0]).unwrap(), Region::Sigma);
        assert_eq!(s.grad_h(&[0.0, 3.0]).unwrap().as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn rejects_state_dependent_input() {
        let def = ExprSystemDef {
            name: "bad".into(),
            n: 1,
            f_plus: vec!["1".into()],
            f_minus: vec!["1".into()],
            h: "x1".into(),
            u: Some(vec!["x1*t".into()]),
            ..Default::default()
        };
        assert!(matches!(
            BimodalSystem::from_exprs(&def),
            Err(SystemError::StateDependentInput(0))
        ));
    }

    #[test]
    fn fd_fallback_for_nonsmooth_entries() {
        let def = ExprSystemDef {
            name: "abs".into(),
            n: 1,
            f_plus: vec!["abs(x1) * x1".into()],
            f_minus: vec!["-x1".into()],
            h: "x1".into(),
            ..Default::default()
        };
        let s = BimodalSystem::from_exprs(&def).unwrap();
        assert!(!s.field(Mode::Plus).is_fully_symbolic());
        let j = s.jacobian(Mode::Plus, &[2.0], 0.0).unwrap();
        assert!((j[(0, 0)] - 4.0).abs() < 1e-6);
    }

    #[test]
    fn gain_dimensions_checked() {
        let ex1 = builtin_example(1).unwrap();
        let bad = DMatrix::zeros(2, 2);
        assert!(ObserverSpec::new(ex1.system.clone(), bad.clone(), bad).is_err());
    }
}
