//! Matrix measures (logarithmic norms) and the vector norms that induce them.
//!
//! Each measure is a [`MatrixMeasure`] strategy. The three supported kinds are
//! registered by name (`l1`, `l2`, `linf`) and looked up at runtime through
//! [`lookup`] or through the [`MeasureKind`] selector.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("matrix must be square and non-empty, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("non-finite entry in input")]
    NonFinite,
    #[error("step h must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("unknown measure `{0}` (expected one of l1, l2, linf)")]
    Unknown(String),
}

/// Selector for the measure used uniformly across a certification run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasureKind {
    L1,
    L2,
    Linf,
}

impl MeasureKind {
    pub const ALL: [MeasureKind; 3] = [MeasureKind::L1, MeasureKind::L2, MeasureKind::Linf];

    /// The registered strategy implementing this kind.
    pub fn strategy(self) -> &'static dyn MatrixMeasure {
        match self {
            MeasureKind::L1 => &L1Measure,
            MeasureKind::L2 => &L2Measure,
            MeasureKind::Linf => &LinfMeasure,
        }
    }

    pub fn name(self) -> &'static str {
        self.strategy().name()
    }
}

impl fmt::Display for MeasureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MeasureKind {
    type Err = MeasureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        lookup(s).map(|m| m.kind())
    }
}

/// A matrix measure together with the vector norm and operator norm that
/// induce it.
pub trait MatrixMeasure: Send + Sync {
    fn name(&self) -> &'static str;
    fn kind(&self) -> MeasureKind;
    /// Closed-form measure of a square matrix. Inputs are assumed validated.
    fn measure_unchecked(&self, a: &DMatrix<f64>) -> f64;
    /// Induced operator norm `‖M‖`.
    fn operator_norm(&self, m: &DMatrix<f64>) -> f64;
    fn vec_norm_unchecked(&self, v: &[f64]) -> f64;
}

struct L1Measure;
struct L2Measure;
struct LinfMeasure;

static REGISTRY: [&dyn MatrixMeasure; 3] = [&L1Measure, &L2Measure, &LinfMeasure];

/// All registered measures, in a fixed order.
pub fn registry() -> &'static [&'static dyn MatrixMeasure] {
    &REGISTRY
}

/// Find a measure by name. Accepts `l1`, `l2`, `linf` (and `inf`, `mu1`, ...).
pub fn lookup(name: &str) -> Result<&'static dyn MatrixMeasure, MeasureError> {
    let key = name.trim().to_ascii_lowercase();
    let canonical = match key.as_str() {
        "l1" | "1" | "mu1" => "l1",
        "l2" | "2" | "mu2" | "euclidean" => "l2",
        "linf" | "inf" | "muinf" | "uniform" => "linf",
        _ => return Err(MeasureError::Unknown(name.to_string())),
    };
    Ok(*REGISTRY
        .iter()
        .find(|m| m.name() == canonical)
        .expect("canonical measure names are registered"))
}

impl MatrixMeasure for L1Measure {
    fn name(&self) -> &'static str {
        "l1"
    }
    fn kind(&self) -> MeasureKind {
        MeasureKind::L1
    }
    fn measure_unchecked(&self, a: &DMatrix<f64>) -> f64 {
        let n = a.nrows();
        (0..n)
            .map(|j| {
                let off: f64 = (0..n).filter(|&i| i != j).map(|i| a[(i, j)].abs()).sum();
                a[(j, j)] + off
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
    fn operator_norm(&self, m: &DMatrix<f64>) -> f64 {
        m.column_iter()
            .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
    fn vec_norm_unchecked(&self, v: &[f64]) -> f64 {
        v.iter().map(|x| x.abs()).sum()
    }
}

impl MatrixMeasure for LinfMeasure {
    fn name(&self) -> &'static str {
        "linf"
    }
    fn kind(&self) -> MeasureKind {
        MeasureKind::Linf
    }
    fn measure_unchecked(&self, a: &DMatrix<f64>) -> f64 {
        let n = a.nrows();
        (0..n)
            .map(|i| {
                let off: f64 = (0..n).filter(|&j| j != i).map(|j| a[(i, j)].abs()).sum();
                a[(i, i)] + off
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
    fn operator_norm(&self, m: &DMatrix<f64>) -> f64 {
        m.row_iter()
            .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
    fn vec_norm_unchecked(&self, v: &[f64]) -> f64 {
        v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
    }
}

impl MatrixMeasure for L2Measure {
    fn name(&self) -> &'static str {
        "l2"
    }
    fn kind(&self) -> MeasureKind {
        MeasureKind::L2
    }
    fn measure_unchecked(&self, a: &DMatrix<f64>) -> f64 {
        let sym = (a + a.transpose()) * 0.5;
        symmetric_eigenvalues(&sym)
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max)
    }
    fn operator_norm(&self, m: &DMatrix<f64>) -> f64 {
        let gram = m.transpose() * m;
        let top = symmetric_eigenvalues(&gram)
            .into_iter()
            .fold(0.0_f64, f64::max);
        top.max(0.0).sqrt()
    }
    fn vec_norm_unchecked(&self, v: &[f64]) -> f64 {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

fn validate(a: &DMatrix<f64>) -> Result<(), MeasureError> {
    if a.nrows() != a.ncols() || a.nrows() == 0 {
        return Err(MeasureError::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(MeasureError::NonFinite);
    }
    Ok(())
}

/// Matrix measure of `a` in the given kind.
pub fn measure(kind: MeasureKind, a: &DMatrix<f64>) -> Result<f64, MeasureError> {
    validate(a)?;
    Ok(kind.strategy().measure_unchecked(a))
}

/// One-sided difference quotient `(‖I + hA‖ − 1) / h`, which converges to the
/// measure as `h → 0⁺`. Uses the induced operator norm, not the closed form.
pub fn measure_limit_oracle(kind: MeasureKind, a: &DMatrix<f64>, h: f64) -> Result<f64, MeasureError> {
    validate(a)?;
    if !(h > 0.0) {
        return Err(MeasureError::NonPositiveStep(h));
    }
    let n = a.nrows();
    let m = DMatrix::<f64>::identity(n, n) + a * h;
    Ok((kind.strategy().operator_norm(&m) - 1.0) / h)
}

pub fn vec_norm(kind: MeasureKind, v: &[f64]) -> Result<f64, MeasureError> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(MeasureError::NonFinite);
    }
    Ok(kind.strategy().vec_norm_unchecked(v))
}

/// Convenience for `DVector` callers.
pub fn dvec_norm(kind: MeasureKind, v: &DVector<f64>) -> Result<f64, MeasureError> {
    vec_norm(kind, v.as_slice())
}

/// Eigenvalues of a symmetric matrix by the cyclic Jacobi method.
///
/// Only the lower triangle is trusted; the input is re-symmetrized first.
/// Sweeps stop once the off-diagonal Frobenius mass falls below `1e-12`
/// relative to the full Frobenius norm.
pub fn symmetric_eigenvalues(s: &DMatrix<f64>) -> Vec<f64> {
    let n = s.nrows();
    let mut a = (s + s.transpose()) * 0.5;
    if n == 1 {
        return vec![a[(0, 0)]];
    }
    let total = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    if total == 0.0 {
        return vec![0.0; n];
    }
    let tol = 1e-12 * total;
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += 2.0 * a[(p, q)] * a[(p, q)];
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - sn * akq;
                    a[(k, q)] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - sn * aqk;
                    a[(q, k)] = sn * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[(i, i)]).collect()
}
