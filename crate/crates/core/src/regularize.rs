//! Smooth regularization of a bimodal system across a boundary layer
//! `|h(x)| < ε` and an empirical check that it converges to the Filippov
//! solution at first order in `ε`.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measures::{vec_norm, MeasureKind};
use crate::simulate::{integrate, integrate_smooth, IntegratorConfig, SimError, SimErrorKind, Trajectory};
use crate::systems::{BimodalSystem, Mode, SystemError};

/// Number of uniformly spaced comparison points in an order study, on top
/// of the step times of both runs.
pub const DEVIATION_GRID: usize = 2000;

/// Step cap for both runs of an order study, so that the dense output
/// used for comparison is accurate well below the integration tolerance.
pub const STUDY_MAX_STEP: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegError {
    #[error("epsilon must be positive and finite, got {0}")]
    BadEpsilon(f64),
    #[error("unknown transition function '{0}' (expected cubic or saturation)")]
    UnknownTransition(String),
    #[error("order study needs at least 3 epsilon values, got {0}")]
    TooFewEpsilons(usize),
    #[error("epsilon values must be strictly decreasing")]
    NotDecreasing,
    #[error("epsilon {eps} is below 10x the integration tolerance {tol}")]
    EpsilonBelowTolerance { eps: f64, tol: f64 },
    #[error("reference Filippov run failed: {0}")]
    Reference(Box<SimError>),
    #[error("{0}")]
    Config(String),
}

/// Shape of the transition function on the normalized layer coordinate
/// `r = s/ε ∈ [-1, 1]`.
pub trait Transition: Send + Sync {
    fn name(&self) -> &'static str;
    fn kind(&self) -> TransitionKind;
    /// Value at `r ∈ [-1, 1]`.
    fn shape(&self, r: f64) -> f64;
    /// Derivative with respect to `r`, where defined.
    fn shape_derivative(&self, r: f64) -> f64;
    fn is_c1(&self) -> bool;
}

struct Cubic;
struct Saturation;

impl Transition for Cubic {
    fn name(&self) -> &'static str {
        "cubic"
    }
    fn kind(&self) -> TransitionKind {
        TransitionKind::Cubic
    }
    fn shape(&self, r: f64) -> f64 {
        0.5 * r * (3.0 - r * r)
    }
    fn shape_derivative(&self, r: f64) -> f64 {
        1.5 * (1.0 - r * r)
    }
    fn is_c1(&self) -> bool {
        true
    }
}

impl Transition for Saturation {
    fn name(&self) -> &'static str {
        "saturation"
    }
    fn kind(&self) -> TransitionKind {
        TransitionKind::Saturation
    }
    fn shape(&self, r: f64) -> f64 {
        r
    }
    fn shape_derivative(&self, _r: f64) -> f64 {
        1.0
    }
    fn is_c1(&self) -> bool {
        false
    }
}

static REGISTRY: [&dyn Transition; 2] = [&Cubic, &Saturation];

pub fn registry() -> &'static [&'static dyn Transition] {
    &REGISTRY
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransitionKind {
    /// `r(3 − r²)/2`, C¹.
    #[default]
    Cubic,
    /// `clamp(r)`, only C⁰.
    Saturation,
}

impl TransitionKind {
    pub fn strategy(self) -> &'static dyn Transition {
        match self {
            TransitionKind::Cubic => REGISTRY[0],
            TransitionKind::Saturation => REGISTRY[1],
        }
    }
}

impl fmt::Display for TransitionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.strategy().name())
    }
}

impl FromStr for TransitionKind {
    type Err = RegError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        REGISTRY
            .iter()
            .find(|t| t.name() == s)
            .map(|t| t.kind())
            .ok_or(RegError::UnknownTransition(s))
    }
}

/// `φ_ε`: equal to `±1` outside `[−ε, ε]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionFunction {
    kind: TransitionKind,
    epsilon: f64,
}

impl TransitionFunction {
    pub fn new(kind: TransitionKind, epsilon: f64) -> Result<Self, RegError> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(RegError::BadEpsilon(epsilon));
        }
        Ok(Self { kind, epsilon })
    }

    pub fn kind(&self) -> TransitionKind {
        self.kind
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn is_c1(&self) -> bool {
        self.kind.strategy().is_c1()
    }

    pub fn phi(&self, s: f64) -> f64 {
        let r = (s / self.epsilon).clamp(-1.0, 1.0);
        self.kind.strategy().shape(r)
    }

    /// `dφ_ε/ds`; zero outside the layer.
    pub fn dphi(&self, s: f64) -> f64 {
        let r = s / self.epsilon;
        if r.abs() >= 1.0 {
            0.0
        } else {
            self.kind.strategy().shape_derivative(r) / self.epsilon
        }
    }
}

pub fn phi(tf: &TransitionFunction, s: f64) -> f64 {
    tf.phi(s)
}

fn regularized_into(
    sys: &BimodalSystem,
    tf: &TransitionFunction,
    x: &[f64],
    t: f64,
    out: &mut [f64],
    scratch: &mut [f64],
) -> Result<(), SystemError> {
    let w = tf.phi(sys.h(x)?);
    if w >= 1.0 {
        return Ok(sys.eval_field_into(Mode::Plus, x, t, out)?);
    }
    if w <= -1.0 {
        return Ok(sys.eval_field_into(Mode::Minus, x, t, out)?);
    }
    sys.eval_field_into(Mode::Plus, x, t, out)?;
    sys.eval_field_into(Mode::Minus, x, t, scratch)?;
    let (wp, wm) = (0.5 * (1.0 + w), 0.5 * (1.0 - w));
    for (o, m) in out.iter_mut().zip(scratch.iter()) {
        *o = wp * *o + wm * m;
    }
    Ok(())
}

/// `f_ε = (1 + φ_ε(h))/2 · F⁺ + (1 − φ_ε(h))/2 · F⁻`, inputs included.
pub fn regularized_field(
    sys: &BimodalSystem,
    tf: &TransitionFunction,
    x: &[f64],
    t: f64,
) -> Result<DVector<f64>, SystemError> {
    if x.len() != sys.dim() {
        return Err(SystemError::Dimension(format!(
            "state has length {}, expected {}",
            x.len(),
            sys.dim()
        )));
    }
    let mut out = DVector::zeros(sys.dim());
    let mut scratch = vec![0.0; sys.dim()];
    regularized_into(sys, tf, x, t, out.as_mut_slice(), &mut scratch)?;
    Ok(out)
}

/// Integrate the smooth regularized system (no event handling).
pub fn integrate_regularized(
    sys: &BimodalSystem,
    tf: &TransitionFunction,
    x0: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Trajectory, SimError> {
    let n = sys.dim();
    integrate_smooth(
        |t, x, out| {
            let mut scratch = vec![0.0; n];
            regularized_into(sys, tf, x, t, out, &mut scratch).map_err(SimErrorKind::from)
        },
        x0,
        cfg,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderPoint {
    pub epsilon: f64,
    pub sup_deviation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderStudy {
    pub transition: TransitionKind,
    pub norm: MeasureKind,
    pub points: Vec<OrderPoint>,
    /// Runs that failed, with their epsilon.
    pub failures: Vec<(f64, SimError)>,
    /// Least-squares slope of `log(dev)` against `log(ε)`.
    pub slope: Option<f64>,
    /// `C` in `dev ≈ C ε^slope`.
    pub constant: Option<f64>,
}

/// Least-squares line through `(ln x, ln y)`: returns `(slope, exp(intercept))`.
pub fn loglog_fit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Some((slope, (my - slope * mx).exp()))
}

/// Sup of `‖a(t) − b(t)‖` using dense output of both. The sampled times are
/// a uniform grid of [`DEVIATION_GRID`] points plus every step end and step
/// midpoint of either run, so short transients inside the layer are seen.
pub fn sup_deviation(a: &Trajectory, b: &Trajectory, t0: f64, t1: f64, norm: MeasureKind) -> f64 {
    let mut times: Vec<f64> = (0..DEVIATION_GRID)
        .map(|k| t0 + (t1 - t0) * k as f64 / (DEVIATION_GRID - 1) as f64)
        .collect();
    for seg in a.segments.iter().chain(&b.segments) {
        times.push(seg.t1);
        times.push(0.5 * (seg.t0 + seg.t1));
    }
    times.retain(|t| (t0..=t1).contains(t));
    let mut sup = 0.0_f64;
    let mut diff = vec![0.0; a.dim];
    for t in times {
        let (Some(xa), Some(xb)) = (a.state_at(t), b.state_at(t)) else {
            return f64::NAN;
        };
        for i in 0..diff.len() {
            diff[i] = xa[i] - xb[i];
        }
        let d = vec_norm(norm, &diff).unwrap_or(f64::NAN);
        if d.is_nan() {
            return f64::NAN;
        }
        sup = sup.max(d);
    }
    sup
}

/// Tolerances of the Filippov reference run.
pub fn reference_config(cfg: &IntegratorConfig) -> IntegratorConfig {
    IntegratorConfig {
        rel_tol: cfg.rel_tol.min(1e-10),
        abs_tol: cfg.abs_tol.min(1e-12),
        ..cfg.clone()
    }
}

/// Compare regularized runs for each `ε` against the Filippov solution from
/// the same `x0` over `cfg.t0..cfg.tf`.
pub fn order_study(
    sys: &BimodalSystem,
    kind: TransitionKind,
    x0: &[f64],
    cfg: &IntegratorConfig,
    eps_list: &[f64],
    norm: MeasureKind,
) -> Result<OrderStudy, RegError> {
    cfg.validate().map_err(RegError::Config)?;
    let cfg = &IntegratorConfig {
        max_step: cfg.max_step.min(STUDY_MAX_STEP),
        ..cfg.clone()
    };
    if eps_list.len() < 3 {
        return Err(RegError::TooFewEpsilons(eps_list.len()));
    }
    let tol = cfg.rel_tol.max(cfg.abs_tol);
    for &e in eps_list {
        if !(e > 0.0) || !e.is_finite() {
            return Err(RegError::BadEpsilon(e));
        }
        if e < 10.0 * tol {
            return Err(RegError::EpsilonBelowTolerance { eps: e, tol });
        }
    }
    if eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(RegError::NotDecreasing);
    }

    let reference = integrate(sys, x0, &reference_config(cfg)).map_err(|e| RegError::Reference(Box::new(e)))?;

    let runs: Vec<(f64, Result<f64, SimError>)> = eps_list
        .par_iter()
        .map(|&eps| {
            let tf = TransitionFunction::new(kind, eps).expect("validated above");
            let res = integrate_regularized(sys, &tf, x0, cfg).map(|tr| sup_deviation(&tr, &reference, cfg.t0, cfg.tf, norm));
            (eps, res)
        })
        .collect();

    let mut points = Vec::new();
    let mut failures = Vec::new();
    for (epsilon, res) in runs {
        match res {
            Ok(sup_deviation) => points.push(OrderPoint { epsilon, sup_deviation }),
            Err(e) => failures.push((epsilon, e)),
        }
    }
    let xs: Vec<f64> = points.iter().map(|p| p.epsilon).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.sup_deviation).collect();
    let fit = loglog_fit(&xs, &ys);
    Ok(OrderStudy {
        transition: kind,
        norm,
        points,
        failures,
        slope: fit.map(|f| f.0),
        constant: fit.map(|f| f.1),
    })
}

impl OrderStudy {
    pub fn summary_line(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.6}"));
        format!(
            "transition={} norm={} points={} failures={} slope={} constant={}",
            self.transition,
            self.norm,
            self.points.len(),
            self.failures.len(),
            fmt(self.slope),
            fmt(self.constant)
        )
    }

    /// `epsilon,sup_deviation` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epsilon", "sup_deviation"])?;
        for p in &self.points {
            w.write_record([format!("{:.16e}", p.epsilon), format!("{:.16e}", p.sup_deviation)])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::ExprSystemDef;

    #[test]
    fn cubic_values() {
        let eps = 0.01;
        let tf = TransitionFunction::new(TransitionKind::Cubic, eps).unwrap();
        assert_eq!(tf.phi(0.0), 0.0);
        assert_eq!(tf.phi(eps), 1.0);
        assert_eq!(tf.phi(-eps), -1.0);
        assert_eq!(tf.phi(5.0), 1.0);
        assert_eq!(tf.dphi(eps), 0.0);
        assert!((tf.phi(eps / 2.0) - 0.6875).abs() < 1e-15);
        assert!(tf.is_c1());
        let sat = TransitionFunction::new(TransitionKind::Saturation, eps).unwrap();
        assert!(!sat.is_c1());
        assert!((sat.phi(eps / 4.0) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn registry_lookup() {
        assert_eq!("cubic".parse::<TransitionKind>().unwrap(), TransitionKind::Cubic);
        assert_eq!("Saturation".parse::<TransitionKind>().unwrap(), TransitionKind::Saturation);
        assert!("tanh".parse::<TransitionKind>().is_err());
        assert_eq!(registry().len(), 2);
        assert!(TransitionFunction::new(TransitionKind::Cubic, 0.0).is_err());
    }

    #[test]
    fn fit_recovers_power_law() {
        let xs = [1e-2, 5e-3, 2.5e-3];
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x).collect();
        let (s, c) = loglog_fit(&xs, &ys).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
        assert!((c - 3.0).abs() < 1e-9);
    }

    #[test]
    fn identical_modes_give_no_deviation() {
        let sys = BimodalSystem::from_exprs(&ExprSystemDef {
            name: "same".into(),
            n: 2,
            f_plus: vec!["-x1 + x2".into(), "-x2".into()],
            f_minus: vec!["-x1 + x2".into(), "-x2".into()],
            h: "x1 - 0.5".into(),
            ..Default::default()
        })
        .unwrap();
        let cfg = IntegratorConfig::default().with_span(0.0, 2.0);
        let st = order_study(&sys, TransitionKind::Cubic, &[1.0, 1.0], &cfg, &[1e-2, 5e-3, 2.5e-3], MeasureKind::Linf).unwrap();
        for p in &st.points {
            assert!(p.sup_deviation <= 1e-8, "{p:?}");
        }
    }

    #[test]
    fn study_preconditions() {
        let sys = crate::config::builtin_example(1).unwrap().system;
        let cfg = IntegratorConfig::default();
        let x0 = [3.0, 3.0];
        let run = |eps: &[f64]| order_study(&sys, TransitionKind::Cubic, &x0, &cfg, eps, MeasureKind::L1);
        assert_eq!(run(&[1e-2, 5e-3]), Err(RegError::TooFewEpsilons(2)));
        assert_eq!(run(&[1e-2, 5e-3, 5e-3]), Err(RegError::NotDecreasing));
        assert!(matches!(run(&[1e-2, 5e-3, 1e-9]), Err(RegError::EpsilonBelowTolerance { .. })));
    }
}
