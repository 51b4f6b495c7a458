//! Event-driven integration of bimodal Filippov systems.
//!
//! Inside a mode the active smooth field is integrated with an adaptive
//! Dormand–Prince pair. A sign change of `h` across an accepted step is
//! located by bisection on the cubic Hermite interpolant of that step and
//! classified from the normal components `σ± = ∇h·F±`: attracting fields
//! (`σ+ < 0 < σ−`) start a sliding segment on `Σ`, otherwise the trajectory
//! crosses. Sliding follows the Filippov convex combination, is projected back
//! onto `Σ` after every step and ends when either normal component changes
//! sign.

mod driver;
mod export;
mod rk;

pub use driver::{integrate, integrate_smooth};
pub use export::{write_events_csv, write_trajectory_csv};

use nalgebra::DVector;
use thiserror::Error;

use crate::exprparse::EvalError;
use crate::systems::{BimodalSystem, Mode, SystemError};

/// Per-sample mode label. Encoded in CSV as `+1`, `-1`, `0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeLabel {
    Plus,
    Minus,
    Sliding,
}

impl ModeLabel {
    pub fn code(self) -> i8 {
        match self {
            ModeLabel::Plus => 1,
            ModeLabel::Minus => -1,
            ModeLabel::Sliding => 0,
        }
    }

    pub fn from_mode(mode: Mode) -> Self {
        match mode {
            Mode::Plus => ModeLabel::Plus,
            Mode::Minus => ModeLabel::Minus,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Crossing,
    SlidingEntry,
    SlidingExit,
    /// Tangential contact decided by the second-order test.
    Grazing,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Crossing => "crossing",
            EventKind::SlidingEntry => "sliding-entry",
            EventKind::SlidingExit => "sliding-exit",
            EventKind::Grazing => "grazing",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub x: Vec<f64>,
    pub mode: ModeLabel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub t: f64,
    pub kind: EventKind,
    pub x: Vec<f64>,
    pub from: ModeLabel,
    pub to: ModeLabel,
}

/// One accepted step, kept for dense output.
///
/// The interpolant is cubic Hermite plus `dense·s²(1−s)²`, the order-4
/// continuous extension of the stepper. An empty `dense` leaves plain Hermite.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub t0: f64,
    pub t1: f64,
    pub x0: Vec<f64>,
    pub x1: Vec<f64>,
    pub f0: Vec<f64>,
    pub f1: Vec<f64>,
    pub dense: Vec<f64>,
    pub mode: ModeLabel,
}

impl Segment {
    pub fn interpolate(&self, t: f64, out: &mut [f64]) {
        let dt = self.t1 - self.t0;
        if dt <= 0.0 {
            out.copy_from_slice(&self.x1);
            return;
        }
        let s = ((t - self.t0) / dt).clamp(0.0, 1.0);
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        for (i, o) in out.iter_mut().enumerate() {
            *o = h00 * self.x0[i] + h10 * dt * self.f0[i] + h01 * self.x1[i] + h11 * dt * self.f1[i];
        }
        if !self.dense.is_empty() {
            let w = s2 * (1.0 - s) * (1.0 - s);
            for (o, d) in out.iter_mut().zip(&self.dense) {
                *o += w * d;
            }
        }
    }
}

/// Sampled solution plus the dense-output pieces it was built from.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub dim: usize,
    pub samples: Vec<Sample>,
    pub events: Vec<Event>,
    pub segments: Vec<Segment>,
}

impl Trajectory {
    pub fn t_start(&self) -> Option<f64> {
        self.samples.first().map(|s| s.t)
    }

    pub fn t_end(&self) -> Option<f64> {
        self.samples.last().map(|s| s.t)
    }

    pub fn final_state(&self) -> Option<&[f64]> {
        self.samples.last().map(|s| s.x.as_slice())
    }

    /// Dense-output state at `t`, clamped to the integrated interval.
    pub fn state_at(&self, t: f64) -> Option<Vec<f64>> {
        if self.segments.is_empty() {
            return self.samples.first().map(|s| s.x.clone());
        }
        let idx = self.segments.partition_point(|s| s.t1 < t).min(self.segments.len() - 1);
        let mut out = vec![0.0; self.dim];
        self.segments[idx].interpolate(t, &mut out);
        Some(out)
    }

    pub fn count(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub tol_event: f64,
    pub t0: f64,
    pub tf: f64,
    pub sample_interval: f64,
    pub max_events: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            abs_tol: 1e-11,
            max_step: 0.01,
            tol_event: 1e-10,
            t0: 0.0,
            tf: 1.0,
            sample_interval: 0.01,
            max_events: 1_000_000,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("rel_tol", self.rel_tol),
            ("abs_tol", self.abs_tol),
            ("max_step", self.max_step),
            ("tol_event", self.tol_event),
            ("sample_interval", self.sample_interval),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if !(self.t0 < self.tf) || !self.t0.is_finite() || !self.tf.is_finite() {
            return Err(format!("need t0 < tf, got t0 = {}, tf = {}", self.t0, self.tf));
        }
        Ok(())
    }

    pub fn with_span(mut self, t0: f64, tf: f64) -> Self {
        self.t0 = t0;
        self.tf = tf;
        self
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimErrorKind {
    #[error("invalid integrator configuration: {0}")]
    Config(String),
    #[error("step size underflow")]
    StepUnderflow,
    #[error("event could not be bracketed")]
    EventNotBracketed,
    #[error("non-finite state")]
    NonFinite,
    #[error("degenerate sliding: normal components of both fields coincide")]
    DegenerateSliding,
    #[error("event limit of {0} exceeded")]
    TooManyEvents(usize),
    #[error("no progress across repeated events (chattering or grazing loop)")]
    Stalled,
    #[error("initial state has length {got}, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("evaluation failed: {0}")]
    Eval(String),
}

/// Integration failure with whatever was computed before it.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("integration failed at t = {t}: {kind}")]
pub struct SimError {
    pub t: f64,
    pub kind: SimErrorKind,
    pub partial: Box<Trajectory>,
}

impl From<EvalError> for SimErrorKind {
    fn from(e: EvalError) -> Self {
        SimErrorKind::Eval(e.to_string())
    }
}

impl From<SystemError> for SimErrorKind {
    fn from(e: SystemError) -> Self {
        SimErrorKind::Eval(e.to_string())
    }
}

/// Right-hand side of a bimodal Filippov system as seen by the integrator.
/// `field` returns the full mode vector field `F±` (input included).
pub trait FilippovRhs {
    fn dim(&self) -> usize;
    fn field(&self, mode: Mode, x: &[f64], t: f64, out: &mut [f64]) -> Result<(), SimErrorKind>;
    fn h(&self, x: &[f64]) -> Result<f64, SimErrorKind>;
    fn grad_h(&self, x: &[f64], out: &mut [f64]) -> Result<(), SimErrorKind>;
    /// Times where the field is only piecewise smooth in `t`; steps end on them.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }
}

impl FilippovRhs for BimodalSystem {
    fn dim(&self) -> usize {
        BimodalSystem::dim(self)
    }

    fn field(&self, mode: Mode, x: &[f64], t: f64, out: &mut [f64]) -> Result<(), SimErrorKind> {
        Ok(self.eval_field_into(mode, x, t, out)?)
    }

    fn h(&self, x: &[f64]) -> Result<f64, SimErrorKind> {
        Ok(BimodalSystem::h(self, x)?)
    }

    fn grad_h(&self, x: &[f64], out: &mut [f64]) -> Result<(), SimErrorKind> {
        Ok(self.grad_h_into(x, out)?)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Normal components `(σ+, σ−)` and the fields themselves at `(x, t)`.
pub(crate) struct NormalComponents {
    pub sigma_plus: f64,
    pub sigma_minus: f64,
    pub f_plus: Vec<f64>,
    pub f_minus: Vec<f64>,
    pub grad: Vec<f64>,
}

pub(crate) fn normal_components<R: FilippovRhs + ?Sized>(
    rhs: &R,
    x: &[f64],
    t: f64,
) -> Result<NormalComponents, SimErrorKind> {
    let n = rhs.dim();
    let mut grad = vec![0.0; n];
    let mut f_plus = vec![0.0; n];
    let mut f_minus = vec![0.0; n];
    rhs.grad_h(x, &mut grad)?;
    rhs.field(Mode::Plus, x, t, &mut f_plus)?;
    rhs.field(Mode::Minus, x, t, &mut f_minus)?;
    Ok(NormalComponents {
        sigma_plus: dot(&grad, &f_plus),
        sigma_minus: dot(&grad, &f_minus),
        f_plus,
        f_minus,
        grad,
    })
}

impl NormalComponents {
    /// Filippov weight on `F+`; `None` when the denominator vanishes.
    pub fn alpha(&self) -> Option<f64> {
        let denom = self.sigma_minus - self.sigma_plus;
        let scale = self.sigma_minus.abs().max(self.sigma_plus.abs()).max(1.0);
        if denom.abs() < 1e-14 * scale {
            None
        } else {
            Some(self.sigma_minus / denom)
        }
    }

    pub fn combine(&self, alpha: f64, out: &mut [f64]) {
        for (o, (m, p)) in out.iter_mut().zip(self.f_minus.iter().zip(&self.f_plus)) {
            *o = (1.0 - alpha) * m + alpha * p;
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SlidingError {
    #[error("degenerate sliding: |∇h·(F− − F+)| is below 1e-14")]
    Degenerate,
    #[error("state is not in the attracting sliding region (σ+ = {sigma_plus}, σ− = {sigma_minus})")]
    NotAttracting { sigma_plus: f64, sigma_minus: f64 },
    #[error("{0}")]
    Eval(String),
}

/// Filippov sliding vector field `(1 − α) F− + α F+` with
/// `α = ∇h·F− / ∇h·(F− − F+)`, so that `∇h·f_s = 0`.
pub fn sliding_field<R: FilippovRhs + ?Sized>(rhs: &R, x: &[f64], t: f64) -> Result<DVector<f64>, SlidingError> {
    let nc = normal_components(rhs, x, t).map_err(|e| SlidingError::Eval(e.to_string()))?;
    let alpha = nc.alpha().ok_or(SlidingError::Degenerate)?;
    if nc.sigma_plus > 0.0 || nc.sigma_minus < 0.0 {
        return Err(SlidingError::NotAttracting {
            sigma_plus: nc.sigma_plus,
            sigma_minus: nc.sigma_minus,
        });
    }
    let mut out = DVector::zeros(rhs.dim());
    nc.combine(alpha.clamp(0.0, 1.0), out.as_mut_slice());
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlidingStatus {
    Stay,
    ExitPlus,
    ExitMinus,
}

/// Whether a sliding state keeps sliding: leaves towards `S−` once
/// `∇h·F− <= 0`, towards `S+` once `∇h·F+ >= 0`.
pub fn sliding_exit_check<R: FilippovRhs + ?Sized>(rhs: &R, x: &[f64], t: f64) -> Result<SlidingStatus, SlidingError> {
    let nc = normal_components(rhs, x, t).map_err(|e| SlidingError::Eval(e.to_string()))?;
    Ok(exit_status(nc.sigma_plus, nc.sigma_minus))
}

pub(crate) fn exit_status(sigma_plus: f64, sigma_minus: f64) -> SlidingStatus {
    let to_plus = sigma_plus >= 0.0;
    let to_minus = sigma_minus <= 0.0;
    match (to_plus, to_minus) {
        (false, false) => SlidingStatus::Stay,
        (true, false) => SlidingStatus::ExitPlus,
        (false, true) => SlidingStatus::ExitMinus,
        (true, true) => {
            if sigma_plus >= -sigma_minus {
                SlidingStatus::ExitPlus
            } else {
                SlidingStatus::ExitMinus
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exprparse::ParamTable;
    use crate::systems::ExprSystemDef;

    fn oscillator(fd: f64) -> BimodalSystem {
        let mut params = ParamTable::new();
        for (k, v) in [("wn", 1.0), ("Q", 10.0), ("m", 1.0), ("Ff", 0.1), ("Fd", fd), ("wd", std::f64::consts::PI)] {
            params.set(k, v);
        }
        BimodalSystem::from_exprs(&ExprSystemDef {
            name: "osc".into(),
            n: 2,
            params,
            f_plus: vec!["x2".into(), "-wn*x1 - (wn/Q)*x2 - Ff/m".into()],
            f_minus: vec!["x2".into(), "-wn*x1 - (wn/Q)*x2 + Ff/m".into()],
            h: "x2".into(),
            g: Some(vec!["x1".into()]),
            u: Some(vec!["0".into(), "(Fd/m)*sin(wd*t)".into()]),
        })
        .unwrap()
    }

    #[test]
    fn sliding_field_of_stuck_oscillator() {
        let sys = oscillator(0.0);
        let x = [0.05, 0.0];
        let nc = normal_components(&sys, &x, 0.0).unwrap();
        assert!((nc.sigma_plus + 0.15).abs() < 1e-15);
        assert!((nc.sigma_minus - 0.05).abs() < 1e-15);
        assert!((nc.alpha().unwrap() - 0.25).abs() < 1e-15);
        let fs = sliding_field(&sys, &x, 0.0).unwrap();
        assert!(fs[0].abs() < 1e-15 && fs[1].abs() < 1e-15);
        assert_eq!(sliding_exit_check(&sys, &x, 0.0).unwrap(), SlidingStatus::Stay);
    }

    #[test]
    fn sliding_field_errors() {
        let tangent = BimodalSystem::from_exprs(&ExprSystemDef {
            name: "tangent".into(),
            n: 2,
            f_plus: vec!["1".into(), "0".into()],
            f_minus: vec!["1".into(), "0".into()],
            h: "x2".into(),
            ..Default::default()
        })
        .unwrap();
        assert_eq!(sliding_field(&tangent, &[0.0, 0.0], 0.0), Err(SlidingError::Degenerate));

        let sys = oscillator(0.0);
        // x1 = -0.5: σ+ = 0.5 - 0.1 > 0
        assert!(matches!(
            sliding_field(&sys, &[-0.5, 0.0], 0.0),
            Err(SlidingError::NotAttracting { .. })
        ));
    }

    #[test]
    fn exit_boundaries() {
        assert_eq!(exit_status(-1.0, 1.0), SlidingStatus::Stay);
        // α = σ−/(σ− − σ+) = 1 exactly when σ+ = 0
        assert_eq!(exit_status(0.0, 1.0), SlidingStatus::ExitPlus);
        assert_eq!(exit_status(-1.0, 0.0), SlidingStatus::ExitMinus);
    }
}
