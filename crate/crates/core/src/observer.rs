//! Plant/observer co-simulation and exponential envelope checks on the
//! estimation error.
//!
//! The plant is integrated first; the observer then integrates against the
//! plant output `y(t) = g(x(t))` taken from the plant's dense output, so each
//! side locates its own switching events.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::measures::{vec_norm, MeasureKind};
use crate::simulate::{integrate, FilippovRhs, IntegratorConfig, SimError, SimErrorKind, Trajectory};
use crate::systems::{BimodalSystem, Mode, ObserverSpec, SystemError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObserverError {
    #[error("plant integration failed: {0}")]
    Plant(Box<SimError>),
    #[error("observer integration failed: {0}")]
    Observer(Box<SimError>),
    #[error("plant and observer disagree in dimension: {0}")]
    Dimension(String),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error("envelope needs c > 0 and K >= 1, got c = {c}, K = {k}")]
    Envelope { k: f64, c: f64 },
    #[error("{0}")]
    Disturbance(String),
}

/// Observer right-hand side driven by a recorded plant trajectory.
pub struct ObserverRhs<'a> {
    obs: &'a ObserverSpec,
    plant_sys: &'a BimodalSystem,
    plant: &'a Trajectory,
    breakpoints: Vec<f64>,
}

impl<'a> ObserverRhs<'a> {
    /// `plant_sys` supplies `g` for the measured output; it may differ from
    /// the observer's model.
    pub fn new(obs: &'a ObserverSpec, plant_sys: &'a BimodalSystem, plant: &'a Trajectory) -> Self {
        let breakpoints = plant.events.iter().map(|e| e.t).collect();
        Self {
            obs,
            plant_sys,
            plant,
            breakpoints,
        }
    }

    fn measured(&self, t: f64) -> Result<Vec<f64>, SimErrorKind> {
        let x = self
            .plant
            .state_at(t)
            .ok_or_else(|| SimErrorKind::Eval("empty plant trajectory".into()))?;
        let mut y = vec![0.0; self.obs.output_dim()];
        self.plant_sys.output_into(&x, &mut y)?;
        Ok(y)
    }
}

impl FilippovRhs for ObserverRhs<'_> {
    fn dim(&self) -> usize {
        self.obs.system().dim()
    }

    fn field(&self, mode: Mode, x: &[f64], t: f64, out: &mut [f64]) -> Result<(), SimErrorKind> {
        let y = self.measured(t)?;
        Ok(self.obs.observer_field_into(mode, x, &y, t, out)?)
    }

    fn h(&self, x: &[f64]) -> Result<f64, SimErrorKind> {
        Ok(self.obs.system().h(x)?)
    }

    fn grad_h(&self, x: &[f64], out: &mut [f64]) -> Result<(), SimErrorKind> {
        Ok(self.obs.system().grad_h_into(x, out)?)
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.breakpoints.clone()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub t: f64,
    pub err: f64,
    pub bound: f64,
}

/// Norm of the estimation error `e = x − x̂` on the plant's sample times.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorTrace {
    pub kind: MeasureKind,
    pub t0: f64,
    /// `(t, |e(t)|)`.
    pub samples: Vec<(f64, f64)>,
    /// `(K, c)` of the last envelope check.
    pub envelope: Option<(f64, f64)>,
    pub violations: Vec<Violation>,
}

impl ErrorTrace {
    pub fn e0(&self) -> f64 {
        self.samples.first().map_or(0.0, |s| s.1)
    }

    pub fn bound(&self, k: f64, c: f64, t: f64) -> f64 {
        k * (-c * (t - self.t0)).exp() * self.e0()
    }

    /// Sup of `|e|` over `t ≥ from`.
    pub fn sup_after(&self, from: f64) -> f64 {
        self.samples
            .iter()
            .filter(|s| s.0 >= from)
            .map(|s| s.1)
            .fold(0.0, |a: f64, b| if b.is_nan() { f64::NAN } else { a.max(b) })
    }

    /// `t,err_norm,bound`; the bound column is empty without an envelope.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "err_norm", "bound"])?;
        for &(t, e) in &self.samples {
            let bound = self
                .envelope
                .map_or(String::new(), |(k, c)| format!("{:.16e}", self.bound(k, c, t)));
            w.write_record([format!("{t:.16e}"), format!("{e:.16e}"), bound])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairRun {
    pub plant: Trajectory,
    pub observer: Trajectory,
    pub trace: ErrorTrace,
}

fn error_trace(plant: &Trajectory, observer: &Trajectory, kind: MeasureKind) -> ErrorTrace {
    let t0 = plant.t_start().unwrap_or(0.0);
    let mut samples = Vec::with_capacity(plant.samples.len());
    let mut j = 0;
    let mut e = vec![0.0; plant.dim];
    for s in &plant.samples {
        // Both runs share the sample grid; fall back to dense output for
        // event samples that only one side has.
        while j < observer.samples.len() && observer.samples[j].t < s.t {
            j += 1;
        }
        let xh = match observer.samples.get(j) {
            Some(o) if o.t == s.t => o.x.clone(),
            _ => observer.state_at(s.t).unwrap_or_else(|| vec![f64::NAN; plant.dim]),
        };
        for i in 0..e.len() {
            e[i] = s.x[i] - xh[i];
        }
        samples.push((s.t, vec_norm(kind, &e).unwrap_or(f64::NAN)));
    }
    ErrorTrace {
        kind,
        t0,
        samples,
        envelope: None,
        violations: Vec::new(),
    }
}

/// Simulate the observer's own plant model and the observer from `x0`, `x̂0`.
pub fn run_pair(
    obs: &ObserverSpec,
    x0: &[f64],
    xhat0: &[f64],
    cfg: &IntegratorConfig,
    kind: MeasureKind,
) -> Result<PairRun, ObserverError> {
    run_with_plant(obs.system(), obs, x0, xhat0, cfg, kind)
}

/// Like [`run_pair`] but with a separately supplied plant, e.g. one with
/// perturbed parameters.
pub fn run_with_plant(
    plant_sys: &BimodalSystem,
    obs: &ObserverSpec,
    x0: &[f64],
    xhat0: &[f64],
    cfg: &IntegratorConfig,
    kind: MeasureKind,
) -> Result<PairRun, ObserverError> {
    let n = obs.system().dim();
    if plant_sys.dim() != n || plant_sys.output_dim() != Some(obs.output_dim()) {
        return Err(ObserverError::Dimension(format!(
            "plant n = {}, p = {:?}; observer n = {n}, p = {}",
            plant_sys.dim(),
            plant_sys.output_dim(),
            obs.output_dim()
        )));
    }
    let plant = integrate(plant_sys, x0, cfg).map_err(|e| ObserverError::Plant(Box::new(e)))?;
    let rhs = ObserverRhs::new(obs, plant_sys, &plant);
    let observer = integrate(&rhs, xhat0, cfg).map_err(|e| ObserverError::Observer(Box::new(e)))?;
    let trace = error_trace(&plant, &observer, kind);
    Ok(PairRun { plant, observer, trace })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeReport {
    pub k: f64,
    pub c: f64,
    pub slack: f64,
    pub pass: bool,
    pub violations: Vec<Violation>,
    /// Smallest `K` for which the envelope at rate `c` holds on the samples;
    /// `None` when `|e(t0)| = 0`.
    pub fitted_k: Option<f64>,
}

impl EnvelopeReport {
    pub fn summary_line(&self) -> String {
        format!(
            "envelope K={} c={} slack={}: {} ({} violations), fitted K={}",
            self.k,
            self.c,
            self.slack,
            if self.pass { "pass" } else { "fail" },
            self.violations.len(),
            self.fitted_k.map_or("n/a".into(), |k| format!("{k:.6}"))
        )
    }
}

/// Flag samples with `|e(t)| > K e^{−c(t−t0)} |e(t0)| (1 + slack)`.
pub fn check_envelope(trace: &mut ErrorTrace, k: f64, c: f64, slack: f64) -> Result<EnvelopeReport, ObserverError> {
    if !(c > 0.0) || !(k >= 1.0) || !c.is_finite() || !k.is_finite() {
        return Err(ObserverError::Envelope { k, c });
    }
    let e0 = trace.e0();
    let mut violations = Vec::new();
    let mut fitted: f64 = 0.0;
    for &(t, err) in &trace.samples {
        let unit = (-c * (t - trace.t0)).exp() * e0;
        let bound = k * unit;
        if !(err <= bound * (1.0 + slack)) {
            violations.push(Violation { t, err, bound });
        }
        if unit > 0.0 {
            fitted = fitted.max(err / unit);
        }
    }
    trace.envelope = Some((k, c));
    trace.violations = violations.clone();
    Ok(EnvelopeReport {
        k,
        c,
        slack,
        pass: violations.is_empty(),
        violations,
        fitted_k: (e0 > 0.0).then_some(fitted),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceRow {
    /// Relative perturbation of the parameter.
    pub level: f64,
    pub value: f64,
    /// Sup of `|e|` over the second half of the horizon.
    pub tail_sup: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceReport {
    pub param: String,
    pub nominal: f64,
    pub e0: f64,
    /// Level 0 first, then the requested levels in order.
    pub rows: Vec<DisturbanceRow>,
    /// Envelope value at the start of the tail window, when an envelope was given.
    pub envelope_tail: Option<f64>,
    pub pass: bool,
    pub notes: Vec<String>,
}

/// Largest accepted ratio of tail sups between successive perturbation levels.
pub const TAIL_RATIO_LIMIT: f64 = 3.0;

/// Perturb one plant parameter by each relative `level` (the observer keeps
/// the nominal value) and report the tail sup of the estimation error.
/// Passes when every tail sup is finite, every perturbed one is below
/// `|e(t0)|`, and successive levels grow the tail sup by at most
/// [`TAIL_RATIO_LIMIT`].
#[allow(clippy::too_many_arguments)]
pub fn disturbance_study(
    obs: &ObserverSpec,
    param: &str,
    levels: &[f64],
    x0: &[f64],
    xhat0: &[f64],
    cfg: &IntegratorConfig,
    kind: MeasureKind,
    envelope: Option<(f64, f64)>,
) -> Result<DisturbanceReport, ObserverError> {
    let nominal = obs
        .system()
        .params()
        .get(param)
        .ok_or_else(|| ObserverError::Disturbance(format!("'{param}' is not a parameter of the plant")))?;
    if levels.is_empty() {
        return Err(ObserverError::Disturbance("no perturbation levels given".into()));
    }
    let mut all = vec![0.0];
    all.extend_from_slice(levels);
    let tail_from = cfg.t0 + 0.5 * (cfg.tf - cfg.t0);

    let runs: Vec<Result<(DisturbanceRow, f64), ObserverError>> = all
        .par_iter()
        .map(|&level| {
            let value = nominal * (1.0 + level);
            let plant = Arc::new(obs.system().with_params(&[(param.to_string(), value)])?);
            let run = run_with_plant(&plant, obs, x0, xhat0, cfg, kind)?;
            Ok((
                DisturbanceRow {
                    level,
                    value,
                    tail_sup: run.trace.sup_after(tail_from),
                },
                run.trace.e0(),
            ))
        })
        .collect();
    let mut rows = Vec::new();
    let mut e0 = 0.0;
    for r in runs {
        let (row, e) = r?;
        e0 = e;
        rows.push(row);
    }

    let mut notes = Vec::new();
    let mut pass = true;
    for r in &rows {
        if !r.tail_sup.is_finite() {
            notes.push(format!("level {}: tail sup is not finite", r.level));
            pass = false;
        } else if r.level != 0.0 && !(r.tail_sup < e0) {
            notes.push(format!("level {}: tail sup {} is not below |e(t0)| = {e0}", r.level, r.tail_sup));
            pass = false;
        }
    }
    for w in rows[1..].windows(2) {
        if w[0].tail_sup > 0.0 && w[1].tail_sup / w[0].tail_sup > TAIL_RATIO_LIMIT {
            notes.push(format!(
                "tail sup grows by {:.3}x from level {} to {}",
                w[1].tail_sup / w[0].tail_sup,
                w[0].level,
                w[1].level
            ));
            pass = false;
        }
    }
    let envelope_tail = envelope.map(|(k, c)| k * (-c * (tail_from - cfg.t0)).exp() * e0);
    if let (Some(env), Some(r0)) = (envelope_tail, rows.first()) {
        if r0.tail_sup > env {
            notes.push(format!("unperturbed tail sup {} exceeds the envelope {env}", r0.tail_sup));
        }
    }
    Ok(DisturbanceReport {
        param: param.to_string(),
        nominal,
        e0,
        rows,
        envelope_tail,
        pass,
        notes,
    })
}

impl DisturbanceReport {
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["level", "value", "tail_sup"])?;
        for r in &self.rows {
            w.write_record([
                format!("{:.16e}", r.level),
                format!("{:.16e}", r.value),
                format!("{:.16e}", r.tail_sup),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
