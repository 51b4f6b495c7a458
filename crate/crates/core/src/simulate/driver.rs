use crate::systems::Mode;

use super::rk::{Dopri5, PiController};
use super::{
    exit_status, normal_components, Event, EventKind, FilippovRhs, IntegratorConfig, ModeLabel, Sample, Segment,
    SimError, SimErrorKind, SlidingStatus, Trajectory,
};

const MAX_BISECTIONS: usize = 200;
const MAX_STALLED_EVENTS: usize = 50;

/// Integrate a Filippov system from `x0` over `cfg.t0..cfg.tf`.
pub fn integrate<R: FilippovRhs + ?Sized>(rhs: &R, x0: &[f64], cfg: &IntegratorConfig) -> Result<Trajectory, SimError> {
    Driver::new(rhs, cfg, true).run(x0)
}

/// Integrate a smooth system `x' = f(t, x)` with the same adaptive pair and
/// dense output, without any event handling. Samples are labelled `Plus`.
pub fn integrate_smooth<F>(f: F, x0: &[f64], cfg: &IntegratorConfig) -> Result<Trajectory, SimError>
where
    F: Fn(f64, &[f64], &mut [f64]) -> Result<(), SimErrorKind>,
{
    let rhs = SmoothRhs { n: x0.len(), f };
    Driver::new(&rhs, cfg, false).run(x0)
}

struct SmoothRhs<F> {
    n: usize,
    f: F,
}

impl<F> FilippovRhs for SmoothRhs<F>
where
    F: Fn(f64, &[f64], &mut [f64]) -> Result<(), SimErrorKind>,
{
    fn dim(&self) -> usize {
        self.n
    }
    fn field(&self, _mode: Mode, x: &[f64], t: f64, out: &mut [f64]) -> Result<(), SimErrorKind> {
        (self.f)(t, x, out)
    }
    fn h(&self, _x: &[f64]) -> Result<f64, SimErrorKind> {
        Ok(1.0)
    }
    fn grad_h(&self, _x: &[f64], out: &mut [f64]) -> Result<(), SimErrorKind> {
        out.iter_mut().for_each(|o| *o = 0.0);
        Ok(())
    }
}

struct Driver<'a, R: ?Sized> {
    rhs: &'a R,
    cfg: &'a IntegratorConfig,
    events_enabled: bool,
    traj: Trajectory,
    next_sample: u64,
}

fn is_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

impl<'a, R: FilippovRhs + ?Sized> Driver<'a, R> {
    fn new(rhs: &'a R, cfg: &'a IntegratorConfig, events_enabled: bool) -> Self {
        Self {
            rhs,
            cfg,
            events_enabled,
            traj: Trajectory {
                dim: rhs.dim(),
                ..Default::default()
            },
            next_sample: 1,
        }
    }

    fn fail(&mut self, t: f64, kind: SimErrorKind) -> SimError {
        SimError {
            t,
            kind,
            partial: Box::new(std::mem::take(&mut self.traj)),
        }
    }

    fn active(&self, mode: ModeLabel, x: &[f64], t: f64, out: &mut [f64]) -> Result<(), SimErrorKind> {
        match mode {
            ModeLabel::Plus => self.rhs.field(Mode::Plus, x, t, out),
            ModeLabel::Minus => self.rhs.field(Mode::Minus, x, t, out),
            ModeLabel::Sliding => {
                let nc = normal_components(self.rhs, x, t)?;
                let alpha = nc.alpha().ok_or(SimErrorKind::DegenerateSliding)?;
                nc.combine(alpha.clamp(0.0, 1.0), out);
                Ok(())
            }
        }
    }

    /// Newton steps on `h` along `∇h`.
    fn project(&self, x: &mut [f64], iterations: usize) -> Result<(), SimErrorKind> {
        let mut grad = vec![0.0; x.len()];
        for _ in 0..iterations {
            let hv = self.rhs.h(x)?;
            if hv == 0.0 {
                break;
            }
            self.rhs.grad_h(x, &mut grad)?;
            let g2: f64 = grad.iter().map(|g| g * g).sum();
            if g2 == 0.0 {
                break;
            }
            for (xi, gi) in x.iter_mut().zip(&grad) {
                *xi -= hv * gi / g2;
            }
        }
        Ok(())
    }

    /// Decide the mode at a point on `Σ` from the normal components.
    /// `forced` marks a no-progress event: the field of `from` is taken to
    /// point into `Σ` whatever its sign.
    fn classify(
        &self,
        x: &[f64],
        t: f64,
        from: Option<ModeLabel>,
        forced: bool,
    ) -> Result<(ModeLabel, EventKind), SimErrorKind> {
        let nc = normal_components(self.rhs, x, t)?;
        let norm = |v: &[f64]| v.iter().fold(0.0_f64, |a, b| a.max(b.abs()));
        let zero = 1e-12 * norm(&nc.grad).max(1e-300) * norm(&nc.f_plus).max(norm(&nc.f_minus)).max(1.0);
        let sign = |v: f64| {
            if v > zero {
                1
            } else if v < -zero {
                -1
            } else {
                0
            }
        };
        let mut sp = sign(nc.sigma_plus);
        let mut sm = sign(nc.sigma_minus);
        let mut grazing = false;
        // Second-order test: look at the normal component a short way along
        // the tangent field.
        let delta = 1e-6;
        let mut probe = vec![0.0; x.len()];
        let mut grad = vec![0.0; x.len()];
        let mut f = vec![0.0; x.len()];
        for (mode, s) in [(Mode::Plus, &mut sp), (Mode::Minus, &mut sm)] {
            if *s != 0 {
                continue;
            }
            grazing = true;
            let field = if mode == Mode::Plus { &nc.f_plus } else { &nc.f_minus };
            for i in 0..x.len() {
                probe[i] = x[i] + delta * field[i];
            }
            self.rhs.field(mode, &probe, t + delta, &mut f)?;
            self.rhs.grad_h(&probe, &mut grad)?;
            *s = sign(grad.iter().zip(&f).map(|(a, b)| a * b).sum());
        }
        if forced {
            match from {
                Some(ModeLabel::Plus) => sp = -1,
                Some(ModeLabel::Minus) => sm = 1,
                _ => {}
            }
        }
        let to = match (sp, sm) {
            (-1, 1) => ModeLabel::Sliding,
            (1, 1) | (1, 0) | (0, 1) => ModeLabel::Plus,
            (-1, -1) | (-1, 0) | (0, -1) => ModeLabel::Minus,
            (1, -1) => {
                if nc.sigma_plus >= -nc.sigma_minus {
                    ModeLabel::Plus
                } else {
                    ModeLabel::Minus
                }
            }
            _ => match from {
                Some(ModeLabel::Minus) => ModeLabel::Minus,
                _ => ModeLabel::Plus,
            },
        };
        let kind = match (to, from) {
            (ModeLabel::Sliding, _) => EventKind::SlidingEntry,
            _ if grazing => EventKind::Grazing,
            (to, Some(from)) if to == from => EventKind::Grazing,
            _ => EventKind::Crossing,
        };
        Ok((to, kind))
    }

    fn push_sample(&mut self, t: f64, x: Vec<f64>, mode: ModeLabel) {
        if self.traj.samples.last().is_some_and(|s| s.t >= t) {
            return;
        }
        self.traj.samples.push(Sample { t, x, mode });
    }

    /// Grid samples inside `(seg.t0, seg.t1]`, then store the segment.
    fn commit(&mut self, seg: Segment) -> Result<(), SimErrorKind> {
        let dt = self.cfg.sample_interval;
        let end_guard = 1e-9 * dt;
        loop {
            let tk = self.cfg.t0 + self.next_sample as f64 * dt;
            if tk > seg.t1 || tk >= self.cfg.tf - end_guard {
                break;
            }
            let mut x = vec![0.0; self.traj.dim];
            seg.interpolate(tk, &mut x);
            if seg.mode == ModeLabel::Sliding {
                self.project(&mut x, 1)?;
            }
            self.push_sample(tk, x, seg.mode);
            self.next_sample += 1;
        }
        if seg.t1 > seg.t0 {
            self.traj.segments.push(seg);
        }
        Ok(())
    }

    fn run(mut self, x0: &[f64]) -> Result<Trajectory, SimError> {
        let cfg = self.cfg;
        if let Err(msg) = cfg.validate() {
            return Err(self.fail(cfg.t0, SimErrorKind::Config(msg)));
        }
        let n = self.rhs.dim();
        if x0.len() != n {
            return Err(self.fail(
                cfg.t0,
                SimErrorKind::Dimension {
                    expected: n,
                    got: x0.len(),
                },
            ));
        }
        if !is_finite(x0) {
            return Err(self.fail(cfg.t0, SimErrorKind::NonFinite));
        }
        match self.run_inner(x0) {
            Ok(()) => Ok(self.traj),
            Err((t, kind)) => Err(self.fail(t, kind)),
        }
    }

    fn run_inner(&mut self, x0: &[f64]) -> Result<(), (f64, SimErrorKind)> {
        let cfg = self.cfg;
        let n = x0.len();
        let mut t = cfg.t0;
        let mut x = x0.to_vec();

        let mut mode = ModeLabel::Plus;
        if self.events_enabled {
            let h0 = self.rhs.h(&x).map_err(|e| (t, e))?;
            mode = if h0 > cfg.tol_event {
                ModeLabel::Plus
            } else if h0 < -cfg.tol_event {
                ModeLabel::Minus
            } else {
                let (to, _) = self.classify(&x, t, None, false).map_err(|e| (t, e))?;
                if to == ModeLabel::Sliding {
                    self.project(&mut x, 3).map_err(|e| (t, e))?;
                    self.traj.events.push(Event {
                        t,
                        kind: EventKind::SlidingEntry,
                        x: x.clone(),
                        from: to,
                        to,
                    });
                }
                to
            };
        }
        self.push_sample(t, x.clone(), mode);

        let mut breakpoints: Vec<f64> = self
            .rhs
            .breakpoints()
            .into_iter()
            .filter(|b| *b > cfg.t0 && *b < cfg.tf)
            .collect();
        breakpoints.sort_by(f64::total_cmp);
        breakpoints.dedup();
        let mut next_bp = 0usize;

        let mut f = vec![0.0; n];
        self.active(mode, &x, t, &mut f).map_err(|e| (t, e))?;

        let mut rk = Dopri5::new(n);
        let mut ctrl = PiController::new();
        let mut h = initial_step(&x, &f, cfg);
        let mut stalled = 0usize;
        let mut last_event_t = f64::NEG_INFINITY;

        while t < cfg.tf {
            let remaining = cfg.tf - t;
            let hmin = 1e-14 * t.abs().max(1.0);
            if remaining <= hmin {
                break;
            }
            while next_bp < breakpoints.len() && breakpoints[next_bp] <= t {
                next_bp += 1;
            }
            let mut target = cfg.tf;
            if next_bp < breakpoints.len() {
                target = breakpoints[next_bp];
            }
            h = h.min(cfg.max_step);
            let lands = h >= target - t;
            if lands {
                h = target - t;
            }
            if h < hmin {
                return Err((t, SimErrorKind::StepUnderflow));
            }

            let mut field = |tt: f64, xx: &[f64], out: &mut [f64]| self.active(mode, xx, tt, out);
            let step = rk
                .step(&mut field, t, &x, &f, h, cfg.rel_tol, cfg.abs_tol)
                .map_err(|e| (t, e))?;
            if !step.err.is_finite() || !is_finite(&step.x_new) {
                h *= 0.2;
                if h < hmin {
                    return Err((t, SimErrorKind::NonFinite));
                }
                continue;
            }
            if step.err > 1.0 {
                h *= ctrl.reject(step.err);
                continue;
            }

            let t_new = if lands { target } else { t + h };
            let mut x_new = step.x_new;
            let mut f_new = step.f_new;
            if mode == ModeLabel::Sliding {
                self.project(&mut x_new, 1).map_err(|e| (t_new, e))?;
                self.active(mode, &x_new, t_new, &mut f_new).map_err(|e| (t_new, e))?;
            }
            let fac = ctrl.accept(step.err);
            let seg = Segment {
                t0: t,
                t1: t_new,
                x0: x.clone(),
                x1: x_new.clone(),
                f0: f.clone(),
                f1: f_new.clone(),
                dense: step.dense,
                mode,
            };

            let triggered = self.events_enabled && self.event_triggered(mode, &x_new, t_new).map_err(|e| (t_new, e))?;
            if !triggered {
                self.commit(seg).map_err(|e| (t_new, e))?;
                t = t_new;
                x = x_new;
                f = f_new;
                h *= fac;
                continue;
            }

            // Locate and handle the event inside this step.
            let located = self.locate(&seg).map_err(|e| (t, e))?;
            let (tau, mut x_tau, forced) = match located {
                Some((tau, x_tau)) => (tau, x_tau, false),
                None => (t, x.clone(), true),
            };
            if tau > t {
                let mut f_tau = vec![0.0; n];
                self.active(mode, &x_tau, tau, &mut f_tau).map_err(|e| (tau, e))?;
                let truncated = Segment {
                    t0: t,
                    t1: tau,
                    x0: x.clone(),
                    x1: x_tau.clone(),
                    f0: f.clone(),
                    f1: f_tau,
                    dense: Vec::new(),
                    mode,
                };
                self.commit(truncated).map_err(|e| (tau, e))?;
            }

            let (to, kind) = if mode == ModeLabel::Sliding {
                let nc = normal_components(self.rhs, &x_tau, tau).map_err(|e| (tau, e))?;
                let to = match exit_status(nc.sigma_plus, nc.sigma_minus) {
                    SlidingStatus::ExitMinus => ModeLabel::Minus,
                    _ => ModeLabel::Plus,
                };
                (to, EventKind::SlidingExit)
            } else {
                self.classify(&x_tau, tau, Some(mode), forced).map_err(|e| (tau, e))?
            };
            if to == ModeLabel::Sliding {
                self.project(&mut x_tau, 3).map_err(|e| (tau, e))?;
            }
            log::trace!("event {kind:?} at t = {tau:.12e}: {mode:?} -> {to:?}");
            self.traj.events.push(Event {
                t: tau,
                kind,
                x: x_tau.clone(),
                from: mode,
                to,
            });
            if self.traj.events.len() > cfg.max_events {
                return Err((tau, SimErrorKind::TooManyEvents(cfg.max_events)));
            }
            if tau - last_event_t <= 1e-14 * tau.abs().max(1.0) {
                stalled += 1;
                if stalled > MAX_STALLED_EVENTS {
                    return Err((tau, SimErrorKind::Stalled));
                }
            } else {
                stalled = 0;
            }
            last_event_t = tau;

            mode = to;
            t = tau;
            x = x_tau;
            self.active(mode, &x, t, &mut f).map_err(|e| (t, e))?;
            self.push_sample(t, x.clone(), mode);
            h = h.max(1e3 * hmin);
        }

        let mut xf = x.clone();
        if let Some(seg) = self.traj.segments.last() {
            if seg.t1 >= cfg.tf - 1e-12 * cfg.tf.abs().max(1.0) {
                xf = seg.x1.clone();
            }
        }
        self.push_sample(cfg.tf, xf, mode);
        Ok(())
    }

    fn event_triggered(&self, mode: ModeLabel, x_new: &[f64], t_new: f64) -> Result<bool, SimErrorKind> {
        Ok(match mode {
            ModeLabel::Plus => self.rhs.h(x_new)? <= 0.0,
            ModeLabel::Minus => self.rhs.h(x_new)? >= 0.0,
            ModeLabel::Sliding => {
                let nc = normal_components(self.rhs, x_new, t_new)?;
                exit_status(nc.sigma_plus, nc.sigma_minus) != SlidingStatus::Stay
            }
        })
    }

    /// Locate the event in `seg` by bisection on its Hermite interpolant.
    /// Returns `None` when the step starts outside its own region, i.e. the
    /// event is at `seg.t0`.
    fn locate(&self, seg: &Segment) -> Result<Option<(f64, Vec<f64>)>, SimErrorKind> {
        let n = seg.x0.len();
        let mut buf = vec![0.0; n];
        let tol = self.cfg.tol_event;
        match seg.mode {
            ModeLabel::Plus | ModeLabel::Minus => {
                let s = if seg.mode == ModeLabel::Plus { 1.0 } else { -1.0 };
                let inside = |tau: f64, buf: &mut Vec<f64>| -> Result<(bool, f64), SimErrorKind> {
                    seg.interpolate(tau, buf);
                    let hv = self.rhs.h(buf)?;
                    Ok((s * hv > 0.0, hv))
                };
                let mut a = seg.t0;
                if !inside(a, &mut buf)?.0 {
                    // Started on Σ: find an interior point that left it.
                    let probe = (1..16)
                        .map(|k| seg.t0 + (seg.t1 - seg.t0) * k as f64 / 16.0)
                        .find(|&tau| matches!(inside(tau, &mut buf), Ok((true, _))));
                    match probe {
                        Some(tau) => a = tau,
                        None => return Ok(None),
                    }
                }
                let mut b = seg.t1;
                let mut hb = inside(b, &mut buf)?.1;
                for _ in 0..MAX_BISECTIONS {
                    if hb.abs() <= tol || b - a <= 4.0 * f64::EPSILON * b.abs().max(1.0) {
                        break;
                    }
                    let mid = 0.5 * (a + b);
                    let (ins, hm) = inside(mid, &mut buf)?;
                    if ins {
                        a = mid;
                    } else {
                        b = mid;
                        hb = hm;
                    }
                }
                let mut x = vec![0.0; n];
                seg.interpolate(b, &mut x);
                if self.rhs.h(&x)?.abs() > tol {
                    self.project(&mut x, 3)?;
                }
                Ok(Some((b, x)))
            }
            ModeLabel::Sliding => {
                let exit_fn = |tau: f64, buf: &mut Vec<f64>| -> Result<f64, SimErrorKind> {
                    seg.interpolate(tau, buf);
                    self.project(buf, 1)?;
                    let nc = normal_components(self.rhs, buf, tau)?;
                    Ok(nc.sigma_minus.min(-nc.sigma_plus))
                };
                if exit_fn(seg.t0, &mut buf)? <= 0.0 {
                    return Ok(None);
                }
                let (mut a, mut b) = (seg.t0, seg.t1);
                for _ in 0..MAX_BISECTIONS {
                    if b - a <= tol {
                        break;
                    }
                    let mid = 0.5 * (a + b);
                    if exit_fn(mid, &mut buf)? > 0.0 {
                        a = mid;
                    } else {
                        b = mid;
                    }
                }
                let mut x = vec![0.0; n];
                seg.interpolate(b, &mut x);
                self.project(&mut x, 3)?;
                Ok(Some((b, x)))
            }
        }
    }
}

fn initial_step(x: &[f64], f: &[f64], cfg: &IntegratorConfig) -> f64 {
    let scale = |v: &[f64]| {
        let acc: f64 = v
            .iter()
            .zip(x)
            .map(|(vi, xi)| {
                let sc = cfg.abs_tol + cfg.rel_tol * xi.abs();
                (vi / sc) * (vi / sc)
            })
            .sum();
        (acc / v.len().max(1) as f64).sqrt()
    };
    let d0 = scale(x);
    let d1 = scale(f);
    let h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h.min(cfg.max_step).min(cfg.tf - cfg.t0).max(1e-10)
}
