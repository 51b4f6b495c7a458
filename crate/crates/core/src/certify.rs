//! Matrix-measure contraction checks for a plant and for a switched observer.
//!
//! For each mode the worst measure of the (error) Jacobian over the sampled
//! closure `S̄±` gives `c1`, `c2`; on `Σ` the measure of the rank-one matrix
//! `v ∇hᵀ` must not exceed `sliding_tol`. Nonlinear systems are sampled on a
//! grid, so "certified" means certified at the sampled points. Systems built
//! from raw PWA matrices can be checked without sampling.

use std::fmt;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

use crate::config::CertifySection;
use crate::measures::{measure, MeasureError, MeasureKind};
use crate::systems::{BimodalSystem, Mode, ObserverSpec, SystemError, TOL_H};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CertifyError {
    #[error("invalid sampling region: {0}")]
    Region(String),
    #[error("observer check needs an output range for y")]
    NoOutputRange,
    #[error("exact check needs a system built from PWA matrices")]
    NotPwa,
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    System(#[from] SystemError),
}

/// Box and grid over which the conditions are sampled.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingRegion {
    /// One `[lo, hi]` per state.
    pub region: Vec<[f64; 2]>,
    /// One `[lo, hi]` per output, for the observer surface condition.
    pub output_range: Option<Vec<[f64; 2]>>,
    /// Points per axis, for states and outputs alike.
    pub grid: usize,
    pub sliding_tol: f64,
    /// Time at which explicitly time-dependent Jacobians are evaluated.
    pub t_eval: f64,
}

impl SamplingRegion {
    pub fn new(region: Vec<[f64; 2]>, output_range: Option<Vec<[f64; 2]>>, grid: usize) -> Self {
        Self {
            region,
            output_range,
            grid,
            sliding_tol: 1e-9,
            t_eval: 0.0,
        }
    }

    pub fn from_section(s: &CertifySection) -> Self {
        Self {
            region: s.region.clone(),
            output_range: s.output_range.clone(),
            grid: s.grid,
            sliding_tol: s.sliding_tol,
            t_eval: s.t_eval,
        }
    }

    fn validate(&self, n: usize) -> Result<(), CertifyError> {
        if self.region.len() != n {
            return Err(CertifyError::Region(format!(
                "{} intervals for a {n}-dimensional state",
                self.region.len()
            )));
        }
        if self.grid < 2 {
            return Err(CertifyError::Region("grid must have at least 2 points per axis".into()));
        }
        let all = self.region.iter().chain(self.output_range.iter().flatten());
        for [lo, hi] in all {
            if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(CertifyError::Region(format!("bad interval [{lo}, {hi}]")));
            }
        }
        if !(self.sliding_tol >= 0.0) {
            return Err(CertifyError::Region("sliding_tol must be nonnegative".into()));
        }
        Ok(())
    }
}

fn axis(lo: f64, hi: f64, k: usize, g: usize) -> f64 {
    if k + 1 == g {
        hi
    } else {
        lo + (hi - lo) * k as f64 / (g - 1) as f64
    }
}

/// All points of a tensor grid, first coordinate fastest.
fn grid_points(bounds: &[[f64; 2]], g: usize) -> Vec<Vec<f64>> {
    let total = g.pow(bounds.len() as u32);
    (0..total)
        .map(|mut idx| {
            bounds
                .iter()
                .map(|[lo, hi]| {
                    let k = idx % g;
                    idx /= g;
                    axis(*lo, *hi, k, g)
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Certified,
    Falsified,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Certified => "certified",
            Verdict::Falsified => "falsified",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subject {
    Plant,
    Observer,
    PwaExact,
}

impl Subject {
    pub fn as_str(self) -> &'static str {
        match self {
            Subject::Plant => "plant",
            Subject::Observer => "observer",
            Subject::PwaExact => "pwa-exact",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SampleCounts {
    pub plus: usize,
    pub minus: usize,
    pub sigma: usize,
    /// Output grid points per `Σ` sample (observer only).
    pub outputs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub subject: Subject,
    pub kind: MeasureKind,
    pub c1: f64,
    pub c2: f64,
    pub rate: f64,
    /// Largest measure of the surface matrix over the samples.
    pub sliding_residual: f64,
    /// Smallest one, reported to show whether it ever drops below `−sliding_tol`.
    pub sliding_min: f64,
    pub sliding_tol: f64,
    pub verdict: Verdict,
    pub counts: SampleCounts,
    /// `None` for checks that did not sample.
    pub sampling: Option<SamplingRegion>,
    /// Points attaining the worst values in `S̄+`, `S̄−` and on `Σ`.
    pub worst_plus: Option<Vec<f64>>,
    pub worst_minus: Option<Vec<f64>>,
    pub worst_sigma: Option<Vec<f64>>,
    pub diagnostics: Vec<String>,
}

/// Largest value and its index; NaN counts as +∞. Ties keep the first index.
fn argmax(values: &[f64]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        let v = if v.is_nan() { f64::INFINITY } else { v };
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best
}

fn decide(c1: f64, c2: f64, residual: f64, tol: f64, counts: &SampleCounts, diag: &mut Vec<String>) -> Verdict {
    let mut falsified = false;
    if counts.plus > 0 && !(c1 > 0.0) {
        diag.push(format!("mode + is not contracting on the samples (c1 = {c1})"));
        falsified = true;
    }
    if counts.minus > 0 && !(c2 > 0.0) {
        diag.push(format!("mode - is not contracting on the samples (c2 = {c2})"));
        falsified = true;
    }
    if counts.sigma > 0 && !(residual <= tol) {
        diag.push(format!("surface condition violated: measure {residual} > {tol}"));
        falsified = true;
    }
    if falsified {
        return Verdict::Falsified;
    }
    let mut empty = false;
    for (label, c) in [("S+", counts.plus), ("S-", counts.minus), ("the switching surface", counts.sigma)] {
        if c == 0 {
            diag.push(format!("no samples in {label}"));
            empty = true;
        }
    }
    if empty {
        Verdict::Inconclusive
    } else {
        Verdict::Certified
    }
}

/// Grid points of the region split by side, plus points on `Σ`: grid points
/// with `|h| ≤ TOL_H` and bisection roots on grid edges where `h` changes sign.
struct Partition {
    plus: Vec<Vec<f64>>,
    minus: Vec<Vec<f64>>,
    sigma: Vec<Vec<f64>>,
}

fn partition(sys: &BimodalSystem, s: &SamplingRegion) -> Result<Partition, CertifyError> {
    let n = sys.dim();
    let g = s.grid;
    let pts = grid_points(&s.region, g);
    let hs: Vec<f64> = pts.iter().map(|x| sys.h(x)).collect::<Result<_, _>>().map_err(SystemError::from)?;
    let mut part = Partition {
        plus: Vec::new(),
        minus: Vec::new(),
        sigma: Vec::new(),
    };
    for (x, &h) in pts.iter().zip(&hs) {
        if h.abs() <= TOL_H {
            part.sigma.push(x.clone());
        } else if h > 0.0 {
            part.plus.push(x.clone());
        } else {
            part.minus.push(x.clone());
        }
    }
    let mut stride = 1;
    for d in 0..n {
        for (i, x) in pts.iter().enumerate() {
            let k = (i / stride) % g;
            if k + 1 == g {
                continue;
            }
            let j = i + stride;
            let (ha, hb) = (hs[i], hs[j]);
            if ha.abs() <= TOL_H || hb.abs() <= TOL_H || (ha > 0.0) == (hb > 0.0) {
                continue;
            }
            let (mut a, mut b) = (x[d], pts[j][d]);
            let mut p = x.clone();
            let sa = ha > 0.0;
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                p[d] = mid;
                let hm = sys.h(&p).map_err(SystemError::from)?;
                if hm.abs() <= 1e-3 * TOL_H || mid == a || mid == b {
                    break;
                }
                if (hm > 0.0) == sa {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            part.sigma.push(p);
        }
        stride *= g;
    }
    Ok(part)
}

/// Rank-one surface matrix `v ∇hᵀ`.
fn outer(v: &DVector<f64>, grad: &DVector<f64>) -> DMatrix<f64> {
    v * grad.transpose()
}

struct Worst {
    c: f64,
    at: Option<Vec<f64>>,
}

fn worst_over<F>(points: &[Vec<f64>], f: F) -> Result<Worst, CertifyError>
where
    F: Fn(&[f64]) -> Result<f64, CertifyError> + Sync,
{
    let vals: Vec<f64> = points.par_iter().map(|x| f(x)).collect::<Result<_, _>>()?;
    Ok(match argmax(&vals) {
        Some((i, v)) => Worst {
            c: -v,
            at: Some(points[i].clone()),
        },
        None => Worst { c: f64::INFINITY, at: None },
    })
}

/// Sampled check of the plant's own contraction conditions.
pub fn certify_plant(sys: &BimodalSystem, kind: MeasureKind, s: &SamplingRegion) -> Result<Certificate, CertifyError> {
    s.validate(sys.dim())?;
    let part = partition(sys, s)?;
    let t = s.t_eval;
    let closure = |side: &[Vec<f64>]| -> Vec<Vec<f64>> { side.iter().chain(&part.sigma).cloned().collect() };
    let plus = closure(&part.plus);
    let minus = closure(&part.minus);
    let wp = worst_over(&plus, |x| Ok(measure(kind, &sys.jacobian(Mode::Plus, x, t)?)?))?;
    let wm = worst_over(&minus, |x| Ok(measure(kind, &sys.jacobian(Mode::Minus, x, t)?)?))?;
    let sig: Vec<f64> = part
        .sigma
        .par_iter()
        .map(|x| -> Result<f64, CertifyError> {
            let df = sys.eval_field(Mode::Plus, x, t)? - sys.eval_field(Mode::Minus, x, t)?;
            let grad = sys.grad_h(x).map_err(SystemError::from)?;
            Ok(measure(kind, &outer(&df, &grad))?)
        })
        .collect::<Result<_, _>>()?;
    let counts = SampleCounts {
        plus: plus.len(),
        minus: minus.len(),
        sigma: part.sigma.len(),
        outputs: 0,
    };
    Ok(assemble(Subject::Plant, kind, wp, wm, &sig, &part.sigma, 1, counts, Some(s.clone())))
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    subject: Subject,
    kind: MeasureKind,
    wp: Worst,
    wm: Worst,
    sig: &[f64],
    sigma_pts: &[Vec<f64>],
    per_point: usize,
    counts: SampleCounts,
    sampling: Option<SamplingRegion>,
) -> Certificate {
    let tol = sampling.as_ref().map_or(1e-9, |s| s.sliding_tol);
    let (residual, worst_sigma) = match argmax(sig) {
        Some((i, v)) => (v, sigma_pts.get(i / per_point.max(1)).cloned()),
        None => (f64::NEG_INFINITY, None),
    };
    let sliding_min = sig.iter().copied().fold(f64::INFINITY, f64::min);
    let mut diagnostics = Vec::new();
    let verdict = decide(wp.c, wm.c, residual, tol, &counts, &mut diagnostics);
    if sliding_min < -tol {
        diagnostics.push(format!("surface matrix measure drops to {sliding_min} < -sliding_tol"));
    }
    Certificate {
        subject,
        kind,
        c1: wp.c,
        c2: wm.c,
        rate: wp.c.min(wm.c),
        sliding_residual: residual,
        sliding_min,
        sliding_tol: tol,
        verdict,
        counts,
        sampling,
        worst_plus: wp.at,
        worst_minus: wm.at,
        worst_sigma,
        diagnostics,
    }
}

/// Sampled check of the observer conditions: error Jacobians on `S̄±` and
/// the surface matrix `[Δf(x̂) + ΔL(y − g(x̂))]∇h(x̂)ᵀ` for every sampled
/// `x̂ ∈ Σ` and `y` in the output box.
pub fn certify_observer(obs: &ObserverSpec, kind: MeasureKind, s: &SamplingRegion) -> Result<Certificate, CertifyError> {
    let sys = obs.system();
    s.validate(sys.dim())?;
    let out_box = s.output_range.as_ref().ok_or(CertifyError::NoOutputRange)?;
    let p = obs.output_dim();
    if out_box.len() != p {
        return Err(CertifyError::Region(format!(
            "{} output intervals for {p} outputs",
            out_box.len()
        )));
    }
    let part = partition(sys, s)?;
    let t = s.t_eval;
    let closure = |side: &[Vec<f64>]| -> Vec<Vec<f64>> { side.iter().chain(&part.sigma).cloned().collect() };
    let plus = closure(&part.plus);
    let minus = closure(&part.minus);
    let wp = worst_over(&plus, |x| Ok(measure(kind, &obs.error_jacobian(Mode::Plus, x, t)?)?))?;
    let wm = worst_over(&minus, |x| Ok(measure(kind, &obs.error_jacobian(Mode::Minus, x, t)?)?))?;

    let ys = grid_points(out_box, s.grid);
    let dl = obs.gain(Mode::Plus) - obs.gain(Mode::Minus);
    let per_point: Vec<Vec<f64>> = part
        .sigma
        .par_iter()
        .map(|x| -> Result<Vec<f64>, CertifyError> {
            let df = sys.eval_field(Mode::Plus, x, t)? - sys.eval_field(Mode::Minus, x, t)?;
            let grad = sys.grad_h(x).map_err(SystemError::from)?;
            let yhat = sys.output(x)?;
            ys.iter()
                .map(|y| {
                    let innov = DVector::from_column_slice(y) - &yhat;
                    let v = &df + &dl * innov;
                    Ok(measure(kind, &outer(&v, &grad))?)
                })
                .collect()
        })
        .collect::<Result<_, _>>()?;
    let sig: Vec<f64> = per_point.into_iter().flatten().collect();
    let counts = SampleCounts {
        plus: plus.len(),
        minus: minus.len(),
        sigma: part.sigma.len(),
        outputs: ys.len(),
    };
    Ok(assemble(Subject::Observer, kind, wp, wm, &sig, &part.sigma, ys.len(), counts, Some(s.clone())))
}

/// Vertices of `{x ∈ box : nᵀx + offset = 0}`.
fn hyperplane_box_vertices(normal: &DVector<f64>, offset: f64, bounds: &[[f64; 2]]) -> Vec<Vec<f64>> {
    let n = bounds.len();
    let mut out: Vec<Vec<f64>> = Vec::new();
    let push = |out: &mut Vec<Vec<f64>>, p: Vec<f64>| {
        if !out.iter().any(|q| q.iter().zip(&p).all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + a.abs()))) {
            out.push(p);
        }
    };
    for free in 0..n {
        for mask in 0..(1usize << (n - 1)) {
            let mut p = vec![0.0; n];
            let mut bit = 0;
            for (d, [lo, hi]) in bounds.iter().enumerate() {
                if d == free {
                    continue;
                }
                p[d] = if mask >> bit & 1 == 1 { *hi } else { *lo };
                bit += 1;
            }
            let rest: f64 = (0..n).filter(|&d| d != free).map(|d| normal[d] * p[d]).sum::<f64>() + offset;
            let [lo, hi] = bounds[free];
            if normal[free] == 0.0 {
                if rest.abs() <= TOL_H {
                    p[free] = lo;
                    push(&mut out, p.clone());
                    p[free] = hi;
                    push(&mut out, p);
                }
                continue;
            }
            let v = -rest / normal[free];
            if v >= lo - 1e-12 * (1.0 + lo.abs()) && v <= hi + 1e-12 * (1.0 + hi.abs()) {
                p[free] = v.clamp(lo, hi);
                push(&mut out, p);
            }
        }
    }
    out
}

/// Exact check for observers of systems built from PWA matrices: measures of
/// the constant matrices `A± − L±C`. The surface matrix is affine in
/// `(x̂, y)` and the measure is convex, so its maximum over `Σ ∩ box` times
/// the output box sits at a vertex. When `L+ = L−` and every row of
/// `A+ − A−` is a multiple of the normal, it is one constant matrix on `Σ`
/// and no region is needed.
pub fn certify_pwa_exact(
    obs: &ObserverSpec,
    kind: MeasureKind,
    region: Option<&SamplingRegion>,
) -> Result<Certificate, CertifyError> {
    let sys = obs.system();
    let m = sys.pwa_matrices().ok_or(CertifyError::NotPwa)?;
    let c = m.output.as_ref().ok_or(SystemError::NoOutput)?;
    let (lp, lm) = (obs.gain(Mode::Plus), obs.gain(Mode::Minus));
    let jp = &m.a_plus - lp * c;
    let jm = &m.a_minus - lm * c;
    let mu_p = measure(kind, &jp)?;
    let mu_m = measure(kind, &jm)?;

    let da = &m.a_plus - &m.a_minus;
    let db = &m.b_plus - &m.b_minus;
    let dl = lp - lm;
    let grad = &m.normal;
    let tol = region.map_or(1e-9, |r| r.sliding_tol);
    let mut diagnostics = Vec::new();

    // On Σ, ΔA x̂ is constant when every row of ΔA is a multiple of the normal.
    let nn = grad.norm_squared();
    let w = &da * grad / nn;
    let off_plane = &da - &w * grad.transpose();
    let scale = da.amax().max(1.0);
    let constant = nn > 0.0 && off_plane.amax() <= 1e-14 * scale && dl.iter().all(|v| *v == 0.0);
    let (sig, pts): (Vec<f64>, Vec<Vec<f64>>) = if constant {
        let v = &w * (-m.offset) + &db;
        (vec![measure(kind, &outer(&v, grad))?], vec![])
    } else {
        let r = region.ok_or_else(|| {
            CertifyError::Region("surface condition depends on the state or output; a region is required".into())
        })?;
        r.validate(sys.dim())?;
        let out_box = r.output_range.as_ref().ok_or(CertifyError::NoOutputRange)?;
        let xs = hyperplane_box_vertices(grad, m.offset, &r.region);
        let ys = grid_points(out_box, 2);
        let mut vals = Vec::new();
        let mut at = Vec::new();
        for x in &xs {
            let xv = DVector::from_column_slice(x);
            for y in &ys {
                let innov = DVector::from_column_slice(y) - c * &xv;
                let v = &da * &xv + &db + &dl * innov;
                vals.push(measure(kind, &outer(&v, grad))?);
                at.push(x.clone());
            }
        }
        if xs.is_empty() {
            diagnostics.push("switching surface does not meet the region".into());
        }
        (vals, at)
    };
    let (residual, worst_sigma) = match argmax(&sig) {
        Some((i, v)) => (v, pts.get(i).cloned()),
        None => (f64::NEG_INFINITY, None),
    };
    let sliding_min = sig.iter().copied().fold(f64::INFINITY, f64::min);
    let counts = SampleCounts {
        plus: 1,
        minus: 1,
        sigma: sig.len(),
        outputs: 0,
    };
    let verdict = decide(-mu_p, -mu_m, residual, tol, &counts, &mut diagnostics);
    Ok(Certificate {
        subject: Subject::PwaExact,
        kind,
        c1: -mu_p,
        c2: -mu_m,
        rate: (-mu_p).min(-mu_m),
        sliding_residual: residual,
        sliding_min,
        sliding_tol: tol,
        verdict,
        counts,
        sampling: None,
        worst_plus: None,
        worst_minus: None,
        worst_sigma,
        diagnostics,
    })
}

fn fmt_box(b: &[[f64; 2]]) -> String {
    b.iter().map(|[lo, hi]| format!("[{lo}, {hi}]")).collect::<Vec<_>>().join(" x ")
}

impl Certificate {
    pub fn is_certified(&self) -> bool {
        self.verdict == Verdict::Certified
    }

    /// Structured text report, one `key: value` per line.
    pub fn report(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        let _ = writeln!(s, "subject: {}", self.subject.as_str());
        let _ = writeln!(s, "measure: {}", self.kind);
        let _ = writeln!(s, "c1: {:.12}", self.c1);
        let _ = writeln!(s, "c2: {:.12}", self.c2);
        let _ = writeln!(s, "rate: {:.12}", self.rate);
        let _ = writeln!(s, "sliding_residual: {:.6e}", self.sliding_residual);
        let _ = writeln!(s, "sliding_min: {:.6e}", self.sliding_min);
        let _ = writeln!(s, "sliding_tol: {:e}", self.sliding_tol);
        match &self.sampling {
            Some(r) => {
                let _ = writeln!(s, "region: {}", fmt_box(&r.region));
                if let Some(y) = &r.output_range {
                    let _ = writeln!(s, "output_range: {} (assumed to cover the plant outputs)", fmt_box(y));
                }
                let _ = writeln!(s, "grid: {} per axis", r.grid);
                let _ = writeln!(s, "t_eval: {}", r.t_eval);
            }
            None => {
                let _ = writeln!(s, "sampling: none (constant matrices)");
            }
        }
        let c = &self.counts;
        let _ = writeln!(
            s,
            "samples: plus={} minus={} sigma={} outputs={}",
            c.plus, c.minus, c.sigma, c.outputs
        );
        for (label, p) in [("worst_plus", &self.worst_plus), ("worst_minus", &self.worst_minus), ("worst_sigma", &self.worst_sigma)] {
            if let Some(p) = p {
                let _ = writeln!(s, "{label}: {p:?}");
            }
        }
        for d in &self.diagnostics {
            let _ = writeln!(s, "note: {d}");
        }
        let _ = writeln!(s, "verdict: {}", self.verdict);
        s
    }

    pub const CSV_HEADER: [&'static str; 10] = [
        "subject",
        "measure",
        "c1",
        "c2",
        "rate",
        "sliding_residual",
        "verdict",
        "grid",
        "n_plus",
        "n_minus",
    ];

    pub fn csv_row(&self) -> Vec<String> {
        vec![
            self.subject.as_str().to_string(),
            self.kind.to_string(),
            format!("{:.16e}", self.c1),
            format!("{:.16e}", self.c2),
            format!("{:.16e}", self.rate),
            format!("{:.16e}", self.sliding_residual),
            self.verdict.as_str().to_string(),
            self.sampling.as_ref().map_or(0, |r| r.grid).to_string(),
            self.counts.plus.to_string(),
            self.counts.minus.to_string(),
        ]
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::CSV_HEADER)?;
        w.write_record(self.csv_row())?;
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::builtin_example;
    use crate::systems::ExprSystemDef;

    fn ex2_with(l: [f64; 2]) -> ObserverSpec {
        let s = builtin_example(2).unwrap();
        let g = DMatrix::from_column_slice(2, 1, &l);
        s.observer.unwrap().with_gains(g.clone(), g).unwrap()
    }

    #[test]
    fn grid_includes_endpoints() {
        let pts = grid_points(&[[-1.0, 1.0], [0.0, 2.0]], 3);
        assert_eq!(pts.len(), 9);
        assert_eq!(pts[0], vec![-1.0, 0.0]);
        assert_eq!(pts[1], vec![0.0, 0.0]);
        assert_eq!(pts[8], vec![1.0, 2.0]);
    }

    #[test]
    fn hyperplane_vertices_of_square() {
        let v = hyperplane_box_vertices(&DVector::from_vec(vec![0.0, 1.0]), 0.0, &[[-2.0, 2.0], [-2.0, 2.0]]);
        assert_eq!(v.len(), 2);
        assert!(v.contains(&vec![-2.0, 0.0]) && v.contains(&vec![2.0, 0.0]));
        let v = hyperplane_box_vertices(&DVector::from_vec(vec![1.0, 1.0]), 0.0, &[[-1.0, 1.0], [-1.0, 1.0]]);
        assert_eq!(v.len(), 2);
        let v = hyperplane_box_vertices(&DVector::from_vec(vec![1.0, 0.0]), -5.0, &[[-1.0, 1.0], [-1.0, 1.0]]);
        assert!(v.is_empty());
    }

    #[test]
    fn example2_exact() {
        let cert = certify_pwa_exact(&ex2_with([1.0, 1.0]), MeasureKind::L1, None).unwrap();
        assert_eq!(cert.c1, 1.0);
        assert_eq!(cert.c2, 1.0);
        assert_eq!(cert.sliding_residual, 0.0);
        assert_eq!(cert.verdict, Verdict::Certified);

        let cert = certify_pwa_exact(&ex2_with([1.5, 2.0]), MeasureKind::L1, None).unwrap();
        assert!((cert.rate - 2.5).abs() < 1e-12);

        let cert = certify_pwa_exact(&ex2_with([0.0, 0.0]), MeasureKind::L1, None).unwrap();
        assert_eq!(cert.c1, -1.0);
        assert_eq!(cert.verdict, Verdict::Falsified);
    }

    #[test]
    fn exact_needs_pwa() {
        let s = builtin_example(1).unwrap();
        assert_eq!(
            certify_pwa_exact(s.observer.as_ref().unwrap(), MeasureKind::L1, None).unwrap_err(),
            CertifyError::NotPwa
        );
    }

    #[test]
    fn identical_linear_modes() {
        let sys = BimodalSystem::from_exprs(&ExprSystemDef {
            name: "lin".into(),
            n: 2,
            f_plus: vec!["-x1".into(), "-x2".into()],
            f_minus: vec!["-x1".into(), "-x2".into()],
            h: "x1 + 0.3*x2 - 0.1".into(),
            ..Default::default()
        })
        .unwrap();
        let r = SamplingRegion::new(vec![[-1.0, 1.0]; 2], None, 11);
        for kind in MeasureKind::ALL {
            let cert = certify_plant(&sys, kind, &r).unwrap();
            assert_eq!(cert.c1, 1.0);
            assert_eq!(cert.c2, 1.0);
            assert_eq!(cert.sliding_residual, 0.0);
            assert!(cert.counts.sigma > 0);
            assert_eq!(cert.verdict, Verdict::Certified, "{}", cert.report());
        }
    }

    #[test]
    fn empty_side_is_inconclusive() {
        let sys = BimodalSystem::from_exprs(&ExprSystemDef {
            name: "lin".into(),
            n: 1,
            f_plus: vec!["-x1".into()],
            f_minus: vec!["-x1".into()],
            h: "x1 - 10".into(),
            ..Default::default()
        })
        .unwrap();
        let cert = certify_plant(&sys, MeasureKind::L1, &SamplingRegion::new(vec![[-1.0, 1.0]], None, 5)).unwrap();
        assert_eq!(cert.verdict, Verdict::Inconclusive);
        assert!(cert.report().contains("no samples in S+"));
    }

    #[test]
    fn example1_plant_rate() {
        let s = builtin_example(1).unwrap();
        let r = SamplingRegion::new(vec![[-5.0, 5.0]; 2], None, 41);
        let cert = certify_plant(&s.system, MeasureKind::L1, &r).unwrap();
        assert!((cert.c1 - 4.0).abs() < 1e-12, "{}", cert.report());
        // Δf = (-6 x1² - 36, 0) on x1 = 0 gives a matrix with μ1 = max(-36, 0)
        assert_eq!(cert.sliding_residual, 0.0);
    }

    #[test]
    fn observer_requires_output_range() {
        let s = builtin_example(1).unwrap();
        let r = SamplingRegion::new(vec![[-5.0, 5.0]; 2], None, 5);
        assert_eq!(
            certify_observer(s.observer.as_ref().unwrap(), MeasureKind::L1, &r).unwrap_err(),
            CertifyError::NoOutputRange
        );
    }

    #[test]
    fn report_and_csv() {
        let cert = certify_pwa_exact(&ex2_with([1.0, 1.0]), MeasureKind::L1, None).unwrap();
        let rep = cert.report();
        assert!(rep.contains("verdict: certified"));
        assert!(rep.contains("measure: l1"));
        let mut buf = Vec::new();
        cert.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
    }
}
