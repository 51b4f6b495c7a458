//! Derivative-free search for observer gains that maximize the certified
//! contraction rate.
//!
//! Seeds come from a coarse grid (5 points per free gain) in a seeded random
//! order; the best seed is refined with a box-clamped Nelder–Mead simplex on
//! `−rate + 1e3·max(0, residual − sliding_tol)`.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::config::SynthSection;
use crate::certify::{certify_observer, Certificate, SamplingRegion, Verdict};
use crate::measures::MeasureKind;
use crate::systems::{Mode, ObserverSpec};

pub const PENALTY: f64 = 1e3;
pub const SEEDS_PER_AXIS: usize = 5;
pub const MIN_BUDGET: usize = 50;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("budget must be at least {MIN_BUDGET}, got {0}")]
    Budget(usize),
    #[error("gain box [{0}, {1}] is empty or not finite")]
    BadBox(f64, f64),
    #[error("unknown gain name '{0}'")]
    UnknownGain(String),
}

#[derive(Debug, Clone)]
pub struct SynthesisProblem {
    /// Observer whose gains are the starting values for frozen entries.
    pub template: ObserverSpec,
    pub kind: MeasureKind,
    pub region: SamplingRegion,
    /// Bounds for every free gain unless overridden.
    pub gain_box: [f64; 2],
    pub entry_boxes: Vec<(String, [f64; 2])>,
    /// Gains held at their template values.
    pub freeze: Vec<String>,
    /// One gain shared by both modes (`L+ = L−`).
    pub tie: bool,
    pub budget: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisResult {
    pub l_plus: DMatrix<f64>,
    pub l_minus: DMatrix<f64>,
    pub certificate: Certificate,
    pub feasible: bool,
    /// Free gains and their values.
    pub gains: Vec<(String, f64)>,
    pub evaluations: usize,
    /// Returned the centroid of equally good grid seeds.
    pub centered: bool,
}

impl SynthesisProblem {
    pub fn from_section(template: ObserverSpec, kind: MeasureKind, region: SamplingRegion, s: &SynthSection) -> Self {
        Self {
            template,
            kind,
            region,
            gain_box: s.gain_box,
            entry_boxes: Vec::new(),
            freeze: s.freeze.clone(),
            tie: s.tie,
            budget: s.budget,
            seed: s.seed,
        }
    }
}

/// Name of gain entry `(i, j)` in mode `mode`; `None` for a tied gain.
pub fn gain_name(i: usize, j: usize, p: usize, mode: Option<Mode>) -> String {
    let base = if p == 1 {
        format!("l{}", i + 1)
    } else {
        format!("l{}{}", i + 1, j + 1)
    };
    match mode {
        Some(Mode::Plus) => format!("{base}p"),
        Some(Mode::Minus) => format!("{base}m"),
        None => base,
    }
}

struct Variable {
    name: String,
    lo: f64,
    hi: f64,
    /// Entries `(mode, i, j)` set by this variable.
    slots: Vec<(Mode, usize, usize)>,
}

struct Eval {
    objective: f64,
    cert: Option<Certificate>,
}

impl Eval {
    fn feasible(&self) -> bool {
        self.cert.as_ref().is_some_and(|c| c.verdict == Verdict::Certified)
    }
    fn rate(&self) -> f64 {
        self.cert.as_ref().map_or(f64::NEG_INFINITY, |c| c.rate)
    }
}

struct Search<'a> {
    prob: &'a SynthesisProblem,
    vars: Vec<Variable>,
    base_plus: DMatrix<f64>,
    base_minus: DMatrix<f64>,
}

impl Search<'_> {
    fn gains(&self, v: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
        let mut lp = self.base_plus.clone();
        let mut lm = self.base_minus.clone();
        for (var, &x) in self.vars.iter().zip(v) {
            for &(mode, i, j) in &var.slots {
                match mode {
                    Mode::Plus => lp[(i, j)] = x,
                    Mode::Minus => lm[(i, j)] = x,
                }
            }
        }
        (lp, lm)
    }

    fn evaluate(&self, v: &[f64]) -> Eval {
        let (lp, lm) = self.gains(v);
        let cert = self
            .prob
            .template
            .with_gains(lp, lm)
            .ok()
            .and_then(|obs| certify_observer(&obs, self.prob.kind, &self.prob.region).ok());
        let objective = match &cert {
            Some(c) if c.rate.is_finite() => {
                let excess = (c.sliding_residual - c.sliding_tol).max(0.0);
                -c.rate + PENALTY * excess
            }
            _ => f64::INFINITY,
        };
        Eval { objective, cert }
    }

    fn clamp(&self, v: &mut [f64]) {
        for (x, var) in v.iter_mut().zip(&self.vars) {
            *x = x.clamp(var.lo, var.hi);
        }
    }
}

fn better(a: &Eval, b: &Eval) -> bool {
    match (a.feasible(), b.feasible()) {
        (true, false) => true,
        (false, true) => false,
        (true, true) => a.rate() > b.rate(),
        (false, false) => a.objective < b.objective,
    }
}

pub fn synthesize(prob: &SynthesisProblem) -> Result<SynthesisResult, SynthError> {
    if prob.budget < MIN_BUDGET {
        return Err(SynthError::Budget(prob.budget));
    }
    let check_box = |[lo, hi]: [f64; 2]| {
        if lo <= hi && lo.is_finite() && hi.is_finite() {
            Ok(())
        } else {
            Err(SynthError::BadBox(lo, hi))
        }
    };
    check_box(prob.gain_box)?;
    let n = prob.template.system().dim();
    let p = prob.template.output_dim();

    let mut names = Vec::new();
    let mut vars = Vec::new();
    let mut base_plus = prob.template.gain(Mode::Plus).clone();
    let mut base_minus = prob.template.gain(Mode::Minus).clone();
    let modes: Vec<Option<Mode>> = if prob.tie {
        vec![None]
    } else {
        vec![Some(Mode::Plus), Some(Mode::Minus)]
    };
    for mode in modes {
        for i in 0..n {
            for j in 0..p {
                let name = gain_name(i, j, p, mode);
                names.push(name.clone());
                let slots = match mode {
                    Some(m) => vec![(m, i, j)],
                    None => vec![(Mode::Plus, i, j), (Mode::Minus, i, j)],
                };
                if prob.freeze.contains(&name) {
                    if mode.is_none() {
                        base_minus[(i, j)] = base_plus[(i, j)];
                    }
                    continue;
                }
                let [lo, hi] = prob
                    .entry_boxes
                    .iter()
                    .find(|(n, _)| *n == name)
                    .map_or(prob.gain_box, |(_, b)| *b);
                check_box([lo, hi])?;
                if lo == hi {
                    for &(m, i, j) in &slots {
                        match m {
                            Mode::Plus => base_plus[(i, j)] = lo,
                            Mode::Minus => base_minus[(i, j)] = lo,
                        }
                    }
                    continue;
                }
                vars.push(Variable { name, lo, hi, slots });
            }
        }
    }
    for name in prob.freeze.iter().chain(prob.entry_boxes.iter().map(|(n, _)| n)) {
        if !names.contains(name) {
            return Err(SynthError::UnknownGain(name.clone()));
        }
    }
    let search = Search {
        prob,
        vars,
        base_plus,
        base_minus,
    };
    Ok(run(&search))
}

fn seed_points(search: &Search, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let d = search.vars.len();
    let total = SEEDS_PER_AXIS.saturating_pow(d as u32);
    let mut idx: Vec<usize> = (0..total.min(1 << 20)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    idx.truncate(count);
    idx.into_iter()
        .map(|mut k| {
            search
                .vars
                .iter()
                .map(|v| {
                    let a = k % SEEDS_PER_AXIS;
                    k /= SEEDS_PER_AXIS;
                    v.lo + (v.hi - v.lo) * a as f64 / (SEEDS_PER_AXIS - 1) as f64
                })
                .collect()
        })
        .collect()
}

fn run(search: &Search) -> SynthesisResult {
    let prob = search.prob;
    let d = search.vars.len();
    let mut evaluations = 0;

    let seeds = if d == 0 {
        vec![vec![]]
    } else {
        seed_points(search, prob.budget / 2, prob.seed)
    };
    let evals: Vec<Eval> = seeds.par_iter().map(|v| search.evaluate(v)).collect();
    evaluations += seeds.len();

    let mut best_i = 0;
    for i in 1..evals.len() {
        if better(&evals[i], &evals[best_i]) {
            best_i = i;
        }
    }
    let seed_best_rate = evals[best_i].rate();
    log::debug!("{} grid seeds, best rate {seed_best_rate}", seeds.len());
    let seed_best_feasible = evals[best_i].feasible();
    let mut best_v = seeds[best_i].clone();
    let mut best = search.evaluate(&best_v);

    if d > 0 {
        let (v, e, used) = nelder_mead(search, &best_v, prob.budget - evaluations);
        evaluations += used;
        if better(&e, &best) {
            best_v = v;
            best = e;
        }
    }

    // Flat optimum: the rate is concave and the residual convex in the gains,
    // so the seeds tied at the best rate span a convex plateau. Return its
    // centroid rather than an arbitrary corner.
    let mut centered = false;
    if seed_best_feasible && (best.rate() - seed_best_rate).abs() <= 1e-9 {
        let tied: Vec<&Vec<f64>> = seeds
            .iter()
            .zip(&evals)
            .filter(|(_, e)| e.feasible() && (e.rate() - seed_best_rate).abs() <= 1e-9)
            .map(|(s, _)| s)
            .collect();
        if tied.len() > 1 {
            let mut c = vec![0.0; d];
            for s in &tied {
                for (ci, si) in c.iter_mut().zip(s.iter()) {
                    *ci += si / tied.len() as f64;
                }
            }
            let e = search.evaluate(&c);
            evaluations += 1;
            log::debug!("plateau of {} seeds, centroid rate {}", tied.len(), e.rate());
            if e.feasible() && e.rate() >= best.rate() - 1e-9 {
                best_v = c;
                best = e;
                centered = true;
            }
        }
    }

    let (l_plus, l_minus) = search.gains(&best_v);
    let feasible = best.feasible();
    let certificate = match best.cert {
        Some(c) => c,
        None => {
            // Certification itself failed everywhere; report the template
            // evaluation error as an infeasible certificate.
            let obs = prob.template.with_gains(l_plus.clone(), l_minus.clone());
            let cert = obs.ok().and_then(|o| certify_observer(&o, prob.kind, &prob.region).ok());
            cert.unwrap_or_else(|| infeasible_certificate(prob))
        }
    };
    let gains = search.vars.iter().map(|v| v.name.clone()).zip(best_v).collect();
    SynthesisResult {
        l_plus,
        l_minus,
        certificate,
        feasible,
        gains,
        evaluations,
        centered,
    }
}

fn infeasible_certificate(prob: &SynthesisProblem) -> Certificate {
    Certificate {
        subject: crate::certify::Subject::Observer,
        kind: prob.kind,
        c1: f64::NEG_INFINITY,
        c2: f64::NEG_INFINITY,
        rate: f64::NEG_INFINITY,
        sliding_residual: f64::INFINITY,
        sliding_min: f64::INFINITY,
        sliding_tol: prob.region.sliding_tol,
        verdict: Verdict::Inconclusive,
        counts: Default::default(),
        sampling: Some(prob.region.clone()),
        worst_plus: None,
        worst_minus: None,
        worst_sigma: None,
        diagnostics: vec!["certification failed for every candidate".into()],
    }
}

/// Box-clamped Nelder–Mead from `x0`. Returns the best point, its evaluation
/// and the number of evaluations used.
fn nelder_mead(search: &Search, x0: &[f64], budget: usize) -> (Vec<f64>, Eval, usize) {
    let d = x0.len();
    let mut used = 0;
    let mut simplex: Vec<(Vec<f64>, Eval)> = vec![(x0.to_vec(), search.evaluate(x0))];
    used += 1;
    for k in 0..d {
        if used >= budget {
            break;
        }
        let var = &search.vars[k];
        let step = 0.1 * (var.hi - var.lo);
        let mut v = x0.to_vec();
        v[k] = if v[k] + step <= var.hi { v[k] + step } else { v[k] - step };
        let e = search.evaluate(&v);
        used += 1;
        simplex.push((v, e));
    }
    let key = |e: &Eval| e.objective;
    let mut best_seen: Option<(Vec<f64>, Eval)> = None;
    let track = |best: &mut Option<(Vec<f64>, Eval)>, v: &[f64], e: &Eval| {
        if best.as_ref().is_none_or(|(_, b)| better(e, b)) {
            *best = Some((
                v.to_vec(),
                Eval {
                    objective: e.objective,
                    cert: e.cert.clone(),
                },
            ));
        }
    };
    for (v, e) in &simplex {
        track(&mut best_seen, v, e);
    }
    if simplex.len() < d + 1 {
        let (v, e) = best_seen.expect("at least one point");
        return (v, e, used);
    }

    let width: f64 = search.vars.iter().map(|v| v.hi - v.lo).fold(0.0, f64::max);
    while used < budget {
        simplex.sort_by(|a, b| key(&a.1).total_cmp(&key(&b.1)));
        let spread = key(&simplex[d].1) - key(&simplex[0].1);
        let diameter = simplex
            .iter()
            .skip(1)
            .map(|(v, _)| v.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if diameter <= 1e-9 * width || (spread.is_finite() && spread.abs() <= 1e-13 && diameter <= 1e-6 * width) {
            break;
        }
        let mut centroid = vec![0.0; d];
        for (v, _) in &simplex[..d] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / d as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            let mut p: Vec<f64> = centroid
                .iter()
                .zip(&simplex[d].0)
                .map(|(c, w)| c + t * (c - w))
                .collect();
            search.clamp(&mut p);
            p
        };
        let xr = along(1.0);
        let er = search.evaluate(&xr);
        used += 1;
        track(&mut best_seen, &xr, &er);
        if key(&er) < key(&simplex[0].1) {
            if used < budget {
                let xe = along(2.0);
                let ee = search.evaluate(&xe);
                used += 1;
                track(&mut best_seen, &xe, &ee);
                simplex[d] = if key(&ee) < key(&er) { (xe, ee) } else { (xr, er) };
            } else {
                simplex[d] = (xr, er);
            }
            continue;
        }
        if key(&er) < key(&simplex[d - 1].1) {
            simplex[d] = (xr, er);
            continue;
        }
        if used >= budget {
            break;
        }
        let outside = key(&er) < key(&simplex[d].1);
        let xc = along(if outside { 0.5 } else { -0.5 });
        let ec = search.evaluate(&xc);
        used += 1;
        track(&mut best_seen, &xc, &ec);
        let target = if outside { key(&er) } else { key(&simplex[d].1) };
        if key(&ec) <= target {
            simplex[d] = (xc, ec);
            continue;
        }
        // Shrink towards the best vertex; the new vertices are one batch.
        let x_best = simplex[0].0.clone();
        let take = d.min(budget - used);
        let pts: Vec<Vec<f64>> = simplex[1..=take]
            .iter()
            .map(|(x, _)| x.iter().zip(&x_best).map(|(x, b)| b + 0.5 * (x - b)).collect())
            .collect();
        let evals: Vec<Eval> = pts.par_iter().map(|v| search.evaluate(v)).collect();
        used += take;
        for (k, (v, e)) in pts.into_iter().zip(evals).enumerate() {
            track(&mut best_seen, &v, &e);
            simplex[k + 1] = (v, e);
        }
    }
    let (v, e) = best_seen.expect("at least one point");
    (v, e, used)
}

impl SynthesisResult {
    pub fn summary(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        let _ = writeln!(s, "feasible: {}", self.feasible);
        for (name, v) in &self.gains {
            let _ = writeln!(s, "{name} = {v:.12}");
        }
        let _ = writeln!(s, "L+ = {:?}", self.l_plus.as_slice());
        let _ = writeln!(s, "L- = {:?}", self.l_minus.as_slice());
        let _ = writeln!(s, "evaluations: {}", self.evaluations);
        if self.centered {
            let _ = writeln!(s, "note: flat optimum, returned the centroid of the best grid seeds");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::builtin_example;

    fn ex2_problem(budget: usize) -> SynthesisProblem {
        let s = builtin_example(2).unwrap();
        SynthesisProblem {
            template: s.observer.unwrap(),
            kind: MeasureKind::L1,
            region: SamplingRegion::new(vec![[-2.0, 2.0]; 2], Some(vec![[-4.0, 4.0]]), 5),
            gain_box: [-5.0, 5.0],
            entry_boxes: vec![],
            freeze: vec![],
            tie: true,
            budget,
            seed: 3,
        }
    }

    #[test]
    fn names() {
        assert_eq!(gain_name(0, 0, 1, Some(Mode::Plus)), "l1p");
        assert_eq!(gain_name(1, 0, 1, Some(Mode::Minus)), "l2m");
        assert_eq!(gain_name(1, 1, 2, None), "l22");
    }

    #[test]
    fn example2_beats_hand_choice() {
        let r = synthesize(&ex2_problem(120)).unwrap();
        assert!(r.feasible);
        assert!(r.certificate.rate >= 2.5 - 1e-9, "{}", r.summary());
        assert_eq!(r.l_plus, r.l_minus);
    }

    fn from_builtin(n: u32) -> SynthesisProblem {
        let s = builtin_example(n).unwrap();
        let c = s.certify.as_ref().unwrap();
        SynthesisProblem::from_section(s.observer.clone().unwrap(), c.measure, SamplingRegion::from_section(c), &s.synth)
    }

    #[test]
    fn example1_lands_inside_the_gain_region() {
        let r = synthesize(&from_builtin(1)).unwrap();
        assert!(r.feasible, "{}", r.summary());
        let (lp, lm) = (r.l_plus[(0, 0)], r.l_minus[(0, 0)]);
        assert!(lp > -3.0 && lm < 3.0 && lp < lm, "{}", r.summary());
        assert_eq!(r.l_plus[(1, 0)], 0.0);
        assert!((r.certificate.rate - 4.0).abs() < 1e-9);
    }

    #[test]
    fn example3_rate() {
        let r = synthesize(&from_builtin(3)).unwrap();
        println!("{}", r.summary());
        assert!(r.feasible);
    }

    #[test]
    fn collapsed_box_is_flagged_infeasible() {
        let mut p = ex2_problem(50);
        p.gain_box = [0.0, 0.0];
        let r = synthesize(&p).unwrap();
        assert!(!r.feasible);
        assert_eq!(r.l_plus, DMatrix::zeros(2, 1));
        assert_eq!(r.certificate.verdict, Verdict::Falsified);
    }

    #[test]
    fn bad_inputs() {
        assert_eq!(synthesize(&ex2_problem(10)).unwrap_err(), SynthError::Budget(10));
        let mut p = ex2_problem(60);
        p.freeze = vec!["l9".into()];
        assert_eq!(synthesize(&p).unwrap_err(), SynthError::UnknownGain("l9".into()));
        let mut p = ex2_problem(60);
        p.gain_box = [1.0, -1.0];
        assert!(matches!(synthesize(&p), Err(SynthError::BadBox(..))));
    }
}
