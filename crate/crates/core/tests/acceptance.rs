//! One PASS/FAIL line per acceptance criterion, with timing.
//!
//! Criteria that are known to be unattainable are listed in
//! `EXPECTED_FAILURES`; the test fails if any other criterion fails or if a
//! listed one starts passing.

use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pwsobs::certify::{certify_observer, certify_pwa_exact, SamplingRegion, Verdict};
use pwsobs::config::{builtin_example, Setup};
use pwsobs::measures::{measure, measure_limit_oracle, MeasureKind};
use pwsobs::observer::{check_envelope, disturbance_study, run_pair};
use pwsobs::regularize::{order_study, TransitionKind};
use pwsobs::simulate::{integrate, EventKind, IntegratorConfig, ModeLabel};
use pwsobs::synth::{synthesize, SynthesisProblem};
use pwsobs::systems::{Mode, ObserverSpec};

/// Example 3 with the stated parameters never reaches the stick condition
/// `|−x1 + sin(πt)| < F_f` at a velocity zero over 60 s, so the plant records
/// crossings only.
const EXPECTED_FAILURES: &[u32] = &[6];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn ex(n: u32) -> Setup {
    builtin_example(n).unwrap()
}

fn random_corpus() -> Vec<DMatrix<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(20240601);
    (0..200)
        .map(|k| {
            let n = 2 + k % 4;
            DMatrix::from_fn(n, n, |_, _| rng.random_range(-5.0..5.0))
        })
        .collect()
}

fn criterion1() -> Outcome {
    let corpus = random_corpus();
    let mut worst: f64 = 0.0;
    let mut shrink_ok = true;
    let hs = [1e-3, 1e-4, 1e-5];
    let mut l2_gaps = [0.0; 3];
    for a in &corpus {
        for kind in MeasureKind::ALL {
            let mu = measure(kind, a).unwrap();
            worst = worst.max((mu - measure_limit_oracle(kind, a, 1e-6).unwrap()).abs());
            let gaps: Vec<f64> = hs
                .iter()
                .map(|&h| (measure_limit_oracle(kind, a, h).unwrap() - mu).abs())
                .collect();
            // Linear in h, up to rounding of order 1e-15 ‖A‖ / h.
            for (k, &h) in hs.iter().enumerate().skip(1) {
                let noise = 1e-14 * (1.0 + a.norm()) / h;
                shrink_ok &= gaps[k] <= 1.5 * gaps[0] * h / hs[0] + noise;
            }
            if kind == MeasureKind::L2 {
                for k in 0..3 {
                    l2_gaps[k] += gaps[k];
                }
            }
        }
    }
    // The l2 gap is genuinely first order; its aggregate slope must be ~1.
    let slope = (l2_gaps[0] / l2_gaps[2]).log10() / 2.0;
    let pass = worst <= 1e-4 && shrink_ok && (0.9..=1.1).contains(&slope);
    outcome(
        pass,
        format!("max |closed - oracle(1e-6)| = {worst:.2e}, per-matrix O(h) shrink {shrink_ok}, l2 gap slope {slope:.3}"),
    )
}

fn ex2_obs(l: [f64; 2]) -> ObserverSpec {
    let g = DMatrix::from_column_slice(2, 1, &l);
    ex(2).observer.unwrap().with_gains(g.clone(), g).unwrap()
}

fn criterion2() -> Outcome {
    let a = certify_pwa_exact(&ex2_obs([1.0, 1.0]), MeasureKind::L1, None).unwrap();
    let b = certify_pwa_exact(&ex2_obs([1.5, 2.0]), MeasureKind::L1, None).unwrap();
    let c = certify_pwa_exact(&ex2_obs([0.0, 0.0]), MeasureKind::L1, None).unwrap();
    let pass = (a.c1 - 1.0).abs() <= 1e-12
        && (a.c2 - 1.0).abs() <= 1e-12
        && a.verdict == Verdict::Certified
        && (b.rate - 2.5).abs() <= 1e-12
        && b.verdict == Verdict::Certified
        && c.verdict == Verdict::Falsified;
    outcome(
        pass,
        format!(
            "L=(1,1): c1={} c2={}; L=(1.5,2): rate={}; L=0: {}",
            a.c1,
            a.c2,
            b.rate,
            c.verdict.as_str()
        ),
    )
}

fn region_of(s: &Setup) -> SamplingRegion {
    SamplingRegion::from_section(s.certify.as_ref().unwrap())
}

fn criterion3() -> Outcome {
    let s = ex(1);
    let region = SamplingRegion::new(vec![[-5.0, 5.0]; 2], Some(vec![[0.0, 25.0]]), 41);
    let obs = s.observer.unwrap();
    let lp = obs.gain(Mode::Plus);
    let lm = obs.gain(Mode::Minus);
    let gains_ok = lp.as_slice() == [-2.0, 0.0] && lm.as_slice() == [2.0, 0.0];
    let cert = certify_observer(&obs, MeasureKind::L1, &region).unwrap();
    let pass = gains_ok && cert.verdict == Verdict::Certified && (cert.rate - 4.0).abs() <= 1e-9;
    outcome(pass, format!("{} rate {} (residual {})", cert.verdict.as_str(), cert.rate, cert.sliding_residual))
}

fn envelope(s: &Setup, obs: &ObserverSpec, c: f64, kind: MeasureKind, tf: Option<f64>) -> (bool, String) {
    let mut cfg = s.simulate.integrator();
    if let Some(tf) = tf {
        cfg.tf = tf;
    }
    let mut run = run_pair(obs, &s.x0(), &s.xhat0(), &cfg, kind).unwrap();
    let rep = check_envelope(&mut run.trace, 1.0, c, 0.05).unwrap();
    (rep.pass, rep.summary_line())
}

fn criterion4() -> Outcome {
    let s = ex(1);
    let mut ok = s.x0() == [3.0, 3.0] && s.xhat0() == [0.0, 0.0];
    let obs = s.observer.clone().unwrap();
    let mut cfg = s.simulate.integrator();
    cfg.tf = 3.0;
    let mut run = run_pair(&obs, &s.x0(), &s.xhat0(), &cfg, MeasureKind::L1).unwrap();
    ok &= (run.trace.e0() - 6.0).abs() < 1e-15;
    let worst = run
        .trace
        .samples
        .iter()
        .map(|&(t, e)| e / ((-4.0 * t).exp() * 6.0 * 1.05))
        .fold(0.0, f64::max);
    let rep = check_envelope(&mut run.trace, 1.0, 4.0, 0.05).unwrap();
    ok &= rep.pass && worst <= 1.0 && run.trace.samples.last().unwrap().0 == 3.0;
    outcome(ok, format!("{}; max |e|/bound = {worst:.4}", rep.summary_line()))
}

fn criterion5() -> Outcome {
    let s = ex(2);
    let ok0 = s.x0() == [0.3, 0.3] && s.xhat0() == [0.0, 0.0];
    let (a, da) = envelope(&s, &ex2_obs([1.0, 1.0]), 1.0, MeasureKind::L1, None);
    let (b, db) = envelope(&s, &ex2_obs([1.5, 2.0]), 2.5, MeasureKind::L1, None);
    outcome(ok0 && a && b, format!("L=(1,1): {da}; L=(1.5,2): {db}"))
}

fn criterion6() -> Outcome {
    let s = ex(3);
    let obs = s.observer.clone().unwrap();
    let params_ok = [("wn", 1.0), ("Q", 10.0), ("m", 1.0), ("Fd", 1.0), ("Ff", 0.1)]
        .iter()
        .all(|(k, v)| s.system.params().get(k) == Some(*v))
        && s.system.params().get("wd") == Some(std::f64::consts::PI)
        && obs.gain(Mode::Plus).as_slice() == [1.1, -1.0]
        && obs.gain(Mode::Minus).as_slice() == [1.1, -1.0];
    let cert = certify_observer(&obs, MeasureKind::Linf, &region_of(&s)).unwrap();
    let cert_ok = cert.verdict == Verdict::Certified && (cert.rate - 0.1).abs() <= 1e-9;
    let (env_ok, env) = envelope(&s, &obs, 0.1, MeasureKind::Linf, Some(60.0));
    let cfg = s.simulate.integrator().with_span(0.0, 60.0);
    let plant = integrate(s.system.as_ref(), &s.x0(), &cfg).unwrap();
    let entries = plant.count(EventKind::SlidingEntry);
    let crossings = plant.count(EventKind::Crossing);
    outcome(
        params_ok && cert_ok && env_ok && entries >= 1,
        format!(
            "certificate {} rate {}; {env}; plant sliding entries {entries} (crossings {crossings})",
            cert.verdict.as_str(),
            cert.rate
        ),
    )
}

fn criterion7() -> Outcome {
    let eps = [1e-2, 5e-3, 2.5e-3];
    let mut ok = true;
    let mut detail = Vec::new();
    for n in [1, 3] {
        let s = ex(n);
        let mut cfg = s.simulate.integrator();
        if let Some(tf) = s.regstudy.as_ref().and_then(|r| r.tf) {
            cfg.tf = tf;
        }
        let kind = s.certify.as_ref().unwrap().measure;
        let st = order_study(&s.system, TransitionKind::Cubic, &s.x0(), &cfg, &eps, kind).unwrap();
        let slope = st.slope.unwrap_or(f64::NAN);
        ok &= st.failures.is_empty() && (0.8..=1.2).contains(&slope);
        detail.push(format!("example {n}: slope {slope:.4} over tf {}", cfg.tf));
    }
    outcome(ok, detail.join("; "))
}

fn criterion8() -> Outcome {
    let s = ex(1);
    let c = s.certify.as_ref().unwrap();
    let region = SamplingRegion::from_section(c);
    let mut sec = s.synth.clone();
    sec.freeze = vec!["l2p".into(), "l2m".into()];
    let prob = SynthesisProblem::from_section(s.observer.clone().unwrap(), MeasureKind::L1, region.clone(), &sec);
    let r = synthesize(&prob).unwrap();
    let (lp, lm) = (r.l_plus[(0, 0)], r.l_minus[(0, 0)]);
    let frozen = r.l_plus[(1, 0)] == 0.0 && r.l_minus[(1, 0)] == 0.0;
    let obs = s.observer.unwrap().with_gains(r.l_plus.clone(), r.l_minus.clone()).unwrap();
    let again = certify_observer(&obs, MeasureKind::L1, &region).unwrap();
    let pass = r.feasible
        && frozen
        && lp > -3.0
        && lm < 3.0
        && lp < lm
        && again.verdict == Verdict::Certified
        && (again.rate - r.certificate.rate).abs() <= 1e-9;
    outcome(
        pass,
        format!("l1+ = {lp:.6}, l1- = {lm:.6}, rate {} (re-certified {})", r.certificate.rate, again.rate),
    )
}

fn criterion9() -> Outcome {
    let mut notes = Vec::new();
    // Measures on the criterion-1 corpus.
    let corpus = random_corpus();
    let mut measures_ok = true;
    for (a, b) in corpus.iter().zip(corpus.iter().skip(4)) {
        if a.nrows() != b.nrows() {
            continue;
        }
        for kind in MeasureKind::ALL {
            let (ma, mb) = (measure(kind, a).unwrap(), measure(kind, b).unwrap());
            let tol = 1e-12 * (1.0 + a.norm() + b.norm());
            measures_ok &= measure(kind, &(a + b)).unwrap() <= ma + mb + tol;
            measures_ok &= (measure(kind, &(a * 2.5)).unwrap() - 2.5 * ma).abs() <= tol;
            for ev in a.complex_eigenvalues().iter() {
                measures_ok &= ev.re <= ma + tol;
            }
        }
    }
    notes.push(format!("measures {measures_ok}"));

    // Sliding consistency on Example 3 variants that stick.
    let s = ex(3);
    let tol_event = IntegratorConfig::default().tol_event;
    let mut worst_h: f64 = 0.0;
    let mut sliding_samples = 0;
    for (over, x0, tf) in [
        (vec![("Fd".to_string(), 0.0)], [0.05, 0.0], 5.0),
        (vec![("Ff".to_string(), 0.5)], [-1.0, 0.0], 60.0),
    ] {
        let sys = s.system.with_params(&over).unwrap();
        let cfg = s.simulate.integrator().with_span(0.0, tf);
        let tr = integrate(&sys, &x0, &cfg).unwrap();
        for smp in tr.samples.iter().filter(|p| p.mode == ModeLabel::Sliding) {
            worst_h = worst_h.max(sys.h(&smp.x).unwrap().abs());
            sliding_samples += 1;
        }
    }
    let sliding_ok = sliding_samples > 100 && worst_h <= 10.0 * tol_event;
    notes.push(format!("sliding |h| max {worst_h:.1e} over {sliding_samples} samples"));

    // Zero-error fixed point on all examples.
    let mut fixed_ok = true;
    let mut worst_e: f64 = 0.0;
    for n in 1..=3 {
        let s = ex(n);
        let cfg = s.simulate.integrator();
        let x0 = s.x0();
        let run = run_pair(s.observer.as_ref().unwrap(), &x0, &x0, &cfg, MeasureKind::Linf).unwrap();
        let scale = run.plant.samples.iter().flat_map(|p| p.x.iter()).fold(0.0f64, |m, v| m.max(v.abs()));
        let tol = 10.0 * (cfg.rel_tol * scale + cfg.abs_tol);
        let e = run.trace.samples.iter().map(|p| p.1).fold(0.0, f64::max);
        worst_e = worst_e.max(e / tol);
        fixed_ok &= e <= tol;
    }
    notes.push(format!("fixed point max |e|/(10 tol) {worst_e:.3}"));

    // Symbolic Jacobians against central differences.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_j: f64 = 0.0;
    for n in 1..=3 {
        let sys = ex(n).system;
        for _ in 0..50 {
            let x: Vec<f64> = (0..sys.dim()).map(|_| rng.random_range(-3.0..3.0)).collect();
            let t = rng.random_range(0.0..2.0);
            for mode in [Mode::Plus, Mode::Minus] {
                let j = sys.jacobian(mode, &x, t).unwrap();
                for k in 0..sys.dim() {
                    let d = 1e-6 * (1.0 + x[k].abs());
                    let (mut xp, mut xm) = (x.clone(), x.clone());
                    xp[k] += d;
                    xm[k] -= d;
                    let fd = (sys.eval_field(mode, &xp, t).unwrap() - sys.eval_field(mode, &xm, t).unwrap()) / (2.0 * d);
                    for i in 0..sys.dim() {
                        let err = (fd[i] - j[(i, k)]).abs() / (1.0 + j[(i, k)].abs());
                        worst_j = worst_j.max(err);
                    }
                }
            }
        }
    }
    let jac_ok = worst_j <= 1e-6;
    notes.push(format!("jacobian rel err {worst_j:.1e}"));
    outcome(measures_ok && sliding_ok && fixed_ok && jac_ok, notes.join("; "))
}

fn criterion10() -> Outcome {
    let s = ex(3);
    let obs = s.observer.clone().unwrap();
    let cfg = s.simulate.integrator().with_span(0.0, 60.0);
    let rep = disturbance_study(&obs, "Ff", &[0.1, 0.2], &s.x0(), &s.xhat0(), &cfg, MeasureKind::Linf, Some((1.0, 0.1)))
        .unwrap();
    let tails: Vec<String> = rep.rows.iter().map(|r| format!("{:+}: {:.3e}", r.level, r.tail_sup)).collect();
    let ratio = rep.rows[2].tail_sup / rep.rows[1].tail_sup;
    let pass = rep.pass
        && rep.rows.iter().all(|r| r.tail_sup.is_finite())
        && rep.rows[1..].iter().all(|r| r.tail_sup < rep.e0)
        && ratio <= 3.0;
    outcome(pass, format!("tail sups [{}], ratio {ratio:.3}, |e0| {}", tails.join(", "), rep.e0))
}

#[test]
fn acceptance() {
    type Check = fn() -> Outcome;
    let criteria: [(u32, &str, Check, Duration); 10] = [
        (1, "measure closed forms vs limit oracle", criterion1, Duration::from_secs(5)),
        (2, "example 2 exact certification", criterion2, Duration::from_secs(1)),
        (3, "example 1 certification", criterion3, Duration::from_secs(10)),
        (4, "example 1 envelope", criterion4, Duration::from_secs(5)),
        (5, "example 2 envelope", criterion5, Duration::from_secs(5)),
        (6, "example 3 sliding + observer", criterion6, Duration::from_secs(30)),
        (7, "regularization order", criterion7, Duration::from_secs(60)),
        (8, "synthesis soundness", criterion8, Duration::from_secs(60)),
        (9, "property suites", criterion9, Duration::from_secs(30)),
        (10, "robustness to plant friction error", criterion10, Duration::from_secs(30)),
    ];
    let mut failed = Vec::new();
    for (id, name, check, budget) in criteria {
        let start = Instant::now();
        let out = check();
        let took = start.elapsed();
        let pass = out.pass && took <= budget;
        println!(
            "{} criterion {id} ({name}): {} [{:.2} s of {} s]",
            if pass { "PASS" } else { "FAIL" },
            out.detail,
            took.as_secs_f64(),
            budget.as_secs()
        );
        if !pass {
            failed.push(id);
        }
    }
    assert_eq!(failed, EXPECTED_FAILURES, "failed criteria differ from the known set");
}
