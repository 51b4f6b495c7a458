use pwsobs::config::builtin_example;
use pwsobs::simulate::{integrate, sliding_field, EventKind, IntegratorConfig, ModeLabel};

fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let fa = f(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if (f(m) > 0.0) == (fa > 0.0) {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

#[test]
fn stick_phase_ends_at_the_analytic_exit_time() {
    // Stuck at x1 = 0.05 the normal components are -0.05 -/+ 0.1 + sin(pi t);
    // the stick phase ends when the first one reaches zero.
    let s = builtin_example(3).unwrap();
    let cfg = IntegratorConfig::default().with_span(0.0, 0.2);
    let tr = integrate(s.system.as_ref(), &[0.05, 0.0], &cfg).unwrap();
    assert_eq!(tr.events[0].kind, EventKind::SlidingEntry);
    assert_eq!(tr.events[0].t, 0.0);
    let exit = tr.events.iter().find(|e| e.kind == EventKind::SlidingExit).unwrap();
    let root = bisect(|t| -0.05 - 0.1 + (std::f64::consts::PI * t).sin(), 0.0, 0.2);
    assert!((exit.t - root).abs() <= cfg.tol_event, "{} vs {root}", exit.t);
    assert_eq!(exit.to, ModeLabel::Plus);
    assert!((exit.x[0] - 0.05).abs() < 1e-12 && exit.x[1] == 0.0, "{:?}", exit.x);
}

#[test]
fn undriven_oscillator_sticks_for_good() {
    let s = builtin_example(3).unwrap();
    let sys = s.system.with_params(&[("Fd".into(), 0.0)]).unwrap();
    let f = sliding_field(&sys, &[0.05, 0.0], 0.0).unwrap();
    assert!(f.iter().all(|v| v.abs() < 1e-15), "{f}");
    let tr = integrate(&sys, &[0.05, 0.0], &IntegratorConfig::default().with_span(0.0, 5.0)).unwrap();
    assert_eq!(tr.count(EventKind::SlidingEntry), 1);
    assert_eq!(tr.count(EventKind::SlidingExit), 0);
    assert_eq!(tr.final_state().unwrap(), &[0.05, 0.0]);
}

#[test]
fn runs_are_bit_identical() {
    for n in 1..=3 {
        let s = builtin_example(n).unwrap();
        let cfg = s.simulate.integrator();
        let a = integrate(s.system.as_ref(), &s.x0(), &cfg).unwrap();
        let b = integrate(s.system.as_ref(), &s.x0(), &cfg).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn event_times_converge_with_tolerance() {
    for n in [1, 3] {
        let s = builtin_example(n).unwrap();
        let loose = s.simulate.integrator().with_span(0.0, 3.0);
        let tight = IntegratorConfig {
            rel_tol: 1e-12,
            abs_tol: 1e-14,
            ..loose.clone()
        };
        let a = integrate(s.system.as_ref(), &s.x0(), &loose).unwrap();
        let b = integrate(s.system.as_ref(), &s.x0(), &tight).unwrap();
        assert_eq!(a.events.len(), b.events.len());
        for (ea, eb) in a.events.iter().zip(&b.events) {
            assert_eq!(ea.kind, eb.kind);
            assert!((ea.t - eb.t).abs() < 1e-7, "example {n}: {} vs {}", ea.t, eb.t);
        }
        let (fa, fb) = (a.final_state().unwrap(), b.final_state().unwrap());
        for (x, y) in fa.iter().zip(fb) {
            assert!((x - y).abs() < 1e-7);
        }
    }
}

#[test]
fn example1_reaches_the_surface_and_slides() {
    // x1' = -9 x1 - 3 x1^2 - 18 + sin(2 pi t) from x1 = 3; compare the hitting
    // time with a fine fixed-step RK4 solve of the scalar equation.
    let s = builtin_example(1).unwrap();
    let cfg = s.simulate.integrator();
    let tr = integrate(s.system.as_ref(), &s.x0(), &cfg).unwrap();
    let entry = &tr.events[0];
    assert_eq!(entry.kind, EventKind::SlidingEntry);

    let f = |t: f64, x: f64| -9.0 * x - 3.0 * x * x - 18.0 + (2.0 * std::f64::consts::PI * t).sin();
    let h = 1e-6;
    let (mut t, mut x) = (0.0, 3.0);
    while x > 0.0 {
        let k1 = f(t, x);
        let k2 = f(t + h / 2.0, x + h / 2.0 * k1);
        let k3 = f(t + h / 2.0, x + h / 2.0 * k2);
        let k4 = f(t + h, x + h * k3);
        let xn = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if xn <= 0.0 {
            t += h * x / (x - xn);
            break;
        }
        x = xn;
        t += h;
    }
    assert!((entry.t - t).abs() < 1e-8, "{} vs {t}", entry.t);
    assert!(tr.samples.iter().filter(|p| p.t > entry.t).all(|p| p.mode == ModeLabel::Sliding && p.x[0] == 0.0));
}
