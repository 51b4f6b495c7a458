use nalgebra::DMatrix;
use proptest::prelude::*;

use pwsobs::config::builtin_example;
use pwsobs::exprparse::{Expr, ParamTable};
use pwsobs::measures::{measure, MeasureKind};
use pwsobs::simulate::{integrate, IntegratorConfig, ModeLabel};
use pwsobs::systems::Mode;

fn square(max_n: usize) -> impl Strategy<Value = DMatrix<f64>> {
    (2..=max_n).prop_flat_map(|n| {
        prop::collection::vec(-10.0..10.0f64, n * n).prop_map(move |v| DMatrix::from_vec(n, n, v))
    })
}

fn pair(max_n: usize) -> impl Strategy<Value = (DMatrix<f64>, DMatrix<f64>)> {
    (2..=max_n).prop_flat_map(|n| {
        (
            prop::collection::vec(-10.0..10.0f64, n * n),
            prop::collection::vec(-10.0..10.0f64, n * n),
        )
            .prop_map(move |(a, b)| (DMatrix::from_vec(n, n, a), DMatrix::from_vec(n, n, b)))
    })
}

fn kind() -> impl Strategy<Value = MeasureKind> {
    prop::sample::select(MeasureKind::ALL.to_vec())
}

/// Smooth expression source over `x1, x2, t, k`.
fn smooth_src() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        Just("x1".to_string()),
        Just("x2".to_string()),
        Just("t".to_string()),
        Just("k".to_string()),
        (1u32..20).prop_map(|v| format!("{}", v as f64 / 4.0)),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} + {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} - {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("{a} * {b}")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("{a} / (2 + ({b})^2)")),
            inner.clone().prop_map(|a| format!("-{a}")),
            (inner.clone(), 0i32..4).prop_map(|(a, p)| format!("(({a})^{p})")),
            inner.clone().prop_map(|a| format!("sin({a})")),
            inner.clone().prop_map(|a| format!("cos({a})")),
            inner.clone().prop_map(|a| format!("exp(sin({a}))")),
            inner.clone().prop_map(|a| format!("sqrt(1 + ({a})^2)")),
            inner.clone().prop_map(|a| format!("ln(2 + cos({a}))")),
        ]
    })
}

/// Source that may also use non-smooth functions.
fn any_src() -> impl Strategy<Value = String> {
    prop_oneof![
        smooth_src(),
        (smooth_src(), smooth_src()).prop_map(|(a, b)| format!("max({a}, {b}) - abs({a})")),
        (smooth_src(), smooth_src()).prop_map(|(a, b)| format!("min({a}, sgn({b}))")),
        smooth_src().prop_map(|a| format!("-({a})^-1 - 2^-2")),
    ]
}

fn params() -> ParamTable {
    let mut p = ParamTable::new();
    p.set("k", 1.5);
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn measure_is_subadditive((a, b) in pair(5), k in kind()) {
        let tol = 1e-12 * (1.0 + a.norm() + b.norm());
        prop_assert!(measure(k, &(&a + &b)).unwrap() <= measure(k, &a).unwrap() + measure(k, &b).unwrap() + tol);
    }

    #[test]
    fn measure_is_positively_homogeneous(a in square(5), k in kind(), s in 0.0..20.0f64) {
        let tol = 1e-12 * (1.0 + s) * (1.0 + a.norm());
        prop_assert!((measure(k, &(&a * s)).unwrap() - s * measure(k, &a).unwrap()).abs() <= tol);
    }

    #[test]
    fn measure_bounds_eigenvalues(a in square(5), k in kind()) {
        let mu = measure(k, &a).unwrap();
        let tol = 1e-9 * (1.0 + a.norm());
        for ev in a.complex_eigenvalues().iter() {
            prop_assert!(ev.re <= mu + tol);
        }
        prop_assert!(mu.abs() <= k.strategy().operator_norm(&a) + tol);
    }

    #[test]
    fn measure_of_shift(a in square(4), k in kind(), c in -5.0..5.0f64) {
        let n = a.nrows();
        let shifted = &a + DMatrix::identity(n, n) * c;
        prop_assert!((measure(k, &shifted).unwrap() - measure(k, &a).unwrap() - c).abs() <= 1e-11 * (1.0 + a.norm()));
    }

    #[test]
    fn printed_expressions_reparse_identically(src in any_src()) {
        let p = params();
        let e = Expr::parse(&src, 2, &p).unwrap();
        let printed = e.display(&p).to_string();
        let again = Expr::parse(&printed, 2, &p).unwrap();
        prop_assert_eq!(&again, &e, "printed as {}", printed);
    }

    #[test]
    fn derivative_matches_central_difference(
        src in smooth_src(),
        x in prop::collection::vec(-2.0..2.0f64, 2),
        t in 0.0..2.0f64,
        var in 0usize..2,
    ) {
        let p = params();
        let e = Expr::parse(&src, 2, &p).unwrap();
        let d = e.diff(var).unwrap();
        let exact = d.eval(&x, t, p.values()).unwrap();
        let h = 1e-5 * (1.0 + x[var].abs());
        let (mut xp, mut xm) = (x.clone(), x.clone());
        xp[var] += h;
        xm[var] -= h;
        let fd = (e.eval(&xp, t, p.values()).unwrap() - e.eval(&xm, t, p.values()).unwrap()) / (2.0 * h);
        let scale = 1.0 + exact.abs() + e.eval(&x, t, p.values()).unwrap().abs();
        prop_assert!((fd - exact).abs() <= 1e-5 * scale, "{} d/dx{}: {} vs {}", src, var + 1, exact, fd);
    }

    #[test]
    fn example_jacobians_match_central_differences(
        n in 1u32..=3,
        x in prop::collection::vec(-3.0..3.0f64, 2),
        t in 0.0..2.0f64,
        plus in any::<bool>(),
    ) {
        let sys = builtin_example(n).unwrap().system;
        let mode = if plus { Mode::Plus } else { Mode::Minus };
        let j = sys.jacobian(mode, &x, t).unwrap();
        for k in 0..2 {
            let h = 1e-6 * (1.0 + x[k].abs());
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[k] += h;
            xm[k] -= h;
            let fd = (sys.eval_field(mode, &xp, t).unwrap() - sys.eval_field(mode, &xm, t).unwrap()) / (2.0 * h);
            for i in 0..2 {
                prop_assert!((fd[i] - j[(i, k)]).abs() <= 1e-6 * (1.0 + j[(i, k)].abs()));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// Stick phases of the friction oscillator stay on `x2 = 0`.
    #[test]
    fn sliding_stays_on_the_surface(
        x1 in -0.6..0.6f64,
        x2 in -0.5..0.5f64,
        ff in 0.3..0.8f64,
        fd in 0.0..1.0f64,
    ) {
        let s = builtin_example(3).unwrap();
        let sys = s.system.with_params(&[("Ff".into(), ff), ("Fd".into(), fd)]).unwrap();
        let cfg = IntegratorConfig::default().with_span(0.0, 10.0);
        let tr = integrate(&sys, &[x1, x2], &cfg).unwrap();
        for smp in tr.samples.iter().filter(|p| p.mode == ModeLabel::Sliding) {
            prop_assert!(smp.x[1].abs() <= 10.0 * cfg.tol_event);
        }
        for w in tr.samples.windows(2) {
            prop_assert!(w[1].t > w[0].t);
        }
    }
}
