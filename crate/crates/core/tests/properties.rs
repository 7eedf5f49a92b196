use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;
use rigidlab::bracketops::{ham_vector_field, poisson, PairingConvention};
use rigidlab::fieldexpr::{FieldExpr, GridBox};
use rigidlab::hamflow::{Flow, FlowOptions, Method};
use rigidlab::perturber::staircase_counterexample;
use rigidlab::scenarios::staircase;
use rigidlab::trigfact::{fejer_riesz, roots, TrigPoly};
use rigidlab::Exec;

fn complex() -> impl Strategy<Value = Complex64> {
    (-1.0..1.0f64, -1.0..1.0f64).prop_map(|(re, im)| Complex64::new(re, im))
}

fn analytic(min_degree: usize, max_degree: usize) -> impl Strategy<Value = TrigPoly> {
    prop::collection::vec(complex(), min_degree + 1..=max_degree + 1)
        .prop_filter("nonzero leading", |c| c.last().unwrap().norm() > 0.05)
        .prop_map(|c| TrigPoly::analytic(&c))
}

fn monomials(dim: usize) -> impl Strategy<Value = FieldExpr> {
    prop::collection::vec((-1.0..1.0f64, prop::collection::vec(0u32..=2, dim)), 1..4)
        .prop_map(move |t| FieldExpr::polynomial(&t, dim))
}

fn point(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, dim)
}

fn max_gap(p: &TrigPoly, q: &TrigPoly) -> f64 {
    (0..512)
        .map(|k| {
            let th = 2.0 * PI * k as f64 / 512.0;
            (p.eval_real(th) - q.eval(th).norm_sqr()).abs()
        })
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn factor_reproduces_abs_square(q in analytic(0, 5)) {
        let p = q.abs_squared();
        let f = fejer_riesz(&p).unwrap();
        prop_assert!(max_gap(&p, &f) <= 1e-8 * (1.0 + p.energy()));
    }

    #[test]
    fn parseval(q in analytic(0, 6)) {
        let n = 64;
        let mean: f64 = (0..n)
            .map(|k| q.eval(2.0 * PI * k as f64 / n as f64).norm_sqr())
            .sum::<f64>() / n as f64;
        prop_assert!((mean - q.energy()).abs() <= 1e-12 * (1.0 + mean));
        prop_assert!((q.abs_squared().mean().re - q.energy()).abs() <= 1e-12 * (1.0 + mean));
    }

    #[test]
    fn roots_of_self_reciprocal_come_in_reflected_pairs(q in analytic(1, 4)) {
        let p = q.abs_squared();
        let c: Vec<Complex64> = p.coeffs().to_vec();
        let rs = roots(&c).unwrap();
        for r in &rs.roots {
            if r.value.norm() < 1e-9 { continue; }
            let mirror = 1.0 / r.value.conj();
            let near = rs.roots.iter().any(|s| (s.value - mirror).norm() <= 1e-5 * (1.0 + mirror.norm()));
            prop_assert!(near, "no reflection of {} among {:?}", r.value, rs.roots);
        }
    }

    #[test]
    fn bracket_identities(f in monomials(4), g in monomials(4), h in monomials(4), x in point(4)) {
        let conv = PairingConvention::standard(4).unwrap();
        let b = |u: &FieldExpr, v: &FieldExpr| poisson(u, v, &conv).unwrap();
        let anti = (b(&f, &g) + b(&g, &f)).eval(&x).unwrap();
        let leibniz = (b(&(&f * &g), &h) - &f * b(&g, &h) - &g * b(&f, &h)).eval(&x).unwrap();
        let jacobi = (b(&f, &b(&g, &h)) + b(&g, &b(&h, &f)) + b(&h, &b(&f, &g))).eval(&x).unwrap();
        let xg = ham_vector_field(&g, &conv).unwrap();
        let df = (xg.apply(&f).unwrap() - b(&f, &g)).eval(&x).unwrap();
        for v in [anti, leibniz, jacobi, df] {
            prop_assert!(v.abs() <= 1e-10);
        }
    }

    #[test]
    fn oscillator_energy_is_conserved(q in -1.0..1.0f64, p in -1.0..1.0f64, w in 0.5..2.0f64) {
        let conv = PairingConvention::standard(2).unwrap();
        let h = FieldExpr::polynomial(&[(0.5 * w, vec![2, 0]), (0.5 * w, vec![0, 2])], 2);
        let region = GridBox::uniform(&[(-3.0, 3.0), (-3.0, 3.0)], 3).unwrap();
        let flow = Flow::new(&h, &conv).unwrap();
        let opts = FlowOptions::with_step(1e-2).method(Method::Composition4);
        let traj = flow.integrate(&[q, p], 5.0, &region, &opts).unwrap();
        let e0 = h.eval(&[q, p]).unwrap();
        for s in &traj.states {
            prop_assert!((h.eval(s).unwrap() - e0).abs() <= 1e-9);
        }
    }

    #[test]
    fn staircase_stays_close_and_degenerate(n in 1usize..60) {
        let sc = staircase().unwrap();
        let h = sc.extra("h").unwrap();
        let s = staircase_counterexample(&sc.operator, h, n, &sc.domain).unwrap();
        let r = s.report(Exec::Sequential).unwrap();
        prop_assert_eq!(r.max_image, 0.0);
        prop_assert!(r.f_deviation <= 2.0 / n as f64);
        prop_assert!(r.g_deviation <= 2.0 / n as f64);
    }
}
