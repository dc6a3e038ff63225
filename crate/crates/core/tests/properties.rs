use std::collections::BTreeMap;

use nalgebra::DMatrix;
use proptest::prelude::*;

use cosim_core::analysis::{endpoint_error, fit_order};
use cosim_core::coupling::negotiate_power;
use cosim_core::extrapolation::{balance_error, refeed_shape, Correction};
use cosim_core::models::{self, potential_production, GradientFlowModel};
use cosim_core::solvers::integrate;
use cosim_core::{run_master, Extrapolant, IntegratorConfig, MasterConfig, Scheme, SimulationTrace};

fn line(anchor: f64, width: f64, value: f64, slope: f64) -> Extrapolant {
    Extrapolant {
        anchor,
        width,
        degree: 1,
        value: vec![value],
        slope: vec![slope],
        correction: None,
    }
}

/// A trace whose state is `x` for all times.
fn constant_trace(x: &[f64]) -> SimulationTrace {
    let (_, dense) = integrate(
        |_, _: &[f64], dx: &mut [f64]| dx.fill(0.0),
        x,
        0.0,
        1.0,
        &IntegratorConfig::default(),
    )
    .unwrap();
    SimulationTrace {
        exchange_times: vec![0.0, 1.0],
        block_offsets: vec![0],
        dense: vec![dense],
        samples: vec![],
        balance: vec![],
        powers: vec![],
        spans: vec![],
        audits: vec![],
        final_state: x.to_vec(),
        accepted_steps: 0,
        rejected_steps: 0,
    }
}

fn finite() -> impl Strategy<Value = f64> {
    -1e3..1e3f64
}

proptest! {
    #[test]
    fn negotiation_is_bitwise_antisymmetric(a in any::<f64>(), b in any::<f64>()) {
        prop_assume!(a.is_finite() && b.is_finite());
        let ab = negotiate_power(a, b);
        let ba = negotiate_power(b, a);
        prop_assume!(ab.is_finite());
        prop_assert_eq!(ab + ba, 0.0);
        prop_assert_eq!(ab, -ba);
    }

    #[test]
    fn balance_error_is_linear(
        alpha in -3.0..3.0f64, beta in -3.0..3.0f64,
        w1 in 0.1..5.0f64, w2 in 0.1..5.0f64,
        v1 in -2.0..2.0f64, s1 in -2.0..2.0f64, v2 in -2.0..2.0f64, s2 in -2.0..2.0f64,
        a in -1.0..1.0f64, h in 0.01..1.0f64,
    ) {
        let b = a + h;
        let bps = [a, a + 0.3 * h, b];
        let e1 = line(a, h, v1, s1);
        let e2 = line(a, h, v2, s2);
        let mixed = line(a, h, alpha * v1 + beta * v2, alpha * s1 + beta * s2);
        let f1 = |t: f64, o: &mut [f64]| o[0] = (w1 * t).sin();
        let f2 = |t: f64, o: &mut [f64]| o[0] = (w2 * t).cos();
        let d1 = balance_error(f1, &e1, a, b, &bps)[0];
        let d2 = balance_error(f2, &e2, a, b, &bps)[0];
        let dm = balance_error(
            |t: f64, o: &mut [f64]| o[0] = alpha * (w1 * t).sin() + beta * (w2 * t).cos(),
            &mixed, a, b, &bps,
        )[0];
        prop_assert!((dm - (alpha * d1 + beta * d2)).abs() <= 1e-12);
    }

    #[test]
    fn balance_error_is_antisymmetric(
        v1 in -2.0..2.0f64, s1 in -2.0..2.0f64, v2 in -2.0..2.0f64, s2 in -2.0..2.0f64,
        a in -1.0..1.0f64, h in 0.01..1.0f64,
    ) {
        let b = a + h;
        let e1 = line(a, h, v1, s1);
        let e2 = line(a, h, v2, s2);
        let d12 = balance_error(|t: f64, o: &mut [f64]| e1.eval_into(t, o), &e2, a, b, &[a, b])[0];
        let d21 = balance_error(|t: f64, o: &mut [f64]| e2.eval_into(t, o), &e1, a, b, &[a, b])[0];
        prop_assert!((d12 + d21).abs() <= 1e-14);
        // exact oracle for two lines
        let exact = (v1 - v2) * h + 0.5 * (s1 - s2) * h * h;
        prop_assert!((d12 - exact).abs() <= 1e-13);
    }

    #[test]
    fn correction_shifts_interval_integral_by_its_amount(
        v in -2.0..2.0f64, s in -2.0..2.0f64, amount in -10.0..10.0f64,
        a in -5.0..5.0f64, h in 0.01..2.0f64,
    ) {
        let b = a + h;
        let base = line(a, h, v, s);
        let corrected = base.clone().with_correction(Correction {
            amount: vec![amount],
            shape: refeed_shape(a, b).unwrap(),
        });
        let shift = corrected.integral_component(a, b, 0) - base.integral_component(a, b, 0);
        prop_assert!((shift - amount).abs() <= 1e-12 * amount.abs().max(1.0));
        // quadrature of the pointwise values agrees
        let gl = cosim_core::quadrature::gauss8();
        let mid = 0.5 * (a + b);
        let q = gl.integrate(a, mid, |t| corrected.eval_component(t, 0) - base.eval_component(t, 0))
            + gl.integrate(mid, b, |t| corrected.eval_component(t, 0) - base.eval_component(t, 0));
        prop_assert!((q - amount).abs() <= 1e-12 * amount.abs().max(1.0));
    }

    #[test]
    fn hat_is_a_unit_bump_vanishing_at_the_ends(a in -5.0..5.0f64, h in 1e-3..10.0f64, s in 0.0..1.0f64) {
        let hat = refeed_shape(a, a + h).unwrap();
        prop_assert!((hat.integral(a, a + h) - 1.0).abs() <= 1e-12);
        prop_assert!(hat.eval(a + s * h) >= 0.0);
        prop_assert!(hat.eval(a + s * h) <= hat.peak() * (1.0 + 1e-15));
        prop_assert_eq!(hat.eval(a), 0.0);
        prop_assert!(hat.eval(a + h).abs() <= 1e-12 * hat.peak());
    }

    #[test]
    fn fit_order_recovers_power_laws(p in -1.0..6.0f64, c in 1e-6..1e3f64) {
        let h: [f64; 5] = [0.2, 0.1, 0.05, 0.025, 0.0125];
        let e: Vec<f64> = h.iter().map(|h| c * h.powf(p)).collect();
        let (slope, intercept) = fit_order(&h, &e).unwrap();
        prop_assert!((slope - p).abs() <= 1e-10);
        prop_assert!((intercept - c.ln()).abs() <= 1e-9);
    }

    #[test]
    fn endpoint_error_is_a_norm(
        x in prop::collection::vec(finite(), 3),
        y in prop::collection::vec(finite(), 3),
        z in prop::collection::vec(finite(), 3),
    ) {
        let tx = constant_trace(&x);
        let ty = constant_trace(&y);
        let d = |t: &SimulationTrace, r: &[f64]| {
            let r = r.to_vec();
            endpoint_error(t, move |_| r.clone(), 1.0).unwrap()
        };
        prop_assert_eq!(d(&tx, &x), 0.0);
        if x != y {
            prop_assert!(d(&tx, &y) > 0.0);
        }
        prop_assert!((d(&tx, &y) - d(&ty, &x)).abs() <= 1e-12 * d(&tx, &y).max(1.0));
        prop_assert!(d(&tx, &z) <= d(&tx, &y) + d(&ty, &z) + 1e-9);
    }

    #[test]
    fn dense_output_hits_grid_values_exactly(lambda in -3.0..3.0f64, w in 0.1..4.0f64, x0 in -2.0..2.0f64) {
        let rhs = |t: f64, x: &[f64], dx: &mut [f64]| dx[0] = lambda * x[0] + (w * t).sin();
        let mut grid = Vec::new();
        let run = cosim_core::solvers::integrate_with(
            rhs, &[x0], 0.0, 2.0, &IntegratorConfig::default(), None,
            |t, x| grid.push((t, x[0])),
        ).unwrap();
        for (t, x) in grid {
            prop_assert_eq!(run.dense.eval(t).unwrap()[0].to_bits(), x.to_bits());
        }
    }

    #[test]
    fn production_block_structure(
        seed in any::<u64>(),
        raw in prop::collection::vec(-1.0..1.0f64, 16),
        q_raw in prop::collection::vec(-1.0..1.0f64, 16),
    ) {
        let a = DMatrix::from_row_slice(4, 4, &raw);
        let b = DMatrix::from_row_slice(4, 4, &q_raw);
        let q = &b * b.transpose() + DMatrix::identity(4, 4);
        let skew = &a - a.transpose();
        let symm = &a + a.transpose();
        let parts = vec![vec![0, 2], vec![1, 3]];
        let ms = GradientFlowModel::quadratic(skew.clone(), q.clone(), parts.clone()).unwrap();
        let my = GradientFlowModel::quadratic(symm.clone(), q.clone(), parts.clone()).unwrap();
        for x in models::sample_states(4, 5, seed) {
            let ps = potential_production(&ms, &x);
            let py = potential_production(&my, &x);
            prop_assert!((ps[(0, 1)] + ps[(1, 0)]).abs() <= 1e-12);
            prop_assert!((py[(0, 1)] - py[(1, 0)]).abs() <= 1e-12);
            for (model, p) in [(&ms, &ps), (&my, &py)] {
                let g = (model.gradient)(&x);
                let direct = -g.dot(&(&model.mobility * &g));
                prop_assert!((p.sum() - direct).abs() <= 1e-12 * direct.abs().max(1.0));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn negotiated_runs_keep_the_power_equation(
        s0 in -2.0..2.0f64, v0 in -2.0..2.0f64,
        h in prop::sample::select(vec![0.1, 0.125, 0.2, 0.25]),
        hermite in any::<bool>(),
    ) {
        prop_assume!(s0.hypot(v0) > 0.1);
        let mut params = BTreeMap::new();
        params.insert("x0".to_string(), s0);
        params.insert("v0".to_string(), v0);
        let bench = models::build("spring-mass", &params).unwrap();
        let cfg = MasterConfig {
            scheme: Scheme::PowerNegotiated,
            degree: 1,
            hermite,
            exchange_step: h,
            t_end: 5.0,
            ..Default::default()
        };
        let trace = run_master(&bench.system, &bench.x0, &cfg).unwrap();
        prop_assert_eq!(trace.powers.len(), trace.intervals());
        for p in &trace.powers {
            prop_assert_eq!((p.p_hat + p.p_hat_b()).to_bits(), 0.0f64.to_bits());
        }
        prop_assert!(trace.audits.iter().all(|a| a.residual() <= 1e-9));
        let expected = 10 * 2 * trace.intervals();
        let skipped = expected - trace.audits.len();
        prop_assert!(skipped < expected);
    }
}
