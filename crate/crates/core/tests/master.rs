use std::collections::BTreeMap;
use std::sync::Arc;

use cosim_core::analysis::{component_errors, energy_drift, DEFAULT_SERIES};
use cosim_core::models::{self, SpringMassModel};
use cosim_core::solvers::integrate;
use cosim_core::{
    run_master, Connection, CoupledSystem, IntegratorConfig, MasterConfig, Scheme, SimulationTrace,
    Subsystem,
};

const SCHEMES: [Scheme; 3] = [Scheme::Plain, Scheme::BalanceCorrected, Scheme::PowerNegotiated];

fn bits(trace: &SimulationTrace) -> Vec<u64> {
    let mut v: Vec<u64> = trace
        .samples
        .iter()
        .flat_map(|s| std::iter::once(s.t).chain(s.x.iter().copied()))
        .map(f64::to_bits)
        .collect();
    v.extend(trace.final_state.iter().map(|x| x.to_bits()));
    v.extend(trace.powers.iter().map(|p| p.p_hat.to_bits()));
    v.extend(trace.balance.iter().map(|b| b.delta.to_bits()));
    v.extend(trace.spans.iter().flat_map(|s| [s.t_start.to_bits(), s.t_end.to_bits()]));
    v
}

fn spring_mass() -> models::Benchmark {
    models::build("spring-mass", &BTreeMap::new()).unwrap()
}

#[test]
fn runs_are_bitwise_reproducible_and_thread_independent() {
    let bench = spring_mass();
    let gf = models::build("gradient-flow", &BTreeMap::new()).unwrap();
    for scheme in SCHEMES {
        for b in [&bench, &gf] {
            let cfg = MasterConfig {
                scheme,
                degree: 1,
                hermite: true,
                t_end: 4.0,
                ..Default::default()
            };
            let seq = run_master(&b.system, &b.x0, &cfg).unwrap();
            let again = run_master(&b.system, &b.x0, &cfg).unwrap();
            let par = run_master(&b.system, &b.x0, &MasterConfig { parallel: true, ..cfg.clone() }).unwrap();
            assert_eq!(bits(&seq), bits(&again), "{scheme} on {}", b.name);
            assert_eq!(bits(&seq), bits(&par), "{scheme} on {}", b.name);
        }
    }
}

/// The whole oscillator in a single block, without any coupling.
struct Monolithic;

impl Subsystem for Monolithic {
    fn state_dim(&self) -> usize {
        2
    }
    fn input_dim(&self) -> usize {
        0
    }
    fn output_dim(&self) -> usize {
        0
    }
    fn rhs(&self, _: f64, x: &[f64], _: &[f64], dx: &mut [f64]) {
        dx[0] = x[1];
        dx[1] = -x[0];
    }
    fn output(&self, _: f64, _: &[f64], _: &[f64], _: &mut [f64]) {}
}

#[test]
fn uncoupled_block_matches_monolithic_integration() {
    let system = CoupledSystem::new(vec![Arc::new(Monolithic)], vec![]);
    let cfg = IntegratorConfig::default();
    let (mono, _) = integrate(
        |_, x: &[f64], dx: &mut [f64]| {
            dx[0] = x[1];
            dx[1] = -x[0];
        },
        &[1.0, 0.0],
        0.0,
        5.0,
        &cfg,
    )
    .unwrap();
    for scheme in SCHEMES {
        for degree in [0, 1] {
            let mc = MasterConfig {
                scheme,
                degree,
                t_end: 5.0,
                ..Default::default()
            };
            let trace = run_master(&system, &[1.0, 0.0], &mc).unwrap();
            for (a, b) in trace.final_state.iter().zip(&mono) {
                assert!((a - b).abs() < 1e-10, "{scheme} P={degree}: {a} vs {b}");
            }
            assert!((trace.final_state[0] - 5.0f64.cos()).abs() < 1e-10);
        }
    }
}

/// Emits `x = x0 + rate t` together with its derivative.
struct Ramp {
    rate: f64,
}

impl Subsystem for Ramp {
    fn state_dim(&self) -> usize {
        1
    }
    fn input_dim(&self) -> usize {
        0
    }
    fn output_dim(&self) -> usize {
        2
    }
    fn rhs(&self, _: f64, _: &[f64], _: &[f64], dx: &mut [f64]) {
        dx[0] = self.rate;
    }
    fn output(&self, _: f64, x: &[f64], _: &[f64], y: &mut [f64]) {
        y[0] = x[0];
        y[1] = self.rate;
    }
}

/// First-order lag `y' = u - y`.
struct Lag;

impl Subsystem for Lag {
    fn state_dim(&self) -> usize {
        1
    }
    fn input_dim(&self) -> usize {
        1
    }
    fn output_dim(&self) -> usize {
        1
    }
    fn rhs(&self, _: f64, x: &[f64], u: &[f64], dx: &mut [f64]) {
        dx[0] = u[0] - x[0];
    }
    fn output(&self, _: f64, x: &[f64], _: &[f64], y: &mut [f64]) {
        y[0] = x[0];
    }
}

fn ramp_into_lag(rate: f64) -> CoupledSystem {
    CoupledSystem::new(
        vec![Arc::new(Ramp { rate }), Arc::new(Lag)],
        vec![Connection::new(0, vec![0], 1, vec![0]).with_rates(vec![1])],
    )
}

#[test]
fn balance_correction_is_inert_on_exactly_extrapolated_signals() {
    // (rate, degree, hermite): a constant signal for P=0, a ramp for P=1
    let cases = [(0.0, 0, false), (0.0, 1, false), (0.7, 1, true)];
    for (rate, degree, hermite) in cases {
        let system = ramp_into_lag(rate);
        let base = MasterConfig {
            degree,
            hermite,
            t_end: 3.0,
            exchange_step: 0.25,
            ..Default::default()
        };
        let plain = run_master(&system, &[1.0, 0.0], &base).unwrap();
        let bc = run_master(
            &system,
            &[1.0, 0.0],
            &MasterConfig {
                scheme: Scheme::BalanceCorrected,
                ..base
            },
        )
        .unwrap();
        assert!(bc.balance.iter().all(|r| r.delta.abs() < 1e-13));
        for (a, b) in plain.final_state.iter().zip(&bc.final_state) {
            assert!((a - b).abs() < 1e-13, "rate {rate} P={degree}");
        }
    }
}

#[test]
fn exact_ramp_input_gives_exact_lag_response() {
    let system = ramp_into_lag(0.7);
    let cfg = MasterConfig {
        degree: 1,
        hermite: true,
        t_end: 3.0,
        ..Default::default()
    };
    let trace = run_master(&system, &[1.0, 0.0], &cfg).unwrap();
    // y' = 1 + 0.7 t - y, y(0) = 0
    let y = |t: f64| 0.3 + 0.7 * t - 0.3 * (-t).exp();
    assert!((trace.final_state[1] - y(3.0)).abs() < 1e-10);
}

#[test]
fn unidirectional_first_component_sees_no_extrapolation() {
    let bench = models::build("linear-uni", &BTreeMap::new()).unwrap();
    for degree in [0, 1] {
        for &h in &DEFAULT_SERIES {
            let cfg = MasterConfig {
                degree,
                exchange_step: h,
                t_end: 2.0,
                ..Default::default()
            };
            let trace = run_master(&bench.system, &bench.x0, &cfg).unwrap();
            let errs = component_errors(&trace, |t| (bench.reference)(t), cfg.t_end).unwrap();
            assert!(errs[0] <= 1e-10, "P={degree} H={h}: {}", errs[0]);
            assert!(errs[1] > 1e-6, "second component is extrapolated");
        }
    }
}

#[test]
fn negotiated_powers_are_antisymmetric_and_met() {
    let bench = spring_mass();
    let cfg = MasterConfig {
        scheme: Scheme::PowerNegotiated,
        degree: 1,
        hermite: true,
        t_end: 10.0,
        ..Default::default()
    };
    let trace = run_master(&bench.system, &bench.x0, &cfg).unwrap();
    assert_eq!(trace.powers.len(), trace.intervals());
    for p in &trace.powers {
        assert_eq!(p.p_hat + p.p_hat_b(), 0.0);
        assert_eq!(p.p_hat.to_bits(), (-p.p_hat_b()).to_bits());
    }
    assert!(!trace.audits.is_empty());
    assert!(trace.audits.iter().all(|a| a.residual() <= 1e-9));
}

#[test]
fn negotiated_energy_changes_only_inside_spans() {
    let bench = spring_mass();
    let m = SpringMassModel::default();
    let cfg = MasterConfig {
        scheme: Scheme::PowerNegotiated,
        degree: 1,
        hermite: true,
        t_end: 20.0,
        ..Default::default()
    };
    let trace = run_master(&bench.system, &bench.x0, &cfg).unwrap();
    let e = |x: &[f64]| models::spring_mass_energy(m.m, m.c, x[0], x[1]);
    let report = energy_drift(&trace, e).unwrap();
    assert!(!trace.spans.is_empty());
    assert!(report.max_outside() <= 1e-9 * report.e0);
    assert!(report.drift < 0.02);
    let total = report.total_production();
    let e_end = e(&trace.final_state);
    assert!((total - (e_end - report.e0)).abs() <= 1e-12 * report.e0);
}

#[test]
fn spans_lie_inside_their_interval() {
    let bench = spring_mass();
    let cfg = MasterConfig {
        scheme: Scheme::PowerNegotiated,
        degree: 1,
        hermite: true,
        t_end: 20.0,
        ..Default::default()
    };
    let trace = run_master(&bench.system, &bench.x0, &cfg).unwrap();
    for s in &trace.spans {
        let (ta, tb) = (trace.exchange_times[s.interval - 1], trace.exchange_times[s.interval]);
        assert!(ta <= s.t_start && s.t_start < s.t_end && s.t_end <= tb, "{s:?}");
    }
}

#[test]
fn reference_conserves_energy_over_long_horizon() {
    let m = SpringMassModel::default();
    let (x, _) = integrate(
        |_, x: &[f64], dx: &mut [f64]| {
            dx[0] = x[1];
            dx[1] = -x[0];
        },
        &[m.x0, m.v0],
        0.0,
        75.0,
        &IntegratorConfig::default(),
    )
    .unwrap();
    let e0 = models::spring_mass_energy(m.m, m.c, m.x0, m.v0);
    let e = models::spring_mass_energy(m.m, m.c, x[0], x[1]);
    assert!(((e - e0) / e0).abs() <= 1e-8);
}

#[test]
fn invalid_configurations_are_rejected() {
    let bench = spring_mass();
    let bad = [
        MasterConfig { exchange_step: 0.3, t_end: 1.0, ..Default::default() },
        MasterConfig { exchange_step: -0.1, ..Default::default() },
        MasterConfig { degree: 2, ..Default::default() },
    ];
    for cfg in bad {
        assert!(run_master(&bench.system, &bench.x0, &cfg).is_err(), "{cfg:?}");
    }
    assert!(run_master(&bench.system, &[1.0], &MasterConfig::default()).is_err());
}
