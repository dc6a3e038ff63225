//! Shared fixtures for the criterion benchmarks.

use std::collections::BTreeMap;

use cosim_core::models::{self, Benchmark};
use cosim_core::{MasterConfig, Scheme};

/// Harmonic oscillator `s' = v, v' = -s`.
pub fn oscillator(_t: f64, x: &[f64], dx: &mut [f64]) {
    dx[0] = x[1];
    dx[1] = -x[0];
}

pub fn spring_mass() -> Benchmark {
    models::build("spring-mass", &BTreeMap::new()).expect("default spring-mass builds")
}

/// The configuration of the stability experiments at `H = 0.2`.
pub fn stability_config(scheme: Scheme, t_end: f64) -> MasterConfig {
    MasterConfig {
        scheme,
        degree: 1,
        hermite: scheme == Scheme::PowerNegotiated,
        exchange_step: 0.2,
        t_end,
        ..Default::default()
    }
}
