use std::sync::Arc;

use crate::coupling::{Connection, CoupledSystem, PowerInverse, Subsystem};

use super::ModelError;

/// Undamped or damped oscillator `m x'' + d x' + c x = 0` split into a
/// spring block (state: elongation `s`) and a mass block (state: velocity `v`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpringMassModel {
    pub m: f64,
    pub c: f64,
    pub d: f64,
    pub x0: f64,
    pub v0: f64,
}

impl Default for SpringMassModel {
    fn default() -> Self {
        Self {
            m: 1.0,
            c: 1.0,
            d: 0.0,
            x0: 1.0,
            v0: 0.0,
        }
    }
}

impl SpringMassModel {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.m > 0.0) || !(self.c > 0.0) {
            return Err(ModelError::InvalidParameter(
                "mass m and spring constant c must be positive".into(),
            ));
        }
        if !(self.d >= 0.0) {
            return Err(ModelError::InvalidParameter("damping d must be non-negative".into()));
        }
        Ok(())
    }

    pub fn initial_state(&self) -> Vec<f64> {
        vec![self.x0, self.v0]
    }

    /// Spring block: input velocity, outputs force `f = -c s` and its rate.
    /// Mass block: input force, outputs velocity and acceleration.
    /// Both connections are power coupled, rebuilding velocity in the spring
    /// and force in the mass.
    pub fn system(&self) -> Result<CoupledSystem, ModelError> {
        self.validate()?;
        let (m, c) = (self.m, self.c);
        let spring = Arc::new(Spring { c });
        let mass = Arc::new(Mass { m, d: self.d });
        let connections = vec![
            Connection::new(1, vec![0], 0, vec![0])
                .with_rates(vec![1])
                .power_coupled(0),
            Connection::new(0, vec![0], 1, vec![0])
                .with_rates(vec![1])
                .power_coupled(0),
        ];
        Ok(CoupledSystem::new(vec![spring, mass], connections)
            .with_energy(Arc::new(move |x: &[f64]| spring_mass_energy(m, c, x[0], x[1]))))
    }

    pub fn analytic(&self, t: f64) -> Vec<f64> {
        let (x, v) = spring_mass_analytic(self.m, self.c, self.x0, self.v0, t);
        vec![x, v]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Spring {
    pub c: f64,
}

impl Subsystem for Spring {
    fn name(&self) -> &str {
        "spring"
    }
    fn state_dim(&self) -> usize {
        1
    }
    fn input_dim(&self) -> usize {
        1
    }
    fn output_dim(&self) -> usize {
        2
    }
    fn rhs(&self, _t: f64, _x: &[f64], u: &[f64], dx: &mut [f64]) {
        dx[0] = u[0];
    }
    fn output(&self, _t: f64, x: &[f64], u: &[f64], y: &mut [f64]) {
        y[0] = -self.c * x[0];
        y[1] = -self.c * u[0];
    }
    fn power(&self, x: &[f64], u: &[f64]) -> Option<f64> {
        Some(self.c * x[0] * u[0])
    }
    fn power_rate(&self, x: &[f64], u: &[f64], du: &[f64]) -> Option<f64> {
        Some(self.c * (u[0] * u[0] + x[0] * du[0]))
    }
    fn power_inverse(&self, target: f64, x: &[f64], _u: &[f64], _k: usize) -> Option<PowerInverse> {
        let d = self.c * x[0];
        Some(PowerInverse {
            value: target / d,
            sensitivity: d,
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Mass {
    pub m: f64,
    pub d: f64,
}

impl Subsystem for Mass {
    fn name(&self) -> &str {
        "mass"
    }
    fn state_dim(&self) -> usize {
        1
    }
    fn input_dim(&self) -> usize {
        1
    }
    fn output_dim(&self) -> usize {
        2
    }
    fn rhs(&self, _t: f64, x: &[f64], u: &[f64], dx: &mut [f64]) {
        dx[0] = (u[0] - self.d * x[0]) / self.m;
    }
    fn output(&self, _t: f64, x: &[f64], u: &[f64], y: &mut [f64]) {
        y[0] = x[0];
        y[1] = (u[0] - self.d * x[0]) / self.m;
    }
    fn power(&self, x: &[f64], u: &[f64]) -> Option<f64> {
        Some(u[0] * x[0])
    }
    fn power_rate(&self, x: &[f64], u: &[f64], du: &[f64]) -> Option<f64> {
        let a = (u[0] - self.d * x[0]) / self.m;
        Some(u[0] * a + x[0] * du[0])
    }
    fn power_inverse(&self, target: f64, x: &[f64], _u: &[f64], _k: usize) -> Option<PowerInverse> {
        Some(PowerInverse {
            value: target / x[0],
            sensitivity: x[0],
        })
    }
}

/// Exact undamped solution `(x, v)`.
pub fn spring_mass_analytic(m: f64, c: f64, x0: f64, v0: f64, t: f64) -> (f64, f64) {
    let w = (c / m).sqrt();
    let (s, co) = (w * t).sin_cos();
    (x0 * co + v0 / w * s, -x0 * w * s + v0 * co)
}

pub fn spring_mass_energy(m: f64, c: f64, s: f64, v: f64) -> f64 {
    0.5 * m * v * v + 0.5 * c * s * s
}

/// Boundary powers and their rates for the undamped split:
/// `(P_spring, P_spring', P_mass, P_mass')`, each counted into its block.
///
/// `a` is the mass acceleration and `f_rate` the rate of the spring force.
pub fn spring_mass_powers(
    m: f64,
    c: f64,
    s: f64,
    v: f64,
    f: f64,
    a: f64,
    f_rate: f64,
) -> (f64, f64, f64, f64) {
    let p_spring = c * s * v;
    let dp_spring = c * (v * v + s * a);
    let p_mass = f * v;
    let dp_mass = m * (a * a + v * f_rate / m);
    (p_spring, dp_spring, p_mass, dp_mass)
}
