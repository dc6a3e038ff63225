//! One-step ODE integrators with dense output.
//!
//! All integrators take a right-hand side `f(t, x, dx)` that writes the
//! derivative into `dx`. A non-finite derivative makes the adaptive method
//! reject the step and retry with a smaller one.

mod dense;
mod dopri;
mod rk4;
mod trapezoid;

pub use dense::DenseSolution;

use std::ops::ControlFlow;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Dormand–Prince 5(4) with PI step control.
    AdaptiveRk54,
    /// Classical Runge–Kutta with the fixed step `max_step`.
    FixedRk4,
    /// Implicit trapezoidal rule with the fixed step `max_step`.
    ImplicitTrapezoidal,
}

impl std::str::FromStr for Method {
    type Err = SolverError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rk54" | "dopri5" | "adaptive_rk54" => Ok(Method::AdaptiveRk54),
            "rk4" | "fixed_rk4" => Ok(Method::FixedRk4),
            "trapezoidal" | "implicit_trapezoidal" => Ok(Method::ImplicitTrapezoidal),
            other => Err(SolverError::InvalidConfig(format!(
                "unknown method `{other}` (expected rk54, rk4 or trapezoidal)"
            ))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::AdaptiveRk54 => "rk54",
            Method::FixedRk4 => "rk4",
            Method::ImplicitTrapezoidal => "trapezoidal",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub method: Method,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_step: f64,
    pub initial_step: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            method: Method::AdaptiveRk54,
            abs_tol: 1e-12,
            rel_tol: 1e-12,
            max_step: 0.05,
            initial_step: 1e-3,
        }
    }
}

impl IntegratorConfig {
    pub fn with_method(method: Method) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |msg: &str| Err(SolverError::InvalidConfig(msg.to_string()));
        if !(self.abs_tol >= 0.0) || !(self.rel_tol >= 0.0) {
            return bad("tolerances must be non-negative");
        }
        if self.method == Method::AdaptiveRk54 && self.abs_tol == 0.0 && self.rel_tol == 0.0 {
            return bad("abs_tol or rel_tol must be positive for the adaptive method");
        }
        if !(self.max_step > 0.0) || !self.max_step.is_finite() {
            return bad("max_step must be positive");
        }
        if !(self.initial_step > 0.0) {
            return bad("initial_step must be positive");
        }
        if self.initial_step > self.max_step {
            return bad("initial_step must not exceed max_step");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),
    #[error("empty integration interval [{t0}, {t1}]")]
    EmptyInterval { t0: f64, t1: f64 },
    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepSizeUnderflow { t: f64, h: f64 },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
    #[error("Newton iteration did not converge at t = {t}")]
    NewtonFailure { t: f64 },
    #[error("t = {t} outside dense output domain [{t0}, {t1}]")]
    OutOfRange { t: f64, t0: f64, t1: f64 },
    #[error("dense output is empty")]
    EmptyDense,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("dense pieces are not contiguous: {end} then {start}")]
    Discontiguous { end: f64, start: f64 },
}

/// Result of [`integrate_with`] and [`integrate_until`].
#[derive(Debug, Clone)]
pub struct Integration {
    pub x_end: Vec<f64>,
    /// Time reached; equals `t1` unless the step callback stopped early.
    pub t_end: f64,
    pub stopped: bool,
    pub dense: DenseSolution,
    /// Suggested size of the next step (adaptive method), reusable as a hint
    /// when integration restarts at `t1`.
    pub next_step: f64,
    pub accepted: usize,
    pub rejected: usize,
}

/// Integrates `x' = f(t, x)` from `t0` to `t1`.
pub fn integrate<F>(
    rhs: F,
    x0: &[f64],
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
) -> Result<(Vec<f64>, DenseSolution), SolverError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let run = integrate_with(rhs, x0, t0, t1, cfg, None, |_, _| {})?;
    Ok((run.x_end, run.dense))
}

/// Like [`integrate`] with a step-size hint for the adaptive method and an
/// observer called with `(t, x)` after every accepted step.
pub fn integrate_with<F, O>(
    rhs: F,
    x0: &[f64],
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
    step_hint: Option<f64>,
    mut observer: O,
) -> Result<Integration, SolverError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    O: FnMut(f64, &[f64]),
{
    integrate_until(rhs, x0, t0, t1, cfg, step_hint, |step: Step<'_>| {
        observer(step.t, step.x);
        ControlFlow::Continue(())
    })
}

/// An accepted step as seen by the callback of [`integrate_until`].
#[derive(Debug, Clone, Copy)]
pub struct Step<'a> {
    pub t_prev: f64,
    pub t: f64,
    pub x: &'a [f64],
    /// Dense output up to and including this step.
    pub dense: &'a DenseSolution,
}

/// Integrates until `t1` or until `on_step` breaks after an accepted step.
pub fn integrate_until<F, O>(
    rhs: F,
    x0: &[f64],
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
    step_hint: Option<f64>,
    on_step: O,
) -> Result<Integration, SolverError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    O: FnMut(Step<'_>) -> ControlFlow<()>,
{
    let observer = on_step;
    cfg.validate()?;
    if !(t1 > t0) {
        return Err(SolverError::EmptyInterval { t0, t1 });
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(SolverError::NonFinite { t: t0 });
    }
    match cfg.method {
        Method::AdaptiveRk54 => dopri::run(rhs, x0, t0, t1, cfg, step_hint, observer),
        Method::FixedRk4 => rk4::run(rhs, x0, t0, t1, cfg, observer),
        Method::ImplicitTrapezoidal => trapezoid::run(rhs, x0, t0, t1, cfg, observer),
    }
}

/// Number of equal substeps of length at most `max_step` covering `[t0, t1]`.
fn fixed_step_count(t0: f64, t1: f64, max_step: f64) -> usize {
    let ratio = (t1 - t0) / max_step;
    (ratio * (1.0 - 1e-12)).ceil().max(1.0) as usize
}

/// Time of substep `i` out of `n`, hitting `t1` exactly at `i == n`.
fn grid_time(t0: f64, t1: f64, i: usize, n: usize) -> f64 {
    if i == n {
        t1
    } else {
        t0 + (t1 - t0) * (i as f64 / n as f64)
    }
}
