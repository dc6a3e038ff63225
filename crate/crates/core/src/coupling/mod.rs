//! Master algorithms: exchange, extrapolation, balance correction and power
//! negotiation between independently integrated subsystems.

mod master;
mod power;
mod trace;

pub use master::run_master;
pub use power::{invert_power, negotiate_power, Inversion};
pub use trace::{BalanceRecord, PowerAudit, PowerRecord, Sample, SimulationTrace, SingularitySpan};

use std::sync::Arc;

use thiserror::Error;

use crate::extrapolation::ExtrapolationError;
use crate::solvers::{IntegratorConfig, SolverError};

/// An ODE block `x' = f(t, x, u)` with outputs `y = g(t, x, u)`.
///
/// Power maps are optional and only needed for power-negotiated coupling.
/// `power` is the power flowing *into* the block through its coupling port.
pub trait Subsystem: Send + Sync {
    fn name(&self) -> &str {
        "block"
    }
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn rhs(&self, t: f64, x: &[f64], u: &[f64], dx: &mut [f64]);
    fn output(&self, t: f64, x: &[f64], u: &[f64], y: &mut [f64]);

    fn power(&self, _x: &[f64], _u: &[f64]) -> Option<f64> {
        None
    }

    /// Time derivative of [`Subsystem::power`] given input derivatives `du`.
    fn power_rate(&self, _x: &[f64], _u: &[f64], _du: &[f64]) -> Option<f64> {
        None
    }

    /// Solves `power(x, u) = target` for input component `component`, the
    /// other components taken from `u`.
    fn power_inverse(
        &self,
        _target: f64,
        _x: &[f64],
        _u: &[f64],
        _component: usize,
    ) -> Option<PowerInverse> {
        None
    }
}

/// Solution of a power inversion. `sensitivity` is `∂power/∂u_k`, the
/// denominator of the inversion; near its zeros the inversion is ill-posed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerInverse {
    pub value: f64,
    pub sensitivity: f64,
}

/// Feeds outputs of `source` into inputs of `target`.
#[derive(Debug, Clone, PartialEq)]
pub struct Connection {
    pub source: usize,
    pub source_outputs: Vec<usize>,
    /// Outputs carrying the time derivatives of `source_outputs`, used for
    /// Hermite extrapolation.
    pub source_rates: Option<Vec<usize>>,
    pub target: usize,
    pub target_inputs: Vec<usize>,
    /// Target input rebuilt from the negotiated power. Setting it marks the
    /// connection as power coupled; the reverse connection must carry one too.
    pub replaced_component: Option<usize>,
}

impl Connection {
    pub fn new(source: usize, source_outputs: Vec<usize>, target: usize, target_inputs: Vec<usize>) -> Self {
        Self {
            source,
            source_outputs,
            source_rates: None,
            target,
            target_inputs,
            replaced_component: None,
        }
    }

    pub fn with_rates(mut self, rates: Vec<usize>) -> Self {
        self.source_rates = Some(rates);
        self
    }

    pub fn power_coupled(mut self, replaced_input: usize) -> Self {
        self.replaced_component = Some(replaced_input);
        self
    }

    pub fn width(&self) -> usize {
        self.source_outputs.len()
    }
}

pub type EnergyFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Blocks, wiring and an optional energy functional of the global state
/// (the concatenation of all block states in block order).
#[derive(Clone)]
pub struct CoupledSystem {
    pub blocks: Vec<Arc<dyn Subsystem>>,
    pub connections: Vec<Connection>,
    pub energy: Option<EnergyFn>,
}

impl std::fmt::Debug for CoupledSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CoupledSystem")
            .field("blocks", &self.blocks.iter().map(|b| b.name()).collect::<Vec<_>>())
            .field("connections", &self.connections)
            .field("energy", &self.energy.is_some())
            .finish()
    }
}

impl CoupledSystem {
    pub fn new(blocks: Vec<Arc<dyn Subsystem>>, connections: Vec<Connection>) -> Self {
        Self {
            blocks,
            connections,
            energy: None,
        }
    }

    pub fn with_energy(mut self, energy: EnergyFn) -> Self {
        self.energy = Some(energy);
        self
    }

    pub fn state_dim(&self) -> usize {
        self.blocks.iter().map(|b| b.state_dim()).sum()
    }

    /// Start index of every block inside the global state.
    pub fn offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.blocks
            .iter()
            .map(|b| {
                let o = acc;
                acc += b.state_dim();
                o
            })
            .collect()
    }

    pub fn energy_of(&self, x: &[f64]) -> Option<f64> {
        self.energy.as_ref().map(|e| e(x))
    }

    /// Power-coupled connection pairs `(a_to_b, b_to_a)` with `a < b`.
    pub fn power_pairs(&self) -> Result<Vec<(usize, usize)>, CouplingError> {
        let mut pairs = Vec::new();
        let mut seen = vec![false; self.blocks.len()];
        for (i, c) in self.connections.iter().enumerate() {
            if c.replaced_component.is_none() || c.source > c.target {
                continue;
            }
            let rev = self
                .connections
                .iter()
                .position(|r| {
                    r.source == c.target && r.target == c.source && r.replaced_component.is_some()
                })
                .ok_or(CouplingError::UnpairedPowerConnection(i))?;
            for b in [c.source, c.target] {
                if std::mem::replace(&mut seen[b], true) {
                    return Err(CouplingError::Wiring(format!(
                        "block {b} takes part in more than one power-coupled interface"
                    )));
                }
            }
            pairs.push((i, rev));
        }
        for (i, c) in self.connections.iter().enumerate() {
            if c.replaced_component.is_some() && !pairs.iter().any(|&(a, b)| a == i || b == i) {
                return Err(CouplingError::UnpairedPowerConnection(i));
            }
        }
        Ok(pairs)
    }

    /// Checks index ranges of every connection.
    pub fn validate(&self) -> Result<(), CouplingError> {
        let nb = self.blocks.len();
        let mut driven: Vec<Vec<bool>> =
            self.blocks.iter().map(|b| vec![false; b.input_dim()]).collect();
        for (i, c) in self.connections.iter().enumerate() {
            let bad = |m: String| CouplingError::Wiring(format!("connection {i}: {m}"));
            if c.source >= nb || c.target >= nb {
                return Err(bad("block index out of range".into()));
            }
            if c.source == c.target {
                return Err(bad("self loop".into()));
            }
            if c.source_outputs.len() != c.target_inputs.len() {
                return Err(bad("output and input lists differ in length".into()));
            }
            let (src, dst) = (&self.blocks[c.source], &self.blocks[c.target]);
            if c.source_outputs.iter().any(|&o| o >= src.output_dim()) {
                return Err(bad("source output index out of range".into()));
            }
            if let Some(r) = &c.source_rates {
                if r.len() != c.source_outputs.len() || r.iter().any(|&o| o >= src.output_dim()) {
                    return Err(bad("rate outputs invalid".into()));
                }
            }
            for &inp in &c.target_inputs {
                if inp >= dst.input_dim() {
                    return Err(bad("target input index out of range".into()));
                }
                if std::mem::replace(&mut driven[c.target][inp], true) {
                    return Err(bad(format!("input {inp} of block {} driven twice", c.target)));
                }
            }
            if let Some(k) = c.replaced_component {
                if !c.target_inputs.contains(&k) {
                    return Err(bad("replaced component is not one of the target inputs".into()));
                }
            }
        }
        self.power_pairs()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Plain,
    BalanceCorrected,
    PowerNegotiated,
}

impl std::str::FromStr for Scheme {
    type Err = CouplingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "plain" => Ok(Scheme::Plain),
            "balance_corrected" => Ok(Scheme::BalanceCorrected),
            "power_negotiated" => Ok(Scheme::PowerNegotiated),
            other => Err(CouplingError::InvalidConfig(format!(
                "unknown scheme `{other}` (expected plain, balance_corrected or power_negotiated)"
            ))),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::Plain => "plain",
            Scheme::BalanceCorrected => "balance_corrected",
            Scheme::PowerNegotiated => "power_negotiated",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MasterConfig {
    pub scheme: Scheme,
    /// Exchange step `H`.
    pub exchange_step: f64,
    pub t_end: f64,
    /// Extrapolation degree, 0 or 1.
    pub degree: u8,
    /// Use exchanged derivative outputs (linear Hermite extrapolation).
    pub hermite: bool,
    pub integrator: IntegratorConfig,
    /// Threshold on the inversion denominator below which the replaced input
    /// falls back to its plain extrapolation.
    pub inversion_epsilon: f64,
    /// Uniform samples per exchange interval recorded in the trace.
    pub samples_per_interval: usize,
    /// Advance blocks on the rayon pool. Results do not depend on it.
    pub parallel: bool,
}

impl Default for MasterConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::Plain,
            exchange_step: 0.2,
            t_end: 20.0,
            degree: 0,
            hermite: false,
            integrator: IntegratorConfig::default(),
            inversion_epsilon: 1e-2,
            samples_per_interval: 10,
            parallel: false,
        }
    }
}

impl MasterConfig {
    /// Number of exchange intervals; `t_end` must be a whole multiple of `H`.
    pub fn intervals(&self) -> Result<usize, CouplingError> {
        let h = self.exchange_step;
        if !(h > 0.0 && h.is_finite()) {
            return Err(CouplingError::InvalidConfig(format!(
                "exchange step H must be positive, got {h}"
            )));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(CouplingError::InvalidConfig(format!(
                "t_end must be positive, got {}",
                self.t_end
            )));
        }
        let ratio = self.t_end / h;
        let n = ratio.round();
        if n < 1.0 || (ratio - n).abs() > 1e-9 * ratio.max(1.0) {
            return Err(CouplingError::InvalidConfig(format!(
                "t_end = {} is not a whole multiple of H = {h}",
                self.t_end
            )));
        }
        Ok(n as usize)
    }

    /// Exchange time `T_k`; the last one is exactly `t_end`.
    pub fn exchange_time(&self, k: usize, n: usize) -> f64 {
        if k == n {
            self.t_end
        } else {
            k as f64 * self.exchange_step
        }
    }

    pub fn validate(&self) -> Result<usize, CouplingError> {
        let n = self.intervals()?;
        if self.degree > 1 {
            return Err(CouplingError::InvalidConfig(format!(
                "extrapolation degree must be 0 or 1, got {}",
                self.degree
            )));
        }
        if !(self.inversion_epsilon >= 0.0) {
            return Err(CouplingError::InvalidConfig(
                "inversion_epsilon must be non-negative".into(),
            ));
        }
        if self.samples_per_interval == 0 {
            return Err(CouplingError::InvalidConfig(
                "samples_per_interval must be at least 1".into(),
            ));
        }
        self.integrator.validate()?;
        Ok(n)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CouplingError {
    #[error("invalid master configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid wiring: {0}")]
    Wiring(String),
    #[error("power-coupled connection {0} has no power-coupled reverse connection")]
    UnpairedPowerConnection(usize),
    #[error("initial state has dimension {got}, expected {expected}")]
    StateDimension { expected: usize, got: usize },
    #[error("block {block} does not provide {what}")]
    MissingPowerMap { block: usize, what: &'static str },
    #[error("Hermite extrapolation needs rate outputs on connection {0}")]
    MissingRates(usize),
    #[error("power map of block {block} is not monotone in input {component} at t = {t}")]
    NonMonotone { block: usize, component: usize, t: f64 },
    #[error("block {block} failed in exchange interval {interval}: {source}")]
    Integration {
        block: usize,
        interval: usize,
        #[source]
        source: SolverError,
    },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Extrapolation(#[from] ExtrapolationError),
}
