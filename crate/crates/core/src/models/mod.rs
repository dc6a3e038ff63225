//! Benchmark systems: the 2D linear test problems, the split spring–mass
//! oscillator and generic gradient flows.

pub mod gradient_flow;
pub mod linear;
pub mod spring_mass;

pub use gradient_flow::{
    dissipativity_check, internal_production, mobility_split, potential_production, sample_states,
    Dissipativity, GradientFlowModel,
};
pub use linear::{expm2, LinearCoupledModel};
pub use spring_mass::{
    spring_mass_analytic, spring_mass_energy, spring_mass_powers, SpringMassModel,
};

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use crate::coupling::CoupledSystem;
use crate::solvers::IntegratorConfig;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("unknown model `{0}` (expected one of linear-uni, linear-mutual, spring-mass, gradient-flow)")]
    UnknownModel(String),
    #[error("model `{model}` has no parameter `{param}`")]
    UnknownParameter { model: String, param: String },
    #[error("invalid model parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
}

pub const MODEL_NAMES: [&str; 4] = ["linear-uni", "linear-mutual", "spring-mass", "gradient-flow"];

pub type ReferenceFn = Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>;

/// A ready-to-run benchmark: wiring, initial state and a reference solution
/// in the global (block-concatenated) state order.
#[derive(Clone)]
pub struct Benchmark {
    pub name: String,
    pub system: CoupledSystem,
    pub x0: Vec<f64>,
    pub reference: ReferenceFn,
}

impl std::fmt::Debug for Benchmark {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Benchmark")
            .field("name", &self.name)
            .field("system", &self.system)
            .field("x0", &self.x0)
            .finish_non_exhaustive()
    }
}

/// Parameter names accepted by each model, with defaults.
pub fn default_parameters(name: &str) -> Result<BTreeMap<&'static str, f64>, ModelError> {
    let pairs: &[(&'static str, f64)] = match name {
        "spring-mass" => &[("m", 1.0), ("c", 1.0), ("d", 0.0), ("x0", 1.0), ("v0", 0.0)],
        "linear-uni" => &[
            ("a11", -1.0),
            ("a12", 0.0),
            ("a21", 1.0),
            ("a22", -1.0),
            ("x1", 1.0),
            ("x2", 1.0),
        ],
        "linear-mutual" => &[
            ("a11", 0.0),
            ("a12", 1.0),
            ("a21", -1.0),
            ("a22", 0.0),
            ("x1", 1.0),
            ("x2", 1.0),
        ],
        "gradient-flow" => &[
            ("k", 0.5),
            ("gamma", 0.0),
            ("x1", 1.0),
            ("x2", 0.0),
            ("x3", 0.0),
            ("x4", 0.0),
        ],
        other => return Err(ModelError::UnknownModel(other.to_string())),
    };
    Ok(pairs.iter().copied().collect())
}

/// Builds a named benchmark, overriding defaults with `params`.
pub fn build(name: &str, params: &BTreeMap<String, f64>) -> Result<Benchmark, ModelError> {
    let mut p = default_parameters(name)?;
    for (k, v) in params {
        match p.get_mut(k.as_str()) {
            Some(slot) => *slot = *v,
            None => {
                return Err(ModelError::UnknownParameter {
                    model: name.to_string(),
                    param: k.clone(),
                })
            }
        }
    }
    match name {
        "spring-mass" => {
            let model = SpringMassModel {
                m: p["m"],
                c: p["c"],
                d: p["d"],
                x0: p["x0"],
                v0: p["v0"],
            };
            let system = model.system()?;
            let reference: ReferenceFn = if model.d == 0.0 {
                Arc::new(move |t| model.analytic(t))
            } else {
                let a = [[0.0, 1.0], [-model.c / model.m, -model.d / model.m]];
                let lin = LinearCoupledModel {
                    a,
                    x0: [model.x0, model.v0],
                };
                Arc::new(move |t| lin.analytic(t))
            };
            Ok(Benchmark {
                name: name.into(),
                system,
                x0: model.initial_state(),
                reference,
            })
        }
        "linear-uni" | "linear-mutual" => {
            let model = LinearCoupledModel {
                a: [[p["a11"], p["a12"]], [p["a21"], p["a22"]]],
                x0: [p["x1"], p["x2"]],
            };
            Ok(Benchmark {
                name: name.into(),
                system: model.system()?,
                x0: model.initial_state(),
                reference: Arc::new(move |t| model.analytic(t)),
            })
        }
        "gradient-flow" => {
            let model = GradientFlowModel::coupled_oscillators(p["k"], p["gamma"])?;
            let x0 = vec![p["x1"], p["x2"], p["x3"], p["x4"]];
            let system = model.system()?;
            let xb0 = model.to_block_order(&x0);
            let reference: ReferenceFn = Arc::new(move |t| {
                let x = model
                    .reference(&x0, t, &IntegratorConfig::default())
                    .expect("reference integration of a linear flow");
                model.to_block_order(&x)
            });
            Ok(Benchmark {
                name: name.into(),
                system,
                x0: xb0,
                reference,
            })
        }
        other => Err(ModelError::UnknownModel(other.to_string())),
    }
}
