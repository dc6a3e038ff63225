//! Line-oriented `key = value` run configuration.
//!
//! Every key has a documented default, so an empty file is a valid
//! configuration. Model parameters use the `param.<name>` prefix. The
//! canonical rendering produced by [`RunConfig::to_lines`] parses back to the
//! same configuration, which is how output headers make runs reproducible.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use cosim_core::analysis::DEFAULT_SERIES;
use cosim_core::models;
use cosim_core::{IntegratorConfig, MasterConfig, Method, Scheme};
use thiserror::Error;

/// Where a setting came from, for error messages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Origin {
    Line(usize),
    Flag,
}

impl std::fmt::Display for Origin {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Origin::Line(n) => write!(f, "line {n}"),
            Origin::Flag => f.write_str("command line"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("{origin}: malformed line `{text}` (expected `key = value`)")]
    Syntax { origin: Origin, text: String },
    #[error("{origin}: unknown key `{key}`")]
    UnknownKey { origin: Origin, key: String },
    #[error("{origin}: key `{key}` set twice")]
    Duplicate { origin: Origin, key: String },
    #[error("{origin}: invalid value for `{key}`: {msg}")]
    Value { origin: Origin, key: String, msg: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Keys accepted besides `param.<name>`, in rendering order.
pub const KEYS: [&str; 16] = [
    "model",
    "scheme",
    "extrap",
    "hermite",
    "H",
    "t_end",
    "H_list",
    "method",
    "abs_tol",
    "rel_tol",
    "max_step",
    "initial_step",
    "epsilon",
    "samples",
    "parallel",
    "out",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: String,
    pub scheme: Scheme,
    /// Extrapolation degree, 0 or 1.
    pub extrap: u8,
    pub hermite: bool,
    /// Exchange step.
    pub h: f64,
    pub t_end: f64,
    /// Exchange steps of a convergence study.
    pub h_list: Vec<f64>,
    pub integrator: IntegratorConfig,
    pub epsilon: f64,
    /// Output samples per exchange interval.
    pub samples: usize,
    pub parallel: bool,
    /// Model parameters overriding the model defaults.
    pub params: BTreeMap<String, f64>,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let master = MasterConfig::default();
        Self {
            model: "spring-mass".into(),
            scheme: Scheme::Plain,
            extrap: 0,
            hermite: false,
            h: 0.2,
            t_end: 20.0,
            h_list: DEFAULT_SERIES.to_vec(),
            integrator: IntegratorConfig::default(),
            epsilon: master.inversion_epsilon,
            samples: master.samples_per_interval,
            parallel: false,
            params: BTreeMap::new(),
            out: None,
        }
    }
}

fn parse_f64(origin: &Origin, key: &str, v: &str) -> Result<f64, ConfigError> {
    let x: f64 = v.parse().map_err(|_| ConfigError::Value {
        origin: origin.clone(),
        key: key.into(),
        msg: format!("`{v}` is not a number"),
    })?;
    if !x.is_finite() {
        return Err(ConfigError::Value {
            origin: origin.clone(),
            key: key.into(),
            msg: "must be finite".into(),
        });
    }
    Ok(x)
}

fn parse_bool(origin: &Origin, key: &str, v: &str) -> Result<bool, ConfigError> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(ConfigError::Value {
            origin: origin.clone(),
            key: key.into(),
            msg: format!("`{v}` is not a boolean"),
        }),
    }
}

fn positive(origin: &Origin, key: &str, x: f64) -> Result<f64, ConfigError> {
    if x > 0.0 {
        Ok(x)
    } else {
        Err(ConfigError::Value {
            origin: origin.clone(),
            key: key.into(),
            msg: format!("must be positive, got {x}"),
        })
    }
}

/// Shortest text that parses back to the same `f64`.
fn num(x: f64) -> String {
    format!("{x:?}")
}

impl RunConfig {
    /// Applies one setting. Range checks that involve a single key happen
    /// here; cross-key checks happen in [`RunConfig::validate`].
    pub fn set(&mut self, key: &str, value: &str, origin: Origin) -> Result<(), ConfigError> {
        let o = &origin;
        let bad = |msg: String| ConfigError::Value {
            origin: origin.clone(),
            key: key.into(),
            msg,
        };
        match key {
            "model" => {
                if !models::MODEL_NAMES.contains(&value) {
                    return Err(bad(format!(
                        "unknown model `{value}` (expected one of {})",
                        models::MODEL_NAMES.join(", ")
                    )));
                }
                self.model = value.into();
            }
            "scheme" => self.scheme = value.parse().map_err(|e| bad(format!("{e}")))?,
            "extrap" => {
                self.extrap = match value {
                    "0" => 0,
                    "1" => 1,
                    _ => return Err(bad(format!("must be 0 or 1, got `{value}`"))),
                }
            }
            "hermite" => self.hermite = parse_bool(o, key, value)?,
            "H" => self.h = positive(o, key, parse_f64(o, key, value)?)?,
            "t_end" => self.t_end = positive(o, key, parse_f64(o, key, value)?)?,
            "H_list" => {
                let mut hs = Vec::new();
                for item in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                    hs.push(positive(o, key, parse_f64(o, key, item)?)?);
                }
                if hs.len() < 4 {
                    return Err(bad(format!("needs at least 4 step sizes, got {}", hs.len())));
                }
                self.h_list = hs;
            }
            "method" => self.integrator.method = value.parse::<Method>().map_err(|e| bad(format!("{e}")))?,
            "abs_tol" => self.integrator.abs_tol = positive(o, key, parse_f64(o, key, value)?)?,
            "rel_tol" => {
                let x = parse_f64(o, key, value)?;
                if x < 0.0 {
                    return Err(bad("must be non-negative".into()));
                }
                self.integrator.rel_tol = x;
            }
            "max_step" => self.integrator.max_step = positive(o, key, parse_f64(o, key, value)?)?,
            "initial_step" => self.integrator.initial_step = positive(o, key, parse_f64(o, key, value)?)?,
            "epsilon" => {
                let x = parse_f64(o, key, value)?;
                if x < 0.0 {
                    return Err(bad("must be non-negative".into()));
                }
                self.epsilon = x;
            }
            "samples" => {
                let n: usize = value.parse().map_err(|_| bad(format!("`{value}` is not a count")))?;
                if n == 0 {
                    return Err(bad("must be at least 1".into()));
                }
                self.samples = n;
            }
            "parallel" => self.parallel = parse_bool(o, key, value)?,
            "out" => self.out = (!value.is_empty()).then(|| PathBuf::from(value)),
            _ => match key.strip_prefix("param.") {
                Some(name) if !name.is_empty() => {
                    self.params.insert(name.into(), parse_f64(o, key, value)?);
                }
                _ => {
                    return Err(ConfigError::UnknownKey {
                        origin,
                        key: key.into(),
                    })
                }
            },
        }
        Ok(())
    }

    /// Parses a configuration file; omitted keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let mut seen = std::collections::BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let origin = Origin::Line(i + 1);
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                origin: origin.clone(),
                text: raw.trim().into(),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(ConfigError::Syntax {
                    origin,
                    text: raw.trim().into(),
                });
            }
            if !seen.insert(key.to_string()) {
                return Err(ConfigError::Duplicate {
                    origin,
                    key: key.into(),
                });
            }
            cfg.set(key, value, origin)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks the combination of settings, including the model parameters
    /// and the exchange grid.
    pub fn validate(&self) -> Result<(), ConfigError> {
        models::build(&self.model, &self.params).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.integrator
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.master()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    pub fn master(&self) -> MasterConfig {
        MasterConfig {
            scheme: self.scheme,
            exchange_step: self.h,
            t_end: self.t_end,
            degree: self.extrap,
            hermite: self.hermite,
            integrator: self.integrator,
            inversion_epsilon: self.epsilon,
            samples_per_interval: self.samples,
            parallel: self.parallel,
        }
    }

    /// Every setting as a `key = value` line, model parameters last with
    /// their effective values.
    pub fn to_lines(&self) -> Vec<String> {
        let hs: Vec<String> = self.h_list.iter().map(|&h| num(h)).collect();
        let mut lines = Vec::new();
        for key in KEYS {
            let value = match key {
                "model" => self.model.clone(),
                "scheme" => self.scheme.to_string(),
                "extrap" => self.extrap.to_string(),
                "hermite" => self.hermite.to_string(),
                "H" => num(self.h),
                "t_end" => num(self.t_end),
                "H_list" => hs.join(", "),
                "method" => self.integrator.method.to_string(),
                "abs_tol" => num(self.integrator.abs_tol),
                "rel_tol" => num(self.integrator.rel_tol),
                "max_step" => num(self.integrator.max_step),
                "initial_step" => num(self.integrator.initial_step),
                "epsilon" => num(self.epsilon),
                "samples" => self.samples.to_string(),
                "parallel" => self.parallel.to_string(),
                "out" => self.out.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
                _ => unreachable!(),
            };
            lines.push(format!("{key} = {value}"));
        }
        let defaults = models::default_parameters(&self.model).unwrap_or_default();
        for (name, default) in defaults {
            let v = self.params.get(name).copied().unwrap_or(default);
            lines.push(format!("param.{name} = {}", num(v)));
        }
        lines
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for l in self.to_lines() {
            let _ = writeln!(s, "{l}");
        }
        s
    }
}
