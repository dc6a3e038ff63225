use std::path::{Path, PathBuf};

use cosim_core::analysis::{convergence_study, energy_drift, AnalysisError};
use cosim_core::coupling::CouplingError;
use cosim_core::models::{self, ModelError};
use cosim_core::{run_master, Scheme, SimulationTrace};
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::table::{SpanLine, Table};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("simulation failed: {0}")]
    Coupling(#[from] CouplingError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("model `{0}` defines no energy")]
    NoEnergy(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Run,
    Converge,
    Stability,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Run => "run",
            Command::Converge => "converge",
            Command::Stability => "stability",
        }
    }
}

fn header(cmd: Command, cfg: &RunConfig) -> Vec<String> {
    let mut h = vec![format!("cosim {VERSION} {}", cmd.name())];
    h.extend(cfg.to_lines());
    h
}

fn span_lines(trace: &SimulationTrace) -> Vec<SpanLine> {
    trace
        .spans
        .iter()
        .map(|s| SpanLine {
            block: s.block,
            interval: s.interval,
            start: s.t_start,
            end: s.t_end,
        })
        .collect()
}

fn simulate(cfg: &RunConfig) -> Result<(models::Benchmark, SimulationTrace), CliError> {
    cfg.validate()?;
    let bench = models::build(&cfg.model, &cfg.params)?;
    let trace = run_master(&bench.system, &bench.x0, &cfg.master())?;
    Ok((bench, trace))
}

/// Trace on the output grid: state, energy and, depending on the scheme,
/// the negotiated powers or balance errors of the interval each row lies in.
pub fn run_table(cfg: &RunConfig) -> Result<Table, CliError> {
    let (_, trace) = simulate(cfg)?;
    let n = trace.intervals();
    let dim = trace.state_dim();
    let pairs = if cfg.scheme == Scheme::PowerNegotiated {
        trace.powers.len() / n
    } else {
        0
    };
    let components = if cfg.scheme == Scheme::BalanceCorrected {
        trace.balance.len() / n
    } else {
        0
    };

    let mut columns = vec!["t".to_string()];
    columns.extend((1..=dim).map(|i| format!("x_{i}")));
    columns.push("E".into());
    columns.extend((1..=pairs).map(|i| format!("P_hat_{i}")));
    columns.extend((1..=components).map(|i| format!("dE_{i}")));

    let spi = cfg.samples;
    let rows = trace
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let k = (i / spi).min(n - 1);
            let mut row = Vec::with_capacity(columns.len());
            row.push(s.t);
            row.extend_from_slice(&s.x);
            row.push(s.energy.unwrap_or(f64::NAN));
            row.extend(trace.powers[k * pairs..(k + 1) * pairs].iter().map(|p| p.p_hat));
            row.extend(
                trace.balance[k * components..(k + 1) * components]
                    .iter()
                    .map(|b| b.delta),
            );
            row
        })
        .collect();

    Ok(Table {
        header: header(Command::Run, cfg),
        spans: span_lines(&trace),
        columns,
        rows,
        footer: vec![
            ("accepted_steps".into(), trace.accepted_steps as f64),
            ("rejected_steps".into(), trace.rejected_steps as f64),
        ],
    })
}

/// Endpoint errors over `H_list` against the model's reference solution,
/// with fitted orders in the footer.
pub fn converge_table(cfg: &RunConfig) -> Result<Table, CliError> {
    cfg.validate()?;
    for &h in &cfg.h_list {
        let mut c = cfg.master();
        c.exchange_step = h;
        c.validate()?;
    }
    let bench = models::build(&cfg.model, &cfg.params)?;
    let study = convergence_study(&bench, &cfg.master(), &cfg.h_list)?;
    let dim = bench.x0.len();

    let mut columns = vec!["H".to_string(), "error".to_string()];
    columns.extend((1..=dim).map(|i| format!("error_x_{i}")));
    let rows = study
        .h
        .iter()
        .zip(&study.errors)
        .zip(&study.component_errors)
        .map(|((&h, &e), comps)| {
            let mut r = vec![h, e];
            r.extend_from_slice(comps);
            r
        })
        .collect();
    let mut footer = vec![
        ("slope".to_string(), study.slope),
        ("intercept".to_string(), study.intercept),
    ];
    for i in 0..dim {
        footer.push((format!("slope_x_{}", i + 1), study.component_slope(i).unwrap_or(f64::NAN)));
    }
    Ok(Table {
        header: header(Command::Converge, cfg),
        spans: Vec::new(),
        columns,
        rows,
        footer,
    })
}

/// Energy at the exchange times with per-interval production, split into
/// the parts inside and outside fallback spans.
pub fn stability_table(cfg: &RunConfig) -> Result<Table, CliError> {
    let (bench, trace) = simulate(cfg)?;
    let system = &bench.system;
    if system.energy.is_none() {
        return Err(CliError::NoEnergy(cfg.model.clone()));
    }
    let report = energy_drift(&trace, |x| system.energy_of(x).unwrap_or(f64::NAN))?;

    let energy_at = |t: f64| -> Result<f64, CliError> {
        let x = trace.state_at(t).map_err(CouplingError::from)?;
        Ok(system.energy_of(&x).unwrap_or(f64::NAN))
    };
    let mut rows = vec![vec![trace.exchange_times[0], report.e0, 0.0, 0.0, 0.0]];
    for iv in &report.intervals {
        rows.push(vec![iv.t_end, energy_at(iv.t_end)?, iv.production, iv.in_spans, iv.outside]);
    }
    let e_end = system.energy_of(&trace.final_state).unwrap_or(f64::NAN);
    Ok(Table {
        header: header(Command::Stability, cfg),
        spans: span_lines(&trace),
        columns: ["t", "E", "production", "in_spans", "outside"].map(String::from).to_vec(),
        rows,
        footer: vec![
            ("e0".into(), report.e0),
            ("e_end".into(), e_end),
            ("ratio".into(), e_end / report.e0),
            ("drift".into(), report.drift),
            ("span_count".into(), report.spans.len() as f64),
            ("span_production".into(), report.total_in_spans()),
            ("fraction_in_spans".into(), report.fraction_in_spans()),
            ("max_outside".into(), report.max_outside()),
        ],
    })
}

pub fn execute(cmd: Command, cfg: &RunConfig) -> Result<Table, CliError> {
    match cmd {
        Command::Run => run_table(cfg),
        Command::Converge => converge_table(cfg),
        Command::Stability => stability_table(cfg),
    }
}

/// Writes `text` to `path` through a sibling temporary file, so an
/// interrupted write never leaves a truncated result behind.
pub fn write_atomic(path: &Path, text: &str) -> Result<(), CliError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    let io = |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Err(e) = std::fs::write(&tmp, text) {
        let _ = std::fs::remove_file(&tmp);
        return Err(io(e));
    }
    std::fs::rename(&tmp, path).map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        io(e)
    })
}
