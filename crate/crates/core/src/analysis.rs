//! Convergence orders, energy reports and balance tables from traces.

use rayon::prelude::*;
use thiserror::Error;

use crate::coupling::{run_master, BalanceRecord, CouplingError, MasterConfig, SimulationTrace};
use crate::models::Benchmark;
use crate::solvers::SolverError;

/// Exchange steps of the default convergence series.
pub const DEFAULT_SERIES: [f64; 5] = [0.2, 0.1, 0.05, 0.025, 0.0125];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("order fit needs at least 4 points, got {0}")]
    TooFewPoints(usize),
    #[error("error at point {index} is not positive ({value})")]
    NonPositiveError { index: usize, value: f64 },
    #[error("step sizes must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("length mismatch: {0} step sizes, {1} errors")]
    LengthMismatch(usize, usize),
    #[error("trace has no samples")]
    EmptyTrace,
    #[error("reference state has dimension {got}, trace has {expected}")]
    Dimension { expected: usize, got: usize },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Coupling(#[from] CouplingError),
}

/// Euclidean norm of `trace(t_end) - reference(t_end)`.
pub fn endpoint_error<R>(trace: &SimulationTrace, reference: R, t_end: f64) -> Result<f64, AnalysisError>
where
    R: Fn(f64) -> Vec<f64>,
{
    Ok(component_errors(trace, reference, t_end)?
        .iter()
        .map(|e| e * e)
        .sum::<f64>()
        .sqrt())
}

/// Absolute error of each state component at `t_end`.
pub fn component_errors<R>(trace: &SimulationTrace, reference: R, t_end: f64) -> Result<Vec<f64>, AnalysisError>
where
    R: Fn(f64) -> Vec<f64>,
{
    let x = if t_end == trace.t_end() {
        trace.final_state.clone()
    } else {
        trace.state_at(t_end)?
    };
    let r = reference(t_end);
    if r.len() != x.len() {
        return Err(AnalysisError::Dimension {
            expected: x.len(),
            got: r.len(),
        });
    }
    Ok(x.iter().zip(&r).map(|(a, b)| (a - b).abs()).collect())
}

/// Least-squares fit `log(err) = slope log(h) + intercept`.
pub fn fit_order(h: &[f64], err: &[f64]) -> Result<(f64, f64), AnalysisError> {
    if h.len() != err.len() {
        return Err(AnalysisError::LengthMismatch(h.len(), err.len()));
    }
    if h.len() < 4 {
        return Err(AnalysisError::TooFewPoints(h.len()));
    }
    if let Some(&bad) = h.iter().find(|v| !(**v > 0.0)) {
        return Err(AnalysisError::NonPositiveStep(bad));
    }
    if let Some((index, &value)) = err.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(AnalysisError::NonPositiveError { index, value });
    }
    let lx: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = err.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Endpoint errors over a series of exchange steps with the fitted order.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceStudy {
    pub h: Vec<f64>,
    pub errors: Vec<f64>,
    /// Per step size, the absolute error of every state component.
    pub component_errors: Vec<Vec<f64>>,
    pub slope: f64,
    pub intercept: f64,
}

impl ConvergenceStudy {
    pub fn from_errors(h: Vec<f64>, errors: Vec<f64>, component_errors: Vec<Vec<f64>>) -> Result<Self, AnalysisError> {
        let (slope, intercept) = fit_order(&h, &errors)?;
        Ok(Self {
            h,
            errors,
            component_errors,
            slope,
            intercept,
        })
    }

    /// Slope fitted to one state component only.
    pub fn component_slope(&self, i: usize) -> Result<f64, AnalysisError> {
        let e: Vec<f64> = self.component_errors.iter().map(|c| c[i]).collect();
        Ok(fit_order(&self.h, &e)?.0)
    }
}

/// Runs `bench` with `base` at every step in `hs` (cells run concurrently)
/// and fits the observed order.
pub fn convergence_study(bench: &Benchmark, base: &MasterConfig, hs: &[f64]) -> Result<ConvergenceStudy, AnalysisError> {
    let cells: Vec<Result<Vec<f64>, AnalysisError>> = hs
        .par_iter()
        .map(|&h| {
            let cfg = MasterConfig {
                exchange_step: h,
                parallel: false,
                ..base.clone()
            };
            let trace = run_master(&bench.system, &bench.x0, &cfg)?;
            component_errors(&trace, |t| (bench.reference)(t), cfg.t_end)
        })
        .collect();
    let mut comps = Vec::with_capacity(hs.len());
    for c in cells {
        comps.push(c?);
    }
    let errors = comps
        .iter()
        .map(|c| c.iter().map(|e| e * e).sum::<f64>().sqrt())
        .collect();
    ConvergenceStudy::from_errors(hs.to_vec(), errors, comps)
}

/// Energy change over one exchange interval, split by singularity spans.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalEnergy {
    pub interval: usize,
    pub t_start: f64,
    pub t_end: f64,
    /// `E(T_k) - E(T_{k-1})`.
    pub production: f64,
    /// Part of `production` accumulated inside singularity spans.
    pub in_spans: f64,
    /// The remainder, accumulated outside every span.
    pub outside: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    pub times: Vec<f64>,
    pub energies: Vec<f64>,
    pub e0: f64,
    /// `max_t |E(t) - E(0)| / |E(0)|` over the output grid.
    pub drift: f64,
    pub intervals: Vec<IntervalEnergy>,
    /// Merged singularity spans with the energy jump across each.
    pub spans: Vec<(f64, f64, f64)>,
}

impl EnergyReport {
    pub fn total_production(&self) -> f64 {
        self.intervals.iter().map(|i| i.production).sum()
    }

    pub fn total_in_spans(&self) -> f64 {
        self.intervals.iter().map(|i| i.in_spans).sum()
    }

    /// Share of `Σ |in| + |out|` that lies inside spans; 1 when nothing is
    /// produced at all.
    pub fn fraction_in_spans(&self) -> f64 {
        let inside: f64 = self.intervals.iter().map(|i| i.in_spans.abs()).sum();
        let total: f64 = self.intervals.iter().map(|i| i.in_spans.abs() + i.outside.abs()).sum();
        if total == 0.0 {
            1.0
        } else {
            inside / total
        }
    }

    pub fn max_outside(&self) -> f64 {
        self.intervals.iter().fold(0.0, |m, i| m.max(i.outside.abs()))
    }
}

/// Energy samples, drift, per-interval production and span attribution.
pub fn energy_drift<E>(trace: &SimulationTrace, energy: E) -> Result<EnergyReport, AnalysisError>
where
    E: Fn(&[f64]) -> f64,
{
    let first = trace.samples.first().ok_or(AnalysisError::EmptyTrace)?;
    let e0 = energy(&first.x);
    let scale = if e0 != 0.0 { e0.abs() } else { 1.0 };
    let times: Vec<f64> = trace.samples.iter().map(|s| s.t).collect();
    let energies: Vec<f64> = trace.samples.iter().map(|s| energy(&s.x)).collect();
    let drift = energies.iter().fold(0.0f64, |m, e| m.max((e - e0).abs() / scale));

    let e_at = |t: f64| -> Result<f64, AnalysisError> { Ok(energy(&trace.state_at(t)?)) };
    let merged = trace.merged_spans();
    let mut spans = Vec::with_capacity(merged.len());
    for &(a, b) in &merged {
        spans.push((a, b, e_at(b)? - e_at(a)?));
    }

    let mut intervals = Vec::with_capacity(trace.intervals());
    let mut e_prev = e_at(trace.exchange_times[0])?;
    for (k, w) in trace.exchange_times.windows(2).enumerate() {
        let (ta, tb) = (w[0], w[1]);
        let e_next = e_at(tb)?;
        let production = e_next - e_prev;
        let mut in_spans = 0.0;
        for &(a, b) in &merged {
            let (lo, hi) = (a.max(ta), b.min(tb));
            if hi > lo {
                in_spans += e_at(hi)? - e_at(lo)?;
            }
        }
        intervals.push(IntervalEnergy {
            interval: k + 1,
            t_start: ta,
            t_end: tb,
            production,
            in_spans,
            outside: production - in_spans,
        });
        e_prev = e_next;
    }

    Ok(EnergyReport {
        times,
        energies,
        e0,
        drift,
        intervals,
        spans,
    })
}

/// Balance errors ordered by interval, connection and component.
pub fn interval_balance_report(trace: &SimulationTrace) -> Vec<BalanceRecord> {
    let mut rows = trace.balance.clone();
    rows.sort_by_key(|r| (r.interval, r.connection, r.component));
    rows
}
