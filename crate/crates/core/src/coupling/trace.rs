use crate::solvers::{DenseSolution, SolverError};

/// Global state on the output grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub x: Vec<f64>,
    pub energy: Option<f64>,
}

/// Balance error of one exchanged component over one interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BalanceRecord {
    /// Interval index `k >= 1`, covering `[T_{k-1}, T_k]`.
    pub interval: usize,
    pub connection: usize,
    pub component: usize,
    /// `∫ (sent - extrapolated)` over the interval, without correction.
    pub delta: f64,
    /// Amount refed through the hat function during this interval.
    pub refed: f64,
}

/// Negotiated power of one power-coupled pair on one interval, in the frame
/// of block `a` (power into `a`). Block `b` uses the exact negation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerRecord {
    pub interval: usize,
    pub block_a: usize,
    pub block_b: usize,
    /// Powers computed by each side at the start of the interval.
    pub p_a: f64,
    pub p_b: f64,
    pub p_hat: f64,
    pub p_hat_rate: f64,
    /// Polynomial actually used: `value + slope (t - anchor)`.
    pub ext_value: f64,
    pub ext_slope: f64,
    pub anchor: f64,
}

impl PowerRecord {
    /// Negotiated power into block `b`.
    pub fn p_hat_b(&self) -> f64 {
        -self.p_hat
    }

    pub fn ext_at(&self, t: f64) -> f64 {
        self.ext_value + self.ext_slope * (t - self.anchor)
    }
}

/// Time span in which a block used the fallback input instead of the power
/// inversion. Bounds are the located switch times.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingularitySpan {
    pub block: usize,
    pub interval: usize,
    pub t_start: f64,
    pub t_end: f64,
}

/// Power equation check of a power-coupled block at one interior time
/// outside its fallback spans.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerAudit {
    pub interval: usize,
    pub block: usize,
    pub t: f64,
    /// Boundary power with the inputs the block integrated with.
    pub realized: f64,
    /// Negotiated power into the block, `±Ext(P̂)(t)`.
    pub target: f64,
}

impl PowerAudit {
    pub fn residual(&self) -> f64 {
        (self.realized - self.target).abs()
    }
}

/// Everything a master run produces.
#[derive(Debug, Clone)]
pub struct SimulationTrace {
    pub exchange_times: Vec<f64>,
    pub block_offsets: Vec<usize>,
    /// Per block, the state history over the whole run.
    pub dense: Vec<DenseSolution>,
    pub samples: Vec<Sample>,
    pub balance: Vec<BalanceRecord>,
    pub powers: Vec<PowerRecord>,
    pub spans: Vec<SingularitySpan>,
    pub audits: Vec<PowerAudit>,
    pub final_state: Vec<f64>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

impl SimulationTrace {
    pub fn state_dim(&self) -> usize {
        self.final_state.len()
    }

    pub fn t_end(&self) -> f64 {
        *self.exchange_times.last().unwrap_or(&0.0)
    }

    pub fn intervals(&self) -> usize {
        self.exchange_times.len().saturating_sub(1)
    }

    /// Global state at `t` assembled from the block histories.
    pub fn state_at(&self, t: f64) -> Result<Vec<f64>, SolverError> {
        let mut x = vec![0.0; self.state_dim()];
        for (b, d) in self.dense.iter().enumerate() {
            let o = self.block_offsets[b];
            d.eval_into(t, &mut x[o..o + d.dim()])?;
        }
        Ok(x)
    }

    /// Spans merged over all blocks, sorted by start time.
    pub fn merged_spans(&self) -> Vec<(f64, f64)> {
        let mut v: Vec<(f64, f64)> = self.spans.iter().map(|s| (s.t_start, s.t_end)).collect();
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut out: Vec<(f64, f64)> = Vec::new();
        for (a, b) in v {
            match out.last_mut() {
                Some(last) if a <= last.1 => last.1 = last.1.max(b),
                _ => out.push((a, b)),
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spans_merge_across_blocks() {
        let span = |block, a, b| SingularitySpan {
            block,
            interval: 1,
            t_start: a,
            t_end: b,
        };
        let trace = SimulationTrace {
            exchange_times: vec![0.0, 1.0],
            block_offsets: vec![0],
            dense: vec![],
            samples: vec![],
            balance: vec![],
            powers: vec![],
            spans: vec![span(1, 0.5, 0.7), span(0, 0.1, 0.2), span(0, 0.6, 0.8)],
            audits: vec![],
            final_state: vec![],
            accepted_steps: 0,
            rejected_steps: 0,
        };
        assert_eq!(trace.merged_spans(), vec![(0.1, 0.2), (0.5, 0.8)]);
    }
}
