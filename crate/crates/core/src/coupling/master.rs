use std::cell::RefCell;
use std::ops::ControlFlow;

use rayon::prelude::*;

use super::power::{invert_power, negotiate_power, Inversion};
use super::trace::{BalanceRecord, PowerAudit, PowerRecord, Sample, SimulationTrace, SingularitySpan};
use super::{CoupledSystem, CouplingError, MasterConfig, Scheme, Subsystem};
use crate::extrapolation::{
    balance_error, build_constant, build_hermite_linear, build_linear, refeed_shape, Correction,
    Extrapolant, SampleHistory,
};
use crate::solvers::{integrate_until, integrate_with, DenseSolution, SolverError, Step};

/// How a block assembles its input vector during one exchange interval.
#[derive(Debug, Clone)]
struct InputPlan {
    /// Target input indices and the extrapolant feeding them.
    incoming: Vec<(Vec<usize>, Extrapolant)>,
    power: Option<PowerPlan>,
}

#[derive(Debug, Clone)]
struct PowerPlan {
    /// Negotiated power in the pair's reference frame.
    ext: Extrapolant,
    /// +1 for the reference block of the pair, -1 for its partner.
    sign: f64,
    component: usize,
    eps: f64,
}

#[derive(Debug, Clone, Copy)]
struct PowerRole {
    pair: usize,
    sign: f64,
    component: usize,
}

struct BlockStep {
    dense: DenseSolution,
    x_end: Vec<f64>,
    next_step: f64,
    accepted: usize,
    rejected: usize,
    spans: Vec<(f64, f64)>,
}

/// Relative widening of the guard band required to leave the fallback, so
/// that a trajectory grazing the band edge does not chatter.
const EXIT_HYSTERESIS: f64 = 0.05;
/// Fallback switches allowed per block and interval; beyond that the block
/// stays in fallback until the next exchange. The same latch applies after
/// an inverse-mode integration collapses onto a singularity.
const MAX_SWITCHES: usize = 64;
/// Guard probes per accepted step.
const GUARD_PROBES: usize = 8;
/// Interior times per interval at which the power equation is audited.
const AUDIT_POINTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Inverse,
    Fallback,
}

/// Writes the extrapolated inputs at `t` into `u`.
fn fill_plain(plan: &InputPlan, t: f64, u: &mut [f64]) {
    u.fill(0.0);
    for (inputs, ext) in &plan.incoming {
        for (j, &inp) in inputs.iter().enumerate() {
            u[inp] = ext.eval_component(t, j);
        }
    }
}

/// Writes the block's inputs at `(t, x)` into `u`. In inverse mode the
/// power-coupled component is rebuilt from the negotiated power.
fn fill_inputs(
    block: &dyn Subsystem,
    index: usize,
    plan: &InputPlan,
    mode: Mode,
    t: f64,
    x: &[f64],
    u: &mut [f64],
) -> Result<(), CouplingError> {
    fill_plain(plan, t, u);
    let Some(pp) = &plan.power else {
        return Ok(());
    };
    if mode == Mode::Fallback {
        return Ok(());
    }
    let target = pp.sign * pp.ext.eval_component(t, 0);
    // the guard decides when to leave; inside a step any finite value will do
    if let Inversion::Regular(v) = invert_power(block, index, target, t, x, u, pp.component, 0.0)? {
        u[pp.component] = v;
    }
    Ok(())
}

/// Distance from singularity: the smaller of the inversion denominator and
/// the plain extrapolant of the rebuilt component. Near a zero of the latter
/// the partner's own inversion is close to singular as well, so both sides
/// leave the power equation together.
fn guard_margin(
    block: &dyn Subsystem,
    index: usize,
    plan: &InputPlan,
    pp: &PowerPlan,
    t: f64,
    x: &[f64],
    u: &mut [f64],
) -> Result<f64, CouplingError> {
    fill_plain(plan, t, u);
    let standard = u[pp.component];
    let target = pp.sign * pp.ext.eval_component(t, 0);
    let inv = block
        .power_inverse(target, x, u, pp.component)
        .ok_or(CouplingError::MissingPowerMap {
            block: index,
            what: "a power inverse",
        })?;
    Ok(standard.abs().min(inv.sensitivity.abs()))
}

/// Mode of a block at `t` given its fallback spans of the interval.
fn mode_at(spans: &[(f64, f64)], t: f64) -> Mode {
    if spans.iter().any(|&(a, b)| t >= a && t < b) {
        Mode::Fallback
    } else {
        Mode::Inverse
    }
}

/// Outputs of every block at `t`, with inputs assembled from the outputs of
/// a first pass so that derivative outputs see current input values.
/// Returns `(outputs, inputs, input_rates)` per block.
#[allow(clippy::type_complexity)]
fn sample_outputs(
    system: &CoupledSystem,
    xs: &[Vec<f64>],
    t: f64,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let blocks = &system.blocks;
    let mut u: Vec<Vec<f64>> = blocks.iter().map(|b| vec![0.0; b.input_dim()]).collect();
    let mut y: Vec<Vec<f64>> = blocks.iter().map(|b| vec![0.0; b.output_dim()]).collect();
    for _ in 0..2 {
        for (b, blk) in blocks.iter().enumerate() {
            blk.output(t, &xs[b], &u[b], &mut y[b]);
        }
        for c in &system.connections {
            for (&o, &i) in c.source_outputs.iter().zip(&c.target_inputs) {
                u[c.target][i] = y[c.source][o];
            }
        }
    }
    let mut du: Vec<Vec<f64>> = blocks.iter().map(|b| vec![0.0; b.input_dim()]).collect();
    for c in &system.connections {
        if let Some(rates) = &c.source_rates {
            for (&o, &i) in rates.iter().zip(&c.target_inputs) {
                du[c.target][i] = y[c.source][o];
            }
        }
    }
    (y, u, du)
}

#[allow(clippy::too_many_arguments)]
fn advance_block(
    system: &CoupledSystem,
    cfg: &MasterConfig,
    b: usize,
    plan: &InputPlan,
    x0: &[f64],
    t0: f64,
    t1: f64,
    hint: Option<f64>,
    interval: usize,
) -> Result<BlockStep, CouplingError> {
    let block = system.blocks[b].as_ref();
    let wrap = |source| CouplingError::Integration {
        block: b,
        interval,
        source,
    };
    let Some(pp) = &plan.power else {
        let mut u = vec![0.0; block.input_dim()];
        let rhs = |t: f64, x: &[f64], dx: &mut [f64]| {
            fill_plain(plan, t, &mut u);
            block.rhs(t, x, &u, dx);
        };
        let run = integrate_with(rhs, x0, t0, t1, &cfg.integrator, hint, |_, _| {}).map_err(wrap)?;
        return Ok(BlockStep {
            dense: run.dense,
            x_end: run.x_end,
            next_step: run.next_step,
            accepted: run.accepted,
            rejected: run.rejected,
            spans: Vec::new(),
        });
    };

    let failure: RefCell<Option<CouplingError>> = RefCell::new(None);
    let record = |e: CouplingError| {
        failure.borrow_mut().get_or_insert(e);
    };
    let eps = pp.eps;
    let mut probe_u = vec![0.0; block.input_dim()];
    let mut margin = |t: f64, x: &[f64]| match guard_margin(block, b, plan, pp, t, x, &mut probe_u) {
        Ok(m) => m,
        Err(e) => {
            record(e);
            f64::INFINITY
        }
    };

    let mut dense = DenseSolution::new(block.state_dim());
    let mut x = x0.to_vec();
    let mut t = t0;
    let mut hint = hint;
    let mut mode = if margin(t0, x0) < eps { Mode::Fallback } else { Mode::Inverse };
    let mut span_start = (mode == Mode::Fallback).then_some(t0);
    let mut spans = Vec::new();
    let mut switches = 0usize;
    let (mut accepted, mut rejected) = (0usize, 0usize);
    let mut u = vec![0.0; block.input_dim()];
    let mut xs = vec![0.0; block.state_dim()];

    // set after an inverse run collapsed; the rerun stops at its last good step
    let mut stop_at: Option<f64> = None;
    let mut forced = false;
    loop {
        let latched = forced || switches >= MAX_SWITCHES;
        let mut last_ok = t;
        let flips = |m: f64| match mode {
            Mode::Inverse => m < eps,
            Mode::Fallback => m >= eps * (1.0 + EXIT_HYSTERESIS),
        };
        let mut switch_at = None;
        let rhs = |tt: f64, xx: &[f64], dx: &mut [f64]| {
            match fill_inputs(block, b, plan, mode, tt, xx, &mut u) {
                Ok(()) => block.rhs(tt, xx, &u, dx),
                Err(e) => {
                    record(e);
                    dx.fill(f64::NAN);
                }
            }
        };
        let on_step = |step: Step<'_>| {
            last_ok = step.t;
            if let Some(ts) = stop_at {
                if step.t >= ts {
                    switch_at = Some(step.t);
                    return ControlFlow::Break(());
                }
                return ControlFlow::Continue(());
            }
            if latched {
                return ControlFlow::Continue(());
            }
            let mut lo = step.t_prev;
            for j in 1..=GUARD_PROBES {
                let tj = if j == GUARD_PROBES {
                    step.t
                } else {
                    step.t_prev + (step.t - step.t_prev) * (j as f64 / GUARD_PROBES as f64)
                };
                if step.dense.eval_into(tj, &mut xs).is_err() {
                    continue;
                }
                if flips(margin(tj, &xs)) {
                    let mut hi = tj;
                    while hi - lo > 1e-14 * hi.abs().max(1.0) {
                        let mid = 0.5 * (lo + hi);
                        if mid <= lo || mid >= hi {
                            break;
                        }
                        let _ = step.dense.eval_into(mid, &mut xs);
                        if flips(margin(mid, &xs)) {
                            hi = mid;
                        } else {
                            lo = mid;
                        }
                    }
                    switch_at = Some(hi);
                    return ControlFlow::Break(());
                }
                lo = tj;
            }
            ControlFlow::Continue(())
        };
        let run = integrate_until(rhs, &x, t, t1, &cfg.integrator, hint, on_step);
        if let Some(e) = failure.borrow_mut().take() {
            return Err(e);
        }
        let mut run = match run {
            // a singular inverse solution the guard did not see coming
            Err(SolverError::StepSizeUnderflow { .. }) if mode == Mode::Inverse && stop_at.is_none() => {
                if last_ok > t {
                    stop_at = Some(last_ok);
                } else {
                    forced = true;
                    switches += 1;
                    span_start = Some(t);
                    mode = Mode::Fallback;
                }
                continue;
            }
            r => r.map_err(wrap)?,
        };
        if stop_at.take().is_some() {
            forced = true;
        }
        accepted += run.accepted;
        rejected += run.rejected;
        hint = Some(run.next_step);
        match switch_at {
            None => {
                dense.append(run.dense)?;
                x = run.x_end;
                break;
            }
            Some(ts) => {
                run.dense.truncate(ts)?;
                x = run.dense.last_state().expect("nonempty").to_vec();
                dense.append(run.dense)?;
                t = ts;
                switches += 1;
                mode = match mode {
                    Mode::Inverse => {
                        span_start = Some(ts);
                        Mode::Fallback
                    }
                    Mode::Fallback => {
                        spans.push((span_start.take().expect("open span"), ts));
                        Mode::Inverse
                    }
                };
                if ts >= t1 {
                    break;
                }
            }
        }
    }
    if let Some(s) = span_start {
        if t1 > s {
            spans.push((s, t1));
        }
    }
    Ok(BlockStep {
        dense,
        x_end: x,
        next_step: hint.unwrap_or(cfg.integrator.initial_step),
        accepted,
        rejected,
        spans,
    })
}

/// Runs the configured master scheme from `x0` (global state, blocks
/// concatenated) over `[0, t_end]`.
///
/// Each exchange interval `[T_{k-1}, T_k]`:
/// outputs are sampled at `T_{k-1}`, every input gets an extrapolant
/// (constant, linear from the two newest samples, or linear Hermite from the
/// exchanged derivative), and every block is integrated on its own to `T_k`.
/// The first interval always uses the newest sample only, unless exchanged
/// derivatives are available.
///
/// With balance correction the integral error of each exchanged signal over
/// the previous interval is added back through a unit-mass hat function.
/// With power negotiation both blocks of a power-coupled pair agree on
/// `P̂ = (P_a - P_b)/2` and each rebuilds one input component so that its
/// boundary power equals `±Ext(P̂)`. Where the inversion denominator or the
/// plain extrapolant of that component drops below `inversion_epsilon`, the
/// plain extrapolant is used instead and the time span is logged.
pub fn run_master(
    system: &CoupledSystem,
    x0: &[f64],
    cfg: &MasterConfig,
) -> Result<SimulationTrace, CouplingError> {
    let n = cfg.validate()?;
    system.validate()?;
    let dim = system.state_dim();
    if x0.len() != dim {
        return Err(CouplingError::StateDimension {
            expected: dim,
            got: x0.len(),
        });
    }
    let conns = &system.connections;
    let nb = system.blocks.len();
    if cfg.hermite {
        if let Some(i) = conns.iter().position(|c| c.source_rates.is_none()) {
            return Err(CouplingError::MissingRates(i));
        }
    }

    let pairs = if cfg.scheme == Scheme::PowerNegotiated {
        system.power_pairs()?
    } else {
        Vec::new()
    };
    let mut roles: Vec<Option<PowerRole>> = vec![None; nb];
    for (p, &(ab, ba)) in pairs.iter().enumerate() {
        // block a is the source of `ab` and receives through `ba`
        let a = conns[ab].source;
        let b = conns[ab].target;
        roles[a] = Some(PowerRole {
            pair: p,
            sign: 1.0,
            component: conns[ba].replaced_component.expect("paired"),
        });
        roles[b] = Some(PowerRole {
            pair: p,
            sign: -1.0,
            component: conns[ab].replaced_component.expect("paired"),
        });
    }

    let offsets = system.offsets();
    let mut xs: Vec<Vec<f64>> = system
        .blocks
        .iter()
        .zip(&offsets)
        .map(|(blk, &o)| x0[o..o + blk.state_dim()].to_vec())
        .collect();

    let mut hist: Vec<SampleHistory> = conns
        .iter()
        .map(|c| SampleHistory::new(c.width(), cfg.hermite, 2))
        .collect();
    let mut p_hist: Vec<SampleHistory> =
        pairs.iter().map(|_| SampleHistory::new(1, false, 2)).collect();
    let mut prev_delta: Vec<Vec<f64>> = conns.iter().map(|c| vec![0.0; c.width()]).collect();
    let mut hints: Vec<Option<f64>> = vec![None; nb];

    let exchange_times: Vec<f64> = (0..=n).map(|k| cfg.exchange_time(k, n)).collect();
    let mut full: Vec<DenseSolution> = system
        .blocks
        .iter()
        .map(|b| DenseSolution::new(b.state_dim()))
        .collect();
    let mut samples = Vec::with_capacity(n * cfg.samples_per_interval + 1);
    let mut balance = Vec::new();
    let mut powers = Vec::new();
    let mut spans = Vec::new();
    let mut audits = Vec::new();
    let (mut accepted, mut rejected) = (0usize, 0usize);

    for k in 1..=n {
        let (ta, tb) = (exchange_times[k - 1], exchange_times[k]);
        let width = tb - ta;
        let (y, u_now, du_now) = sample_outputs(system, &xs, ta);

        // plain extrapolants, optionally corrected
        let mut base = Vec::with_capacity(conns.len());
        let mut used = Vec::with_capacity(conns.len());
        for (ci, c) in conns.iter().enumerate() {
            let v: Vec<f64> = c.source_outputs.iter().map(|&o| y[c.source][o]).collect();
            let r: Option<Vec<f64>> = c
                .source_rates
                .as_ref()
                .filter(|_| cfg.hermite)
                .map(|rs| rs.iter().map(|&o| y[c.source][o]).collect());
            hist[ci].push(ta, &v, r.as_deref())?;
            let ext = match &r {
                Some(r) => build_hermite_linear(&v, r, ta, width)?,
                None if cfg.degree == 1 && hist[ci].len() >= 2 => build_linear(&hist[ci], width)?,
                None => build_constant(&hist[ci], width)?,
            };
            let fed = if cfg.scheme == Scheme::BalanceCorrected && k >= 2 {
                ext.clone().with_correction(Correction {
                    amount: prev_delta[ci].clone(),
                    shape: refeed_shape(ta, tb)?,
                })
            } else {
                ext.clone()
            };
            base.push(ext);
            used.push(fed);
        }

        // negotiated powers
        let mut p_ext = Vec::with_capacity(pairs.len());
        for (p, &(ab, _)) in pairs.iter().enumerate() {
            let (a, b) = (conns[ab].source, conns[ab].target);
            let blk_a = &system.blocks[a];
            let blk_b = &system.blocks[b];
            let missing = |block, what| CouplingError::MissingPowerMap { block, what };
            let p_a = blk_a.power(&xs[a], &u_now[a]).ok_or(missing(a, "a power map"))?;
            let p_b = blk_b.power(&xs[b], &u_now[b]).ok_or(missing(b, "a power map"))?;
            let p_hat = negotiate_power(p_a, p_b);
            let mut p_hat_rate = 0.0;
            p_hist[p].push(ta, &[p_hat], None)?;
            let ext = if cfg.hermite {
                let r_a = blk_a
                    .power_rate(&xs[a], &u_now[a], &du_now[a])
                    .ok_or(missing(a, "a power rate"))?;
                let r_b = blk_b
                    .power_rate(&xs[b], &u_now[b], &du_now[b])
                    .ok_or(missing(b, "a power rate"))?;
                p_hat_rate = negotiate_power(r_a, r_b);
                build_hermite_linear(&[p_hat], &[p_hat_rate], ta, width)?
            } else if cfg.degree == 1 && p_hist[p].len() >= 2 {
                build_linear(&p_hist[p], width)?
            } else {
                build_constant(&p_hist[p], width)?
            };
            powers.push(PowerRecord {
                interval: k,
                block_a: a,
                block_b: b,
                p_a,
                p_b,
                p_hat,
                p_hat_rate,
                ext_value: ext.value[0],
                ext_slope: ext.slope[0],
                anchor: ext.anchor,
            });
            p_ext.push(ext);
        }

        let plans: Vec<InputPlan> = (0..nb)
            .map(|b| InputPlan {
                incoming: conns
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| c.target == b)
                    .map(|(ci, c)| (c.target_inputs.clone(), used[ci].clone()))
                    .collect(),
                power: roles[b].map(|r| PowerPlan {
                    ext: p_ext[r.pair].clone(),
                    sign: r.sign,
                    component: r.component,
                    eps: cfg.inversion_epsilon,
                }),
            })
            .collect();

        let step = |b: usize| {
            advance_block(system, cfg, b, &plans[b], &xs[b], ta, tb, hints[b], k)
        };
        let results: Vec<Result<BlockStep, CouplingError>> = if cfg.parallel {
            (0..nb).into_par_iter().map(step).collect()
        } else {
            (0..nb).map(step).collect()
        };
        let mut steps = Vec::with_capacity(nb);
        for r in results {
            steps.push(r?);
        }

        // balance errors of this interval, refed in the next one
        for (ci, c) in conns.iter().enumerate() {
            let src = c.source;
            let blk = system.blocks[src].as_ref();
            let dense = &steps[src].dense;
            let mut xb = vec![0.0; blk.state_dim()];
            let mut ub = vec![0.0; blk.input_dim()];
            let mut yb = vec![0.0; blk.output_dim()];
            let mut err: Option<CouplingError> = None;
            let actual = |t: f64, out: &mut [f64]| {
                if let Err(e) = dense.eval_into(t, &mut xb) {
                    err.get_or_insert(e.into());
                }
                let mode = mode_at(&steps[src].spans, t);
                if let Err(e) = fill_inputs(blk, src, &plans[src], mode, t, &xb, &mut ub) {
                    err.get_or_insert(e);
                }
                blk.output(t, &xb, &ub, &mut yb);
                for (j, &o) in c.source_outputs.iter().enumerate() {
                    out[j] = yb[o];
                }
            };
            let bps = dense.breakpoints();
            let delta = balance_error(actual, &base[ci], ta, tb, &bps);
            if let Some(e) = err {
                return Err(e);
            }
            for (j, &d) in delta.iter().enumerate() {
                let refed = if cfg.scheme == Scheme::BalanceCorrected && k >= 2 {
                    prev_delta[ci][j]
                } else {
                    0.0
                };
                balance.push(BalanceRecord {
                    interval: k,
                    connection: ci,
                    component: j,
                    delta: d,
                    refed,
                });
            }
            prev_delta[ci] = delta;
        }

        // power equation at interior points outside the fallback
        for (b, plan) in plans.iter().enumerate() {
            let Some(pp) = &plan.power else { continue };
            let blk = system.blocks[b].as_ref();
            let mut xb = vec![0.0; blk.state_dim()];
            let mut ub = vec![0.0; blk.input_dim()];
            for j in 1..=AUDIT_POINTS {
                let t = ta + width * (j as f64 / (AUDIT_POINTS + 1) as f64);
                if mode_at(&steps[b].spans, t) == Mode::Fallback {
                    continue;
                }
                steps[b].dense.eval_into(t, &mut xb)?;
                fill_inputs(blk, b, plan, Mode::Inverse, t, &xb, &mut ub)?;
                let realized = blk.power(&xb, &ub).ok_or(CouplingError::MissingPowerMap {
                    block: b,
                    what: "a power map",
                })?;
                audits.push(PowerAudit {
                    interval: k,
                    block: b,
                    t,
                    realized,
                    target: pp.sign * pp.ext.eval_component(t, 0),
                });
            }
        }

        // output grid
        let spi = cfg.samples_per_interval;
        let mut xg = vec![0.0; dim];
        for j in 0..spi {
            let t = if j == 0 {
                ta
            } else {
                ta + width * (j as f64 / spi as f64)
            };
            for (b, s) in steps.iter().enumerate() {
                let o = offsets[b];
                s.dense.eval_into(t, &mut xg[o..o + s.dense.dim()])?;
            }
            samples.push(Sample {
                t,
                energy: system.energy_of(&xg),
                x: xg.clone(),
            });
        }

        for (b, s) in steps.into_iter().enumerate() {
            for (t_start, t_end) in &s.spans {
                spans.push(SingularitySpan {
                    block: b,
                    interval: k,
                    t_start: *t_start,
                    t_end: *t_end,
                });
            }
            accepted += s.accepted;
            rejected += s.rejected;
            hints[b] = Some(s.next_step);
            xs[b] = s.x_end;
            full[b].append(s.dense)?;
        }
    }

    let mut final_state = vec![0.0; dim];
    for (b, x) in xs.iter().enumerate() {
        final_state[offsets[b]..offsets[b] + x.len()].copy_from_slice(x);
    }
    samples.push(Sample {
        t: cfg.t_end,
        energy: system.energy_of(&final_state),
        x: final_state.clone(),
    });

    Ok(SimulationTrace {
        exchange_times,
        block_offsets: offsets,
        dense: full,
        samples,
        balance,
        powers,
        spans,
        audits,
        final_state,
        accepted_steps: accepted,
        rejected_steps: rejected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_follows_half_open_spans() {
        let spans = [(0.1, 0.2), (0.5, 0.6)];
        assert_eq!(mode_at(&spans, 0.0), Mode::Inverse);
        assert_eq!(mode_at(&spans, 0.1), Mode::Fallback);
        assert_eq!(mode_at(&spans, 0.15), Mode::Fallback);
        assert_eq!(mode_at(&spans, 0.2), Mode::Inverse);
        assert_eq!(mode_at(&spans, 0.55), Mode::Fallback);
        assert_eq!(mode_at(&[], 0.55), Mode::Inverse);
    }

    #[test]
    fn plain_inputs_come_from_extrapolants() {
        let ext = Extrapolant {
            anchor: 0.0,
            width: 1.0,
            degree: 1,
            value: vec![1.0, 2.0],
            slope: vec![0.5, -1.0],
            correction: None,
        };
        let plan = InputPlan {
            incoming: vec![(vec![2, 0], ext)],
            power: None,
        };
        let mut u = vec![9.0; 3];
        fill_plain(&plan, 0.5, &mut u);
        assert_eq!(u, vec![1.5, 0.0, 1.25]);
    }
}
