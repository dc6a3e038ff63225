use std::ops::ControlFlow;

use super::{Step, DenseSolution, Integration, IntegratorConfig, SolverError};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;

// fifth-order weights (also row 7 of A)
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;

// difference between fifth- and fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

// continuous extension
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 5.0;
const BETA: f64 = 0.04;
const ALPHA: f64 = 0.2 - 0.75 * BETA;

pub(super) fn run<F, O>(
    mut f: F,
    x0: &[f64],
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
    step_hint: Option<f64>,
    mut observer: O,
) -> Result<Integration, SolverError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    O: FnMut(Step<'_>) -> ControlFlow<()>,
{
    let n = x0.len();
    let mut dense = DenseSolution::new(n);
    let mut x = x0.to_vec();
    let mut t = t0;
    let mut k: [Vec<f64>; 7] = std::array::from_fn(|_| vec![0.0; n]);
    let mut y = vec![0.0; n];
    let mut y1 = vec![0.0; n];
    let mut err = vec![0.0; n];

    let mut h = step_hint
        .filter(|h| *h > 0.0 && h.is_finite())
        .unwrap_or(cfg.initial_step)
        .min(cfg.max_step);
    let mut err_old: f64 = 1e-4;
    let mut last_rejected = false;
    let mut accepted = 0usize;
    let mut rejected = 0usize;
    let mut next_step = h;

    f(t, &x, &mut k[0]);
    if k[0].iter().any(|v| !v.is_finite()) {
        return Err(SolverError::NonFinite { t });
    }

    while t < t1 {
        let h_min = 1e-14 * t.abs().max(1.0);
        if h < h_min {
            return Err(SolverError::StepSizeUnderflow { t, h });
        }
        let mut last = false;
        if t + h >= t1 - h_min {
            next_step = h;
            h = t1 - t;
            last = true;
        }

        let [k1, k2, k3, k4, k5, k6, k7] = &mut k;
        for i in 0..n {
            y[i] = x[i] + h * A21 * k1[i];
        }
        f(t + C2 * h, &y, k2);
        for i in 0..n {
            y[i] = x[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        f(t + C3 * h, &y, k3);
        for i in 0..n {
            y[i] = x[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        f(t + C4 * h, &y, k4);
        for i in 0..n {
            y[i] = x[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        f(t + C5 * h, &y, k5);
        for i in 0..n {
            y[i] = x[i]
                + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        let t_new = if last { t1 } else { t + h };
        f(t_new, &y, k6);
        for i in 0..n {
            y1[i] = x[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
        }
        f(t_new, &y1, k7);
        for i in 0..n {
            err[i] = h
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }

        let finite = y1.iter().chain(k7.iter()).chain(err.iter()).all(|v| v.is_finite());
        let err_norm = if finite {
            let mut acc = 0.0;
            for i in 0..n {
                let sc = cfg.abs_tol + cfg.rel_tol * x[i].abs().max(y1[i].abs());
                let r = err[i] / sc;
                acc += r * r;
            }
            if n == 0 { 0.0 } else { (acc / n as f64).sqrt() }
        } else {
            f64::INFINITY
        };

        if err_norm <= 1.0 {
            let mut fac = if err_norm == 0.0 {
                FAC_MAX
            } else {
                SAFETY * err_norm.powf(-ALPHA) * err_old.powf(BETA)
            };
            fac = fac.clamp(FAC_MIN, FAC_MAX);
            if last_rejected {
                fac = fac.min(1.0);
            }
            err_old = err_norm.max(1e-4);

            let mut rcont = vec![0.0; 4 * n];
            for i in 0..n {
                let ydiff = y1[i] - x[i];
                let bspl = h * k1[i] - ydiff;
                rcont[i] = ydiff;
                rcont[n + i] = bspl;
                rcont[2 * n + i] = ydiff - h * k7[i] - bspl;
                rcont[3 * n + i] = h
                    * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i]
                        + D7 * k7[i]);
            }
            dense.push_dopri(t, t_new, &x, &y1, rcont);

            std::mem::swap(&mut x, &mut y1);
            std::mem::swap(k1, k7);
            let t_prev = t;
            t = t_new;
            accepted += 1;
            last_rejected = false;

            let h_new = (h * fac).min(cfg.max_step);
            if !last {
                next_step = h_new;
            } else {
                next_step = next_step.max(h_new).min(cfg.max_step);
            }
            h = h_new;

            let step = Step {
                t_prev,
                t,
                x: &x,
                dense: &dense,
            };
            if observer(step).is_break() {
                return Ok(Integration {
                    t_end: t,
                    stopped: true,
                    x_end: x,
                    dense,
                    next_step: h_new,
                    accepted,
                    rejected,
                });
            }
        } else {
            let fac = if err_norm.is_finite() {
                (SAFETY * err_norm.powf(-ALPHA)).max(FAC_MIN)
            } else {
                FAC_MIN
            };
            h *= fac;
            rejected += 1;
            last_rejected = true;
        }
    }

    Ok(Integration {
        x_end: x,
        t_end: t1,
        stopped: false,
        dense,
        next_step,
        accepted,
        rejected,
    })
}
