use std::ops::ControlFlow;

use super::{Step, fixed_step_count, grid_time, DenseSolution, Integration, IntegratorConfig, SolverError};

pub(super) fn run<F, O>(
    mut f: F,
    x0: &[f64],
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
    mut observer: O,
) -> Result<Integration, SolverError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    O: FnMut(Step<'_>) -> ControlFlow<()>,
{
    let n = x0.len();
    let steps = fixed_step_count(t0, t1, cfg.max_step);
    let mut dense = DenseSolution::new(n);
    let mut x = x0.to_vec();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut x_next = vec![0.0; n];
    let mut f_next = vec![0.0; n];

    f(t0, &x, &mut k1);
    for i in 0..steps {
        let ta = grid_time(t0, t1, i, steps);
        let tb = grid_time(t0, t1, i + 1, steps);
        let h = tb - ta;
        let tm = ta + 0.5 * h;
        for j in 0..n {
            y[j] = x[j] + 0.5 * h * k1[j];
        }
        f(tm, &y, &mut k2);
        for j in 0..n {
            y[j] = x[j] + 0.5 * h * k2[j];
        }
        f(tm, &y, &mut k3);
        for j in 0..n {
            y[j] = x[j] + h * k3[j];
        }
        f(tb, &y, &mut k4);
        for j in 0..n {
            x_next[j] = x[j] + h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        if x_next.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::NonFinite { t: ta });
        }
        f(tb, &x_next, &mut f_next);
        dense.push_hermite(ta, tb, &x, &x_next, &k1, &f_next);
        std::mem::swap(&mut x, &mut x_next);
        std::mem::swap(&mut k1, &mut f_next);
        let step = Step {
            t_prev: ta,
            t: tb,
            x: &x,
            dense: &dense,
        };
        if observer(step).is_break() {
            return Ok(Integration {
                t_end: tb,
                stopped: true,
                x_end: x,
                dense,
                next_step: cfg.max_step,
                accepted: i + 1,
                rejected: 0,
            });
        }
    }

    Ok(Integration {
        x_end: x,
        t_end: t1,
        stopped: false,
        dense,
        next_step: cfg.max_step,
        accepted: steps,
        rejected: 0,
    })
}
