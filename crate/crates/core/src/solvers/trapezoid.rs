use std::ops::ControlFlow;

use nalgebra::{DMatrix, DVector};

use super::{Step, fixed_step_count, grid_time, DenseSolution, Integration, IntegratorConfig, SolverError};

const NEWTON_TOL: f64 = 1e-12;
const NEWTON_MAX_ITER: usize = 25;

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
    let mut fx = vec![0.0; n];
    f(t0, &x, &mut fx);

    for i in 0..steps {
        let ta = grid_time(t0, t1, i, steps);
        let tb = grid_time(t0, t1, i + 1, steps);
        let h = tb - ta;
        let (x_next, f_next) = newton_step(&mut f, &x, &fx, tb, h)?;
        dense.push_hermite(ta, tb, &x, &x_next, &fx, &f_next);
        x = x_next;
        fx = f_next;
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

/// Solves `y = x + h/2 (f(ta, x) + f(tb, y))` by damped Newton iteration with
/// a forward-difference Jacobian.
fn newton_step<F>(
    f: &mut F,
    x: &[f64],
    fx: &[f64],
    tb: f64,
    h: f64,
) -> Result<(Vec<f64>, Vec<f64>), SolverError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = x.len();
    let mut y: Vec<f64> = (0..n).map(|i| x[i] + h * fx[i]).collect();
    let mut fy = vec![0.0; n];
    let mut fp = vec![0.0; n];
    let mut trial = vec![0.0; n];

    let residual = |y: &[f64], fy: &[f64], out: &mut [f64]| {
        for i in 0..n {
            out[i] = y[i] - x[i] - 0.5 * h * (fx[i] + fy[i]);
        }
    };
    let norm = |v: &[f64]| v.iter().fold(0.0f64, |m, a| m.max(a.abs()));

    f(tb, &y, &mut fy);
    if fy.iter().any(|v| !v.is_finite()) {
        // explicit predictor left the domain; start from the old state
        y.copy_from_slice(x);
        f(tb, &y, &mut fy);
    }
    let mut g = vec![0.0; n];
    residual(&y, &fy, &mut g);

    for _ in 0..NEWTON_MAX_ITER {
        let mut jac = DMatrix::<f64>::identity(n, n);
        for j in 0..n {
            let delta = 1e-8 * y[j].abs().max(1.0);
            trial.copy_from_slice(&y);
            trial[j] += delta;
            f(tb, &trial, &mut fp);
            for i in 0..n {
                jac[(i, j)] -= 0.5 * h * (fp[i] - fy[i]) / delta;
            }
        }
        let rhs = DVector::from_iterator(n, g.iter().map(|v| -v));
        let dy = jac
            .lu()
            .solve(&rhs)
            .ok_or(SolverError::NewtonFailure { t: tb })?;

        let g_norm = norm(&g);
        let mut lambda = 1.0;
        let mut g_trial = vec![0.0; n];
        let mut fy_trial = vec![0.0; n];
        loop {
            for i in 0..n {
                trial[i] = y[i] + lambda * dy[i];
            }
            f(tb, &trial, &mut fy_trial);
            residual(&trial, &fy_trial, &mut g_trial);
            let ok = g_trial.iter().all(|v| v.is_finite());
            if ok && (norm(&g_trial) <= g_norm || lambda < 1e-3) {
                break;
            }
            lambda *= 0.5;
            if lambda < 1e-3 {
                return Err(SolverError::NewtonFailure { t: tb });
            }
        }
        y.copy_from_slice(&trial);
        fy.copy_from_slice(&fy_trial);
        g.copy_from_slice(&g_trial);

        let step = lambda * dy.amax();
        if step <= NEWTON_TOL * norm(&y).max(1.0) {
            return Ok((y, fy));
        }
    }
    Err(SolverError::NewtonFailure { t: tb })
}

#[cfg(test)]
mod tests {
    use super::super::{integrate_with, IntegratorConfig, Method};

    #[test]
    fn a_stable_on_stiff_decay() {
        let cfg = IntegratorConfig {
            method: Method::ImplicitTrapezoidal,
            max_step: 0.1,
            initial_step: 0.1,
            ..Default::default()
        };
        let mut mags = vec![1.0f64];
        let run = integrate_with(
            |_, x: &[f64], dx: &mut [f64]| dx[0] = -1e6 * x[0],
            &[1.0],
            0.0,
            5.0,
            &cfg,
            None,
            |_, x| mags.push(x[0].abs()),
        )
        .unwrap();
        assert_eq!(run.accepted, 50);
        for w in mags.windows(2) {
            assert!(w[1] <= w[0], "{} > {}", w[1], w[0]);
        }
    }

    #[test]
    fn second_order_on_oscillator() {
        let err = |h: f64| {
            let cfg = IntegratorConfig {
                method: Method::ImplicitTrapezoidal,
                max_step: h,
                initial_step: h,
                ..Default::default()
            };
            let r = integrate_with(
                |_, x: &[f64], dx: &mut [f64]| {
                    dx[0] = x[1];
                    dx[1] = -x[0];
                },
                &[1.0, 0.0],
                0.0,
                2.0,
                &cfg,
                None,
                |_, _| {},
            )
            .unwrap();
            (r.x_end[0] - 2f64.cos()).abs()
        };
        let ratio = err(0.02) / err(0.01);
        assert!((ratio - 4.0).abs() < 0.1, "ratio {ratio}");
    }

    #[test]
    fn conserves_oscillator_energy() {
        // the trapezoidal rule is symplectic on linear problems
        let cfg = IntegratorConfig {
            method: Method::ImplicitTrapezoidal,
            max_step: 0.1,
            initial_step: 0.1,
            ..Default::default()
        };
        let r = integrate_with(
            |_, x: &[f64], dx: &mut [f64]| {
                dx[0] = x[1];
                dx[1] = -x[0];
            },
            &[1.0, 0.0],
            0.0,
            50.0,
            &cfg,
            None,
            |_, _| {},
        )
        .unwrap();
        let e = r.x_end[0].powi(2) + r.x_end[1].powi(2);
        assert!((e - 1.0).abs() < 1e-10, "{e}");
    }
}
