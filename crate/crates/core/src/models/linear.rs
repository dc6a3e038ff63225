use std::sync::Arc;

use crate::coupling::{Connection, CoupledSystem, Subsystem};

use super::ModelError;

/// `x' = A x` in two scalar components, each one its own subsystem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearCoupledModel {
    pub a: [[f64; 2]; 2],
    pub x0: [f64; 2],
}

impl LinearCoupledModel {
    /// `x1` drives `x2` but not the other way round.
    pub fn unidirectional() -> Self {
        Self {
            a: [[-1.0, 0.0], [1.0, -1.0]],
            x0: [1.0, 1.0],
        }
    }

    /// Each component only sees the other one.
    pub fn mutual() -> Self {
        Self {
            a: [[0.0, 1.0], [-1.0, 0.0]],
            x0: [1.0, 1.0],
        }
    }

    pub fn is_unidirectional(&self) -> bool {
        let a = &self.a;
        a[0][1] == 0.0 && a[0][0] * a[1][0] * a[1][1] != 0.0
    }

    pub fn is_mutual(&self) -> bool {
        let a = &self.a;
        a[0][0] == 0.0 && a[1][1] == 0.0 && a[0][1] * a[1][0] != 0.0
    }

    pub fn initial_state(&self) -> Vec<f64> {
        self.x0.to_vec()
    }

    /// Block `i` holds `x_i`, takes `x_j` as input and outputs `(x_i, x_i')`.
    /// A connection exists only where the coupling coefficient is nonzero.
    pub fn system(&self) -> Result<CoupledSystem, ModelError> {
        if self.a.iter().flatten().any(|v| !v.is_finite()) {
            return Err(ModelError::InvalidParameter("matrix entries must be finite".into()));
        }
        let blocks: Vec<Arc<dyn Subsystem>> = (0..2)
            .map(|i| {
                Arc::new(Scalar {
                    own: self.a[i][i],
                    coupling: self.a[i][1 - i],
                }) as Arc<dyn Subsystem>
            })
            .collect();
        let mut connections = Vec::new();
        for i in 0..2 {
            if self.a[i][1 - i] != 0.0 {
                connections.push(Connection::new(1 - i, vec![0], i, vec![0]).with_rates(vec![1]));
            }
        }
        Ok(CoupledSystem::new(blocks, connections)
            .with_energy(Arc::new(|x: &[f64]| 0.5 * (x[0] * x[0] + x[1] * x[1]))))
    }

    /// `exp(tA) x0` in closed form.
    pub fn analytic(&self, t: f64) -> Vec<f64> {
        let e = expm2(&self.a, t);
        vec![
            e[0][0] * self.x0[0] + e[0][1] * self.x0[1],
            e[1][0] * self.x0[0] + e[1][1] * self.x0[1],
        ]
    }
}

#[derive(Debug, Clone, Copy)]
struct Scalar {
    own: f64,
    coupling: f64,
}

impl Subsystem for Scalar {
    fn name(&self) -> &str {
        "scalar"
    }
    fn state_dim(&self) -> usize {
        1
    }
    fn input_dim(&self) -> usize {
        1
    }
    fn output_dim(&self) -> usize {
        2
    }
    fn rhs(&self, _t: f64, x: &[f64], u: &[f64], dx: &mut [f64]) {
        dx[0] = self.own * x[0] + self.coupling * u[0];
    }
    fn output(&self, _t: f64, x: &[f64], u: &[f64], y: &mut [f64]) {
        y[0] = x[0];
        y[1] = self.own * x[0] + self.coupling * u[0];
    }
}

/// Matrix exponential of `tA` for 2x2 `A` via Cayley–Hamilton:
/// `exp(tA) = e^{mt} (c(t) I + s(t) (A - mI))` with `m = tr A / 2`.
pub fn expm2(a: &[[f64; 2]; 2], t: f64) -> [[f64; 2]; 2] {
    let m = 0.5 * (a[0][0] + a[1][1]);
    let b = [[a[0][0] - m, a[0][1]], [a[1][0], a[1][1] - m]];
    // B^2 = q I with q = -det B
    let q = -(b[0][0] * b[1][1] - b[0][1] * b[1][0]);
    let (c, s) = if q > 0.0 {
        let r = q.sqrt();
        ((r * t).cosh(), (r * t).sinh() / r)
    } else if q < 0.0 {
        let r = (-q).sqrt();
        ((r * t).cos(), (r * t).sin() / r)
    } else {
        (1.0, t)
    };
    let g = (m * t).exp();
    [
        [g * (c + s * b[0][0]), g * s * b[0][1]],
        [g * s * b[1][0], g * (c + s * b[1][1])],
    ]
}
