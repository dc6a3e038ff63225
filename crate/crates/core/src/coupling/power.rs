use super::{CouplingError, Subsystem};

/// Negotiated power into the block that computed `p_own`, given the
/// partner's view `p_other`. Antisymmetric by construction:
/// `negotiate_power(a, b) == -negotiate_power(b, a)` bit for bit.
pub fn negotiate_power(p_own: f64, p_other: f64) -> f64 {
    (p_own - p_other) / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Inversion {
    /// Input component value realising the target power.
    Regular(f64),
    /// Denominator below the threshold; the caller must fall back.
    Singular { sensitivity: f64 },
}

/// Solves the block's power map for input `component` so that the power
/// into the block equals `target`.
///
/// `u` supplies the remaining input components; its entry at `component` is
/// ignored. Also checks the sign of the analytic sensitivity against a
/// central difference of the power map.
#[allow(clippy::too_many_arguments)]
pub fn invert_power(
    block: &dyn Subsystem,
    block_index: usize,
    target: f64,
    t: f64,
    x: &[f64],
    u: &[f64],
    component: usize,
    eps: f64,
) -> Result<Inversion, CouplingError> {
    let inv = block
        .power_inverse(target, x, u, component)
        .ok_or(CouplingError::MissingPowerMap {
            block: block_index,
            what: "a power inverse",
        })?;
    if !(inv.sensitivity.abs() >= eps) || inv.sensitivity == 0.0 || !inv.value.is_finite() {
        return Ok(Inversion::Singular {
            sensitivity: inv.sensitivity,
        });
    }
    let delta = 1e-6 * inv.value.abs().max(1.0);
    let mut probe = u.to_vec();
    probe[component] = inv.value + delta;
    let hi = block.power(x, &probe);
    probe[component] = inv.value - delta;
    let lo = block.power(x, &probe);
    match (hi, lo) {
        (Some(hi), Some(lo)) => {
            if (hi - lo) * inv.sensitivity < 0.0 {
                return Err(CouplingError::NonMonotone {
                    block: block_index,
                    component,
                    t,
                });
            }
        }
        _ => {
            return Err(CouplingError::MissingPowerMap {
                block: block_index,
                what: "a power map",
            })
        }
    }
    Ok(Inversion::Regular(inv.value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::PowerInverse;

    #[test]
    fn negotiation_examples() {
        // agreeing views: the negotiation is idle
        assert_eq!(negotiate_power(-3.0, 3.0), -3.0);
        assert_eq!(negotiate_power(-4.0, 2.0), -3.0);
        assert_eq!(negotiate_power(0.0, 0.0), 0.0);
    }

    /// power = k * x0 * u0 + u1, with a deliberately wrong inverse when
    /// `lie` is set.
    struct Bilinear {
        k: f64,
        lie: bool,
    }

    impl Subsystem for Bilinear {
        fn state_dim(&self) -> usize {
            1
        }
        fn input_dim(&self) -> usize {
            2
        }
        fn output_dim(&self) -> usize {
            0
        }
        fn rhs(&self, _: f64, _: &[f64], _: &[f64], dx: &mut [f64]) {
            dx[0] = 0.0;
        }
        fn output(&self, _: f64, _: &[f64], _: &[f64], _: &mut [f64]) {}
        fn power(&self, x: &[f64], u: &[f64]) -> Option<f64> {
            Some(self.k * x[0] * u[0] + u[1])
        }
        fn power_inverse(&self, target: f64, x: &[f64], u: &[f64], _: usize) -> Option<PowerInverse> {
            let d = self.k * x[0];
            let sens = if self.lie { -d } else { d };
            Some(PowerInverse {
                value: (target - u[1]) / d,
                sensitivity: sens,
            })
        }
    }

    #[test]
    fn inversion_hits_target() {
        let b = Bilinear { k: 1.0, lie: false };
        let u = [f64::NAN, 0.0];
        assert_eq!(
            invert_power(&b, 0, 1.0, 0.0, &[0.5], &u, 0, 1e-6).unwrap(),
            Inversion::Regular(2.0)
        );
        assert_eq!(
            invert_power(&b, 0, 0.0, 0.0, &[0.5], &u, 0, 1e-6).unwrap(),
            Inversion::Regular(0.0)
        );
        let u = [0.0, 0.25];
        if let Inversion::Regular(v) = invert_power(&b, 0, -3.0, 0.0, &[1.7], &u, 0, 1e-6).unwrap() {
            let p = b.power(&[1.7], &[v, 0.25]).unwrap();
            assert!((p + 3.0).abs() < 1e-12);
        } else {
            panic!("expected regular inversion");
        }
    }

    #[test]
    fn small_denominator_is_singular() {
        let b = Bilinear { k: 1.0, lie: false };
        let r = invert_power(&b, 0, 1.0, 0.0, &[1e-8], &[0.0, 0.0], 0, 1e-6).unwrap();
        assert!(matches!(r, Inversion::Singular { .. }));
        let r = invert_power(&b, 0, 1.0, 0.0, &[0.0], &[0.0, 0.0], 0, 0.0).unwrap();
        assert!(matches!(r, Inversion::Singular { .. }));
    }

    #[test]
    fn sign_inconsistent_sensitivity_is_an_error() {
        let b = Bilinear { k: 1.0, lie: true };
        assert!(matches!(
            invert_power(&b, 3, 1.0, 0.5, &[0.5], &[0.0, 0.0], 0, 1e-6),
            Err(CouplingError::NonMonotone { block: 3, .. })
        ));
    }
}
