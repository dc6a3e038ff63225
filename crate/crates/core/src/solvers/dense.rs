use super::SolverError;

#[derive(Debug, Clone, PartialEq)]
enum Interpolant {
    /// Dormand–Prince continuous extension, coefficients `rcont2..rcont5`.
    Dopri(Vec<f64>),
    /// Cubic Hermite: the untruncated end state, then the endpoint
    /// derivatives `f0` and `f1`.
    Hermite(Vec<f64>),
}

/// One accepted step. `h` is the original step length; `t1` may be shorter
/// after truncation, in which case `x1` holds the interpolated value at `t1`.
#[derive(Debug, Clone, PartialEq)]
struct Segment {
    t0: f64,
    t1: f64,
    h: f64,
    x0: Vec<f64>,
    x1: Vec<f64>,
    interp: Interpolant,
}

impl Segment {
    fn eval_into(&self, t: f64, out: &mut [f64]) {
        if t == self.t0 {
            out.copy_from_slice(&self.x0);
            return;
        }
        if t == self.t1 {
            out.copy_from_slice(&self.x1);
            return;
        }
        let n = self.x0.len();
        let th = (t - self.t0) / self.h;
        let th1 = 1.0 - th;
        match &self.interp {
            Interpolant::Dopri(r) => {
                for i in 0..n {
                    let (r2, r3, r4, r5) = (r[i], r[n + i], r[2 * n + i], r[3 * n + i]);
                    out[i] = self.x0[i] + th * (r2 + th1 * (r3 + th * (r4 + th1 * r5)));
                }
            }
            Interpolant::Hermite(f) => {
                // written relative to x0 so that constant data stay exact
                let h10 = th * th1 * th1;
                let h01 = th * th * (3.0 - 2.0 * th);
                let h11 = -th * th * th1;
                for i in 0..n {
                    out[i] = self.x0[i]
                        + h01 * (f[i] - self.x0[i])
                        + self.h * (h10 * f[n + i] + h11 * f[2 * n + i]);
                }
            }
        }
    }
}

/// Piecewise polynomial state history produced by an integrator.
///
/// Evaluation at a stored step endpoint returns the stored state exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSolution {
    dim: usize,
    segments: Vec<Segment>,
}

impl DenseSolution {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            segments: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn num_segments(&self) -> usize {
        self.segments.len()
    }

    /// Interpolation order: 4 for Dormand–Prince segments, 3 once any cubic
    /// Hermite segment is present.
    pub fn order(&self) -> u32 {
        if self
            .segments
            .iter()
            .any(|s| matches!(s.interp, Interpolant::Hermite(_)))
        {
            3
        } else {
            4
        }
    }

    pub fn t0(&self) -> Option<f64> {
        self.segments.first().map(|s| s.t0)
    }

    pub fn t1(&self) -> Option<f64> {
        self.segments.last().map(|s| s.t1)
    }

    /// All step endpoints in ascending order.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.segments.len() + 1);
        if let Some(first) = self.segments.first() {
            out.push(first.t0);
        }
        out.extend(self.segments.iter().map(|s| s.t1));
        out
    }

    /// Step endpoints inside the open interval `(a, b)`.
    pub fn breakpoints_within(&self, a: f64, b: f64) -> impl Iterator<Item = f64> + '_ {
        let start = self.segments.partition_point(|s| s.t1 <= a);
        self.segments[start..]
            .iter()
            .map(|s| s.t1)
            .take_while(move |&t| t < b)
            .filter(move |&t| t > a)
    }

    /// State at the final stored time.
    pub fn last_state(&self) -> Option<&[f64]> {
        self.segments.last().map(|s| s.x1.as_slice())
    }

    pub fn eval(&self, t: f64) -> Result<Vec<f64>, SolverError> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, &mut out)?;
        Ok(out)
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) -> Result<(), SolverError> {
        let (t0, t1) = match (self.t0(), self.t1()) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(SolverError::EmptyDense),
        };
        if !(t >= t0 && t <= t1) {
            return Err(SolverError::OutOfRange { t, t0, t1 });
        }
        // first segment whose right end is >= t
        let idx = self
            .segments
            .partition_point(|s| s.t1 < t)
            .min(self.segments.len() - 1);
        self.segments[idx].eval_into(t, out);
        Ok(())
    }

    pub(crate) fn push_dopri(&mut self, t0: f64, t1: f64, x0: &[f64], x1: &[f64], rcont: Vec<f64>) {
        debug_assert_eq!(rcont.len(), 4 * self.dim);
        self.segments.push(Segment {
            t0,
            t1,
            h: t1 - t0,
            x0: x0.to_vec(),
            x1: x1.to_vec(),
            interp: Interpolant::Dopri(rcont),
        });
    }

    pub(crate) fn push_hermite(
        &mut self,
        t0: f64,
        t1: f64,
        x0: &[f64],
        x1: &[f64],
        f0: &[f64],
        f1: &[f64],
    ) {
        let mut f = Vec::with_capacity(3 * self.dim);
        f.extend_from_slice(x1);
        f.extend_from_slice(f0);
        f.extend_from_slice(f1);
        self.segments.push(Segment {
            t0,
            t1,
            h: t1 - t0,
            x0: x0.to_vec(),
            x1: x1.to_vec(),
            interp: Interpolant::Hermite(f),
        });
    }

    /// Drops everything after `t`; the new final state is the interpolated
    /// value at `t`.
    pub fn truncate(&mut self, t: f64) -> Result<(), SolverError> {
        let x = self.eval(t)?;
        let keep = self.segments.partition_point(|s| s.t0 < t);
        self.segments.truncate(keep.max(1));
        let last = self.segments.last_mut().expect("nonempty");
        if last.t0 >= t {
            // t coincides with the domain start: a single degenerate segment
            last.t1 = t;
            last.x1 = x;
        } else if t < last.t1 {
            last.t1 = t;
            last.x1 = x;
        }
        Ok(())
    }

    /// Appends a continuation starting where `self` ends.
    pub fn append(&mut self, other: DenseSolution) -> Result<(), SolverError> {
        if other.dim != self.dim {
            return Err(SolverError::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        if let (Some(end), Some(start)) = (self.t1(), other.t0()) {
            if end != start {
                return Err(SolverError::Discontiguous { end, start });
            }
        }
        self.segments.extend(other.segments);
        Ok(())
    }
}
