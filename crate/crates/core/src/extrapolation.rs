//! Input reconstruction on an exchange interval and the balance-correction
//! refeed.

use thiserror::Error;

use crate::quadrature::gauss8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExtrapolationError {
    #[error("sample history is empty")]
    EmptyHistory,
    #[error("linear extrapolation needs at least two samples")]
    TooFewSamples,
    #[error("sample times must increase strictly ({prev} then {next})")]
    NonIncreasingTime { prev: f64, next: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("interval width must be positive, got {0}")]
    InvalidWidth(f64),
    #[error("derivative samples missing")]
    MissingDerivatives,
}

/// Exchanged samples `u(T_i)` (and optionally `u'(T_i)`) in time order.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleHistory {
    dim: usize,
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
    derivatives: Option<Vec<Vec<f64>>>,
    capacity: usize,
}

impl SampleHistory {
    /// History keeping the newest `capacity` samples (at least two).
    pub fn new(dim: usize, with_derivatives: bool, capacity: usize) -> Self {
        Self {
            dim,
            times: Vec::new(),
            values: Vec::new(),
            derivatives: with_derivatives.then(Vec::new),
            capacity: capacity.max(2),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn derivatives(&self) -> Option<&[Vec<f64>]> {
        self.derivatives.as_deref()
    }

    pub fn push(
        &mut self,
        t: f64,
        value: &[f64],
        derivative: Option<&[f64]>,
    ) -> Result<(), ExtrapolationError> {
        if value.len() != self.dim {
            return Err(ExtrapolationError::DimensionMismatch {
                expected: self.dim,
                got: value.len(),
            });
        }
        if let Some(&prev) = self.times.last() {
            if !(t > prev) {
                return Err(ExtrapolationError::NonIncreasingTime { prev, next: t });
            }
        }
        match (&mut self.derivatives, derivative) {
            (Some(ds), Some(d)) => {
                if d.len() != self.dim {
                    return Err(ExtrapolationError::DimensionMismatch {
                        expected: self.dim,
                        got: d.len(),
                    });
                }
                ds.push(d.to_vec());
            }
            (Some(_), None) => return Err(ExtrapolationError::MissingDerivatives),
            (None, _) => {}
        }
        self.times.push(t);
        self.values.push(value.to_vec());
        if self.times.len() > self.capacity {
            self.times.remove(0);
            self.values.remove(0);
            if let Some(ds) = &mut self.derivatives {
                ds.remove(0);
            }
        }
        Ok(())
    }

    fn newest(&self) -> Result<(f64, &[f64]), ExtrapolationError> {
        match (self.times.last(), self.values.last()) {
            (Some(&t), Some(v)) => Ok((t, v)),
            _ => Err(ExtrapolationError::EmptyHistory),
        }
    }
}

/// Symmetric triangle on `[start, start + width]` with unit integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HatShape {
    pub start: f64,
    pub width: f64,
}

impl HatShape {
    pub fn peak(&self) -> f64 {
        2.0 / self.width
    }

    pub fn eval(&self, t: f64) -> f64 {
        let s = (t - self.start) / self.width;
        if !(0.0..=1.0).contains(&s) {
            return 0.0;
        }
        self.peak() * (1.0 - (2.0 * s - 1.0).abs())
    }

    /// Exact integral over `[a, b]` clipped to the support.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        let cdf = |t: f64| {
            let s = ((t - self.start) / self.width).clamp(0.0, 1.0);
            if s <= 0.5 {
                2.0 * s * s
            } else {
                1.0 - 2.0 * (1.0 - s) * (1.0 - s)
            }
        };
        cdf(b) - cdf(a)
    }
}

/// The hat used to refeed a balance error on `[t_start, t_end]`.
pub fn refeed_shape(t_start: f64, t_end: f64) -> Result<HatShape, ExtrapolationError> {
    let width = t_end - t_start;
    if !(width > 0.0) {
        return Err(ExtrapolationError::InvalidWidth(width));
    }
    Ok(HatShape {
        start: t_start,
        width,
    })
}

/// Balance-correction term `amount * φ(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Correction {
    pub amount: Vec<f64>,
    pub shape: HatShape,
}

/// Polynomial input reconstruction `value + slope (t - anchor)` on
/// `[anchor, anchor + width)`, plus an optional correction term.
#[derive(Debug, Clone, PartialEq)]
pub struct Extrapolant {
    pub anchor: f64,
    pub width: f64,
    pub degree: u8,
    pub value: Vec<f64>,
    pub slope: Vec<f64>,
    pub correction: Option<Correction>,
}

impl Extrapolant {
    pub fn dim(&self) -> usize {
        self.value.len()
    }

    pub fn end(&self) -> f64 {
        self.anchor + self.width
    }

    /// Zero signal of the given dimension.
    pub fn zero(dim: usize, anchor: f64, width: f64) -> Self {
        Self {
            anchor,
            width,
            degree: 0,
            value: vec![0.0; dim],
            slope: vec![0.0; dim],
            correction: None,
        }
    }

    pub fn with_correction(mut self, correction: Correction) -> Self {
        self.correction = Some(correction);
        self
    }

    /// The same polynomial without its correction term.
    pub fn base(&self) -> Self {
        Self {
            correction: None,
            ..self.clone()
        }
    }

    pub fn eval_component(&self, t: f64, i: usize) -> f64 {
        let mut v = self.value[i] + self.slope[i] * (t - self.anchor);
        if let Some(c) = &self.correction {
            v += c.amount[i] * c.shape.eval(t);
        }
        v
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.eval_component(t, i);
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(t, &mut out);
        out
    }

    /// Exact integral of component `i` over `[a, b]`.
    pub fn integral_component(&self, a: f64, b: f64, i: usize) -> f64 {
        let lin = self.value[i] * (b - a)
            + 0.5 * self.slope[i] * ((b - self.anchor).powi(2) - (a - self.anchor).powi(2));
        match &self.correction {
            Some(c) => lin + c.amount[i] * c.shape.integral(a, b),
            None => lin,
        }
    }
}

/// Degree-0 extrapolant from the newest sample.
pub fn build_constant(hist: &SampleHistory, width: f64) -> Result<Extrapolant, ExtrapolationError> {
    check_width(width)?;
    let (t, v) = hist.newest()?;
    Ok(Extrapolant {
        anchor: t,
        width,
        degree: 0,
        value: v.to_vec(),
        slope: vec![0.0; v.len()],
        correction: None,
    })
}

/// Line through the two newest samples, anchored at the newest.
pub fn build_linear(hist: &SampleHistory, width: f64) -> Result<Extrapolant, ExtrapolationError> {
    check_width(width)?;
    let n = hist.len();
    if n == 0 {
        return Err(ExtrapolationError::EmptyHistory);
    }
    if n < 2 {
        return Err(ExtrapolationError::TooFewSamples);
    }
    let (t0, t1) = (hist.times[n - 2], hist.times[n - 1]);
    if !(t1 > t0) {
        return Err(ExtrapolationError::NonIncreasingTime { prev: t0, next: t1 });
    }
    let (v0, v1) = (&hist.values[n - 2], &hist.values[n - 1]);
    let slope = v0.iter().zip(v1).map(|(a, b)| (b - a) / (t1 - t0)).collect();
    Ok(Extrapolant {
        anchor: t1,
        width,
        degree: 1,
        value: v1.clone(),
        slope,
        correction: None,
    })
}

/// First-order Taylor polynomial from an exchanged value and derivative.
pub fn build_hermite_linear(
    value: &[f64],
    derivative: &[f64],
    anchor: f64,
    width: f64,
) -> Result<Extrapolant, ExtrapolationError> {
    check_width(width)?;
    if value.len() != derivative.len() {
        return Err(ExtrapolationError::DimensionMismatch {
            expected: value.len(),
            got: derivative.len(),
        });
    }
    Ok(Extrapolant {
        anchor,
        width,
        degree: 1,
        value: value.to_vec(),
        slope: derivative.to_vec(),
        correction: None,
    })
}

fn check_width(width: f64) -> Result<(), ExtrapolationError> {
    if width > 0.0 && width.is_finite() {
        Ok(())
    } else {
        Err(ExtrapolationError::InvalidWidth(width))
    }
}

/// `∫_a^b (actual - ext) dt`, by 8-point Gauss–Legendre on every piece
/// between consecutive `breakpoints` (the sender's integrator steps).
///
/// Breakpoints outside `(a, b)` are ignored; the quadrature is exact for
/// piecewise polynomials of degree up to 15 on those pieces.
pub fn balance_error<A>(
    mut actual: A,
    ext: &Extrapolant,
    a: f64,
    b: f64,
    breakpoints: &[f64],
) -> Vec<f64>
where
    A: FnMut(f64, &mut [f64]),
{
    let dim = ext.dim();
    let mut out = vec![0.0; dim];
    let mut buf = vec![0.0; dim];
    let mut left = a;
    let inner = breakpoints.iter().copied().filter(|&t| t > a && t < b);
    for right in inner.chain(std::iter::once(b)) {
        if right <= left {
            continue;
        }
        for (t, w) in gauss8().mapped(left, right) {
            actual(t, &mut buf);
            for i in 0..dim {
                out[i] += w * buf[i];
            }
        }
        left = right;
    }
    for (i, o) in out.iter_mut().enumerate() {
        *o -= ext.integral_component(a, b, i);
    }
    out
}
