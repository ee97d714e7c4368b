//! Boundary trace data and the linear operator `T: A ↦ A(h(·))`.
//!
//! Data live at composite-midpoint quadrature nodes on the curve parameter
//! range. Noise perturbs both the Dirichlet trace `h` and the transformed
//! data `y`; perturbed traces are truncated back into the state interval.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::param_space::{ParameterSpline, StateInterval, UniformGrid};

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Curve parameter range together with the trace `h(s) = g(γ(s))`.
#[derive(Clone)]
pub struct CurveParametrization {
    s_lo: f64,
    s_hi: f64,
    h: ScalarFn,
    h_prime: ScalarFn,
    interval: StateInterval,
}

impl fmt::Debug for CurveParametrization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CurveParametrization")
            .field("s_lo", &self.s_lo)
            .field("s_hi", &self.s_hi)
            .field("interval", &self.interval)
            .finish_non_exhaustive()
    }
}

impl CurveParametrization {
    /// Builds a curve; `h` must be strictly monotone with `|h′|` bounded
    /// away from zero. The state interval is the range of `h`.
    pub fn new<H, D>(s_lo: f64, s_hi: f64, h: H, h_prime: D) -> Result<Self>
    where
        H: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if !(s_lo < s_hi) {
            return Err(Error::Argument(format!("curve range [{s_lo}, {s_hi}] is empty")));
        }
        let (a, b) = (h(s_lo), h(s_hi));
        let interval = StateInterval::new(a.min(b), a.max(b))?;
        Ok(Self { s_lo, s_hi, h: Arc::new(h), h_prime: Arc::new(h_prime), interval })
    }

    /// `h(s) = cos s` on `[π/4, 3π/4]`, attaining `[-1/√2, 1/√2]`.
    pub fn reference() -> Self {
        use std::f64::consts::FRAC_PI_4;
        Self {
            s_lo: FRAC_PI_4,
            s_hi: 3.0 * FRAC_PI_4,
            h: Arc::new(f64::cos),
            h_prime: Arc::new(|s: f64| -s.sin()),
            interval: StateInterval::reference(),
        }
    }

    pub fn s_range(&self) -> (f64, f64) {
        (self.s_lo, self.s_hi)
    }

    pub fn interval(&self) -> StateInterval {
        self.interval
    }

    pub fn h(&self, s: f64) -> f64 {
        (self.h)(s)
    }

    pub fn h_prime(&self, s: f64) -> f64 {
        (self.h_prime)(s)
    }

    /// Solves `h(s) = u` by bisection.
    pub fn inverse(&self, u: f64) -> Result<f64> {
        let tol = 1e-12 * self.interval.length();
        if u < self.interval.u_min() - tol || u > self.interval.u_max() + tol {
            return Err(Error::OutOfDomain {
                value: u,
                lo: self.interval.u_min(),
                hi: self.interval.u_max(),
            });
        }
        let increasing = self.h(self.s_hi) > self.h(self.s_lo);
        let (mut lo, mut hi) = (self.s_lo, self.s_hi);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if (self.h(mid) < u) == increasing {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

/// Trace values at quadrature nodes, exact or perturbed.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceData {
    s_nodes: Vec<f64>,
    quad_weights: Vec<f64>,
    h_values: Vec<f64>,
    y_values: Vec<f64>,
    delta: f64,
    interval: StateInterval,
}

impl TraceData {
    pub fn new(
        s_nodes: Vec<f64>,
        quad_weights: Vec<f64>,
        h_values: Vec<f64>,
        y_values: Vec<f64>,
        delta: f64,
        interval: StateInterval,
    ) -> Result<Self> {
        let m = s_nodes.len();
        if quad_weights.len() != m || h_values.len() != m || y_values.len() != m {
            return Err(Error::Structure(format!(
                "trace columns differ in length: {} nodes, {} weights, {} h, {} y",
                m,
                quad_weights.len(),
                h_values.len(),
                y_values.len()
            )));
        }
        if m < 2 {
            return Err(Error::Argument(format!("need at least two quadrature nodes, got {m}")));
        }
        if quad_weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::Argument("quadrature weights must be positive".into()));
        }
        if let Some(&u) = h_values.iter().find(|u| !interval.contains(**u)) {
            return Err(Error::OutOfDomain { value: u, lo: interval.u_min(), hi: interval.u_max() });
        }
        if let Some((node, &value)) = y_values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { node, value });
        }
        if !(delta >= 0.0) {
            return Err(Error::Argument(format!("noise level must be nonnegative, got {delta}")));
        }
        Ok(Self { s_nodes, quad_weights, h_values, y_values, delta, interval })
    }

    pub fn len(&self) -> usize {
        self.s_nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s_nodes.is_empty()
    }

    pub fn s_nodes(&self) -> &[f64] {
        &self.s_nodes
    }

    pub fn quad_weights(&self) -> &[f64] {
        &self.quad_weights
    }

    pub fn h_values(&self) -> &[f64] {
        &self.h_values
    }

    pub fn y_values(&self) -> &[f64] {
        &self.y_values
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn interval(&self) -> StateInterval {
        self.interval
    }

    /// Same nodes and traces with `y` replaced.
    pub fn with_y_values(&self, y_values: Vec<f64>) -> Result<Self> {
        Self::new(
            self.s_nodes.clone(),
            self.quad_weights.clone(),
            self.h_values.clone(),
            y_values,
            self.delta,
            self.interval,
        )
    }

    /// Quadrature `L²` norm of a nodal vector.
    pub fn weighted_norm(&self, values: &[f64]) -> f64 {
        values
            .iter()
            .zip(&self.quad_weights)
            .map(|(v, w)| w * v * v)
            .sum::<f64>()
            .sqrt()
    }
}

/// Exact data `h(s_i)`, `y(s_i) = A(h(s_i))` at `m` composite-midpoint nodes.
pub fn make_exact_data<F>(curve: &CurveParametrization, antiderivative: F, m: usize) -> Result<TraceData>
where
    F: Fn(f64) -> f64,
{
    if m < 2 {
        return Err(Error::Argument(format!("need at least two quadrature nodes, got {m}")));
    }
    let (lo, hi) = curve.s_range();
    let ds = (hi - lo) / m as f64;
    let s_nodes: Vec<f64> = (0..m).map(|i| lo + (i as f64 + 0.5) * ds).collect();
    let interval = curve.interval();
    // midpoints are interior, clamping only absorbs rounding at the ends
    let h_values: Vec<f64> = s_nodes.iter().map(|&s| interval.clamp(curve.h(s))).collect();
    let y_values = h_values.iter().map(|&u| antiderivative(u)).collect();
    TraceData::new(s_nodes, vec![ds; m], h_values, y_values, 0.0, interval)
}

/// Adds i.i.d. uniform noise on `[-δ, δ]` to `h` and `y`, then truncates
/// `h` into the state interval.
pub fn add_noise<R: Rng + ?Sized>(data: &TraceData, delta: f64, rng: &mut R) -> Result<TraceData> {
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(Error::Argument(format!("noise level must be finite and nonnegative, got {delta}")));
    }
    let mut out = data.clone();
    out.delta = delta;
    if delta == 0.0 {
        return Ok(out);
    }
    let interval = data.interval;
    for (h, y) in out.h_values.iter_mut().zip(out.y_values.iter_mut()) {
        let xi: f64 = rng.gen_range(-delta..=delta);
        let eta: f64 = rng.gen_range(-delta..=delta);
        *h = interval.clamp(*h + xi);
        *y += eta;
    }
    Ok(out)
}

/// Matrix of `T` (or `T^δ`): row `i` maps nodal values of `a` to `A(h_i)`.
pub fn assemble_operator(grid: &UniformGrid, data: &TraceData) -> Result<DMatrix<f64>> {
    if grid.interval() != data.interval {
        return Err(Error::Structure("grid and trace data use different state intervals".into()));
    }
    let cols = grid.nodes();
    let mut t = DMatrix::zeros(data.len(), cols);
    let mut row = vec![0.0; cols];
    for (i, &u) in data.h_values.iter().enumerate() {
        grid.antiderivative_weights(u, &mut row)?;
        for (j, c) in row.iter().enumerate() {
            t[(i, j)] = *c;
        }
    }
    Ok(t)
}

/// `(T^δ A)(s_i) = A(h_i)` evaluated directly.
pub fn apply_operator(spline: &ParameterSpline, data: &TraceData) -> Result<Vec<f64>> {
    if spline.interval() != data.interval {
        return Err(Error::Structure("spline and trace data use different state intervals".into()));
    }
    data.h_values.iter().map(|&u| spline.antiderivative(u)).collect()
}

/// Quadrature `L²` norm of `T^δ A − y^δ` over the curve range.
pub fn residual_norm(spline: &ParameterSpline, data: &TraceData) -> Result<f64> {
    let ta = apply_operator(spline, data)?;
    let r: Vec<f64> = ta.iter().zip(&data.y_values).map(|(a, y)| a - y).collect();
    Ok(data.weighted_norm(&r))
}

/// Residual from an assembled matrix, for callers that already hold `T^δ`.
pub(crate) fn residual_from_matrix(t: &DMatrix<f64>, coeffs: &DVector<f64>, data: &TraceData) -> f64 {
    let ta = t * coeffs;
    let r: Vec<f64> = ta.iter().zip(&data.y_values).map(|(a, y)| a - y).collect();
    data.weighted_norm(&r)
}

/// Change-of-variables weight `1/|h′(h⁻¹(u))|`.
pub fn mapping_weight(curve: &CurveParametrization, u: f64) -> Result<f64> {
    let s = curve.inverse(u)?;
    let d = curve.h_prime(s).abs();
    if !(d > 0.0) {
        return Err(Error::Argument(format!("h′ vanishes at s = {s}")));
    }
    Ok(1.0 / d)
}

/// `‖T A‖ / ‖A‖_{L²(I)}` with exact traces at `m` nodes.
pub fn operator_norm_ratio(spline: &ParameterSpline, curve: &CurveParametrization, m: usize) -> Result<f64> {
    let denom = spline.antiderivative_l2_norm();
    if !(denom > 0.0) {
        return Err(Error::Argument("operator norm ratio is undefined for a zero spline".into()));
    }
    let data = make_exact_data(curve, |_| 0.0, m)?;
    let ta = apply_operator(spline, &data)?;
    Ok(data.weighted_norm(&ta) / denom)
}

/// `‖(T − T^δ) W‖ / (δ ‖W‖_{H²(I)})` where `W` is the antiderivative of
/// `w`. Both traces must share nodes; `noisy` supplies `δ`.
pub fn perturbation_ratio(w: &ParameterSpline, exact: &TraceData, noisy: &TraceData) -> Result<f64> {
    if exact.s_nodes != noisy.s_nodes {
        return Err(Error::Structure("exact and noisy traces use different nodes".into()));
    }
    let delta = noisy.delta;
    if !(delta > 0.0) {
        return Err(Error::Argument("perturbation ratio needs a positive noise level".into()));
    }
    let norm = w.antiderivative_h2_norm();
    if !(norm > 0.0) {
        return Err(Error::Argument("perturbation ratio is undefined for a zero test function".into()));
    }
    let t = apply_operator(w, exact)?;
    let td = apply_operator(w, noisy)?;
    let diff: Vec<f64> = t.iter().zip(&td).map(|(a, b)| a - b).collect();
    Ok(exact.weighted_norm(&diff) / (delta * norm))
}
