//! Piecewise-linear representation of the diffusion coefficient `a(u)`.
//!
//! A [`ParameterSpline`] stores nodal values on a uniform grid over a
//! [`StateInterval`]. Its antiderivative `A(u) = ∫_{u_min}^{u} a(w) dw`
//! (the Kirchhoff transform) is piecewise quadratic and evaluated in closed
//! form, so `A` is exactly linear in the nodal values.

use crate::error::{Error, Result};

/// Closed interval `[u_min, u_max]` of attained states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateInterval {
    u_min: f64,
    u_max: f64,
}

impl StateInterval {
    pub fn new(u_min: f64, u_max: f64) -> Result<Self> {
        if !(u_min.is_finite() && u_max.is_finite()) || u_min >= u_max {
            return Err(Error::Argument(format!(
                "state interval needs finite u_min < u_max, got [{u_min}, {u_max}]"
            )));
        }
        Ok(Self { u_min, u_max })
    }

    /// `[-1/√2, 1/√2]`, the states attained by `cos` on `[π/4, 3π/4]`.
    pub fn reference() -> Self {
        let g = std::f64::consts::FRAC_1_SQRT_2;
        Self { u_min: -g, u_max: g }
    }

    pub fn u_min(&self) -> f64 {
        self.u_min
    }

    pub fn u_max(&self) -> f64 {
        self.u_max
    }

    pub fn length(&self) -> f64 {
        self.u_max - self.u_min
    }

    pub fn contains(&self, u: f64) -> bool {
        u >= self.u_min && u <= self.u_max
    }

    pub fn clamp(&self, u: f64) -> f64 {
        u.clamp(self.u_min, self.u_max)
    }

    fn check(&self, u: f64) -> Result<()> {
        if self.contains(u) {
            Ok(())
        } else {
            Err(Error::OutOfDomain { value: u, lo: self.u_min, hi: self.u_max })
        }
    }
}

/// Uniform grid of `n + 1` nodes on a state interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformGrid {
    interval: StateInterval,
    elements: usize,
}

impl UniformGrid {
    pub fn new(interval: StateInterval, elements: usize) -> Result<Self> {
        if elements == 0 {
            return Err(Error::Argument("grid needs at least one element".into()));
        }
        Ok(Self { interval, elements })
    }

    pub fn interval(&self) -> StateInterval {
        self.interval
    }

    pub fn elements(&self) -> usize {
        self.elements
    }

    pub fn nodes(&self) -> usize {
        self.elements + 1
    }

    pub fn spacing(&self) -> f64 {
        self.interval.length() / self.elements as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i == self.elements {
            self.interval.u_max
        } else {
            self.interval.u_min + i as f64 * self.spacing()
        }
    }

    /// Element index and local coordinate `τ ∈ [0, 1]` of a state.
    fn locate(&self, u: f64) -> Result<(usize, f64)> {
        self.interval.check(u)?;
        let h = self.spacing();
        let x = (u - self.interval.u_min) / h;
        let k = (x.floor() as usize).min(self.elements - 1);
        let tau = (x - k as f64).clamp(0.0, 1.0);
        Ok((k, tau))
    }

    /// Fills `row` with the weights `c_j` such that `A(u) = Σ_j c_j a_j`
    /// for every spline on this grid.
    pub fn antiderivative_weights(&self, u: f64, row: &mut [f64]) -> Result<()> {
        if row.len() != self.nodes() {
            return Err(Error::Structure(format!(
                "weight row has length {}, grid has {} nodes",
                row.len(),
                self.nodes()
            )));
        }
        let (k, tau) = self.locate(u)?;
        let h = self.spacing();
        row.iter_mut().for_each(|c| *c = 0.0);
        for e in 0..k {
            row[e] += 0.5 * h;
            row[e + 1] += 0.5 * h;
        }
        row[k] += h * (tau - 0.5 * tau * tau);
        row[k + 1] += 0.5 * h * tau * tau;
        Ok(())
    }
}

/// Continuous piecewise-linear spline for `a(u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSpline {
    grid: UniformGrid,
    node_values: Vec<f64>,
}

impl ParameterSpline {
    pub fn new(interval: StateInterval, node_values: Vec<f64>) -> Result<Self> {
        if node_values.len() < 2 {
            return Err(Error::Argument(format!(
                "spline needs at least two nodes, got {}",
                node_values.len()
            )));
        }
        if let Some((node, &value)) = node_values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { node, value });
        }
        let grid = UniformGrid::new(interval, node_values.len() - 1)?;
        Ok(Self { grid, node_values })
    }

    pub fn on_grid(grid: UniformGrid, node_values: Vec<f64>) -> Result<Self> {
        if node_values.len() != grid.nodes() {
            return Err(Error::Structure(format!(
                "{} node values for a grid with {} nodes",
                node_values.len(),
                grid.nodes()
            )));
        }
        Self::new(grid.interval(), node_values)
    }

    /// Samples `f` at the `n + 1` uniform nodes.
    pub fn from_function<F>(f: F, interval: StateInterval, n: usize) -> Result<Self>
    where
        F: Fn(f64) -> f64,
    {
        let grid = UniformGrid::new(interval, n)?;
        let values = (0..grid.nodes()).map(|i| f(grid.node(i))).collect();
        Self::new(interval, values)
    }

    pub fn zeros(interval: StateInterval, n: usize) -> Result<Self> {
        Self::new(interval, vec![0.0; n + 1])
    }

    pub fn grid(&self) -> UniformGrid {
        self.grid
    }

    pub fn interval(&self) -> StateInterval {
        self.grid.interval
    }

    pub fn node_values(&self) -> &[f64] {
        &self.node_values
    }

    pub fn into_node_values(self) -> Vec<f64> {
        self.node_values
    }

    /// Pointwise value `a(u)`; errors outside the interval.
    pub fn eval(&self, u: f64) -> Result<f64> {
        let (k, tau) = self.grid.locate(u)?;
        let v = &self.node_values;
        Ok((1.0 - tau) * v[k] + tau * v[k + 1])
    }

    /// Kirchhoff transform `A(u) = ∫_{u_min}^{u} a(w) dw`, exact.
    pub fn antiderivative(&self, u: f64) -> Result<f64> {
        let (k, tau) = self.grid.locate(u)?;
        let h = self.grid.spacing();
        let v = &self.node_values;
        let full: f64 = v.windows(2).take(k).map(|w| 0.5 * h * (w[0] + w[1])).sum();
        Ok(full + h * (v[k] * (tau - 0.5 * tau * tau) + v[k + 1] * 0.5 * tau * tau))
    }

    /// Exact `‖a‖_{L²(I)}`.
    pub fn l2_norm(&self) -> f64 {
        let h = self.grid.spacing();
        self.node_values
            .windows(2)
            .map(|w| h / 3.0 * (w[0] * w[0] + w[0] * w[1] + w[1] * w[1]))
            .sum::<f64>()
            .sqrt()
    }

    /// Exact `‖a′‖_{L²(I)}`; `a′` is piecewise constant.
    pub fn derivative_l2_norm(&self) -> f64 {
        let h = self.grid.spacing();
        self.node_values
            .windows(2)
            .map(|w| (w[1] - w[0]).powi(2) / h)
            .sum::<f64>()
            .sqrt()
    }

    /// Exact `‖a‖_{H¹(I)}`.
    pub fn h1_norm(&self) -> f64 {
        self.l2_norm().hypot(self.derivative_l2_norm())
    }

    /// `‖A‖_{L²(I)}` of the piecewise-quadratic antiderivative. Three-point
    /// Gauss–Legendre per element integrates the quartic `A²` exactly.
    pub fn antiderivative_l2_norm(&self) -> f64 {
        let h = self.grid.spacing();
        let v = &self.node_values;
        let r = (0.6f64).sqrt();
        let gauss = [(-r, 5.0 / 9.0), (0.0, 8.0 / 9.0), (r, 5.0 / 9.0)];
        let mut base = 0.0;
        let mut sum = 0.0;
        for w in v.windows(2) {
            for &(x, wt) in &gauss {
                let tau = 0.5 * (x + 1.0);
                let a = base + h * (w[0] * (tau - 0.5 * tau * tau) + w[1] * 0.5 * tau * tau);
                sum += 0.5 * h * wt * a * a;
            }
            base += 0.5 * h * (w[0] + w[1]);
        }
        sum.sqrt()
    }

    /// `‖A‖_{H²(I)}` with `A′ = a`, `A″ = a′`.
    pub fn antiderivative_h2_norm(&self) -> f64 {
        let a = self.antiderivative_l2_norm();
        let b = self.l2_norm();
        let c = self.derivative_l2_norm();
        (a * a + b * b + c * c).sqrt()
    }

    /// Nodewise `self − other`.
    pub fn difference(&self, other: &ParameterSpline) -> Result<ParameterSpline> {
        if self.grid != other.grid {
            return Err(Error::Structure(format!(
                "grids differ: {} elements on [{}, {}] vs {} elements on [{}, {}]",
                self.grid.elements,
                self.grid.interval.u_min,
                self.grid.interval.u_max,
                other.grid.elements,
                other.grid.interval.u_min,
                other.grid.interval.u_max,
            )));
        }
        let values = self.node_values.iter().zip(&other.node_values).map(|(p, q)| p - q).collect();
        Ok(ParameterSpline { grid: self.grid, node_values: values })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn unit() -> StateInterval {
        StateInterval::new(0.0, 1.0).unwrap()
    }

    #[test]
    fn rejects_degenerate_interval() {
        assert!(StateInterval::new(1.0, 1.0).is_err());
        assert!(StateInterval::new(2.0, 1.0).is_err());
        assert!(StateInterval::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn from_function_samples_nodes() {
        let s = ParameterSpline::from_function(|u| 1.0 + u * u, StateInterval::reference(), 2).unwrap();
        let v = s.node_values();
        assert!((v[0] - 1.5).abs() < 1e-15);
        assert_eq!(v[1], 1.0);
        assert!((v[2] - 1.5).abs() < 1e-15);

        let z = ParameterSpline::from_function(|_| 0.0, unit(), 4).unwrap();
        assert_eq!(z.node_values(), &[0.0; 5]);

        let l = ParameterSpline::from_function(|u| u, unit(), 1).unwrap();
        assert_eq!(l.node_values(), &[0.0, 1.0]);
    }

    #[test]
    fn from_function_names_bad_node() {
        let err = ParameterSpline::from_function(|u| 1.0 / (u - 0.5), unit(), 2).unwrap_err();
        match err {
            Error::NonFinite { node, .. } => assert_eq!(node, 1),
            other => panic!("unexpected {other:?}"),
        }
        assert!(ParameterSpline::from_function(|u| u, unit(), 0).is_err());
    }

    #[test]
    fn eval_interpolates() {
        let s = ParameterSpline::from_function(|u| 1.0 + u * u, StateInterval::reference(), 200).unwrap();
        assert_eq!(s.eval(0.0).unwrap(), 1.0);
        assert!((s.eval(0.5).unwrap() - 1.25).abs() <= 2.5e-5);

        let l = ParameterSpline::new(unit(), vec![0.0, 1.0]).unwrap();
        assert!((l.eval(0.25).unwrap() - 0.25).abs() < 1e-16);
        assert_eq!(l.eval(1.0).unwrap(), 1.0);
    }

    #[test]
    fn eval_outside_is_error() {
        let l = ParameterSpline::new(unit(), vec![0.0, 1.0]).unwrap();
        assert!(matches!(l.eval(1.0 + 1e-12), Err(Error::OutOfDomain { .. })));
        assert!(matches!(l.antiderivative(-1e-12), Err(Error::OutOfDomain { .. })));
    }

    #[test]
    fn antiderivative_examples() {
        let one = ParameterSpline::new(unit(), vec![1.0; 11]).unwrap();
        assert!((one.antiderivative(0.7).unwrap() - 0.7).abs() < 1e-15);
        assert_eq!(one.antiderivative(0.0).unwrap(), 0.0);

        // ∫_{-g}^{g} (1+u²) du = 2g + 2g³/3
        let g = FRAC_1_SQRT_2;
        let exact = 2.0 * g + 2.0 * g.powi(3) / 3.0;
        assert!((exact - 1.649915822768611).abs() < 1e-14);
        let s = ParameterSpline::from_function(|u| 1.0 + u * u, StateInterval::reference(), 200).unwrap();
        // trapezoid error of the sampled spline: |I| h² / 6
        let h = s.grid().spacing();
        let bound = (2.0 * g) * h * h / 6.0;
        let got = s.antiderivative(g).unwrap();
        assert!((got - exact).abs() <= bound * 1.0001, "{got} vs {exact}");
        assert_eq!(s.antiderivative(-g).unwrap(), 0.0);
    }

    #[test]
    fn antiderivative_matches_composite_quadrature() {
        let s = ParameterSpline::new(StateInterval::new(-1.0, 2.0).unwrap(), vec![0.3, -1.2, 2.5, 0.7, 1.1]).unwrap();
        let u = 1.37;
        let steps = 20_000;
        let dx = (u + 1.0) / steps as f64;
        let mut q = 0.0;
        for i in 0..steps {
            let x0 = -1.0 + i as f64 * dx;
            q += 0.5 * dx * (s.eval(x0).unwrap() + s.eval((x0 + dx).min(u)).unwrap());
        }
        assert!((s.antiderivative(u).unwrap() - q).abs() < 1e-6);
    }

    #[test]
    fn weights_reproduce_antiderivative() {
        let s = ParameterSpline::new(StateInterval::new(-1.0, 2.0).unwrap(), vec![0.3, -1.2, 2.5, 0.7, 1.1]).unwrap();
        let mut row = vec![0.0; 5];
        for &u in &[-1.0, -0.4, 0.5, 1.3, 2.0] {
            s.grid().antiderivative_weights(u, &mut row).unwrap();
            let dot: f64 = row.iter().zip(s.node_values()).map(|(c, a)| c * a).sum();
            assert!((dot - s.antiderivative(u).unwrap()).abs() < 1e-14);
        }
        let mut short = vec![0.0; 3];
        assert!(s.grid().antiderivative_weights(0.0, &mut short).is_err());
    }

    #[test]
    fn norm_examples() {
        let c = ParameterSpline::new(unit(), vec![-2.5; 7]).unwrap();
        assert!((c.l2_norm() - 2.5).abs() < 1e-14);
        assert!((c.h1_norm() - 2.5).abs() < 1e-14);

        let l = ParameterSpline::new(unit(), vec![0.0, 1.0]).unwrap();
        assert!((l.l2_norm() - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((l.h1_norm() - (4.0f64 / 3.0).sqrt()).abs() < 1e-15);

        let d = l.difference(&l).unwrap();
        assert_eq!(d.l2_norm(), 0.0);
        assert_eq!(d.h1_norm(), 0.0);
    }

    #[test]
    fn difference_examples() {
        let p = ParameterSpline::new(unit(), vec![1.0, 2.0]).unwrap();
        let q = ParameterSpline::new(unit(), vec![0.5, 0.5]).unwrap();
        assert_eq!(p.difference(&q).unwrap().node_values(), &[0.5, 1.5]);

        let r = ParameterSpline::new(unit(), vec![0.0, 0.0, 0.0]).unwrap();
        assert!(matches!(p.difference(&r), Err(Error::Structure(_))));
        let shifted = ParameterSpline::new(StateInterval::new(0.0, 2.0).unwrap(), vec![0.5, 0.5]).unwrap();
        assert!(p.difference(&shifted).is_err());
    }

    #[test]
    fn antiderivative_norm_of_linear_a() {
        // a ≡ 1 on [0,1]: A(u) = u, ‖A‖² = 1/3
        let one = ParameterSpline::new(unit(), vec![1.0; 4]).unwrap();
        assert!((one.antiderivative_l2_norm() - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
        // ‖A‖²_{H²} = 1/3 + 1 + 0
        assert!((one.antiderivative_h2_norm() - (4.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }
}
