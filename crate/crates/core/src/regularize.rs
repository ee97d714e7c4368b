//! Tikhonov regularization of `T^δ A = y^δ` with penalty `‖A″‖² + ‖A‖²`.
//!
//! The unknowns are the nodal values of `a`; `A(u_min) = 0` holds by
//! construction of the antiderivative. The minimizer solves the normal
//! equations `(TᵀWT + α(K + P)) a = TᵀW y` where `W` holds the quadrature
//! weights, `K` realizes `‖a′‖²` exactly and `P` realizes `‖A‖²` by
//! refined composite Simpson quadrature.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::forward_op::{self, CurveParametrization, TraceData};
use crate::param_space::{ParameterSpline, UniformGrid};

/// Simpson subintervals per spline element for `P`.
pub const PENALTY_REFINEMENT: usize = 10;

/// Penalty matrices for a fixed spline grid.
#[derive(Debug, Clone)]
pub struct Penalties {
    grid: UniformGrid,
    curvature: DMatrix<f64>,
    magnitude: DMatrix<f64>,
}

impl Penalties {
    pub fn assemble(grid: UniformGrid) -> Result<Self> {
        let n = grid.elements();
        let h = grid.spacing();
        let nodes = grid.nodes();

        let mut curvature = DMatrix::zeros(nodes, nodes);
        for e in 0..n {
            curvature[(e, e)] += 1.0 / h;
            curvature[(e + 1, e + 1)] += 1.0 / h;
            curvature[(e, e + 1)] -= 1.0 / h;
            curvature[(e + 1, e)] -= 1.0 / h;
        }

        // composite Simpson on PENALTY_REFINEMENT panels per element
        let panels = n * PENALTY_REFINEMENT;
        let panel = grid.interval().length() / panels as f64;
        let points = 2 * panels + 1;
        let mut rows = DMatrix::zeros(points, nodes);
        let mut weights = DVector::zeros(points);
        let mut row = vec![0.0; nodes];
        let u_min = grid.interval().u_min();
        for q in 0..points {
            let u = if q == points - 1 {
                grid.interval().u_max()
            } else {
                u_min + q as f64 * 0.5 * panel
            };
            grid.antiderivative_weights(u, &mut row)?;
            for (j, c) in row.iter().enumerate() {
                rows[(q, j)] = *c;
            }
            weights[q] = panel / 6.0
                * if q == 0 || q == points - 1 {
                    1.0
                } else if q % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
        }
        let mut weighted = rows.clone();
        for (q, mut r) in weighted.row_iter_mut().enumerate() {
            r *= weights[q];
        }
        let magnitude = symmetrize(rows.tr_mul(&weighted));
        Ok(Self { grid, curvature, magnitude })
    }

    pub fn grid(&self) -> UniformGrid {
        self.grid
    }

    /// `K` with `aᵀKa = ‖a′‖² = ‖A″‖²`.
    pub fn curvature(&self) -> &DMatrix<f64> {
        &self.curvature
    }

    /// `P` with `aᵀPa ≈ ‖A‖²`.
    pub fn magnitude(&self) -> &DMatrix<f64> {
        &self.magnitude
    }

    pub fn combined(&self) -> DMatrix<f64> {
        &self.curvature + &self.magnitude
    }
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// `‖M − Mᵀ‖_F / ‖M‖_F`.
pub fn symmetry_defect(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).norm() / m.norm()
}

/// Assembled operator, data, penalties and regularization parameter.
#[derive(Debug, Clone)]
pub struct TikhonovProblem {
    operator: DMatrix<f64>,
    data: TraceData,
    penalties: Arc<Penalties>,
    gram: DMatrix<f64>,
    rhs: DVector<f64>,
    alpha: f64,
}

impl TikhonovProblem {
    /// Assembles `T^δ` from the (possibly perturbed) traces.
    pub fn new(data: TraceData, penalties: Arc<Penalties>, alpha: f64) -> Result<Self> {
        let operator = forward_op::assemble_operator(&penalties.grid(), &data)?;
        Self::from_operator(operator, data, penalties, alpha)
    }

    pub fn from_operator(operator: DMatrix<f64>, data: TraceData, penalties: Arc<Penalties>, alpha: f64) -> Result<Self> {
        if operator.nrows() != data.len() || operator.ncols() != penalties.grid().nodes() {
            return Err(Error::Structure(format!(
                "operator is {}×{}, expected {}×{}",
                operator.nrows(),
                operator.ncols(),
                data.len(),
                penalties.grid().nodes()
            )));
        }
        check_alpha(alpha)?;
        let mut weighted = operator.clone();
        for (i, mut r) in weighted.row_iter_mut().enumerate() {
            r *= data.quad_weights()[i];
        }
        let gram = symmetrize(operator.tr_mul(&weighted));
        let rhs = weighted.tr_mul(&DVector::from_column_slice(data.y_values()));
        Ok(Self { operator, data, penalties, gram, rhs, alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn with_alpha(mut self, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        self.alpha = alpha;
        Ok(self)
    }

    pub fn operator(&self) -> &DMatrix<f64> {
        &self.operator
    }

    pub fn data(&self) -> &TraceData {
        &self.data
    }

    pub fn penalties(&self) -> &Penalties {
        &self.penalties
    }

    /// `TᵀWT + α(K + P)`.
    pub fn system_matrix(&self, alpha: f64) -> DMatrix<f64> {
        &self.gram + (self.penalties.curvature() + self.penalties.magnitude()) * alpha
    }

    /// `‖T^δA − y^δ‖²_W + α(aᵀKa + aᵀPa)`.
    pub fn objective(&self, coeffs: &[f64]) -> f64 {
        let a = DVector::from_column_slice(coeffs);
        let fit = forward_op::residual_from_matrix(&self.operator, &a, &self.data);
        let penalty = a.dot(&(self.penalties.curvature() * &a)) + a.dot(&(self.penalties.magnitude() * &a));
        fit * fit + self.alpha * penalty
    }

    fn solve_at(&self, alpha: f64) -> Result<ReconstructionResult> {
        let system = self.system_matrix(alpha);
        let chol = Cholesky::new(system.clone()).ok_or_else(|| {
            let d = system.diagonal();
            Error::Numerical(format!(
                "normal equations not positive definite at alpha = {alpha:e} (diagonal range [{:e}, {:e}])",
                d.min(),
                d.max()
            ))
        })?;
        let coeffs = chol.solve(&self.rhs);
        if coeffs.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite solution at alpha = {alpha:e}")));
        }
        let residual = forward_op::residual_from_matrix(&self.operator, &coeffs, &self.data);
        let spline = ParameterSpline::on_grid(self.penalties.grid(), coeffs.iter().copied().collect())?;
        Ok(ReconstructionResult { spline, alpha, residual, err0: None, err1: None })
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::Argument(format!("regularization parameter must be positive and finite, got {alpha}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionResult {
    pub spline: ParameterSpline,
    pub alpha: f64,
    pub residual: f64,
    pub err0: Option<f64>,
    pub err1: Option<f64>,
}

impl ReconstructionResult {
    /// Fills `err0 = ‖a_α^δ − a‖_{L²}` and `err1 = ‖a_α^δ − a‖_{H¹}`.
    pub fn with_reference(mut self, exact: &ParameterSpline) -> Result<Self> {
        let d = self.spline.difference(exact)?;
        self.err0 = Some(d.l2_norm());
        self.err1 = Some(d.h1_norm());
        Ok(self)
    }
}

/// Unique minimizer of the Tikhonov functional.
pub fn solve_tikhonov(problem: &TikhonovProblem) -> Result<ReconstructionResult> {
    problem.solve_at(problem.alpha)
}

/// A-priori parameter choice rules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AprioriRule {
    /// `α = δ²`
    Quadratic,
    /// `α = c δ^{8/5}`
    EightFifths { c: f64 },
}

impl AprioriRule {
    pub const DEFAULT_EIGHT_FIFTHS: f64 = 0.1;
}

pub fn alpha_a_priori(delta: f64, rule: AprioriRule) -> Result<f64> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::Argument(format!("noise level must be positive, got {delta}")));
    }
    match rule {
        AprioriRule::Quadratic => Ok(delta * delta),
        AprioriRule::EightFifths { c } => {
            if !(c > 0.0) {
                return Err(Error::Argument(format!("eight-fifths factor must be positive, got {c}")));
            }
            Ok(c * delta.powf(1.6))
        }
    }
}

pub const DISCREPANCY_ALPHA_MIN: f64 = 1e-16;
pub const DISCREPANCY_ALPHA_MAX: f64 = 1e4;
/// Upper end of the accepted residual band, as a multiple of `τδ`.
pub const DISCREPANCY_BAND: f64 = 1.5;
pub const DEFAULT_TAU: f64 = 1.5;
/// Relative distance above `τδ` at which the crossing search stops.
pub const DISCREPANCY_CROSSING_TOL: f64 = 1e-3;

/// Chooses `α` so that the residual lands in `[τδ, 1.5τδ]`, by bisection in
/// `log α` over `[1e-16, 1e4]` towards the crossing `residual = τδ`.
pub fn alpha_discrepancy(problem: &TikhonovProblem, delta: f64, tau: f64) -> Result<(f64, ReconstructionResult)> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::Argument(format!("noise level must be positive, got {delta}")));
    }
    if !(tau > 1.0) {
        return Err(Error::Argument(format!("discrepancy factor must exceed 1, got {tau}")));
    }
    let lower = tau * delta;
    let upper = DISCREPANCY_BAND * tau * delta;
    let in_band = |r: f64| r >= lower && r <= upper;

    let lo_result = problem.solve_at(DISCREPANCY_ALPHA_MIN)?;
    if in_band(lo_result.residual) {
        return Ok((DISCREPANCY_ALPHA_MIN, lo_result));
    }
    if lo_result.residual > upper {
        return Err(Error::NoiseLevelTooSmall {
            alpha: DISCREPANCY_ALPHA_MIN,
            residual: lo_result.residual,
            target: upper,
        });
    }
    let hi_result = problem.solve_at(DISCREPANCY_ALPHA_MAX)?;
    if in_band(hi_result.residual) {
        return Ok((DISCREPANCY_ALPHA_MAX, hi_result));
    }
    if hi_result.residual < lower {
        return Err(Error::DataTooRough {
            alpha: DISCREPANCY_ALPHA_MAX,
            residual: hi_result.residual,
            target: lower,
        });
    }

    // bisect on the crossing residual(α) = τδ, keeping
    // residual(lo) < τδ ≤ residual(hi); the hi side always lies in the band
    // once it is within DISCREPANCY_CROSSING_TOL of τδ
    let (mut lo, mut hi) = (DISCREPANCY_ALPHA_MIN.log10(), DISCREPANCY_ALPHA_MAX.log10());
    let mut best = hi_result;
    for _ in 0..200 {
        if best.residual <= lower * (1.0 + DISCREPANCY_CROSSING_TOL) || hi - lo < 1e-12 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let alpha = 10f64.powf(mid);
        let result = problem.solve_at(alpha)?;
        if result.residual < lower {
            lo = mid;
        } else {
            hi = mid;
            best = result;
        }
    }
    if in_band(best.residual) {
        Ok((best.alpha, best))
    } else {
        Err(Error::Numerical(format!(
            "discrepancy bisection stalled near alpha = {:e} without reaching [{lower:e}, {upper:e}]",
            best.alpha
        )))
    }
}

/// Differentiates the traces directly: `a(h(s_i)) ≈ y′(s_i) / h′(s_i)`,
/// then resamples onto `n` uniform elements by nearest attained state.
pub fn naive_reconstruction(data: &TraceData, curve: &CurveParametrization, n: usize) -> Result<ParameterSpline> {
    let m = data.len();
    if m < 3 {
        return Err(Error::Argument(format!("naive reconstruction needs at least 3 nodes, got {m}")));
    }
    let s = data.s_nodes();
    let y = data.y_values();
    let mut samples = Vec::with_capacity(m);
    for i in 0..m {
        let (l, r) = match i {
            0 => (0, 1),
            i if i == m - 1 => (m - 2, m - 1),
            i => (i - 1, i + 1),
        };
        let dy = (y[r] - y[l]) / (s[r] - s[l]);
        let dh = curve.h_prime(s[i]);
        if dh.abs() < 1e-8 {
            return Err(Error::Argument(format!("|h′({})| = {:e} is too small to divide by", s[i], dh.abs())));
        }
        samples.push((data.h_values()[i], dy / dh));
    }
    let grid = UniformGrid::new(data.interval(), n)?;
    let values = (0..grid.nodes())
        .map(|j| {
            let u = grid.node(j);
            samples
                .iter()
                .min_by(|a, b| (a.0 - u).abs().total_cmp(&(b.0 - u).abs()))
                .map(|p| p.1)
                .unwrap_or(0.0)
        })
        .collect();
    ParameterSpline::on_grid(grid, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward_op::{add_noise, make_exact_data};
    use crate::param_space::StateInterval;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::SQRT_2;

    fn exact_antiderivative(u: f64) -> f64 {
        u + u.powi(3) / 3.0 + 7.0 / (6.0 * SQRT_2)
    }

    fn setup(n: usize) -> (CurveParametrization, Arc<Penalties>, ParameterSpline) {
        let curve = CurveParametrization::reference();
        let grid = UniformGrid::new(StateInterval::reference(), n).unwrap();
        let penalties = Arc::new(Penalties::assemble(grid).unwrap());
        let exact = ParameterSpline::from_function(|u| 1.0 + u * u, grid.interval(), n).unwrap();
        (curve, penalties, exact)
    }

    #[test]
    fn penalties_are_exact_on_known_functions() {
        let (_, p, _) = setup(20);
        assert!(symmetry_defect(p.curvature()) <= 1e-12);
        assert!(symmetry_defect(p.magnitude()) <= 1e-12);
        let s = ParameterSpline::from_function(|u| 1.0 + u * u - 0.3 * u, StateInterval::reference(), 20).unwrap();
        let a = DVector::from_column_slice(s.node_values());
        let k = a.dot(&(p.curvature() * &a));
        assert!((k - s.derivative_l2_norm().powi(2)).abs() <= 1e-12 * k);
        let m = a.dot(&(p.magnitude() * &a));
        let exact = s.antiderivative_l2_norm().powi(2);
        assert!((m - exact).abs() <= 1e-10 * exact, "{m} vs {exact}");
    }

    #[test]
    fn zero_data_gives_zero() {
        let (curve, p, _) = setup(40);
        let data = make_exact_data(&curve, |_| 0.0, 200).unwrap();
        let prob = TikhonovProblem::new(data, p, 1e-3).unwrap();
        let r = solve_tikhonov(&prob).unwrap();
        assert!(r.spline.node_values().iter().all(|&v| v == 0.0));
        assert_eq!(r.residual, 0.0);
    }

    #[test]
    fn noiseless_recovery() {
        let (curve, p, exact) = setup(200);
        let data = make_exact_data(&curve, exact_antiderivative, 500).unwrap();
        let prob = TikhonovProblem::new(data, p, 1e-12).unwrap();
        let r = solve_tikhonov(&prob).unwrap().with_reference(&exact).unwrap();
        assert!(r.err0.unwrap() <= 1e-3, "{:?}", r.err0);
    }

    #[test]
    fn noiseless_error_decreases_under_refinement() {
        let err = |n: usize| {
            let (curve, p, exact) = setup(n);
            let data = make_exact_data(&curve, exact_antiderivative, 5 * n / 2).unwrap();
            let prob = TikhonovProblem::new(data, p, 1e-12).unwrap();
            solve_tikhonov(&prob).unwrap().with_reference(&exact).unwrap().err0.unwrap()
        };
        let coarse = err(50);
        let fine = err(200);
        assert!(fine < coarse, "{fine} vs {coarse}");
    }

    #[test]
    fn huge_alpha_sends_solution_to_zero() {
        let (curve, p, _) = setup(200);
        let data = make_exact_data(&curve, exact_antiderivative, 500).unwrap();
        let prob = TikhonovProblem::new(data, p, 1e-12).unwrap();
        let fit = solve_tikhonov(&prob).unwrap().spline.l2_norm();
        let big = solve_tikhonov(&prob.with_alpha(1e8).unwrap()).unwrap().spline.l2_norm();
        assert!(big <= 1e-4 * fit, "{big} vs {fit}");
    }

    #[test]
    fn rejects_bad_alpha() {
        let (curve, p, _) = setup(10);
        let data = make_exact_data(&curve, exact_antiderivative, 30).unwrap();
        assert!(TikhonovProblem::new(data.clone(), p.clone(), 0.0).is_err());
        assert!(TikhonovProblem::new(data, p, f64::NAN).is_err());
    }

    #[test]
    fn apriori_rules() {
        assert!((alpha_a_priori(1e-2, AprioriRule::Quadratic).unwrap() - 1e-4).abs() < 1e-19);
        let e = alpha_a_priori(1e-2, AprioriRule::EightFifths { c: 0.1 }).unwrap();
        assert!((e - 6.309573444801929e-5).abs() < 1e-17, "{e}");
        assert_eq!(alpha_a_priori(1.0, AprioriRule::Quadratic).unwrap(), 1.0);
        assert!(alpha_a_priori(0.0, AprioriRule::Quadratic).is_err());
        assert!(alpha_a_priori(-1.0, AprioriRule::EightFifths { c: 0.1 }).is_err());
    }

    #[test]
    fn discrepancy_lands_in_band() {
        let (curve, p, _) = setup(200);
        let exact = make_exact_data(&curve, exact_antiderivative, 500).unwrap();
        let delta = 1e-3;
        let noisy = add_noise(&exact, delta, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let prob = TikhonovProblem::new(noisy, p, 1.0).unwrap();
        let (alpha, r) = alpha_discrepancy(&prob, delta, 1.5).unwrap();
        assert!(r.residual >= 1.5e-3 && r.residual <= 2.25e-3, "{}", r.residual);
        assert_eq!(alpha, r.alpha);
    }

    #[test]
    fn discrepancy_degenerate_cases() {
        let (curve, p, _) = setup(50);
        let exact = make_exact_data(&curve, exact_antiderivative, 200).unwrap();
        let prob = TikhonovProblem::new(exact.clone(), p.clone(), 1.0).unwrap();
        let y_norm = exact.weighted_norm(exact.y_values());
        // tau·delta above ‖y‖: even the zero solution fits too well
        assert!(matches!(alpha_discrepancy(&prob, 2.0 * y_norm, 1.5), Err(Error::DataTooRough { .. })));
        // noiseless data against a nonzero noise claim far below the fit error
        let rough = add_noise(&exact, 1e-1, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let prob = TikhonovProblem::new(rough, p, 1.0).unwrap();
        assert!(matches!(alpha_discrepancy(&prob, 1e-9, 1.5), Err(Error::NoiseLevelTooSmall { .. })));
        assert!(alpha_discrepancy(&prob, 1e-3, 1.0).is_err());
    }

    #[test]
    fn naive_examples() {
        let (curve, _, exact) = setup(200);
        let data = make_exact_data(&curve, exact_antiderivative, 500).unwrap();
        let naive = naive_reconstruction(&data, &curve, 200).unwrap();
        let e = naive.difference(&exact).unwrap().l2_norm();
        assert!(e <= 5e-3, "{e}");

        let flat = data.with_y_values(vec![0.7; 500]).unwrap();
        let zero = naive_reconstruction(&flat, &curve, 200).unwrap();
        assert!(zero.node_values().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn naive_rejects_flat_trace() {
        let curve = CurveParametrization::new(0.0, 1.0, |s| s, |_| 0.0).unwrap();
        let data = make_exact_data(&curve, |u| u, 10).unwrap();
        assert!(naive_reconstruction(&data, &curve, 4).is_err());
    }
}
