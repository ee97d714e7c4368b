//! Discrete realization of the scale operator `L⁴: A ↦ A'''' + A`.
//!
//! `L⁴` is represented through its quadratic form `(u″, u″) + (u, u)` on a
//! uniform grid with the essential condition `u(u_min) = 0`; the remaining
//! boundary conditions of the domain are natural. With `K = BᵀB` the
//! generalized eigenproblem `(K + M) v = λ M v` is solved through the SVD of
//! `B M^{-1/2}`, so `λ_k = 1 + σ_k²` and `v_k` are `M`-orthonormal.
//!
//! The eigenvalues of `L` are `λ_k^{1/4}`; the shifted scale norm is
//! `‖u‖_{X̃_s} = ‖L^{s+1} u‖`.

use nalgebra::{DMatrix, DVector, SVD};

use crate::error::{Error, Result};
use crate::param_space::{StateInterval, UniformGrid};

#[derive(Debug, Clone)]
pub struct DiscreteScaleOperator {
    grid: UniformGrid,
    factor: DMatrix<f64>,
    stiffness: DMatrix<f64>,
    mass: DVector<f64>,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
}

const SYMMETRY_TOL: f64 = 1e-12;
const POSITIVITY_TOL: f64 = 1e-10;
const ORTHONORMALITY_TOL: f64 = 1e-10;

impl DiscreteScaleOperator {
    /// Assembles `K`, `M` on `n` elements and decomposes the pencil.
    pub fn build(interval: StateInterval, n: usize) -> Result<Self> {
        if n < 4 {
            return Err(Error::Argument(format!("scale operator needs at least 4 elements, got {n}")));
        }
        let grid = UniformGrid::new(interval, n)?;
        let h = grid.spacing();

        // unknowns u_1..u_n; u_0 = 0 is eliminated
        let mut mass = DVector::from_element(n, h);
        mass[n - 1] = 0.5 * h;

        // B = √h · D₂ restricted to the unknowns, one row per interior node
        let scale = h.sqrt() / (h * h);
        let mut b = DMatrix::zeros(n, n);
        for i in 1..n {
            let row = i - 1;
            if i >= 2 {
                b[(row, i - 2)] = scale;
            }
            b[(row, i - 1)] = -2.0 * scale;
            b[(row, i)] = scale;
        }
        let stiffness = {
            let k = b.tr_mul(&b);
            (&k + k.transpose()) * 0.5
        };

        let inv_sqrt_mass = mass.map(|m| 1.0 / m.sqrt());
        let mut scaled = b.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= inv_sqrt_mass[j];
        }
        let svd = SVD::try_new(scaled, false, true, f64::EPSILON, 0)
            .ok_or_else(|| Error::Numerical("singular value decomposition did not converge".into()))?;
        let v_t = svd.v_t.ok_or_else(|| Error::Numerical("missing right singular vectors".into()))?;

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
        let eigenvalues = DVector::from_iterator(n, order.iter().map(|&k| 1.0 + svd.singular_values[k].powi(2)));
        let mut eigenvectors = DMatrix::zeros(n, n);
        for (col, &k) in order.iter().enumerate() {
            for i in 0..n {
                eigenvectors[(i, col)] = v_t[(k, i)] * inv_sqrt_mass[i];
            }
        }

        let op = Self { grid, factor: b, stiffness, mass, eigenvalues, eigenvectors };
        op.check_invariants()?;
        Ok(op)
    }

    fn check_invariants(&self) -> Result<()> {
        let sym = self.symmetry_defect();
        if sym > SYMMETRY_TOL {
            return Err(Error::Numerical(format!("stiffness symmetry defect {sym:.2e}")));
        }
        let lmin = self.min_eigenvalue();
        if lmin < 1.0 - POSITIVITY_TOL {
            return Err(Error::Numerical(format!("smallest eigenvalue {lmin} below 1")));
        }
        let orth = self.orthonormality_defect();
        if orth > ORTHONORMALITY_TOL {
            return Err(Error::Numerical(format!("eigenvectors not M-orthonormal (defect {orth:.2e})")));
        }
        Ok(())
    }

    pub fn grid(&self) -> UniformGrid {
        self.grid
    }

    /// Stiffness on the constrained unknowns `u_1..u_N`.
    pub fn stiffness(&self) -> &DMatrix<f64> {
        &self.stiffness
    }

    /// Diagonal of the lumped mass matrix on `u_1..u_N`.
    pub fn mass(&self) -> &DVector<f64> {
        &self.mass
    }

    /// Eigenvalues of the discrete `L⁴`, ascending.
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.min()
    }

    /// Eigenvector `k` lifted to the full grid (leading zero).
    pub fn eigenvector(&self, k: usize) -> Vec<f64> {
        std::iter::once(0.0).chain(self.eigenvectors.column(k).iter().copied()).collect()
    }

    /// `‖K − Kᵀ‖_F / ‖K‖_F`.
    pub fn symmetry_defect(&self) -> f64 {
        (&self.stiffness - self.stiffness.transpose()).norm() / self.stiffness.norm()
    }

    /// `max |VᵀMV − I|`.
    pub fn orthonormality_defect(&self) -> f64 {
        let mut mv = self.eigenvectors.clone();
        for (i, mut row) in mv.row_iter_mut().enumerate() {
            row *= self.mass[i];
        }
        let gram = self.eigenvectors.tr_mul(&mv);
        let n = gram.nrows();
        (&gram - DMatrix::identity(n, n)).amax()
    }

    fn interior<'a>(&self, u: &'a [f64]) -> Result<&'a [f64]> {
        let n = self.grid.nodes();
        if u.len() != n {
            return Err(Error::Structure(format!("vector of length {} on a grid with {n} nodes", u.len())));
        }
        if u[0] != 0.0 {
            return Err(Error::Argument(format!("vector violates u(u_min) = 0 (u_0 = {})", u[0])));
        }
        Ok(&u[1..])
    }

    /// Spectral coefficients `c_k = v_kᵀ M u`.
    pub fn coefficients(&self, u: &[f64]) -> Result<DVector<f64>> {
        let inner = self.interior(u)?;
        let mu = DVector::from_iterator(inner.len(), inner.iter().zip(self.mass.iter()).map(|(x, m)| x * m));
        Ok(self.eigenvectors.tr_mul(&mu))
    }

    /// Discrete `L²(I)` norm `√(uᵀ M u)`.
    pub fn l2_norm(&self, u: &[f64]) -> Result<f64> {
        let inner = self.interior(u)?;
        Ok(inner.iter().zip(self.mass.iter()).map(|(x, m)| m * x * x).sum::<f64>().sqrt())
    }

    /// Discrete `‖u″‖² + ‖u‖² = ‖Bu‖² + uᵀMu` with `K = BᵀB`.
    pub fn energy(&self, u: &[f64]) -> Result<f64> {
        let inner = DVector::from_column_slice(self.interior(u)?);
        let bu = &self.factor * &inner;
        Ok(bu.norm_squared() + inner.iter().zip(self.mass.iter()).map(|(x, m)| m * x * x).sum::<f64>())
    }

    /// `(L⁴u, u) / (u, u)`.
    pub fn rayleigh_quotient(&self, u: &[f64]) -> Result<f64> {
        let l2 = self.l2_norm(u)?;
        if l2 == 0.0 {
            return Err(Error::Argument("Rayleigh quotient of the zero vector".into()));
        }
        Ok(self.energy(u)? / (l2 * l2))
    }

    fn power_norm_of(&self, c: &DVector<f64>, t: f64) -> f64 {
        c.iter()
            .zip(self.eigenvalues.iter())
            .map(|(ck, lk)| lk.powf(t / 2.0) * ck * ck)
            .sum::<f64>()
            .sqrt()
    }

    /// `‖L^t u‖`.
    pub fn power_norm(&self, u: &[f64], t: f64) -> Result<f64> {
        Ok(self.power_norm_of(&self.coefficients(u)?, t))
    }

    /// Shifted scale norm `‖u‖_{X̃_s} = ‖L^{s+1} u‖`.
    pub fn scale_norm(&self, u: &[f64], s: f64) -> Result<f64> {
        self.power_norm(u, s + 1.0)
    }

    /// Applies `L^t`; the result carries the leading zero.
    pub fn fractional_power_apply(&self, u: &[f64], t: f64) -> Result<Vec<f64>> {
        let c = self.coefficients(u)?;
        let scaled = DVector::from_iterator(
            c.len(),
            c.iter().zip(self.eigenvalues.iter()).map(|(ck, lk)| lk.powf(t / 4.0) * ck),
        );
        let out = &self.eigenvectors * scaled;
        Ok(std::iter::once(0.0).chain(out.iter().copied()).collect())
    }

    /// Margin `RHS − LHS` of
    /// `‖L^s u‖ ≤ ‖L^r u‖^{(t−s)/(t−r)} ‖L^t u‖^{(s−r)/(t−r)}`.
    pub fn check_interpolation_inequality(&self, u: &[f64], r: f64, s: f64, t: f64) -> Result<InterpolationMargin> {
        if !(r < t) || s < r || s > t {
            return Err(Error::Argument(format!("interpolation needs r ≤ s ≤ t with r < t, got ({r}, {s}, {t})")));
        }
        let c = self.coefficients(u)?;
        let nr = self.power_norm_of(&c, r);
        let ns = self.power_norm_of(&c, s);
        let nt = self.power_norm_of(&c, t);
        if nr == 0.0 {
            return Err(Error::Argument("interpolation inequality of the zero vector".into()));
        }
        let theta = (s - r) / (t - r);
        let rhs = nr.powf(1.0 - theta) * nt.powf(theta);
        Ok(InterpolationMargin { lhs: ns, rhs })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterpolationMargin {
    pub lhs: f64,
    pub rhs: f64,
}

impl InterpolationMargin {
    pub fn margin(&self) -> f64 {
        self.rhs - self.lhs
    }

    /// The contract `margin ≥ −1e-10 · RHS`.
    pub fn holds(&self) -> bool {
        self.margin() >= -1e-10 * self.rhs
    }
}
