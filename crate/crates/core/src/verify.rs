//! Randomized property checks for every module, run by `kirchhoff verify`.

use std::sync::Arc;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::forward_op::{self, CurveParametrization};
use crate::hilbert_scale::DiscreteScaleOperator;
use crate::param_space::{ParameterSpline, StateInterval, UniformGrid};
use crate::regularize::{self, Penalties, TikhonovProblem};
use crate::study::{exact_antiderivative, StudyContext};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub module: &'static str,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn outcome(module: &'static str, name: &'static str, r: Result<(bool, String)>) -> CheckOutcome {
    match r {
        Ok((passed, detail)) => CheckOutcome { module, name, passed, detail },
        Err(e) => CheckOutcome { module, name, passed: false, detail: format!("error: {e}") },
    }
}

/// Random spline with nodes drawn from `[lo, hi]`.
pub fn random_spline<R: Rng>(rng: &mut R, interval: StateInterval, n: usize, lo: f64, hi: f64) -> ParameterSpline {
    let values = (0..=n).map(|_| rng.gen_range(lo..hi)).collect();
    ParameterSpline::new(interval, values).expect("finite random nodes")
}

/// Smooth random coefficient: a short random cosine series.
pub fn random_smooth_spline<R: Rng>(rng: &mut R, interval: StateInterval, n: usize) -> ParameterSpline {
    let coeffs: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let (lo, len) = (interval.u_min(), interval.length());
    ParameterSpline::from_function(
        |u| {
            let x = (u - lo) / len;
            coeffs
                .iter()
                .enumerate()
                .map(|(k, c)| c * (std::f64::consts::PI * k as f64 * x).cos())
                .sum()
        },
        interval,
        n,
    )
    .expect("finite smooth nodes")
}

pub fn run_all(seed: u64) -> Vec<CheckOutcome> {
    let mut out = Vec::new();
    out.extend(param_space_checks(seed));
    out.extend(forward_op_checks(seed));
    out.extend(hilbert_scale_checks(seed));
    out.extend(regularize_checks(seed));
    out
}

pub fn param_space_checks(seed: u64) -> Vec<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let interval = StateInterval::reference();
    let mut out = Vec::new();

    let monotone = (|| {
        for _ in 0..100 {
            let s = random_spline(&mut rng, interval, 20, 0.05, 3.0);
            let mut us: Vec<f64> = (0..50).map(|_| rng.gen_range(interval.u_min()..interval.u_max())).collect();
            us.sort_by(f64::total_cmp);
            us.dedup();
            let vals = us.iter().map(|&u| s.antiderivative(u)).collect::<Result<Vec<_>>>()?;
            if vals.windows(2).any(|w| w[1] <= w[0]) {
                return Ok((false, "antiderivative not strictly increasing".into()));
            }
        }
        Ok((true, "100 positive splines × 50 points".into()))
    })();
    out.push(outcome("param_space", "antiderivative strictly increasing", monotone));

    let linear = (|| {
        let mut worst: f64 = 0.0;
        for _ in 0..50 {
            let p = random_spline(&mut rng, interval, 15, -2.0, 2.0);
            let q = random_spline(&mut rng, interval, 15, -2.0, 2.0);
            let c: f64 = rng.gen_range(-5.0..5.0);
            let sum = ParameterSpline::new(interval, p.node_values().iter().zip(q.node_values()).map(|(a, b)| a + b).collect())?;
            let scaled = ParameterSpline::new(interval, p.node_values().iter().map(|a| c * a).collect())?;
            for _ in 0..10 {
                let u = rng.gen_range(interval.u_min()..interval.u_max());
                let (ap, aq) = (p.antiderivative(u)?, q.antiderivative(u)?);
                worst = worst.max((sum.antiderivative(u)? - ap - aq).abs());
                worst = worst.max((scaled.antiderivative(u)? - c * ap).abs());
            }
        }
        Ok((worst <= 1e-13, format!("max defect {worst:.2e}")))
    })();
    out.push(outcome("param_space", "antiderivative linear in nodes", linear));

    let derivative = (|| {
        let step = 1e-6 * interval.length();
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let s = random_spline(&mut rng, interval, 10, 0.5, 2.0);
            let h = s.grid().spacing();
            for _ in 0..20 {
                let u = rng.gen_range(interval.u_min() + 2.0 * step..interval.u_max() - 2.0 * step);
                let x = (u - interval.u_min()) / h;
                if (x - x.round()).abs() * h < 2.0 * step {
                    continue;
                }
                let fd = (s.antiderivative(u + step)? - s.antiderivative(u - step)?) / (2.0 * step);
                let a = s.eval(u)?;
                worst = worst.max((fd - a).abs() / a.abs());
            }
        }
        Ok((worst <= 1e-6, format!("max relative defect {worst:.2e}")))
    })();
    out.push(outcome("param_space", "derivative of antiderivative equals a", derivative));

    let simpson = (|| {
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let s = random_spline(&mut rng, interval, 12, -2.0, 2.0);
            let (l2, d) = simpson_norms(&s)?;
            worst = worst.max((s.l2_norm() - l2).abs() / l2);
            worst = worst.max((s.h1_norm() - (l2 * l2 + d).sqrt()).abs() / s.h1_norm());
        }
        Ok((worst <= 1e-12, format!("max relative defect {worst:.2e}")))
    })();
    out.push(outcome("param_space", "norms agree with composite Simpson", simpson));
    out
}

/// Composite Simpson on each element: `(‖a‖_{L²}, ‖a′‖²_{L²})`.
pub fn simpson_norms(s: &ParameterSpline) -> Result<(f64, f64)> {
    let g = s.grid();
    let h = g.spacing();
    let panels = 8;
    let mut l2 = 0.0;
    let mut d2 = 0.0;
    for e in 0..g.elements() {
        let (u0, u1) = (g.node(e), g.node(e + 1));
        let slope = (s.node_values()[e + 1] - s.node_values()[e]) / h;
        let ph = (u1 - u0) / panels as f64;
        for p in 0..panels {
            let a = u0 + p as f64 * ph;
            let b = if p + 1 == panels { u1 } else { a + ph };
            // interior evaluation keeps each sample in this element
            let fa = s.node_values()[e] + slope * (a - u0);
            let fm = s.node_values()[e] + slope * (0.5 * (a + b) - u0);
            let fb = s.node_values()[e] + slope * (b - u0);
            l2 += (b - a) / 6.0 * (fa * fa + 4.0 * fm * fm + fb * fb);
            d2 += (b - a) * slope * slope;
        }
    }
    Ok((l2.sqrt(), d2))
}

pub fn forward_op_checks(seed: u64) -> Vec<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let curve = CurveParametrization::reference();
    let interval = curve.interval();
    let mut out = Vec::new();

    let linear = (|| {
        let data = forward_op::make_exact_data(&curve, exact_antiderivative, 500)?;
        let grid = UniformGrid::new(interval, 50)?;
        let t = forward_op::assemble_operator(&grid, &data)?;
        let p = random_spline(&mut rng, interval, 50, -1.0, 1.0);
        let q = random_spline(&mut rng, interval, 50, -1.0, 1.0);
        let (a, b) = (DVector::from_column_slice(p.node_values()), DVector::from_column_slice(q.node_values()));
        let lhs = &t * (&a * 2.0 - &b * 3.0);
        let rhs = (&t * &a) * 2.0 - (&t * &b) * 3.0;
        let defect = (lhs - rhs).amax();
        let direct = forward_op::apply_operator(&p, &data)?;
        let d2 = (&t * &a).iter().zip(&direct).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        Ok((defect <= 1e-13 && d2 <= 1e-13, format!("combination defect {defect:.2e}, matrix vs direct {d2:.2e}")))
    })();
    out.push(outcome("forward_op", "operator linear and matches direct evaluation", linear));

    let zero_noise = (|| {
        let data = forward_op::make_exact_data(&curve, exact_antiderivative, 500)?;
        let noisy = forward_op::add_noise(&data, 0.0, &mut rng)?;
        let grid = UniformGrid::new(interval, 200)?;
        let same = forward_op::assemble_operator(&grid, &data)? == forward_op::assemble_operator(&grid, &noisy)?;
        Ok((same, "T^0 == T".into()))
    })();
    out.push(outcome("forward_op", "zero noise leaves operator unchanged", zero_noise));

    let ratio = (|| {
        let (lo, hi) = (1.0 - 0.02, 2f64.powf(0.25) + 0.02);
        let mut range = (f64::INFINITY, f64::NEG_INFINITY);
        for _ in 0..100 {
            let s = random_spline(&mut rng, interval, 200, -1.0, 1.0);
            let r = forward_op::operator_norm_ratio(&s, &curve, 500)?;
            range = (range.0.min(r), range.1.max(r));
        }
        Ok((range.0 >= lo && range.1 <= hi, format!("ratios in [{:.4}, {:.4}]", range.0, range.1)))
    })();
    out.push(outcome("forward_op", "norm ratio within [1, 2^(1/4)] ± 2%", ratio));

    let perturbation = (|| {
        let c = perturbation_constants(&mut rng, &curve, &[1e-2, 1e-5], 20, 3)?;
        let factor = c[1] / c[0];
        Ok(((0.25..=4.0).contains(&factor), format!("C(1e-2) = {:.3}, C(1e-5) = {:.3}", c[0], c[1])))
    })();
    out.push(outcome("forward_op", "perturbation constant independent of noise", perturbation));
    out
}

/// For each δ, the maximum over test functions and noise draws of
/// `‖(T − T^δ)w‖ / (δ ‖w‖_{H²})`.
pub fn perturbation_constants<R: Rng>(
    rng: &mut R,
    curve: &CurveParametrization,
    deltas: &[f64],
    functions: usize,
    draws: usize,
) -> Result<Vec<f64>> {
    let data = forward_op::make_exact_data(curve, exact_antiderivative, 500)?;
    let tests: Vec<ParameterSpline> =
        (0..functions).map(|_| random_smooth_spline(rng, curve.interval(), 200)).collect();
    let mut out = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let mut worst: f64 = 0.0;
        for _ in 0..draws {
            let noisy = forward_op::add_noise(&data, delta, rng)?;
            for w in &tests {
                worst = worst.max(forward_op::perturbation_ratio(w, &data, &noisy)?);
            }
        }
        out.push(worst);
    }
    Ok(out)
}

/// Random vector on the scale grid with `u_0 = 0`.
pub fn random_scale_vector<R: Rng>(rng: &mut R, op: &DiscreteScaleOperator) -> Vec<f64> {
    let mut u: Vec<f64> = (0..op.grid().nodes()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    u[0] = 0.0;
    u
}

/// Random exponents `r ≤ s ≤ t` with `t − r ≥ 0.1`.
pub fn random_exponents<R: Rng>(rng: &mut R) -> (f64, f64, f64) {
    let r = rng.gen_range(-2.0..1.0);
    let t = r + rng.gen_range(0.1..3.0);
    let s = rng.gen_range(r..=t);
    (r, s, t)
}

pub fn hilbert_scale_checks(seed: u64) -> Vec<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x4153);
    let mut out = Vec::new();
    let op = match DiscreteScaleOperator::build(StateInterval::reference(), 100) {
        Ok(op) => op,
        Err(e) => {
            out.push(outcome("hilbert_scale", "construction", Err(e)));
            return out;
        }
    };

    let sym = op.symmetry_defect();
    let lmin = op.min_eigenvalue();
    out.push(outcome(
        "hilbert_scale",
        "self-adjoint and strictly positive",
        Ok((sym <= 1e-12 && lmin >= 1.0 - 1e-10, format!("symmetry defect {sym:.1e}, λ_min {lmin:.12}"))),
    ));

    let interp = (|| {
        let mut worst = f64::INFINITY;
        for _ in 0..100 {
            let u = random_scale_vector(&mut rng, &op);
            for _ in 0..5 {
                let (r, s, t) = random_exponents(&mut rng);
                let m = op.check_interpolation_inequality(&u, r, s, t)?;
                worst = worst.min(m.margin() / m.rhs);
            }
        }
        Ok((worst >= -1e-10, format!("min relative margin {worst:.2e}")))
    })();
    out.push(outcome("hilbert_scale", "interpolation inequality", interp));

    let l2 = (|| {
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let u = random_scale_vector(&mut rng, &op);
            let (a, b) = (op.scale_norm(&u, -1.0)?, op.l2_norm(&u)?);
            worst = worst.max((a - b).abs() / b);
        }
        Ok((worst <= 1e-12, format!("max relative defect {worst:.2e}")))
    })();
    out.push(outcome("hilbert_scale", "scale norm at -1 equals L2", l2));

    let mono = (|| {
        for _ in 0..20 {
            let u = random_scale_vector(&mut rng, &op);
            let norms = [-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0]
                .iter()
                .map(|&s| op.scale_norm(&u, s))
                .collect::<Result<Vec<_>>>()?;
            if norms.windows(2).any(|w| w[1] < w[0] * (1.0 - 1e-14)) {
                return Ok((false, "scale norm decreased in s".into()));
            }
        }
        Ok((true, "nondecreasing in s".into()))
    })();
    out.push(outcome("hilbert_scale", "scale norms monotone", mono));
    out
}

pub fn regularize_checks(seed: u64) -> Vec<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7e9);
    let mut out = Vec::new();
    let ctx = match StudyContext::reference(200, 500) {
        Ok(c) => c,
        Err(e) => {
            out.push(outcome("regularize", "setup", Err(e)));
            return out;
        }
    };
    let problem = (|| {
        let data = ctx.noisy_data(1e-2, seed)?;
        TikhonovProblem::new(data, ctx.penalties(), 1e-4)
    })();
    let problem = match problem {
        Ok(p) => p,
        Err(e) => {
            out.push(outcome("regularize", "setup", Err(e)));
            return out;
        }
    };

    let det = (|| {
        let a = regularize::solve_tikhonov(&problem)?;
        let b = regularize::solve_tikhonov(&problem)?;
        Ok((a == b, "repeat solves bitwise equal".into()))
    })();
    out.push(outcome("regularize", "deterministic solve", det));

    let opt = (|| {
        let r = regularize::solve_tikhonov(&problem)?;
        let base = problem.objective(r.spline.node_values());
        let n = r.spline.node_values().len();
        for _ in 0..10 {
            let dir: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
            for sign in [-1.0, 1.0] {
                let moved: Vec<f64> =
                    r.spline.node_values().iter().zip(&dir).map(|(a, d)| a + sign * 1e-4 * d / norm).collect();
                if problem.objective(&moved) < base {
                    return Ok((false, "objective decreased off the minimizer".into()));
                }
            }
        }
        Ok((true, "10 directions, ±1e-4".into()))
    })();
    out.push(outcome("regularize", "first-order optimality", opt));

    let mono = (|| {
        let mut prev_res = 0.0;
        let mut prev_norm = f64::INFINITY;
        for k in 0..10 {
            let alpha = 10f64.powf(-9.0 + k as f64);
            let r = regularize::solve_tikhonov(&problem.clone().with_alpha(alpha)?)?;
            let norm = r.spline.antiderivative_h2_norm();
            if r.residual < prev_res * (1.0 - 1e-10) || norm > prev_norm * (1.0 + 1e-10) {
                return Ok((false, format!("monotonicity broken at alpha = {alpha:e}")));
            }
            prev_res = r.residual;
            prev_norm = norm;
        }
        Ok((true, "residual up, solution norm down over 10 decades".into()))
    })();
    out.push(outcome("regularize", "monotone in alpha", mono));

    let penalties = (|| {
        let p: Arc<Penalties> = ctx.penalties();
        let d = regularize::symmetry_defect(p.curvature()).max(regularize::symmetry_defect(p.magnitude()));
        Ok((d <= 1e-12, format!("symmetry defect {d:.1e}")))
    })();
    out.push(outcome("regularize", "penalties symmetric", penalties));
    out
}
