use std::sync::OnceLock;

use kirchhoff_core::forward_op::{self, CurveParametrization};
use kirchhoff_core::hilbert_scale::DiscreteScaleOperator;
use kirchhoff_core::param_space::{ParameterSpline, StateInterval};
use kirchhoff_core::regularize::{self, TikhonovProblem};
use kirchhoff_core::study::{cell_seed, AlphaRule, ParameterChoice, StudyContext};
use kirchhoff_core::verify;
use proptest::collection::vec;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn interval() -> StateInterval {
    StateInterval::reference()
}

fn scale_op() -> &'static DiscreteScaleOperator {
    static OP: OnceLock<DiscreteScaleOperator> = OnceLock::new();
    OP.get_or_init(|| DiscreteScaleOperator::build(interval(), 60).unwrap())
}

fn context() -> &'static StudyContext {
    static CTX: OnceLock<StudyContext> = OnceLock::new();
    CTX.get_or_init(|| StudyContext::reference(200, 500).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn antiderivative_strictly_increasing(nodes in vec(0.01f64..5.0, 2..30), mut us in vec(0.0f64..1.0, 50)) {
        let s = ParameterSpline::new(interval(), nodes).unwrap();
        let i = interval();
        us.iter_mut().for_each(|x| *x = i.u_min() + *x * i.length());
        us.sort_by(f64::total_cmp);
        us.dedup();
        let vals: Vec<f64> = us.iter().map(|&u| s.antiderivative(u).unwrap()).collect();
        prop_assert!(vals.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn antiderivative_linear(
        p in vec(-3.0f64..3.0, 12),
        q in vec(-3.0f64..3.0, 12),
        c in -4.0f64..4.0,
        x in 0.0f64..1.0,
    ) {
        let i = interval();
        let u = i.u_min() + x * i.length();
        let sp = ParameterSpline::new(i, p.clone()).unwrap();
        let sq = ParameterSpline::new(i, q.clone()).unwrap();
        let sum = ParameterSpline::new(i, p.iter().zip(&q).map(|(a, b)| a + b).collect()).unwrap();
        let scaled = ParameterSpline::new(i, p.iter().map(|a| c * a).collect()).unwrap();
        let (ap, aq) = (sp.antiderivative(u).unwrap(), sq.antiderivative(u).unwrap());
        prop_assert!((sum.antiderivative(u).unwrap() - ap - aq).abs() <= 1e-13);
        prop_assert!((scaled.antiderivative(u).unwrap() - c * ap).abs() <= 1e-13);
    }

    #[test]
    fn antiderivative_derivative_is_a(nodes in vec(0.5f64..2.0, 11), x in 0.01f64..0.99) {
        let s = ParameterSpline::new(interval(), nodes).unwrap();
        let i = interval();
        let h = s.grid().spacing();
        let step = 1e-6 * i.length();
        let u = i.u_min() + x * i.length();
        let off = (u - i.u_min()) / h;
        prop_assume!((off - off.round()).abs() * h > 2.0 * step);
        let fd = (s.antiderivative(u + step).unwrap() - s.antiderivative(u - step).unwrap()) / (2.0 * step);
        let a = s.eval(u).unwrap();
        prop_assert!((fd - a).abs() <= 1e-6 * a.abs());
    }

    #[test]
    fn norms_match_simpson(nodes in vec(-3.0f64..3.0, 2..25)) {
        let s = ParameterSpline::new(interval(), nodes).unwrap();
        let (l2, d2) = verify::simpson_norms(&s).unwrap();
        prop_assume!(l2 > 1e-6);
        prop_assert!((s.l2_norm() - l2).abs() <= 1e-12 * l2);
        let h1 = (l2 * l2 + d2).sqrt();
        prop_assert!((s.h1_norm() - h1).abs() <= 1e-12 * h1);
    }

    #[test]
    fn operator_matrix_is_linear(p in vec(-2.0f64..2.0, 21), q in vec(-2.0f64..2.0, 21), c in -3.0f64..3.0) {
        let curve = CurveParametrization::reference();
        let data = forward_op::make_exact_data(&curve, |_| 0.0, 200).unwrap();
        let sp = ParameterSpline::new(interval(), p.clone()).unwrap();
        let sq = ParameterSpline::new(interval(), q.clone()).unwrap();
        let comb = ParameterSpline::new(interval(), p.iter().zip(&q).map(|(a, b)| c * a + b).collect()).unwrap();
        let tp = forward_op::apply_operator(&sp, &data).unwrap();
        let tq = forward_op::apply_operator(&sq, &data).unwrap();
        let tc = forward_op::apply_operator(&comb, &data).unwrap();
        for k in 0..data.len() {
            prop_assert!((tc[k] - c * tp[k] - tq[k]).abs() <= 1e-13);
        }
    }

    #[test]
    fn interpolation_inequality_holds(coeffs in vec(-1.0f64..1.0, 60), r in -2.0f64..1.0, span in 0.1f64..3.0, frac in 0.0f64..=1.0) {
        let op = scale_op();
        let u: Vec<f64> = std::iter::once(0.0).chain(coeffs).collect();
        prop_assume!(u.iter().any(|x| *x != 0.0));
        let t = r + span;
        let s = r + frac * span;
        let m = op.check_interpolation_inequality(&u, r, s, t).unwrap();
        prop_assert!(m.holds(), "margin {} rhs {}", m.margin(), m.rhs);
    }

    #[test]
    fn scale_norm_nondecreasing(coeffs in vec(-1.0f64..1.0, 60), s in -2.0f64..2.0, ds in 0.0f64..1.0) {
        let op = scale_op();
        let u: Vec<f64> = std::iter::once(0.0).chain(coeffs).collect();
        let a = op.scale_norm(&u, s).unwrap();
        let b = op.scale_norm(&u, s + ds).unwrap();
        prop_assert!(b >= a * (1.0 - 1e-14));
    }
}

#[test]
fn operator_norm_ratio_band_on_random_splines() {
    let curve = CurveParametrization::reference();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..100 {
        let s = verify::random_spline(&mut rng, interval(), 200, -1.0, 1.0);
        let r = forward_op::operator_norm_ratio(&s, &curve, 500).unwrap();
        assert!((0.98..=2f64.powf(0.25) + 0.02).contains(&r), "{r}");
    }
}

#[test]
fn regularized_solution_is_optimal_and_repeatable() {
    let ctx = context();
    let data = ctx.noisy_data(1e-3, 99).unwrap();
    let problem = TikhonovProblem::new(data, ctx.penalties(), 1e-6).unwrap();
    let a = regularize::solve_tikhonov(&problem).unwrap();
    let b = regularize::solve_tikhonov(&problem).unwrap();
    assert_eq!(a, b);

    let base = problem.objective(a.spline.node_values());
    let n = a.spline.node_values().len();
    for k in 0..10 {
        let dir: Vec<f64> = (0..n).map(|j| ((j * 31 + k * 17) % 23) as f64 / 11.0 - 1.0).collect();
        let norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
        for sign in [-1.0, 1.0] {
            let moved: Vec<f64> = a.spline.node_values().iter().zip(&dir).map(|(x, d)| x + sign * 1e-4 * d / norm).collect();
            assert!(problem.objective(&moved) >= base);
        }
    }
}

#[test]
fn residual_and_norm_monotone_in_alpha() {
    let ctx = context();
    let data = ctx.noisy_data(1e-3, 3).unwrap();
    let problem = TikhonovProblem::new(data, ctx.penalties(), 1.0).unwrap();
    let mut prev: Option<(f64, f64)> = None;
    for k in 0..10 {
        let alpha = 10f64.powf(-10.0 + k as f64);
        let r = regularize::solve_tikhonov(&problem.clone().with_alpha(alpha).unwrap()).unwrap();
        let norm = r.spline.antiderivative_h2_norm();
        if let Some((res, n)) = prev {
            assert!(r.residual >= res * (1.0 - 1e-10), "residual fell at {alpha:e}");
            assert!(norm <= n * (1.0 + 1e-10), "norm grew at {alpha:e}");
        }
        prev = Some((r.residual, norm));
    }
}

#[test]
fn residual_monotone_at_random_alphas() {
    let ctx = context();
    let data = ctx.noisy_data(1e-3, 4).unwrap();
    let problem = TikhonovProblem::new(data, ctx.penalties(), 1.0).unwrap();
    for k in 0..20 {
        let alpha = 10f64.powf(-12.0 + 0.6 * k as f64 + 0.137);
        let r1 = regularize::solve_tikhonov(&problem.clone().with_alpha(alpha).unwrap()).unwrap().residual;
        let r10 = regularize::solve_tikhonov(&problem.clone().with_alpha(10.0 * alpha).unwrap()).unwrap().residual;
        assert!(r10 >= r1 * (1.0 - 1e-10));
    }
}

#[test]
fn h2_error_of_antiderivative_stays_bounded() {
    // ‖A − A_α^δ‖ in the ‖·″‖ + ‖·‖ norm with α = δ²
    let ctx = context();
    let exact = ctx.exact_spline();
    let mut values = Vec::new();
    for delta in [1e-2, 1e-3, 1e-4, 1e-5] {
        let mut errs: Vec<f64> = (0..5)
            .map(|t| {
                let r = ctx.reconstruct(delta, cell_seed(1, delta, t), ParameterChoice::Rule(AlphaRule::Quadratic)).unwrap();
                let d = r.spline.difference(exact).unwrap();
                d.derivative_l2_norm() + d.antiderivative_l2_norm()
            })
            .collect();
        values.push(kirchhoff_core::study::median(&mut errs));
    }
    for v in &values[1..] {
        assert!(*v <= 3.0 * values[0], "{values:?}");
    }
}

#[test]
fn verify_suite_passes() {
    for check in verify::run_all(42) {
        assert!(check.passed, "{}::{} failed: {}", check.module, check.name, check.detail);
    }
}
