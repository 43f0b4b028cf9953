//! Library results checked against independently computed references.

mod common;

use std::f64::consts::PI;

use common::*;
use online_ridge::bayes::{brr_cumulative_log_loss, GaussianExpert, FiniteBaState};
use online_ridge::bounds::{
    brr_stepwise_log_loss, run_ridge, verify_det_bound, verify_thm2, verify_thm3,
    KernelSource,
};
use online_ridge::data::{generate_synthetic, InputDistribution, SyntheticSpec, ThetaStar};
use online_ridge::kernel::{gram_matrix, rkhs_min_value, KernelSpec, PrecomputedStream};
use online_ridge::linalg::{batch_ridge, gaussian_quadratic_integral, Matrix, Vector};
use online_ridge::online::RidgeState;
use online_ridge::Stream;
use rand::Rng;

#[allow(clippy::too_many_arguments)]
fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, eps: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * eps {
        return left + right + delta / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, eps / 2.0, depth - 1)
        + simpson(f, m, b, fm, frm, fb, right, eps / 2.0, depth - 1)
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, eps: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson(f, a, b, fa, fm, fb, whole, eps, 50)
}

#[test]
fn gaussian_integral_fixed_case() {
    let value = gaussian_quadratic_integral(&Matrix::from_element(1, 1, 2.0), &Vector::from_element(1, 2.0), 0.0).unwrap();
    let expected = 0.5 + 0.5 * PI.ln() - 0.5 * 2f64.ln();
    assert!((value - expected).abs() <= 1e-12);
}

#[test]
fn gaussian_integral_matches_adaptive_quadrature_in_one_dimension() {
    let mut r = rng(11);
    for _ in 0..40 {
        let a: f64 = r.random_range(0.2..5.0);
        let b = r.random_range(-4.0..4.0);
        let c = r.random_range(-2.0..2.0);
        let center = -b / (2.0 * a);
        let half = 12.0 / a.sqrt();
        let f = |t: f64| (-(a * t * t + b * t + c)).exp();
        let numeric = adaptive_simpson(&f, center - half, center + half, 1e-13).ln();
        let closed = gaussian_quadratic_integral(&Matrix::from_element(1, 1, a), &Vector::from_element(1, b), c).unwrap();
        assert!((numeric - closed).abs() <= 1e-7, "a={a} b={b} c={c}: {numeric} vs {closed}");
    }
}

#[test]
fn gaussian_integral_matches_tensor_quadrature_in_two_dimensions() {
    let mut r = rng(12);
    for _ in 0..10 {
        let p: f64 = r.random_range(0.5..3.0);
        let s: f64 = r.random_range(0.5..3.0);
        let off = r.random_range(-0.4..0.4) * (p * s).sqrt();
        let b = [r.random_range(-2.0..2.0), r.random_range(-2.0..2.0)];
        let c = r.random_range(-1.0..1.0);
        let det = p * s - off * off;
        let center = [-(s * b[0] - off * b[1]) / (2.0 * det), -(p * b[1] - off * b[0]) / (2.0 * det)];
        let f = |u: f64, v: f64| (-(p * u * u + 2.0 * off * u * v + s * v * v + b[0] * u + b[1] * v + c)).exp();
        let half = 14.0;
        let m = 700;
        let h = 2.0 * half / m as f64;
        let mut total = 0.0;
        for i in 0..=m {
            let wi = if i == 0 || i == m { 0.5 } else { 1.0 };
            let u = center[0] - half + i as f64 * h;
            for j in 0..=m {
                let wj = if j == 0 || j == m { 0.5 } else { 1.0 };
                let v = center[1] - half + j as f64 * h;
                total += wi * wj * f(u, v);
            }
        }
        let numeric = (total * h * h).ln();
        let a = Matrix::from_row_slice(2, 2, &[p, off, off, s]);
        let closed = gaussian_quadratic_integral(&a, &Vector::from_row_slice(&b), c).unwrap();
        assert!((numeric - closed).abs() <= 1e-7, "{numeric} vs {closed}");
    }
}

#[test]
fn two_step_hand_computation() {
    let stream = Stream::from_pairs(1, vec![(vec![1.0], 1.0), (vec![1.0], 1.0)]).unwrap();
    let (state, records) = run_ridge(&stream, 1.0, None).unwrap();
    // Step 1: γ = 0, q = 1, loss 1/2. Step 2: γ = 1/2, q = 1/2, loss (1/4)/(3/2) = 1/6.
    assert_eq!(records[0].gamma, 0.0);
    assert!((records[1].gamma - 0.5).abs() <= 1e-15);
    assert!((records[1].q - 0.5).abs() <= 1e-15);
    assert!((state.weighted_loss_acc() - 2.0 / 3.0).abs() <= 1e-12);
    // θ = 2/3 minimizes 2(1 − θ)² + θ².
    let fit = batch_ridge(&stream.inputs(), &stream.outcomes(), 1.0, 1).unwrap();
    assert!((fit.theta[0] - 2.0 / 3.0).abs() <= 1e-12);
    assert!((fit.min_value - 2.0 / 3.0).abs() <= 1e-12);
}

/// Minimizes `‖Y − Kc‖² + a·cᵀKc` through the normal equations
/// `(K² + aK)c = KY`, solved with a pseudo-inverse so singular `K` is fine.
fn rkhs_min_by_pseudo_inverse(gram: &Matrix, ys: &[f64], a: f64) -> f64 {
    let y = Vector::from_column_slice(ys);
    let system = gram * gram + gram * a;
    let rhs = gram * &y;
    let c = system.svd(true, true).solve(&rhs, 1e-13).unwrap();
    let fitted = gram * &c;
    (&y - &fitted).norm_squared() + a * c.dot(&fitted)
}

#[test]
fn rkhs_closed_form_matches_direct_minimization() {
    let mut r = rng(21);
    let specs = [
        KernelSpec::Linear,
        KernelSpec::Rbf { gamma: 0.5 },
        KernelSpec::Rbf { gamma: 2.0 },
        KernelSpec::Polynomial { degree: 2, offset: 1.0 },
        KernelSpec::Polynomial { degree: 3, offset: 0.5 },
    ];
    for spec in specs {
        for _ in 0..5 {
            let n = r.random_range(1..=4);
            let t = r.random_range(2..=40);
            let a = [0.1, 1.0, 10.0][r.random_range(0..3)];
            let stream = random_stream(&mut r, n, t, 1.0, 5.0);
            let closed = rkhs_min_value(&spec, &stream.inputs(), &stream.outcomes(), a).unwrap();
            let gram = gram_matrix(&spec, &stream.inputs()).unwrap();
            let direct = rkhs_min_by_pseudo_inverse(&gram, &stream.outcomes(), a);
            assert!(rel_err(closed, direct) <= 1e-6, "{spec}: {closed} vs {direct}");
        }
    }
}

#[test]
fn linear_kernel_minimum_is_the_primal_minimum() {
    let mut r = rng(22);
    for _ in 0..20 {
        let n = r.random_range(1..=8);
        let t = r.random_range(1..=100);
        let a = r.random_range(0.1..10.0);
        let stream = random_stream(&mut r, n, t, 1.0, 5.0);
        let dual = rkhs_min_value(&KernelSpec::Linear, &stream.inputs(), &stream.outcomes(), a).unwrap();
        let primal = batch_ridge(&stream.inputs(), &stream.outcomes(), a, n).unwrap().min_value;
        assert!(rel_err(dual, primal) <= 1e-9, "{dual} vs {primal}");
    }
}

/// Cumulative log loss of the Bayesian learner as minus the log of the prior
/// integral of the expert likelihoods, evaluated as a Gaussian integral.
fn log_loss_by_integral(stream: &Stream, a: f64, sigma: f64) -> f64 {
    let n = stream.dim();
    let t = stream.len() as f64;
    let s2 = sigma * sigma;
    let quad = gram_sum(stream, a) / (2.0 * s2);
    let xy = stream.samples().iter().fold(Vector::zeros(n), |acc, s| acc + &s.x * s.y);
    let lin = -xy / s2;
    let yy: f64 = stream.samples().iter().map(|s| s.y * s.y).sum();
    let c = yy / (2.0 * s2) + 0.5 * t * (2.0 * PI * s2).ln() - 0.5 * n as f64 * (a / (2.0 * PI * s2)).ln();
    -gaussian_quadratic_integral(&quad, &lin, c).unwrap()
}

#[test]
fn bayesian_log_loss_three_ways() {
    let mut r = rng(31);
    for _ in 0..30 {
        let n = r.random_range(1..=10);
        let t = r.random_range(1..=300);
        let a = [0.1, 1.0, 10.0][r.random_range(0..3)];
        let sigma = [0.5, 1.0, 2.0][r.random_range(0..3)];
        let stream = random_stream(&mut r, n, t, 1.0, 10.0);
        let stepwise = brr_stepwise_log_loss(&stream, a, sigma).unwrap();
        let integral = log_loss_by_integral(&stream, a, sigma);
        let report = verify_thm2(&stream, a, sigma).unwrap();
        assert!(rel_err(stepwise, integral) <= 1e-7, "{stepwise} vs {integral}");
        assert!(rel_err(report.lhs, integral) <= 1e-7);
        assert!(report.pass, "{report:?}");
    }
}

#[test]
fn ridge_gap_ignores_sigma() {
    let mut r = rng(32);
    let stream = random_stream(&mut r, 5, 200, 1.0, 10.0);
    let (_, records) = run_ridge(&stream, 1.0, None).unwrap();
    let weighted: f64 = records.iter().map(|rec| rec.weighted_sq_loss).sum();
    for sigma in [0.1, 1.0, 10.0] {
        let total = brr_cumulative_log_loss(&records, sigma).unwrap();
        let log_dets: f64 = records.iter().map(|rec| rec.q.ln_1p()).sum();
        let recovered = 2.0 * sigma * sigma * (total - 0.5 * stream.len() as f64 * (2.0 * PI * sigma * sigma).ln() - 0.5 * log_dets);
        assert!(rel_err(recovered, weighted) <= 1e-9);
    }
}

#[test]
fn finite_mixture_matches_hand_summed_expert_losses() {
    let mut r = rng(41);
    for _ in 0..20 {
        let n = r.random_range(1..=3);
        let k = r.random_range(1..=8);
        let t = r.random_range(1..=300);
        let stream = random_stream(&mut r, n, t, 1.0, 4.0);
        let experts: Vec<(Vector, f64)> = (0..k).map(|_| (random_vector(&mut r, n, 2.0), r.random_range(0.3..2.0))).collect();
        let set = experts.iter().map(|(th, s)| GaussianExpert::new(th.clone(), *s).unwrap()).collect();
        let mut ba = FiniteBaState::uniform(set).unwrap();
        for s in stream.samples() {
            let preds = ba.expert_predictions(&s.x).unwrap();
            ba.step(&preds, s.y).unwrap();
        }
        let losses: Vec<f64> = experts
            .iter()
            .map(|(th, sig)| {
                stream
                    .samples()
                    .iter()
                    .map(|s| {
                        let r = s.y - th.dot(&s.x);
                        0.5 * (2.0 * PI * sig * sig).ln() + r * r / (2.0 * sig * sig)
                    })
                    .sum()
            })
            .collect();
        let m = losses.iter().copied().fold(f64::INFINITY, f64::min);
        let mix = losses.iter().map(|l| (m - l).exp() / k as f64).sum::<f64>();
        let oracle = m - mix.ln();
        assert!((ba.cum_loss() - oracle).abs() <= 1e-9, "{} vs {oracle}", ba.cum_loss());
    }
}

#[test]
fn noiseless_stream_shrinks_towards_the_true_weights() {
    let theta_star = vec![1.5, -0.5, 2.0];
    let spec = SyntheticSpec {
        n: 3,
        steps: 300,
        theta_star: ThetaStar::Fixed(theta_star.clone()),
        noise_sigma: 0.0,
        x_dist: InputDistribution::UniformCube { bound: 1.0 },
        adversarial: None,
    };
    let (stream, meta) = generate_synthetic(&spec, 5).unwrap();
    assert_eq!(meta.theta_star, theta_star);
    let a = 2.0;
    let (state, _) = run_ridge(&stream, a, None).unwrap();
    let theta = state.a_inv() * state.b();
    let gram = gram_sum(&stream, a);
    let xtx = &gram - Matrix::identity(3, 3) * a;
    let expected = gram.lu().solve(&(xtx * Vector::from_vec(theta_star))).unwrap();
    assert!((theta - expected).amax() <= 1e-9);
}

#[test]
fn determinant_bound_is_tight_on_a_single_axis_step() {
    let stream = Stream::from_pairs(1, vec![(vec![1.0], 0.0)]).unwrap();
    let report = verify_det_bound(&stream, 1.0, Some(1.0)).unwrap();
    assert!((report.lhs - 2f64.ln()).abs() <= 1e-15);
    assert!((report.rhs - 2f64.ln()).abs() <= 1e-15);
    assert!(report.pass);
}

#[test]
fn precomputed_kernel_stream_gives_the_same_reports() {
    let mut r = rng(51);
    let stream = random_stream(&mut r, 3, 60, 1.0, 2.0);
    let spec = KernelSpec::Rbf { gamma: 0.7 };
    let pre = PrecomputedStream::from_inputs(&spec, &stream.inputs(), &stream.outcomes()).unwrap();
    let from_inputs = verify_thm3(KernelSource::Inputs { spec: &spec, stream: &stream }, 0.5).unwrap();
    let from_rows = verify_thm3(KernelSource::Precomputed(&pre), 0.5).unwrap();
    assert!(from_inputs.pass && from_rows.pass);
    assert!(rel_err(from_inputs.lhs, from_rows.lhs) <= 1e-12);
    assert!(rel_err(from_inputs.rhs, from_rows.rhs) <= 1e-12);
}

#[test]
fn predictions_survive_a_csv_round_trip() {
    let mut r = rng(61);
    let stream = random_stream(&mut r, 4, 80, 1.0, 3.0);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("stream.csv");
    online_ridge::data::save_csv(&stream, &path).unwrap();
    let back = online_ridge::data::load_csv(&path).unwrap();
    assert_eq!(back, stream);
    let mut first = RidgeState::new(0.3, 4).unwrap();
    let mut second = RidgeState::new(0.3, 4).unwrap();
    for (s, t) in stream.samples().iter().zip(back.samples()) {
        let p = first.update(&s.x, s.y).unwrap();
        let q = second.update(&t.x, t.y).unwrap();
        assert_eq!(p.gamma.to_bits(), q.gamma.to_bits());
    }
}
