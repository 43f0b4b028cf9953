#![allow(dead_code)]

use online_ridge::linalg::{Matrix, Vector};
use online_ridge::Stream;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random stream with inputs in `[-x_bound, x_bound]^n` and outcomes in
/// `[-y_bound, y_bound]`.
pub fn random_stream(rng: &mut ChaCha8Rng, n: usize, t: usize, x_bound: f64, y_bound: f64) -> Stream {
    let pairs: Vec<(Vec<f64>, f64)> = (0..t)
        .map(|_| {
            let x = (0..n).map(|_| rng.random_range(-x_bound..=x_bound)).collect();
            (x, rng.random_range(-y_bound..=y_bound))
        })
        .collect();
    Stream::from_pairs(n, pairs).unwrap()
}

/// Inputs drawn inside the Euclidean ball of radius `z`.
pub fn ball_stream(rng: &mut ChaCha8Rng, n: usize, t: usize, z: f64, y_bound: f64) -> Stream {
    let pairs: Vec<(Vec<f64>, f64)> = (0..t)
        .map(|_| {
            let mut x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let scale = if norm > 0.0 { z * rng.random_range(0.0..=1.0) / norm } else { 0.0 };
            x.iter_mut().for_each(|v| *v *= scale);
            (x, rng.random_range(-y_bound..=y_bound))
        })
        .collect();
    Stream::from_pairs(n, pairs).unwrap()
}

/// Stream whose outcomes mostly follow a linear rule, so the batch minimum is
/// small and the equalities are tested away from the trivial regime.
pub fn linear_stream(rng: &mut ChaCha8Rng, n: usize, t: usize, noise: f64, y_bound: f64) -> Stream {
    let theta: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let pairs: Vec<(Vec<f64>, f64)> = (0..t)
        .map(|_| {
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
            let clean: f64 = x.iter().zip(&theta).map(|(a, b)| a * b).sum();
            let y = (clean + noise * rng.random_range(-1.0..=1.0)).clamp(-y_bound, y_bound);
            (x, y)
        })
        .collect();
    Stream::from_pairs(n, pairs).unwrap()
}

pub fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    let m = Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..=1.0));
    &m * m.transpose() + Matrix::identity(n, n) * 0.5
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize, bound: f64) -> Vector {
    Vector::from_fn(n, |_, _| rng.random_range(-bound..=bound))
}

/// Ridge objective `Σ(y − θ'x)² + a‖θ‖²` evaluated term by term.
pub fn ridge_objective(stream: &Stream, a: f64, theta: &Vector) -> f64 {
    let residual: f64 = stream
        .samples()
        .iter()
        .map(|s| {
            let r = s.y - theta.dot(&s.x);
            r * r
        })
        .sum();
    residual + a * theta.norm_squared()
}

/// `ln det` through an LU decomposition, kept apart from the Cholesky path
/// used by the library.
pub fn log_det_lu(m: &Matrix) -> f64 {
    m.clone().lu().determinant().ln()
}

/// `(aI + ΣxxT)` built by explicit summation.
pub fn gram_sum(stream: &Stream, a: f64) -> Matrix {
    let n = stream.dim();
    let mut m = Matrix::identity(n, n) * a;
    for s in stream.samples() {
        m += &s.x * s.x.transpose();
    }
    m
}

pub fn rel_err(lhs: f64, rhs: f64) -> f64 {
    (lhs - rhs).abs() / rhs.abs().max(1.0)
}
