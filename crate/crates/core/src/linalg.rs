//! Dense linear-algebra primitives shared by the learners and the verifier.
//!
//! The online learners only ever touch [`sherman_morrison_update`]. Everything
//! else here (batch solves, dense determinants) goes through a Cholesky
//! factorization so that the batch side of every identity is computed along a
//! different path from the online side.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{check_dim, check_finite, check_positive, Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Replaces `m` by `(m + mᵀ) / 2`.
pub fn symmetrize(m: &mut Matrix) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

fn check_all_finite(name: &str, values: &[f64]) -> Result<()> {
    match values.iter().find(|v| !v.is_finite()) {
        Some(v) => Err(Error::Numeric(format!("{name} has a non-finite entry ({v})"))),
        None => Ok(()),
    }
}

/// Rank-one update of an inverse in place: `a_inv ← (a_inv⁻¹ + x xᵀ)⁻¹`.
///
/// Returns `q = xᵀ a_inv x`, evaluated with the matrix as it was before the
/// update.
pub fn sherman_morrison_in_place(a_inv: &mut Matrix, x: &Vector) -> Result<f64> {
    check_dim(a_inv.nrows(), x.len())?;
    check_all_finite("x", x.as_slice())?;
    let u = &*a_inv * x;
    let q = x.dot(&u);
    if !q.is_finite() {
        return Err(Error::Numeric(format!("quadratic form is not finite ({q})")));
    }
    if q < 0.0 {
        return Err(Error::Numeric(format!(
            "quadratic form xᵀA⁻¹x = {q} < 0; inverse is not positive definite"
        )));
    }
    if q == 0.0 {
        // x = 0 (or lies in a numerically null direction): nothing to add.
        return Ok(0.0);
    }
    a_inv.ger(-1.0 / (1.0 + q), &u, &u, 1.0);
    symmetrize(a_inv);
    Ok(q)
}

/// Returns `((a_inv⁻¹ + x xᵀ)⁻¹, xᵀ a_inv x)` without touching the input.
pub fn sherman_morrison_update(a_inv: &Matrix, x: &Vector) -> Result<(Matrix, f64)> {
    let mut updated = a_inv.clone();
    let q = sherman_morrison_in_place(&mut updated, x)?;
    Ok((updated, q))
}

fn cholesky(m: Matrix, what: &str) -> Result<Cholesky<f64, Dyn>> {
    check_all_finite(what, m.as_slice())?;
    Cholesky::new(m).ok_or_else(|| Error::Numeric(format!("{what} is not positive definite")))
}

/// `ln det m` for a symmetric positive definite matrix.
pub fn log_det_spd(m: &Matrix) -> Result<f64> {
    let chol = cholesky(m.clone(), "matrix")?;
    let l = chol.l_dirty();
    Ok(2.0 * (0..m.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>())
}

/// Solves `m z = rhs` for symmetric positive definite `m`.
pub fn solve_spd(m: &Matrix, rhs: &Vector) -> Result<Vector> {
    check_dim(m.nrows(), rhs.len())?;
    Ok(cholesky(m.clone(), "matrix")?.solve(rhs))
}

/// Inverse of a symmetric positive definite matrix, via Cholesky.
pub fn inverse_spd(m: &Matrix) -> Result<Matrix> {
    let mut inv = cholesky(m.clone(), "matrix")?.inverse();
    symmetrize(&mut inv);
    Ok(inv)
}

/// Minimizer and minimum of the regularized batch least-squares objective
/// `Σ (yₜ − θᵀxₜ)² + a‖θ‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchRidge {
    pub theta: Vector,
    pub min_value: f64,
}

/// `aI + Σ xₜxₜᵀ` accumulated densely.
pub fn regularized_gram(xs: &[Vector], a: f64, dim: usize) -> Result<Matrix> {
    let mut m = Matrix::identity(dim, dim) * a;
    for x in xs {
        check_dim(dim, x.len())?;
        m.ger(1.0, x, x, 1.0);
    }
    Ok(m)
}

pub fn batch_ridge(xs: &[Vector], ys: &[f64], a: f64, dim: usize) -> Result<BatchRidge> {
    check_positive("a", a)?;
    if dim == 0 {
        return Err(Error::Param("dimension must be at least 1".into()));
    }
    check_dim(xs.len(), ys.len())?;
    check_all_finite("y", ys)?;
    let gram = regularized_gram(xs, a, dim)?;
    let mut rhs = Vector::zeros(dim);
    for (x, &y) in xs.iter().zip(ys) {
        rhs.axpy(y, x, 1.0);
    }
    let theta = cholesky(gram, "aI + XᵀX")?.solve(&rhs);
    let residual: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, &y)| {
            let r = y - theta.dot(x);
            r * r
        })
        .sum();
    let min_value = residual + a * theta.norm_squared();
    Ok(BatchRidge { theta, min_value })
}

/// `ln ∫ exp(−(θᵀAθ + bᵀθ + c)) dθ` over ℝⁿ, for symmetric positive definite `A`.
///
/// Closed form: `−W₀ + (n/2) ln π − ½ ln det A` with `W₀ = c − bᵀA⁻¹b / 4`.
pub fn gaussian_quadratic_integral(a: &Matrix, b: &Vector, c: f64) -> Result<f64> {
    check_dim(a.nrows(), a.ncols())?;
    check_dim(a.nrows(), b.len())?;
    check_finite("c", c)?;
    let n = a.nrows() as f64;
    let chol = cholesky(a.clone(), "quadratic form")?;
    let l = chol.l_dirty();
    let log_det = 2.0 * (0..a.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>();
    let w0 = c - b.dot(&chol.solve(b)) / 4.0;
    Ok(-w0 + 0.5 * n * std::f64::consts::PI.ln() - 0.5 * log_det)
}

/// `Σ ln(1 + qₜ)`: the log-determinant assembled from per-step quadratic forms.
pub fn log_det_from_products(qs: &[f64]) -> Result<f64> {
    let mut acc = 0.0;
    for &q in qs {
        if !q.is_finite() || q < 0.0 {
            return Err(Error::Numeric(format!(
                "per-step quadratic form must be finite and ≥ 0, got {q}"
            )));
        }
        acc += q.ln_1p();
    }
    Ok(acc)
}

/// `ln det(I + (1/a) Σ xₜxₜᵀ)` by dense factorization.
pub fn dense_log_det_inputs(xs: &[Vector], a: f64, dim: usize) -> Result<f64> {
    check_positive("a", a)?;
    let mut m = Matrix::identity(dim, dim);
    for x in xs {
        check_dim(dim, x.len())?;
        m.ger(1.0 / a, x, x, 1.0);
    }
    log_det_spd(&m)
}

/// `ln det(I + K/a)` by dense factorization.
pub fn dense_log_det_gram(gram: &Matrix, a: f64) -> Result<f64> {
    check_positive("a", a)?;
    let t = gram.nrows();
    if t == 0 {
        return Ok(0.0);
    }
    let m = Matrix::identity(t, t) + gram / a;
    log_det_spd(&m)
}
