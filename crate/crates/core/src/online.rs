//! Online Ridge Regression with an incrementally maintained inverse, its
//! clipped variant, and the VAW comparison predictor.

use crate::error::{check_dim, check_finite, check_positive, Error, Result};
use crate::linalg::{sherman_morrison_in_place, sherman_morrison_update, Matrix, Vector};

/// What happened on one step of an online run. Produced only by an update,
/// so the prediction it records was always made before the outcome was seen.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub x: Vector,
    pub y: f64,
    /// Raw prediction of the learner.
    pub gamma: f64,
    pub gamma_clipped: Option<f64>,
    /// `xᵀA⁻¹x` for the linear learner, the kernel analogue `d` otherwise.
    pub q: f64,
    pub denom: f64,
    pub sq_loss: f64,
    pub weighted_sq_loss: f64,
}

impl StepRecord {
    pub(crate) fn new(x: Vector, y: f64, gamma: f64, gamma_clipped: Option<f64>, q: f64) -> Self {
        let denom = 1.0 + q;
        let r = y - gamma;
        let sq_loss = r * r;
        StepRecord {
            x,
            y,
            gamma,
            gamma_clipped,
            q,
            denom,
            sq_loss,
            weighted_sq_loss: sq_loss / denom,
        }
    }

    /// Square loss of the clipped prediction, or of the raw one if no clipping
    /// was configured.
    pub fn clipped_sq_loss(&self) -> f64 {
        let r = self.y - self.gamma_clipped.unwrap_or(self.gamma);
        r * r
    }
}

/// Truncates a prediction to `[-bound_y, bound_y]`.
pub fn clip(gamma: f64, bound_y: f64) -> Result<f64> {
    check_positive("clip bound", bound_y)?;
    Ok(gamma.clamp(-bound_y, bound_y))
}

/// State of online Ridge Regression after `t` steps.
///
/// Holds `A_t⁻¹ = (aI + Σ xxᵀ)⁻¹` and `b_t = Σ y x`, plus running sums of the
/// quantities that appear in the loss identities.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeState {
    a: f64,
    a_inv: Matrix,
    b: Vector,
    t: usize,
    clip: Option<f64>,
    log_det_acc: f64,
    weighted_loss_acc: f64,
    plain_loss_acc: f64,
    clipped_loss_acc: f64,
}

impl RidgeState {
    pub fn new(a: f64, dim: usize) -> Result<Self> {
        check_positive("a", a)?;
        if dim == 0 {
            return Err(Error::Param("dimension must be at least 1".into()));
        }
        Ok(RidgeState {
            a,
            a_inv: Matrix::identity(dim, dim) / a,
            b: Vector::zeros(dim),
            t: 0,
            clip: None,
            log_det_acc: 0.0,
            weighted_loss_acc: 0.0,
            plain_loss_acc: 0.0,
            clipped_loss_acc: 0.0,
        })
    }

    /// Reports predictions clipped to `[-bound_y, bound_y]` alongside the raw
    /// ones. The learner itself is unaffected.
    pub fn with_clip(mut self, bound_y: f64) -> Result<Self> {
        check_positive("clip bound", bound_y)?;
        self.clip = Some(bound_y);
        Ok(self)
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn steps(&self) -> usize {
        self.t
    }

    pub fn clip_bound(&self) -> Option<f64> {
        self.clip
    }

    pub fn a_inv(&self) -> &Matrix {
        &self.a_inv
    }

    pub fn b(&self) -> &Vector {
        &self.b
    }

    /// `Σ ln(1 + qₜ)`.
    pub fn log_det_acc(&self) -> f64 {
        self.log_det_acc
    }

    /// `Σ (yₜ − γₜ)² / (1 + qₜ)`.
    pub fn weighted_loss_acc(&self) -> f64 {
        self.weighted_loss_acc
    }

    /// `Σ (yₜ − γₜ)²`.
    pub fn plain_loss_acc(&self) -> f64 {
        self.plain_loss_acc
    }

    /// `Σ (yₜ − γₜᶜ)²`, equal to the plain loss when no clip is configured.
    pub fn clipped_loss_acc(&self) -> f64 {
        self.clipped_loss_acc
    }

    /// Returns `(γ, q)` with `γ = bᵀA⁻¹x` and `q = xᵀA⁻¹x`.
    pub fn predict(&self, x: &Vector) -> Result<(f64, f64)> {
        check_dim(self.dim(), x.len())?;
        let u = &self.a_inv * x;
        let gamma = self.b.dot(&u);
        let q = x.dot(&u);
        check_finite("prediction", gamma)?;
        Ok((gamma, q.max(0.0)))
    }

    /// The VAW prediction `bᵀ(A + xxᵀ)⁻¹x`. The state is not modified.
    pub fn vaw_predict(&self, x: &Vector) -> Result<f64> {
        let (next_inv, _) = sherman_morrison_update(&self.a_inv, x)?;
        Ok(self.b.dot(&(next_inv * x)))
    }

    /// Predicts for `x`, then absorbs the outcome `y`.
    pub fn update(&mut self, x: &Vector, y: f64) -> Result<StepRecord> {
        check_finite("outcome", y)?;
        let (gamma, q) = self.predict(x)?;
        let gamma_clipped = self.clip.map(|bound| gamma.clamp(-bound, bound));
        sherman_morrison_in_place(&mut self.a_inv, x)?;
        self.b.axpy(y, x, 1.0);
        self.t += 1;

        let record = StepRecord::new(x.clone(), y, gamma, gamma_clipped, q);
        self.log_det_acc += q.ln_1p();
        self.weighted_loss_acc += record.weighted_sq_loss;
        self.plain_loss_acc += record.sq_loss;
        self.clipped_loss_acc += record.clipped_sq_loss();
        Ok(record)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn new_state() {
        let s = RidgeState::new(1.0, 1).unwrap();
        assert_eq!(s.a_inv()[(0, 0)], 1.0);
        assert_eq!(s.b()[0], 0.0);
        let s = RidgeState::new(2.0, 3).unwrap();
        assert_eq!(s.a_inv(), &(Matrix::identity(3, 3) * 0.5));
        assert!(matches!(RidgeState::new(0.0, 1), Err(Error::Param(_))));
        assert!(matches!(RidgeState::new(1.0, 0), Err(Error::Param(_))));
    }

    #[test]
    fn predict_cases() {
        let mut s = RidgeState::new(1.0, 1).unwrap();
        assert_eq!(s.predict(&dvector![1.0]).unwrap(), (0.0, 1.0));
        s.update(&dvector![1.0], 1.0).unwrap();
        let (g, q) = s.predict(&dvector![1.0]).unwrap();
        assert!((g - 0.5).abs() < 1e-15 && (q - 0.5).abs() < 1e-15);
        assert_eq!(s.predict(&dvector![0.0]).unwrap(), (0.0, 0.0));
        assert!(matches!(
            s.predict(&dvector![1.0, 2.0]),
            Err(Error::Dimension { expected: 1, found: 2 })
        ));
    }

    #[test]
    fn update_two_step_unit_stream() {
        let mut s = RidgeState::new(1.0, 1).unwrap();
        let r1 = s.update(&dvector![1.0], 1.0).unwrap();
        assert_eq!((r1.gamma, r1.q), (0.0, 1.0));
        assert!((r1.weighted_sq_loss - 0.5).abs() < 1e-15);
        let r2 = s.update(&dvector![1.0], 1.0).unwrap();
        assert!((r2.gamma - 0.5).abs() < 1e-15);
        assert!((r2.q - 0.5).abs() < 1e-15);
        assert!((r2.weighted_sq_loss - 1.0 / 6.0).abs() < 1e-15);
        assert!((s.weighted_loss_acc() - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.log_det_acc() - 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn zero_input_leaves_inverse() {
        let mut s = RidgeState::new(1.0, 2).unwrap();
        s.update(&dvector![0.3, -1.0], 2.0).unwrap();
        let before = s.a_inv().clone();
        let r = s.update(&dvector![0.0, 0.0], 5.0).unwrap();
        assert_eq!((r.gamma, r.q, r.denom), (0.0, 0.0, 1.0));
        assert_eq!(r.weighted_sq_loss, 25.0);
        assert_eq!(s.a_inv(), &before);
    }

    #[test]
    fn clip_cases() {
        assert_eq!(clip(3.2, 1.0).unwrap(), 1.0);
        assert_eq!(clip(-0.5, 1.0).unwrap(), -0.5);
        assert_eq!(clip(-7.0, 2.0).unwrap(), -2.0);
        assert!(matches!(clip(1.0, 0.0), Err(Error::Param(_))));
    }

    #[test]
    fn clipping_does_not_touch_learner() {
        let xs = [dvector![1.0], dvector![2.0], dvector![-1.5]];
        let ys = [3.0, 3.0, -3.0];
        let mut plain = RidgeState::new(0.5, 1).unwrap();
        let mut clipped = RidgeState::new(0.5, 1).unwrap().with_clip(1.0).unwrap();
        for (x, &y) in xs.iter().zip(&ys) {
            let a = plain.update(x, y).unwrap();
            let b = clipped.update(x, y).unwrap();
            assert_eq!(a.gamma, b.gamma);
            assert_eq!(b.gamma_clipped, Some(b.gamma.clamp(-1.0, 1.0)));
        }
        assert_eq!(plain.a_inv(), clipped.a_inv());
        assert_eq!(plain.weighted_loss_acc(), clipped.weighted_loss_acc());
    }

    #[test]
    fn vaw_cases() {
        let mut s = RidgeState::new(1.0, 1).unwrap();
        assert_eq!(s.vaw_predict(&dvector![3.0]).unwrap(), 0.0);
        s.update(&dvector![1.0], 1.0).unwrap();
        let before = s.clone();
        assert!((s.vaw_predict(&dvector![1.0]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.vaw_predict(&dvector![0.0]).unwrap(), 0.0);
        assert_eq!(s, before);
    }

    #[test]
    fn rejects_non_finite_outcome() {
        let mut s = RidgeState::new(1.0, 1).unwrap();
        assert!(matches!(s.update(&dvector![1.0], f64::NAN), Err(Error::Numeric(_))));
        assert_eq!(s.steps(), 0);
    }
}
