//! Bayesian Ridge Regression predictive densities and the Bayesian Algorithm
//! over a finite set of Gaussian experts.
//!
//! The finite-expert algorithm exists to check the mixture loss identity
//! directly: the learner's cumulative log loss equals minus the log of the
//! prior average of `exp(-expert loss)`. Every weight and mixture computation is
//! done in log space since `exp(-L)` underflows after a few hundred steps.

use std::f64::consts::PI;

use crate::error::{check_dim, check_finite, check_positive, Error, Result};
use crate::linalg::Vector;
use crate::online::{RidgeState, StepRecord};

/// A Gaussian density on outcomes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictiveGaussian {
    mean: f64,
    variance: f64,
}

impl PredictiveGaussian {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        check_finite("mean", mean)?;
        check_positive("variance", variance)?;
        Ok(PredictiveGaussian { mean, variance })
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn log_density(&self, y: f64) -> f64 {
        -gaussian_log_loss(self, y)
    }
}

/// `−ln p(y) = ½ ln(2π var) + (y − mean)² / (2 var)`.
pub fn gaussian_log_loss(p: &PredictiveGaussian, y: f64) -> f64 {
    let r = y - p.mean;
    0.5 * (2.0 * PI * p.variance).ln() + r * r / (2.0 * p.variance)
}

/// Predictive density of Bayesian Ridge Regression: `N(γ, σ²(1 + q))`.
///
/// The mean is exactly the Ridge Regression prediction.
pub fn brr_predict(state: &RidgeState, x: &Vector, sigma: f64) -> Result<PredictiveGaussian> {
    check_positive("sigma", sigma)?;
    let (gamma, q) = state.predict(x)?;
    let s2 = sigma * sigma;
    PredictiveGaussian::new(gamma, s2 * q + s2)
}

/// Cumulative log loss of Bayesian Ridge Regression assembled from a Ridge
/// run's records:
/// `½ ln((2πσ²)ᵀ Π(1 + qₜ)) + (1/(2σ²)) Σ (yₜ − γₜ)² / (1 + qₜ)`.
pub fn brr_cumulative_log_loss(records: &[StepRecord], sigma: f64) -> Result<f64> {
    check_positive("sigma", sigma)?;
    let s2 = sigma * sigma;
    let t = records.len() as f64;
    let log_det: f64 = records.iter().map(|r| r.q.ln_1p()).sum();
    let weighted: f64 = records.iter().map(|r| r.weighted_sq_loss).sum();
    Ok(0.5 * (t * (2.0 * PI * s2).ln() + log_det) + weighted / (2.0 * s2))
}

/// Numerically stable `ln Σ exp(vᵢ)`; `-∞` for an empty slice.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// An expert predicting `N(θᵀx, σ²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianExpert {
    theta: Vector,
    sigma: f64,
}

impl GaussianExpert {
    pub fn new(theta: Vector, sigma: f64) -> Result<Self> {
        check_positive("sigma", sigma)?;
        Ok(GaussianExpert { theta, sigma })
    }

    pub fn theta(&self) -> &Vector {
        &self.theta
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn predict(&self, x: &Vector) -> Result<PredictiveGaussian> {
        check_dim(self.theta.len(), x.len())?;
        PredictiveGaussian::new(self.theta.dot(x), self.sigma * self.sigma)
    }
}

/// The Bayesian Algorithm over finitely many experts.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteBaState {
    experts: Vec<GaussianExpert>,
    log_prior: Vec<f64>,
    /// `ln P₀(i) − L_t(i)`, unnormalized.
    log_weights: Vec<f64>,
    expert_losses: Vec<f64>,
    cum_loss: f64,
    steps: usize,
}

impl FiniteBaState {
    /// Uniform prior over `experts`.
    pub fn uniform(experts: Vec<GaussianExpert>) -> Result<Self> {
        let n = experts.len();
        Self::with_prior(experts, vec![1.0; n])
    }

    /// Prior proportional to `masses`, which must be positive.
    pub fn with_prior(experts: Vec<GaussianExpert>, masses: Vec<f64>) -> Result<Self> {
        if experts.is_empty() {
            return Err(Error::Param("at least one expert is required".into()));
        }
        check_dim(experts.len(), masses.len())?;
        for &m in &masses {
            check_positive("prior mass", m)?;
        }
        let log_total = log_sum_exp(&masses.iter().map(|m| m.ln()).collect::<Vec<_>>());
        let log_prior: Vec<f64> = masses.iter().map(|m| m.ln() - log_total).collect();
        Ok(FiniteBaState {
            log_weights: log_prior.clone(),
            expert_losses: vec![0.0; experts.len()],
            experts,
            log_prior,
            cum_loss: 0.0,
            steps: 0,
        })
    }

    pub fn experts(&self) -> &[GaussianExpert] {
        &self.experts
    }

    pub fn cum_loss(&self) -> f64 {
        self.cum_loss
    }

    pub fn expert_losses(&self) -> &[f64] {
        &self.expert_losses
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Each expert's predictive density for `x`.
    pub fn expert_predictions(&self, x: &Vector) -> Result<Vec<PredictiveGaussian>> {
        self.experts.iter().map(|e| e.predict(x)).collect()
    }

    /// Log density at `y` of the learner's prediction: the posterior mixture of
    /// the expert densities.
    pub fn mixture_log_density(&self, preds: &[PredictiveGaussian], y: f64) -> Result<f64> {
        check_dim(self.experts.len(), preds.len())?;
        let log_norm = log_sum_exp(&self.log_weights);
        let terms: Vec<f64> = self
            .log_weights
            .iter()
            .zip(preds)
            .map(|(w, p)| w - log_norm + p.log_density(y))
            .collect();
        Ok(log_sum_exp(&terms))
    }

    /// One round: incurs the mixture's log loss on `y`, then reweights each
    /// expert by its own density at `y`. Returns the learner's loss increment.
    pub fn step(&mut self, preds: &[PredictiveGaussian], y: f64) -> Result<f64> {
        check_finite("outcome", y)?;
        let loss = -self.mixture_log_density(preds, y)?;
        check_finite("learner loss", loss)?;
        for ((w, l), p) in self
            .log_weights
            .iter_mut()
            .zip(self.expert_losses.iter_mut())
            .zip(preds)
        {
            let expert_loss = gaussian_log_loss(p, y);
            *w -= expert_loss;
            *l += expert_loss;
        }
        self.cum_loss += loss;
        self.steps += 1;
        Ok(loss)
    }

    /// `(L_T, −ln Σᵢ P₀(i) e^{−L_T(i)})`. The right side is rebuilt from the
    /// prior and the experts' cumulative losses, not from the running weights.
    pub fn loss_identity(&self) -> (f64, f64) {
        let terms: Vec<f64> = self
            .log_prior
            .iter()
            .zip(&self.expert_losses)
            .map(|(p, l)| p - l)
            .collect();
        (self.cum_loss, -log_sum_exp(&terms))
    }
}
