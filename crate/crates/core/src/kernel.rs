//! Kernelized Ridge Regression and kernelized Bayesian Ridge Regression.
//!
//! The learner works entirely in the dual: it keeps the Gram matrix `K_t` of the
//! inputs seen so far and `(aI + K_t)⁻¹`, grown by one row and column per step
//! through the Schur complement `s = a + k(x,x) − kᵀ(aI + K)⁻¹k`. The same
//! scalar drives the prediction denominator, since `1 + d = s / a`.
//!
//! [`GramState`] only needs kernel values, so it also serves streams where the
//! kernel has been evaluated elsewhere. [`KernelModel`] wraps it with a
//! [`KernelSpec`] over real vectors.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bayes::PredictiveGaussian;
use crate::error::{check_dim, check_finite, check_positive, Error, Result};
use crate::linalg::{inverse_spd, solve_spd, symmetrize, Matrix, Vector};
use crate::online::StepRecord;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    Linear,
    Rbf { gamma: f64 },
    Polynomial { degree: u32, offset: f64 },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Linear => Ok(()),
            KernelSpec::Rbf { gamma } => check_positive("rbf gamma", gamma),
            KernelSpec::Polynomial { degree, offset } => {
                if degree < 1 {
                    return Err(Error::Param("polynomial degree must be ≥ 1".into()));
                }
                if !(offset.is_finite() && offset >= 0.0) {
                    return Err(Error::Param(format!(
                        "polynomial offset must be finite and ≥ 0, got {offset}"
                    )));
                }
                Ok(())
            }
        }
    }

    pub fn eval(&self, x: &Vector, z: &Vector) -> Result<f64> {
        check_dim(x.len(), z.len())?;
        let v = match *self {
            KernelSpec::Linear => x.dot(z),
            KernelSpec::Rbf { gamma } => (-gamma * (x - z).norm_squared()).exp(),
            KernelSpec::Polynomial { degree, offset } => (x.dot(z) + offset).powi(degree as i32),
        };
        check_finite("kernel value", v)?;
        Ok(v)
    }

    /// `c_F = sup_x √K(x,x)` when it is finite for every input, which among the
    /// built-in kernels holds only for rbf.
    pub fn bounded_diagonal(&self) -> Option<f64> {
        match self {
            KernelSpec::Rbf { .. } => Some(1.0),
            _ => None,
        }
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Linear => write!(f, "linear"),
            KernelSpec::Rbf { gamma } => write!(f, "rbf:gamma={gamma}"),
            KernelSpec::Polynomial { degree, offset } => {
                write!(f, "poly:degree={degree},offset={offset}")
            }
        }
    }
}

impl FromStr for KernelSpec {
    type Err = Error;

    /// Parses `linear`, `rbf:gamma=G`, or `poly:degree=D,offset=C`
    /// (`polynomial` also accepted; offset defaults to 0).
    fn from_str(s: &str) -> Result<Self> {
        let (kind, params) = match s.split_once(':') {
            Some((k, p)) => (k.trim(), p.trim()),
            None => (s.trim(), ""),
        };
        let mut gamma = None;
        let mut degree = None;
        let mut offset = None;
        for part in params.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("kernel parameter '{part}' is not key=value")))?;
            let bad = |_| Error::Config(format!("kernel parameter '{part}' has a bad value"));
            match key.trim() {
                "gamma" => gamma = Some(value.trim().parse::<f64>().map_err(bad)?),
                "offset" => offset = Some(value.trim().parse::<f64>().map_err(bad)?),
                "degree" => {
                    degree = Some(value.trim().parse::<u32>().map_err(|_| {
                        Error::Config(format!("kernel parameter '{part}' has a bad value"))
                    })?)
                }
                other => return Err(Error::Config(format!("unknown kernel parameter '{other}'"))),
            }
        }
        let spec = match kind {
            "linear" => KernelSpec::Linear,
            "rbf" => KernelSpec::Rbf {
                gamma: gamma.ok_or_else(|| Error::Config("rbf kernel needs gamma=".into()))?,
            },
            "poly" | "polynomial" => KernelSpec::Polynomial {
                degree: degree
                    .ok_or_else(|| Error::Config("polynomial kernel needs degree=".into()))?,
                offset: offset.unwrap_or(0.0),
            },
            other => return Err(Error::Config(format!("unknown kernel '{other}'"))),
        };
        spec.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(spec)
    }
}

/// Kernel matrix `K(xᵢ, xⱼ)` of `inputs`.
pub fn gram_matrix(spec: &KernelSpec, inputs: &[Vector]) -> Result<Matrix> {
    let t = inputs.len();
    let mut k = Matrix::zeros(t, t);
    for i in 0..t {
        for j in 0..=i {
            let v = spec.eval(&inputs[i], &inputs[j])?;
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(k)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KernelConfig {
    /// Recompute `(aI + K)⁻¹` from scratch every this many steps; 0 disables.
    pub refactor_every: usize,
    pub max_steps: usize,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            refactor_every: 256,
            max_steps: 100_000,
        }
    }
}

/// Slack allowed below zero for `d` before the kernel is declared invalid,
/// relative to the scale `max(1, k(x,x)/a)`.
const NEGATIVE_D_TOLERANCE: f64 = 1e-9;

/// Dual Ridge Regression state over raw kernel values.
#[derive(Debug, Clone, PartialEq)]
pub struct GramState {
    a: f64,
    config: KernelConfig,
    gram: Matrix,
    g_inv: Matrix,
    ys: Vector,
    clip: Option<f64>,
    log_det_acc: f64,
    weighted_loss_acc: f64,
    plain_loss_acc: f64,
    clipped_loss_acc: f64,
}

impl GramState {
    pub fn new(a: f64) -> Result<Self> {
        Self::with_config(a, KernelConfig::default())
    }

    pub fn with_config(a: f64, config: KernelConfig) -> Result<Self> {
        check_positive("a", a)?;
        Ok(GramState {
            a,
            config,
            gram: Matrix::zeros(0, 0),
            g_inv: Matrix::zeros(0, 0),
            ys: Vector::zeros(0),
            clip: None,
            log_det_acc: 0.0,
            weighted_loss_acc: 0.0,
            plain_loss_acc: 0.0,
            clipped_loss_acc: 0.0,
        })
    }

    pub fn with_clip(mut self, bound_y: f64) -> Result<Self> {
        check_positive("clip bound", bound_y)?;
        self.clip = Some(bound_y);
        Ok(self)
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn steps(&self) -> usize {
        self.ys.len()
    }

    pub fn gram(&self) -> &Matrix {
        &self.gram
    }

    /// Current `(aI + K)⁻¹`.
    pub fn g_inv(&self) -> &Matrix {
        &self.g_inv
    }

    pub fn outcomes(&self) -> &Vector {
        &self.ys
    }

    pub fn log_det_acc(&self) -> f64 {
        self.log_det_acc
    }

    pub fn weighted_loss_acc(&self) -> f64 {
        self.weighted_loss_acc
    }

    pub fn plain_loss_acc(&self) -> f64 {
        self.plain_loss_acc
    }

    pub fn clipped_loss_acc(&self) -> f64 {
        self.clipped_loss_acc
    }

    fn check_column(&self, k: &Vector, kxx: f64) -> Result<()> {
        check_dim(self.steps(), k.len())?;
        check_finite("k(x,x)", kxx)?;
        if let Some(v) = k.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("kernel value is not finite ({v})")));
        }
        Ok(())
    }

    /// `(γ, d, (aI+K)⁻¹k)` for a new input with kernel column `k` against the
    /// stored inputs and diagonal value `kxx`.
    fn predict_parts(&self, k: &Vector, kxx: f64) -> Result<(f64, f64, Vector)> {
        self.check_column(k, kxx)?;
        let u = &self.g_inv * k;
        let gamma = self.ys.dot(&u);
        let mut d = (kxx - k.dot(&u)) / self.a;
        if d < 0.0 {
            let scale = (kxx.abs() / self.a).max(1.0);
            if d < -NEGATIVE_D_TOLERANCE * scale {
                return Err(Error::Numeric(format!(
                    "negative posterior variance term d = {d}; kernel matrix is not PSD"
                )));
            }
            d = 0.0;
        }
        check_finite("prediction", gamma)?;
        Ok((gamma, d, u))
    }

    /// Returns `(γ, d)` with `γ = Yᵀ(aI+K)⁻¹k` and `d = (k(x,x) − kᵀ(aI+K)⁻¹k)/a`.
    pub fn predict(&self, k: &Vector, kxx: f64) -> Result<(f64, f64)> {
        let (gamma, d, _) = self.predict_parts(k, kxx)?;
        Ok((gamma, d))
    }

    /// Kernelized Bayesian Ridge Regression: `N(γ, σ²(1 + d))`.
    pub fn kbrr_predict(&self, k: &Vector, kxx: f64, sigma: f64) -> Result<PredictiveGaussian> {
        check_positive("sigma", sigma)?;
        let (gamma, d) = self.predict(k, kxx)?;
        let s2 = sigma * sigma;
        PredictiveGaussian::new(gamma, s2 * (1.0 + d))
    }

    /// Predicts, then absorbs `y` and grows `(aI+K)⁻¹` by one row and column.
    /// The returned record has an empty `x`.
    pub fn update(&mut self, k: &Vector, kxx: f64, y: f64) -> Result<StepRecord> {
        self.update_with_input(Vector::zeros(0), k, kxx, y)
    }

    pub(crate) fn update_with_input(
        &mut self,
        x: Vector,
        k: &Vector,
        kxx: f64,
        y: f64,
    ) -> Result<StepRecord> {
        check_finite("outcome", y)?;
        if self.steps() >= self.config.max_steps {
            return Err(Error::Param(format!(
                "kernel learner is limited to {} steps",
                self.config.max_steps
            )));
        }
        let (gamma, d, u) = self.predict_parts(k, kxx)?;
        let schur = self.a * (1.0 + d);
        if schur.is_nan() || schur <= 0.0 {
            return Err(Error::Numeric(format!("Schur complement {schur} is not positive")));
        }

        let t = self.steps();
        let mut g = Matrix::zeros(t + 1, t + 1);
        {
            let mut top = g.view_mut((0, 0), (t, t));
            top.copy_from(&self.g_inv);
            top.ger(1.0 / schur, &u, &u, 1.0);
        }
        for i in 0..t {
            g[(i, t)] = -u[i] / schur;
            g[(t, i)] = -u[i] / schur;
        }
        g[(t, t)] = 1.0 / schur;

        let mut gram = self.gram.clone().resize(t + 1, t + 1, 0.0);
        for i in 0..t {
            gram[(i, t)] = k[i];
            gram[(t, i)] = k[i];
        }
        gram[(t, t)] = kxx;

        self.gram = gram;
        self.g_inv = g;
        self.ys = self.ys.clone().push(y);

        let every = self.config.refactor_every;
        if every > 0 && self.steps().is_multiple_of(every) {
            self.refactor()?;
        } else {
            symmetrize(&mut self.g_inv);
        }

        let gamma_clipped = self.clip.map(|b| gamma.clamp(-b, b));
        let record = StepRecord::new(x, y, gamma, gamma_clipped, d);
        self.log_det_acc += d.ln_1p();
        self.weighted_loss_acc += record.weighted_sq_loss;
        self.plain_loss_acc += record.sq_loss;
        self.clipped_loss_acc += record.clipped_sq_loss();
        Ok(record)
    }

    /// Recomputes `(aI + K)⁻¹` from the stored Gram matrix.
    pub fn refactor(&mut self) -> Result<()> {
        let t = self.steps();
        if t == 0 {
            return Ok(());
        }
        let m = &self.gram + Matrix::identity(t, t) * self.a;
        self.g_inv = inverse_spd(&m)?;
        Ok(())
    }
}

/// Kernelized Ridge Regression over real-vector inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelModel {
    spec: KernelSpec,
    inputs: Vec<Vector>,
    dual: GramState,
}

impl KernelModel {
    pub fn new(spec: KernelSpec, a: f64) -> Result<Self> {
        Self::with_config(spec, a, KernelConfig::default())
    }

    pub fn with_config(spec: KernelSpec, a: f64, config: KernelConfig) -> Result<Self> {
        spec.validate()?;
        Ok(KernelModel {
            spec,
            inputs: Vec::new(),
            dual: GramState::with_config(a, config)?,
        })
    }

    pub fn with_clip(mut self, bound_y: f64) -> Result<Self> {
        self.dual = self.dual.with_clip(bound_y)?;
        Ok(self)
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn inputs(&self) -> &[Vector] {
        &self.inputs
    }

    pub fn dual(&self) -> &GramState {
        &self.dual
    }

    fn column(&self, x: &Vector) -> Result<(Vector, f64)> {
        if let Some(first) = self.inputs.first() {
            check_dim(first.len(), x.len())?;
        }
        let k = self
            .inputs
            .iter()
            .map(|xi| self.spec.eval(xi, x))
            .collect::<Result<Vec<_>>>()?;
        Ok((Vector::from_vec(k), self.spec.eval(x, x)?))
    }

    pub fn predict(&self, x: &Vector) -> Result<(f64, f64)> {
        let (k, kxx) = self.column(x)?;
        self.dual.predict(&k, kxx)
    }

    pub fn kbrr_predict(&self, x: &Vector, sigma: f64) -> Result<PredictiveGaussian> {
        let (k, kxx) = self.column(x)?;
        self.dual.kbrr_predict(&k, kxx, sigma)
    }

    pub fn update(&mut self, x: &Vector, y: f64) -> Result<StepRecord> {
        let (k, kxx) = self.column(x)?;
        let record = self.dual.update_with_input(x.clone(), &k, kxx, y)?;
        self.inputs.push(x.clone());
        Ok(record)
    }
}

/// One row of a stream whose kernel values were computed elsewhere: the kernel
/// column against all earlier inputs, the diagonal value, and the outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecomputedRow {
    pub k: Vector,
    pub kxx: f64,
    pub y: f64,
}

/// A stream over an arbitrary input set, described only by kernel values.
/// Row `t` (1-based) carries `t − 1` kernel values.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PrecomputedStream {
    rows: Vec<PrecomputedRow>,
}

impl PrecomputedStream {
    pub fn new(rows: Vec<PrecomputedRow>) -> Result<Self> {
        for (i, row) in rows.iter().enumerate() {
            check_dim(i, row.k.len()).map_err(|e| e.at_step(i + 1))?;
            let finite = row.kxx.is_finite() && row.y.is_finite() && row.k.iter().all(|v| v.is_finite());
            if !finite {
                return Err(Error::Numeric("non-finite kernel row".into()).at_step(i + 1));
            }
        }
        Ok(PrecomputedStream { rows })
    }

    pub fn rows(&self) -> &[PrecomputedRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn outcomes(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.y).collect()
    }

    /// The full symmetric kernel matrix `K_T` assembled from the rows.
    pub fn gram(&self) -> Matrix {
        let t = self.rows.len();
        let mut g = Matrix::zeros(t, t);
        for (j, row) in self.rows.iter().enumerate() {
            for (i, &v) in row.k.iter().enumerate() {
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
            g[(j, j)] = row.kxx;
        }
        g
    }

    /// Builds the rows for `inputs` under `spec`.
    pub fn from_inputs(spec: &KernelSpec, inputs: &[Vector], ys: &[f64]) -> Result<Self> {
        check_dim(inputs.len(), ys.len())?;
        let mut rows = Vec::with_capacity(inputs.len());
        for (t, (x, &y)) in inputs.iter().zip(ys).enumerate() {
            let k = inputs[..t]
                .iter()
                .map(|xi| spec.eval(xi, x))
                .collect::<Result<Vec<_>>>()?;
            rows.push(PrecomputedRow {
                k: Vector::from_vec(k),
                kxx: spec.eval(x, x)?,
                y,
            });
        }
        PrecomputedStream::new(rows)
    }
}

/// The representer-theorem minimizer `f = Σ cᵢ k_{xᵢ}` of
/// `Σ (yₜ − f(xₜ))² + a‖f‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct RepresenterFit {
    pub coeffs: Vector,
    /// `f(xₜ)` at the observed inputs, i.e. `Kc`.
    pub fitted: Vector,
    /// `‖f‖² = cᵀKc`.
    pub norm_sq: f64,
    /// `Σ (yₜ − f(xₜ))²`.
    pub residual_sq: f64,
}

pub fn representer_fit(gram: &Matrix, ys: &[f64], a: f64) -> Result<RepresenterFit> {
    check_positive("a", a)?;
    let t = ys.len();
    check_dim(t, gram.nrows())?;
    if t == 0 {
        return Ok(RepresenterFit {
            coeffs: Vector::zeros(0),
            fitted: Vector::zeros(0),
            norm_sq: 0.0,
            residual_sq: 0.0,
        });
    }
    let y = Vector::from_column_slice(ys);
    let coeffs = solve_spd(&(gram + Matrix::identity(t, t) * a), &y)?;
    let fitted = gram * &coeffs;
    Ok(RepresenterFit {
        norm_sq: coeffs.dot(&fitted).max(0.0),
        residual_sq: (&y - &fitted).norm_squared(),
        coeffs,
        fitted,
    })
}

/// `min_f Σ(yₜ − f(xₜ))² + a‖f‖² = a·Yᵀ(aI + K)⁻¹Y` from a Gram matrix.
pub fn rkhs_min_from_gram(gram: &Matrix, ys: &[f64], a: f64) -> Result<f64> {
    check_positive("a", a)?;
    let t = ys.len();
    check_dim(t, gram.nrows())?;
    if t == 0 {
        return Ok(0.0);
    }
    let y = Vector::from_column_slice(ys);
    let z = solve_spd(&(gram + Matrix::identity(t, t) * a), &y)?;
    Ok(a * y.dot(&z))
}

pub fn rkhs_min_value(spec: &KernelSpec, inputs: &[Vector], ys: &[f64], a: f64) -> Result<f64> {
    spec.validate()?;
    check_dim(inputs.len(), ys.len())?;
    rkhs_min_from_gram(&gram_matrix(spec, inputs)?, ys, a)
}
