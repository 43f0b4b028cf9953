//! Evaluates both sides of each loss guarantee and reports whether it holds.
//!
//! The left side always comes from an online run of the learner; the right side
//! from batch quantities (Cholesky solves, dense determinants) that never look
//! at the online state. A bug in one path therefore cannot hide a violation.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::bayes::gaussian_log_loss;
use crate::error::{check_positive, Error, Result};
use crate::kernel::{
    gram_matrix, representer_fit, rkhs_min_from_gram, GramState, KernelConfig, KernelModel,
    KernelSpec, PrecomputedStream,
};
use crate::linalg::{batch_ridge, dense_log_det_gram, dense_log_det_inputs, log_det_from_products, Matrix};
use crate::online::{RidgeState, StepRecord};
use crate::stream::Stream;

/// Relative tolerance for equalities: `|lhs − rhs| ≤ tol · max(1, |rhs|)`.
pub const EQUALITY_TOLERANCE: f64 = 1e-6;
/// Absolute tolerance for upper bounds: `lhs ≤ rhs + tol`.
pub const INEQUALITY_TOLERANCE: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Guarantee {
    /// Weighted square loss of Ridge Regression equals the regularized batch minimum.
    Thm1,
    /// Log loss of Bayesian Ridge Regression equals the regularized best expert plus half the log-det.
    Thm2,
    /// The same with the log-det replaced by `n ln(1 + TX²/a)`.
    Thm2Bound,
    Thm3,
    Thm4,
    /// Clipped Ridge Regression's square loss bound with `4Y²` times the log-det.
    Cor1,
    /// Plain square loss ≤ `(1 + Z²/a)` times the batch minimum.
    Cor2,
    Cor5,
    /// Clipped kernel loss against the representer comparator with `a = c_F √T`.
    Cor5Tuned,
    DetIdentity,
    DetBound,
}

impl Guarantee {
    pub const ALL: [Guarantee; 11] = [
        Guarantee::Thm1,
        Guarantee::Thm2,
        Guarantee::Thm2Bound,
        Guarantee::Thm3,
        Guarantee::Thm4,
        Guarantee::Cor1,
        Guarantee::Cor2,
        Guarantee::Cor5,
        Guarantee::Cor5Tuned,
        Guarantee::DetIdentity,
        Guarantee::DetBound,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Guarantee::Thm1 => "thm1",
            Guarantee::Thm2 => "thm2",
            Guarantee::Thm2Bound => "thm2_bound",
            Guarantee::Thm3 => "thm3",
            Guarantee::Thm4 => "thm4",
            Guarantee::Cor1 => "cor1",
            Guarantee::Cor2 => "cor2",
            Guarantee::Cor5 => "cor5",
            Guarantee::Cor5Tuned => "cor5_tuned",
            Guarantee::DetIdentity => "det_identity",
            Guarantee::DetBound => "det_bound",
        }
    }

    pub fn relation(&self) -> Relation {
        match self {
            Guarantee::Thm1
            | Guarantee::Thm2
            | Guarantee::Thm3
            | Guarantee::Thm4
            | Guarantee::DetIdentity => Relation::Equality,
            _ => Relation::UpperBound,
        }
    }
}

impl std::fmt::Display for Guarantee {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Guarantee {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Guarantee::ALL
            .into_iter()
            .find(|g| g.as_str() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown check '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Equality,
    UpperBound,
}

/// Run parameters attached to a report.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub a: f64,
    pub sigma: Option<f64>,
    #[serde(rename = "T")]
    pub steps: usize,
    pub n: Option<usize>,
    pub kernel: Option<String>,
    #[serde(rename = "Y")]
    pub bound_y: Option<f64>,
    #[serde(rename = "Z")]
    pub bound_z: Option<f64>,
    #[serde(rename = "X")]
    pub bound_x: Option<f64>,
}

impl RunMeta {
    fn linear(stream: &Stream, a: f64) -> Self {
        RunMeta {
            a,
            steps: stream.len(),
            n: Some(stream.dim()),
            ..RunMeta::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub name: Guarantee,
    pub lhs: f64,
    pub rhs: f64,
    /// `|lhs − rhs|` for equalities, `rhs − lhs` for upper bounds.
    pub gap: f64,
    pub relation: Relation,
    pub tolerance: f64,
    pub pass: bool,
    pub meta: RunMeta,
}

impl BoundReport {
    pub fn new(name: Guarantee, lhs: f64, rhs: f64, tolerance: f64, meta: RunMeta) -> Self {
        let relation = name.relation();
        let (gap, pass) = match relation {
            Relation::Equality => {
                let gap = (lhs - rhs).abs();
                (gap, gap <= tolerance * rhs.abs().max(1.0))
            }
            Relation::UpperBound => (rhs - lhs, lhs <= rhs + tolerance),
        };
        BoundReport {
            name,
            lhs,
            rhs,
            gap,
            relation,
            tolerance,
            pass,
            meta,
        }
    }

    fn with_default_tolerance(name: Guarantee, lhs: f64, rhs: f64, meta: RunMeta) -> Self {
        let tol = match name.relation() {
            Relation::Equality => EQUALITY_TOLERANCE,
            Relation::UpperBound => INEQUALITY_TOLERANCE,
        };
        BoundReport::new(name, lhs, rhs, tol, meta)
    }
}

/// Runs Ridge Regression over `stream`, returning the final state and records.
pub fn run_ridge(stream: &Stream, a: f64, clip: Option<f64>) -> Result<(RidgeState, Vec<StepRecord>)> {
    let mut state = RidgeState::new(a, stream.dim())?;
    if let Some(y) = clip {
        state = state.with_clip(y)?;
    }
    let records = stream
        .samples()
        .iter()
        .enumerate()
        .map(|(t, s)| state.update(&s.x, s.y).map_err(|e| e.at_step(t + 1)))
        .collect::<Result<Vec<_>>>()?;
    Ok((state, records))
}

fn batch_min(stream: &Stream, a: f64) -> Result<f64> {
    Ok(batch_ridge(&stream.inputs(), &stream.outcomes(), a, stream.dim())?.min_value)
}

fn check_outcome_bound(ys: impl IntoIterator<Item = f64>, bound_y: f64) -> Result<()> {
    check_positive("Y", bound_y)?;
    for (t, y) in ys.into_iter().enumerate() {
        if y.abs() > bound_y {
            return Err(Error::Input(format!(
                "|y| = {} exceeds Y = {bound_y} at step {}",
                y.abs(),
                t + 1
            )));
        }
    }
    Ok(())
}

pub fn verify_thm1(stream: &Stream, a: f64) -> Result<BoundReport> {
    let (state, _) = run_ridge(stream, a, None)?;
    let rhs = batch_min(stream, a)?;
    Ok(BoundReport::with_default_tolerance(
        Guarantee::Thm1,
        state.weighted_loss_acc(),
        rhs,
        RunMeta::linear(stream, a),
    ))
}

pub fn verify_cor1(stream: &Stream, a: f64, bound_y: f64) -> Result<BoundReport> {
    check_outcome_bound(stream.outcomes(), bound_y)?;
    let (state, _) = run_ridge(stream, a, Some(bound_y))?;
    let log_det = dense_log_det_inputs(&stream.inputs(), a, stream.dim())?;
    let rhs = batch_min(stream, a)? + 4.0 * bound_y * bound_y * log_det;
    let meta = RunMeta {
        bound_y: Some(bound_y),
        ..RunMeta::linear(stream, a)
    };
    Ok(BoundReport::with_default_tolerance(
        Guarantee::Cor1,
        state.clipped_loss_acc(),
        rhs,
        meta,
    ))
}

/// `bound_z` defaults to the largest input norm in the stream.
pub fn verify_cor2(stream: &Stream, a: f64, bound_z: Option<f64>) -> Result<BoundReport> {
    let realized = stream.max_l2_norm();
    let z = bound_z.unwrap_or(realized);
    if realized > z {
        return Err(Error::Input(format!("max ‖x‖₂ = {realized} exceeds Z = {z}")));
    }
    let (state, _) = run_ridge(stream, a, None)?;
    let rhs = (1.0 + z * z / a) * batch_min(stream, a)?;
    let meta = RunMeta {
        bound_z: Some(z),
        ..RunMeta::linear(stream, a)
    };
    Ok(BoundReport::with_default_tolerance(Guarantee::Cor2, state.plain_loss_acc(), rhs, meta))
}

pub fn verify_det_identity(stream: &Stream, a: f64) -> Result<BoundReport> {
    let (_, records) = run_ridge(stream, a, None)?;
    let qs: Vec<f64> = records.iter().map(|r| r.q).collect();
    let lhs = log_det_from_products(&qs)?;
    let rhs = dense_log_det_inputs(&stream.inputs(), a, stream.dim())?;
    Ok(BoundReport::with_default_tolerance(
        Guarantee::DetIdentity,
        lhs,
        rhs,
        RunMeta::linear(stream, a),
    ))
}

fn resolve_x_bound(stream: &Stream, bound_x: Option<f64>) -> Result<f64> {
    let realized = stream.max_linf_norm();
    let x = bound_x.unwrap_or(realized);
    if realized > x {
        return Err(Error::Input(format!("max ‖x‖∞ = {realized} exceeds X = {x}")));
    }
    Ok(x)
}

/// `bound_x` defaults to the largest sup-norm of an input in the stream.
pub fn verify_det_bound(stream: &Stream, a: f64, bound_x: Option<f64>) -> Result<BoundReport> {
    let x = resolve_x_bound(stream, bound_x)?;
    let (state, _) = run_ridge(stream, a, None)?;
    let n = stream.dim() as f64;
    let t = stream.len() as f64;
    let rhs = n * (t * x * x / a).ln_1p();
    let meta = RunMeta {
        bound_x: Some(x),
        ..RunMeta::linear(stream, a)
    };
    Ok(BoundReport::with_default_tolerance(Guarantee::DetBound, state.log_det_acc(), rhs, meta))
}

/// `L_T(θ̂) + (a/2σ²)‖θ̂‖²` at the regularized minimizer, from the batch minimum.
fn regularized_expert_log_loss(steps: usize, min_value: f64, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    0.5 * steps as f64 * (2.0 * PI * s2).ln() + min_value / (2.0 * s2)
}

/// Cumulative log loss of Bayesian Ridge Regression, summed step by step from
/// its predictive densities.
pub fn brr_stepwise_log_loss(stream: &Stream, a: f64, sigma: f64) -> Result<f64> {
    let mut state = RidgeState::new(a, stream.dim())?;
    let mut total = 0.0;
    for (t, s) in stream.samples().iter().enumerate() {
        let p = crate::bayes::brr_predict(&state, &s.x, sigma).map_err(|e| e.at_step(t + 1))?;
        total += gaussian_log_loss(&p, s.y);
        state.update(&s.x, s.y).map_err(|e| e.at_step(t + 1))?;
    }
    Ok(total)
}

pub fn verify_thm2(stream: &Stream, a: f64, sigma: f64) -> Result<BoundReport> {
    check_positive("sigma", sigma)?;
    let (_, records) = run_ridge(stream, a, None)?;
    let lhs = crate::bayes::brr_cumulative_log_loss(&records, sigma)?;
    let log_det = dense_log_det_inputs(&stream.inputs(), a, stream.dim())?;
    let rhs = regularized_expert_log_loss(stream.len(), batch_min(stream, a)?, sigma) + 0.5 * log_det;
    let meta = RunMeta {
        sigma: Some(sigma),
        ..RunMeta::linear(stream, a)
    };
    Ok(BoundReport::with_default_tolerance(Guarantee::Thm2, lhs, rhs, meta))
}

pub fn verify_thm2_bound(
    stream: &Stream,
    a: f64,
    sigma: f64,
    bound_x: Option<f64>,
) -> Result<BoundReport> {
    check_positive("sigma", sigma)?;
    let x = resolve_x_bound(stream, bound_x)?;
    let (_, records) = run_ridge(stream, a, None)?;
    let lhs = crate::bayes::brr_cumulative_log_loss(&records, sigma)?;
    let n = stream.dim() as f64;
    let t = stream.len() as f64;
    let rhs = regularized_expert_log_loss(stream.len(), batch_min(stream, a)?, sigma)
        + 0.5 * n * (t * x * x / a).ln_1p();
    let meta = RunMeta {
        sigma: Some(sigma),
        bound_x: Some(x),
        ..RunMeta::linear(stream, a)
    };
    Ok(BoundReport::with_default_tolerance(Guarantee::Thm2Bound, lhs, rhs, meta))
}

/// Where a kernelized run gets its kernel values from.
#[derive(Debug, Clone, Copy)]
pub enum KernelSource<'a> {
    Inputs { spec: &'a KernelSpec, stream: &'a Stream },
    Precomputed(&'a PrecomputedStream),
}

impl KernelSource<'_> {
    fn len(&self) -> usize {
        match self {
            KernelSource::Inputs { stream, .. } => stream.len(),
            KernelSource::Precomputed(p) => p.len(),
        }
    }

    fn outcomes(&self) -> Vec<f64> {
        match self {
            KernelSource::Inputs { stream, .. } => stream.outcomes(),
            KernelSource::Precomputed(p) => p.outcomes(),
        }
    }

    /// `K_T`, built directly from the kernel rather than from a learner.
    pub fn gram(&self) -> Result<Matrix> {
        match self {
            KernelSource::Inputs { spec, stream } => gram_matrix(spec, &stream.inputs()),
            KernelSource::Precomputed(p) => Ok(p.gram()),
        }
    }

    fn meta(&self, a: f64) -> RunMeta {
        match self {
            KernelSource::Inputs { spec, stream } => RunMeta {
                a,
                steps: stream.len(),
                n: Some(stream.dim()),
                kernel: Some(spec.to_string()),
                ..RunMeta::default()
            },
            KernelSource::Precomputed(p) => RunMeta {
                a,
                steps: p.len(),
                kernel: Some("precomputed".into()),
                ..RunMeta::default()
            },
        }
    }
}

/// Outcome of running kernelized (Bayesian) Ridge Regression over a source.
#[derive(Debug, Clone)]
pub struct KernelRun {
    pub state: GramState,
    pub records: Vec<StepRecord>,
    /// Per-step log loss of the kernelized Bayesian predictive density, when a
    /// `sigma` was supplied.
    pub log_losses: Option<Vec<f64>>,
}

pub fn run_kernel(
    source: KernelSource<'_>,
    a: f64,
    clip: Option<f64>,
    sigma: Option<f64>,
    config: KernelConfig,
) -> Result<KernelRun> {
    let mut records = Vec::with_capacity(source.len());
    let mut log_losses = sigma.map(|_| Vec::with_capacity(source.len()));
    let state = match source {
        KernelSource::Inputs { spec, stream } => {
            let mut model = KernelModel::with_config(*spec, a, config)?;
            if let Some(y) = clip {
                model = model.with_clip(y)?;
            }
            for (t, s) in stream.samples().iter().enumerate() {
                let mut step = |model: &mut KernelModel| -> Result<()> {
                    if let (Some(sigma), Some(ll)) = (sigma, log_losses.as_mut()) {
                        ll.push(gaussian_log_loss(&model.kbrr_predict(&s.x, sigma)?, s.y));
                    }
                    records.push(model.update(&s.x, s.y)?);
                    Ok(())
                };
                step(&mut model).map_err(|e| e.at_step(t + 1))?;
            }
            model.dual().clone()
        }
        KernelSource::Precomputed(p) => {
            let mut state = GramState::with_config(a, config)?;
            if let Some(y) = clip {
                state = state.with_clip(y)?;
            }
            for (t, row) in p.rows().iter().enumerate() {
                let mut step = |state: &mut GramState| -> Result<()> {
                    if let (Some(sigma), Some(ll)) = (sigma, log_losses.as_mut()) {
                        ll.push(gaussian_log_loss(&state.kbrr_predict(&row.k, row.kxx, sigma)?, row.y));
                    }
                    records.push(state.update(&row.k, row.kxx, row.y)?);
                    Ok(())
                };
                step(&mut state).map_err(|e| e.at_step(t + 1))?;
            }
            state
        }
    };
    Ok(KernelRun {
        state,
        records,
        log_losses,
    })
}

pub fn verify_thm3(source: KernelSource<'_>, a: f64) -> Result<BoundReport> {
    let run = run_kernel(source, a, None, None, KernelConfig::default())?;
    let rhs = rkhs_min_from_gram(&source.gram()?, &source.outcomes(), a)?;
    Ok(BoundReport::with_default_tolerance(
        Guarantee::Thm3,
        run.state.weighted_loss_acc(),
        rhs,
        source.meta(a),
    ))
}

pub fn verify_thm4(source: KernelSource<'_>, a: f64, sigma: f64) -> Result<BoundReport> {
    check_positive("sigma", sigma)?;
    let run = run_kernel(source, a, None, Some(sigma), KernelConfig::default())?;
    let lhs: f64 = run.log_losses.unwrap_or_default().iter().sum();
    let gram = source.gram()?;
    let min = rkhs_min_from_gram(&gram, &source.outcomes(), a)?;
    let rhs = regularized_expert_log_loss(source.len(), min, sigma) + 0.5 * dense_log_det_gram(&gram, a)?;
    let meta = RunMeta {
        sigma: Some(sigma),
        ..source.meta(a)
    };
    Ok(BoundReport::with_default_tolerance(Guarantee::Thm4, lhs, rhs, meta))
}

pub fn verify_cor5(source: KernelSource<'_>, a: f64, bound_y: f64) -> Result<BoundReport> {
    check_outcome_bound(source.outcomes(), bound_y)?;
    let run = run_kernel(source, a, Some(bound_y), None, KernelConfig::default())?;
    let gram = source.gram()?;
    let rhs = rkhs_min_from_gram(&gram, &source.outcomes(), a)?
        + 4.0 * bound_y * bound_y * dense_log_det_gram(&gram, a)?;
    let meta = RunMeta {
        bound_y: Some(bound_y),
        ..source.meta(a)
    };
    Ok(BoundReport::with_default_tolerance(
        Guarantee::Cor5,
        run.state.clipped_loss_acc(),
        rhs,
        meta,
    ))
}

/// Clipped kernelized Ridge Regression with `a = c_F √T` against the
/// representer minimizer `f`: loss ≤ `Σ(yₜ − f(xₜ))² + c_F(‖f‖² + 4Y²)√T`.
///
/// `c_f` defaults to the kernel's bounded diagonal (1 for rbf); other kernels
/// and precomputed streams need it supplied. Every `K(xₜ,xₜ)` must be at most
/// `c_F²`.
pub fn verify_cor5_tuned(
    source: KernelSource<'_>,
    bound_y: f64,
    c_f: Option<f64>,
) -> Result<BoundReport> {
    let c_f = match (c_f, source) {
        (Some(c), _) => c,
        (None, KernelSource::Inputs { spec, .. }) => spec.bounded_diagonal().ok_or_else(|| {
            Error::Config(format!("kernel {spec} has no finite c_F; supply one explicitly"))
        })?,
        (None, KernelSource::Precomputed(_)) => {
            return Err(Error::Config("precomputed kernels need an explicit c_F".into()))
        }
    };
    check_positive("c_F", c_f)?;
    if source.len() == 0 {
        return Err(Error::Param("tuning a = c_F √T needs at least one step".into()));
    }
    check_outcome_bound(source.outcomes(), bound_y)?;
    let gram = source.gram()?;
    let max_diag = gram.diagonal().max();
    if max_diag > c_f * c_f {
        return Err(Error::Input(format!("K(x,x) = {max_diag} exceeds c_F² = {}", c_f * c_f)));
    }
    let t = source.len() as f64;
    let a = c_f * t.sqrt();
    let run = run_kernel(source, a, Some(bound_y), None, KernelConfig::default())?;
    let fit = representer_fit(&gram, &source.outcomes(), a)?;
    let rhs = fit.residual_sq + c_f * (fit.norm_sq + 4.0 * bound_y * bound_y) * t.sqrt();
    let meta = RunMeta {
        bound_y: Some(bound_y),
        ..source.meta(a)
    };
    Ok(BoundReport::with_default_tolerance(
        Guarantee::Cor5Tuned,
        run.state.clipped_loss_acc(),
        rhs,
        meta,
    ))
}

pub fn verify_kernel_det_identity(source: KernelSource<'_>, a: f64) -> Result<BoundReport> {
    let run = run_kernel(source, a, None, None, KernelConfig::default())?;
    let ds: Vec<f64> = run.records.iter().map(|r| r.q).collect();
    let lhs = log_det_from_products(&ds)?;
    let rhs = dense_log_det_gram(&source.gram()?, a)?;
    Ok(BoundReport::with_default_tolerance(
        Guarantee::DetIdentity,
        lhs,
        rhs,
        source.meta(a),
    ))
}

/// Per-step `qₜ` and the largest value over the final tenth of the run.
/// Informational only: nothing is asserted about it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendReport {
    pub name: String,
    pub q: Vec<f64>,
    pub tail_start: usize,
    pub tail_max: f64,
    pub informational: bool,
    pub meta: RunMeta,
}

pub fn verify_trend_cor3(stream: &Stream, a: f64) -> Result<TrendReport> {
    let (_, records) = run_ridge(stream, a, None)?;
    let q: Vec<f64> = records.iter().map(|r| r.q).collect();
    let tail_len = q.len().div_ceil(10);
    let tail_start = q.len() - tail_len;
    let tail_max = q[tail_start..].iter().copied().fold(0.0, f64::max);
    Ok(TrendReport {
        name: "cor3_trend".into(),
        q,
        tail_start: tail_start + 1,
        tail_max,
        informational: true,
        meta: RunMeta {
            bound_z: Some(stream.max_l2_norm()),
            ..RunMeta::linear(stream, a)
        },
    })
}
