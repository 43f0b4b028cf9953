//! Experiment configuration, execution, and report emission.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bayes::{brr_predict, gaussian_log_loss};
use crate::bounds::{
    run_kernel, verify_cor1, verify_cor2, verify_cor5, verify_cor5_tuned, verify_det_bound,
    verify_det_identity, verify_kernel_det_identity, verify_thm1, verify_thm2, verify_thm2_bound,
    verify_thm3, verify_thm4, verify_trend_cor3, BoundReport, Guarantee, KernelSource, TrendReport,
};
use crate::data::{format_f64, generate_synthetic, load_csv, load_precomputed_csv, SyntheticMeta, SyntheticSpec};
use crate::error::{check_positive, Error, Result};
use crate::kernel::{KernelConfig, KernelSpec, PrecomputedStream};
use crate::online::RidgeState;
use crate::stream::Stream;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algo {
    Ridge,
    Vaw,
    Brr,
    Krr,
    Kbrr,
}

impl Algo {
    fn is_kernel(self) -> bool {
        matches!(self, Algo::Krr | Algo::Kbrr)
    }

    fn is_bayesian(self) -> bool {
        matches!(self, Algo::Brr | Algo::Kbrr)
    }
}

impl FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ridge" => Ok(Algo::Ridge),
            "vaw" => Ok(Algo::Vaw),
            "brr" => Ok(Algo::Brr),
            "krr" => Ok(Algo::Krr),
            "kbrr" => Ok(Algo::Kbrr),
            other => Err(Error::Config(format!("unknown algorithm '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelChoice {
    Spec(KernelSpec),
    /// Kernel values come from a precomputed-kernel CSV.
    Precomputed,
}

impl FromStr for KernelChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim() == "precomputed" {
            Ok(KernelChoice::Precomputed)
        } else {
            Ok(KernelChoice::Spec(s.parse()?))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Csv(PathBuf),
    Synthetic(SyntheticSpec),
    PrecomputedKernelCsv(PathBuf),
}

/// A requested check: a guarantee, or the informational `q_t` trend (`cor3`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Check {
    Bound(Guarantee),
    Trend,
}

impl FromStr for Check {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim() == "cor3" {
            Ok(Check::Trend)
        } else {
            Ok(Check::Bound(s.parse()?))
        }
    }
}

impl From<Check> for String {
    fn from(c: Check) -> String {
        c.name().to_string()
    }
}

impl TryFrom<String> for Check {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl Check {
    pub fn name(&self) -> &'static str {
        match self {
            Check::Bound(g) => g.as_str(),
            Check::Trend => "cor3",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub algo: Algo,
    pub a: f64,
    pub sigma: Option<f64>,
    pub kernel: Option<KernelChoice>,
    pub clip_y: Option<f64>,
    /// `c_F` for the tuned kernel bound when the kernel has no finite default.
    pub c_f: Option<f64>,
    pub data: DataSource,
    pub checks: Vec<Check>,
    pub seed: u64,
    pub report_path: Option<PathBuf>,
    pub steps_path: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(algo: Algo, a: f64, data: DataSource) -> Self {
        ExperimentConfig {
            algo,
            a,
            sigma: None,
            kernel: None,
            clip_y: None,
            c_f: None,
            data,
            checks: Vec::new(),
            seed: 0,
            report_path: None,
            steps_path: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |m: String| Err(Error::Config(m));
        check_positive("a", self.a).map_err(|e| Error::Config(e.to_string()))?;
        match (self.algo.is_bayesian(), self.sigma) {
            (true, None) => return cfg_err(format!("{:?} needs --sigma", self.algo)),
            (false, Some(_)) => return cfg_err("--sigma only applies to brr and kbrr".into()),
            (true, Some(s)) => check_positive("sigma", s).map_err(|e| Error::Config(e.to_string()))?,
            _ => {}
        }
        match (self.algo.is_kernel(), &self.kernel) {
            (true, None) => return cfg_err(format!("{:?} needs --kernel", self.algo)),
            (false, Some(_)) => return cfg_err("--kernel only applies to krr and kbrr".into()),
            (true, Some(KernelChoice::Spec(spec))) => {
                spec.validate().map_err(|e| Error::Config(e.to_string()))?
            }
            _ => {}
        }
        let precomputed_kernel = matches!(self.kernel, Some(KernelChoice::Precomputed));
        let precomputed_data = matches!(self.data, DataSource::PrecomputedKernelCsv(_));
        if precomputed_kernel != precomputed_data {
            return cfg_err("--kernel precomputed goes together with a precomputed-kernel data file".into());
        }
        if let Some(y) = self.clip_y {
            check_positive("clip", y).map_err(|e| Error::Config(e.to_string()))?;
        }
        for check in &self.checks {
            self.validate_check(*check)?;
        }
        Ok(())
    }

    fn validate_check(&self, check: Check) -> Result<()> {
        use Guarantee::*;
        let allowed = match self.algo {
            Algo::Ridge => matches!(check, Check::Trend | Check::Bound(Thm1 | Cor1 | Cor2 | DetIdentity | DetBound)),
            Algo::Vaw => matches!(check, Check::Trend | Check::Bound(DetIdentity | DetBound)),
            Algo::Brr => matches!(
                check,
                Check::Trend | Check::Bound(Thm1 | Thm2 | Thm2Bound | Cor1 | Cor2 | DetIdentity | DetBound)
            ),
            Algo::Krr => matches!(check, Check::Bound(Thm3 | Cor5 | Cor5Tuned | DetIdentity)),
            Algo::Kbrr => matches!(check, Check::Bound(Thm3 | Thm4 | Cor5 | Cor5Tuned | DetIdentity)),
        };
        if !allowed {
            return Err(Error::Config(format!(
                "check {} does not apply to {:?}",
                check.name(),
                self.algo
            )));
        }
        if matches!(check, Check::Bound(Cor1 | Cor5 | Cor5Tuned)) && self.clip_y.is_none() {
            return Err(Error::Config(format!("check {} needs --clip Y", check.name())));
        }
        Ok(())
    }

    /// Step log location: explicit, or next to the report as `<stem>.steps.csv`.
    pub fn resolved_steps_path(&self) -> Option<PathBuf> {
        self.steps_path.clone().or_else(|| {
            self.report_path.as_ref().map(|p| {
                let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
                p.with_file_name(format!("{stem}.steps.csv"))
            })
        })
    }
}

/// One row of the step log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLogRow {
    pub t: usize,
    pub y: f64,
    pub gamma: f64,
    pub gamma_clipped: Option<f64>,
    pub q_or_d: f64,
    pub denom: f64,
    pub sq_loss: f64,
    pub weighted_sq_loss: f64,
    pub log_loss: Option<f64>,
}

pub const STEP_LOG_HEADER: &str = "t,y,gamma,gamma_clipped,q_or_d,denom,sq_loss,weighted_sq_loss,log_loss";

fn opt_cell(v: Option<f64>) -> String {
    v.map(format_f64).unwrap_or_default()
}

pub fn write_step_log<W: Write>(rows: &[StepLogRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{STEP_LOG_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            r.t,
            format_f64(r.y),
            format_f64(r.gamma),
            opt_cell(r.gamma_clipped),
            format_f64(r.q_or_d),
            format_f64(r.denom),
            format_f64(r.sq_loss),
            format_f64(r.weighted_sq_loss),
            opt_cell(r.log_loss),
        )?;
    }
    Ok(())
}

pub fn read_step_log<R: std::io::Read>(reader: R) -> Result<Vec<StepLogRow>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::Parse { line: 1, column: 0, message: e.to_string() })?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if header != STEP_LOG_HEADER {
        return Err(Error::Parse { line: 1, column: 0, message: format!("unexpected header '{header}'") });
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Parse { line, column: 0, message: e.to_string() })?;
        let cell = |c: usize| -> Result<Option<f64>> {
            let s = rec.get(c).unwrap_or("");
            if s.is_empty() {
                return Ok(None);
            }
            s.parse().map(Some).map_err(|_| Error::Parse {
                line,
                column: c + 1,
                message: format!("'{s}' is not a number"),
            })
        };
        let req = |c: usize| -> Result<f64> {
            cell(c)?.ok_or_else(|| Error::Parse { line, column: c + 1, message: "empty cell".into() })
        };
        rows.push(StepLogRow {
            t: rec.get(0).unwrap_or("").parse().map_err(|_| Error::Parse {
                line,
                column: 1,
                message: "bad step index".into(),
            })?,
            y: req(1)?,
            gamma: req(2)?,
            gamma_clipped: cell(3)?,
            q_or_d: req(4)?,
            denom: req(5)?,
            sq_loss: req(6)?,
            weighted_sq_loss: req(7)?,
            log_loss: cell(8)?,
        });
    }
    Ok(rows)
}

/// Everything an experiment produced.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub steps: Vec<StepLogRow>,
    pub reports: Vec<BoundReport>,
    pub trends: Vec<TrendReport>,
    pub synthetic: Option<SyntheticMeta>,
}

impl ExperimentOutcome {
    /// True iff every asserted (non-informational) report passed.
    pub fn all_passed(&self) -> bool {
        self.reports.iter().all(|r| r.pass)
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ReportFile {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub reports: Vec<BoundReport>,
    pub informational: Vec<TrendReport>,
    pub steps_path: Option<PathBuf>,
    pub synthetic: Option<SyntheticMeta>,
}

enum Data {
    Linear(Stream),
    Precomputed(PrecomputedStream),
}

fn load_data(cfg: &ExperimentConfig) -> Result<(Data, Option<SyntheticMeta>)> {
    Ok(match &cfg.data {
        DataSource::Csv(path) => (Data::Linear(load_csv(path)?), None),
        DataSource::Synthetic(spec) => {
            let (stream, meta) = generate_synthetic(spec, cfg.seed)?;
            (Data::Linear(stream), Some(meta))
        }
        DataSource::PrecomputedKernelCsv(path) => (Data::Precomputed(load_precomputed_csv(path)?), None),
    })
}

fn run_linear(cfg: &ExperimentConfig, stream: &Stream) -> Result<Vec<StepLogRow>> {
    let mut state = RidgeState::new(cfg.a, stream.dim())?;
    let mut rows = Vec::with_capacity(stream.len());
    for (i, s) in stream.samples().iter().enumerate() {
        let t = i + 1;
        let step = |state: &mut RidgeState| -> Result<StepLogRow> {
            let vaw = match cfg.algo {
                Algo::Vaw => Some(state.vaw_predict(&s.x)?),
                _ => None,
            };
            let log_loss = match cfg.sigma {
                Some(sigma) if cfg.algo == Algo::Brr => {
                    Some(gaussian_log_loss(&brr_predict(state, &s.x, sigma)?, s.y))
                }
                _ => None,
            };
            let rec = state.update(&s.x, s.y)?;
            let gamma = vaw.unwrap_or(rec.gamma);
            let r = s.y - gamma;
            Ok(StepLogRow {
                t,
                y: s.y,
                gamma,
                gamma_clipped: cfg.clip_y.map(|b| gamma.clamp(-b, b)),
                q_or_d: rec.q,
                denom: rec.denom,
                sq_loss: r * r,
                weighted_sq_loss: r * r / rec.denom,
                log_loss,
            })
        };
        rows.push(step(&mut state).map_err(|e| e.at_step(t))?);
    }
    Ok(rows)
}

fn run_kernelized(cfg: &ExperimentConfig, source: KernelSource<'_>) -> Result<Vec<StepLogRow>> {
    let sigma = if cfg.algo == Algo::Kbrr { cfg.sigma } else { None };
    let run = run_kernel(source, cfg.a, cfg.clip_y, sigma, KernelConfig::default())?;
    Ok(run
        .records
        .iter()
        .enumerate()
        .map(|(i, rec)| StepLogRow {
            t: i + 1,
            y: rec.y,
            gamma: rec.gamma,
            gamma_clipped: rec.gamma_clipped,
            q_or_d: rec.q,
            denom: rec.denom,
            sq_loss: rec.sq_loss,
            weighted_sq_loss: rec.weighted_sq_loss,
            log_loss: run.log_losses.as_ref().map(|l| l[i]),
        })
        .collect())
}

/// Runs the online protocol for the configured learner, then every requested
/// check. Does not write any files.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let (data, synthetic) = load_data(cfg)?;
    let declared_x = match &cfg.data {
        DataSource::Synthetic(spec) => spec.declared_x_bound(),
        _ => None,
    };
    let declared_z = match &cfg.data {
        DataSource::Synthetic(spec) => spec.declared_z_bound(),
        _ => None,
    };

    let kernel_spec = match cfg.kernel {
        Some(KernelChoice::Spec(spec)) => Some(spec),
        _ => None,
    };
    let source = match (&data, &kernel_spec) {
        (Data::Linear(stream), Some(spec)) => Some(KernelSource::Inputs { spec, stream }),
        (Data::Precomputed(p), None) => Some(KernelSource::Precomputed(p)),
        _ => None,
    };

    let steps = match (&data, source) {
        (Data::Linear(stream), None) => run_linear(cfg, stream)?,
        (_, Some(source)) => run_kernelized(cfg, source)?,
        (Data::Precomputed(_), None) => unreachable!("validated: precomputed data has a source"),
    };

    let mut reports = Vec::new();
    let mut trends = Vec::new();
    let sigma = cfg.sigma.unwrap_or(1.0);
    let clip = cfg.clip_y.unwrap_or(1.0);
    for &check in &cfg.checks {
        let result = match (check, &data, source) {
            (Check::Trend, Data::Linear(s), None) => {
                trends.push(verify_trend_cor3(s, cfg.a).map_err(|e| e.in_check("cor3"))?);
                continue;
            }
            (Check::Bound(g), _, Some(src)) => match g {
                Guarantee::Thm3 => verify_thm3(src, cfg.a),
                Guarantee::Thm4 => verify_thm4(src, cfg.a, sigma),
                Guarantee::Cor5 => verify_cor5(src, cfg.a, clip),
                Guarantee::Cor5Tuned => verify_cor5_tuned(src, clip, cfg.c_f),
                Guarantee::DetIdentity => verify_kernel_det_identity(src, cfg.a),
                other => unreachable!("validated: {other} is not a kernel check"),
            },
            (Check::Bound(g), Data::Linear(s), None) => match g {
                Guarantee::Thm1 => verify_thm1(s, cfg.a),
                Guarantee::Thm2 => verify_thm2(s, cfg.a, sigma),
                Guarantee::Thm2Bound => verify_thm2_bound(s, cfg.a, sigma, declared_x),
                Guarantee::Cor1 => verify_cor1(s, cfg.a, clip),
                Guarantee::Cor2 => verify_cor2(s, cfg.a, declared_z),
                Guarantee::DetIdentity => verify_det_identity(s, cfg.a),
                Guarantee::DetBound => verify_det_bound(s, cfg.a, declared_x),
                other => unreachable!("validated: {other} is not a linear check"),
            },
            _ => unreachable!("validated check/data combination"),
        };
        reports.push(result.map_err(|e| e.in_check(check.name()))?);
    }

    Ok(ExperimentOutcome {
        steps,
        reports,
        trends,
        synthetic,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let io = |source| Error::Io { path: path.to_path_buf(), source };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

/// Writes the step log and the JSON report to the configured locations.
pub fn write_outputs(cfg: &ExperimentConfig, outcome: &ExperimentOutcome) -> Result<()> {
    let steps_path = cfg.resolved_steps_path();
    if let Some(path) = &steps_path {
        let mut w = create(path)?;
        write_step_log(&outcome.steps, &mut w)
            .and_then(|_| w.flush())
            .map_err(|source| Error::Io { path: path.clone(), source })?;
    }
    if let Some(path) = &cfg.report_path {
        let report = ReportFile {
            schema_version: SCHEMA_VERSION,
            config: cfg.clone(),
            reports: outcome.reports.clone(),
            informational: outcome.trends.clone(),
            steps_path,
            synthetic: outcome.synthetic.clone(),
        };
        let mut w = create(path)?;
        serde_json::to_writer_pretty(&mut w, &report)
            .map_err(|e| Error::Io { path: path.clone(), source: e.into() })?;
        writeln!(w)
            .and_then(|_| w.flush())
            .map_err(|source| Error::Io { path: path.clone(), source })?;
    }
    Ok(())
}
