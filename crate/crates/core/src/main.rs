use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use online_ridge::data::{generate_synthetic, save_csv, SyntheticSpec};
use online_ridge::experiment::{
    run_experiment, write_outputs, Algo, Check, DataSource, ExperimentConfig, KernelChoice,
};

#[derive(Parser)]
#[command(name = "online-ridge", version, about = "Run online ridge learners and check their loss guarantees")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a learner over a stream and evaluate the requested checks.
    Run(RunArgs),
    /// Write a synthetic stream to CSV.
    Generate {
        /// Inline spec, e.g. `n=5,T=200,noise=0.5,x=cube:1`.
        #[arg(long)]
        synthetic: SyntheticSpec,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    /// ridge, vaw, brr, krr or kbrr.
    #[arg(long)]
    algo: Algo,
    /// Regularization a > 0.
    #[arg(long)]
    a: f64,
    /// Noise scale for brr and kbrr.
    #[arg(long)]
    sigma: Option<f64>,
    /// `linear`, `rbf:gamma=G`, `poly:degree=D,offset=C`, or `precomputed`.
    #[arg(long)]
    kernel: Option<KernelChoice>,
    /// Clip predictions to [-Y, Y].
    #[arg(long)]
    clip: Option<f64>,
    /// c_F for the tuned kernel bound (defaults to 1 for rbf).
    #[arg(long)]
    c_f: Option<f64>,
    /// CSV stream (`f1,...,fn,y`), or a precomputed-kernel CSV with `--kernel precomputed`.
    #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
    data: Option<PathBuf>,
    /// Inline synthetic stream spec.
    #[arg(long)]
    synthetic: Option<SyntheticSpec>,
    /// Comma-separated checks: thm1, thm2, thm2_bound, thm3, thm4, cor1, cor2,
    /// cor3, cor5, cor5_tuned, det_identity, det_bound.
    #[arg(long, value_delimiter = ',')]
    checks: Vec<Check>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON report path.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Step log path; defaults to `<report stem>.steps.csv`.
    #[arg(long)]
    steps: Option<PathBuf>,
}

impl RunArgs {
    fn into_config(self) -> ExperimentConfig {
        let data = match (self.data, self.synthetic) {
            (Some(path), _) if self.kernel == Some(KernelChoice::Precomputed) => {
                DataSource::PrecomputedKernelCsv(path)
            }
            (Some(path), _) => DataSource::Csv(path),
            (None, Some(spec)) => DataSource::Synthetic(spec),
            (None, None) => unreachable!("clap requires one data source"),
        };
        ExperimentConfig {
            algo: self.algo,
            a: self.a,
            sigma: self.sigma,
            kernel: self.kernel,
            clip_y: self.clip,
            c_f: self.c_f,
            data,
            checks: self.checks,
            seed: self.seed,
            report_path: self.report,
            steps_path: self.steps,
        }
    }
}

fn run(cli: Cli) -> online_ridge::Result<bool> {
    match cli.command {
        Command::Generate { synthetic, seed, out } => {
            let (stream, meta) = generate_synthetic(&synthetic, seed)?;
            save_csv(&stream, &out)?;
            eprintln!(
                "wrote {} rows to {} (max |x|2 = {}, max |y| = {})",
                stream.len(),
                out.display(),
                meta.max_l2_norm,
                meta.max_abs_y
            );
            Ok(true)
        }
        Command::Run(args) => {
            let cfg = args.into_config();
            let outcome = run_experiment(&cfg)?;
            write_outputs(&cfg, &outcome)?;
            for r in &outcome.reports {
                println!(
                    "{:<12} {} lhs={:.12e} rhs={:.12e} gap={:.3e}",
                    r.name.as_str(),
                    if r.pass { "PASS" } else { "FAIL" },
                    r.lhs,
                    r.rhs,
                    r.gap
                );
            }
            for t in &outcome.trends {
                println!("{:<12} INFO tail_max_q={:.6e} (from step {})", t.name, t.tail_max, t.tail_start);
            }
            Ok(outcome.all_passed())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
