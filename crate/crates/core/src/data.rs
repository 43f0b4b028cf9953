//! Stream ingestion (CSV), synthetic stream generation, and CSV emission.
//!
//! Synthetic streams use `ChaCha8Rng` seeded with `seed_from_u64`, which gives
//! the same stream on every platform for a given seed.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{PrecomputedRow, PrecomputedStream};
use crate::linalg::Vector;
use crate::stream::{Sample, Stream};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_cell(cell: &str, line: usize, column: usize) -> Result<f64> {
    let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
        line,
        column,
        message: format!("'{cell}' is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            column,
            message: format!("'{cell}' is not finite"),
        });
    }
    Ok(v)
}

fn csv_reader<R: std::io::Read>(reader: R, has_headers: bool) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(has_headers)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader)
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    Error::Parse {
        line,
        column: 0,
        message: e.to_string(),
    }
}

/// Reads a stream from CSV with header `f1,...,fn,y`. Row order is kept.
pub fn read_stream_csv<R: std::io::Read>(reader: R) -> Result<Stream> {
    let mut rdr = csv_reader(reader, true);
    let header = rdr.headers().map_err(csv_error)?.clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(Error::Parse {
            line: 1,
            column: 0,
            message: "missing header row".into(),
        });
    }
    let width = header.len();
    if width < 2 || &header[width - 1] != "y" {
        return Err(Error::Parse {
            line: 1,
            column: width,
            message: "header must be f1,...,fn,y".into(),
        });
    }
    for (i, name) in header.iter().take(width - 1).enumerate() {
        if name != format!("f{}", i + 1) {
            return Err(Error::Parse {
                line: 1,
                column: i + 1,
                message: format!("expected header 'f{}', found '{name}'", i + 1),
            });
        }
    }
    let mut samples = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() != width {
            return Err(Error::Parse {
                line,
                column: record.len().min(width) + 1,
                message: format!("expected {width} cells, found {}", record.len()),
            });
        }
        let values = record
            .iter()
            .enumerate()
            .map(|(c, cell)| parse_cell(cell, line, c + 1))
            .collect::<Result<Vec<_>>>()?;
        samples.push(Sample {
            x: Vector::from_column_slice(&values[..width - 1]),
            y: values[width - 1],
        });
    }
    Stream::new(width - 1, samples)
}

pub fn load_csv(path: &Path) -> Result<Stream> {
    read_stream_csv(File::open(path).map_err(io_err(path))?)
}

/// 17 significant digits, enough to reproduce every `f64` exactly.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_stream_csv<W: Write>(stream: &Stream, mut w: W) -> std::io::Result<()> {
    let header: Vec<String> = (1..=stream.dim())
        .map(|i| format!("f{i}"))
        .chain(std::iter::once("y".into()))
        .collect();
    writeln!(w, "{}", header.join(","))?;
    for s in stream.samples() {
        let row: Vec<String> = s
            .x
            .iter()
            .chain(std::iter::once(&s.y))
            .map(|&v| format_f64(v))
            .collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn save_csv(stream: &Stream, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = std::io::BufWriter::new(file);
    write_stream_csv(stream, &mut w).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

/// Reads a precomputed-kernel stream: no header, row `t` holds
/// `k1,...,k(t-1),kxx,y`, so its width is `t + 1`. Blank lines are skipped.
pub fn read_precomputed_csv<R: std::io::Read>(reader: R) -> Result<PrecomputedStream> {
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            column: 0,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        let expected = rows.len() + 2;
        if cells.len() != expected {
            return Err(Error::Parse {
                line: line_no,
                column: cells.len().min(expected) + 1,
                message: format!("row {} needs {expected} cells, found {}", rows.len() + 1, cells.len()),
            });
        }
        let values = cells
            .iter()
            .enumerate()
            .map(|(c, cell)| parse_cell(cell, line_no, c + 1))
            .collect::<Result<Vec<_>>>()?;
        let n = values.len();
        rows.push(PrecomputedRow {
            k: Vector::from_column_slice(&values[..n - 2]),
            kxx: values[n - 2],
            y: values[n - 1],
        });
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 1,
            column: 0,
            message: "precomputed kernel file has no rows".into(),
        });
    }
    PrecomputedStream::new(rows)
}

pub fn load_precomputed_csv(path: &Path) -> Result<PrecomputedStream> {
    read_precomputed_csv(File::open(path).map_err(io_err(path))?)
}

pub fn write_precomputed_csv<W: Write>(stream: &PrecomputedStream, mut w: W) -> std::io::Result<()> {
    for row in stream.rows() {
        let cells: Vec<String> = row
            .k
            .iter()
            .chain([row.kxx, row.y].iter())
            .map(|&v| format_f64(v))
            .collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputDistribution {
    /// Each coordinate uniform on `[-bound, bound]`, so `‖x‖∞ ≤ bound`.
    UniformCube { bound: f64 },
    /// Uniform on the sphere of radius `radius`, so `‖x‖₂ ≤ radius`.
    Sphere { radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Adversarial {
    /// The same input on every step.
    ConstantX,
    /// One input with its sign flipped on every other step.
    AlternatingSign,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ThetaStar {
    Random,
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    #[serde(rename = "T")]
    pub steps: usize,
    pub theta_star: ThetaStar,
    pub noise_sigma: f64,
    pub x_dist: InputDistribution,
    pub adversarial: Option<Adversarial>,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Param("n must be at least 1".into()));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::Param(format!("noise sigma must be ≥ 0, got {}", self.noise_sigma)));
        }
        let bound = match self.x_dist {
            InputDistribution::UniformCube { bound } => bound,
            InputDistribution::Sphere { radius } => radius,
        };
        if !(bound.is_finite() && bound >= 0.0) {
            return Err(Error::Param(format!("input bound must be finite and ≥ 0, got {bound}")));
        }
        if let ThetaStar::Fixed(theta) = &self.theta_star {
            if theta.len() != self.n {
                return Err(Error::Dimension {
                    expected: self.n,
                    found: theta.len(),
                });
            }
            if theta.iter().any(|v| !v.is_finite()) {
                return Err(Error::Param("theta_star must be finite".into()));
            }
        }
        Ok(())
    }

    /// The declared `‖x‖∞` bound, if the distribution has one.
    pub fn declared_x_bound(&self) -> Option<f64> {
        match self.x_dist {
            InputDistribution::UniformCube { bound } => Some(bound),
            InputDistribution::Sphere { .. } => None,
        }
    }

    /// The declared `‖x‖₂` bound, if the distribution has one.
    pub fn declared_z_bound(&self) -> Option<f64> {
        match self.x_dist {
            InputDistribution::Sphere { radius } => Some(radius),
            InputDistribution::UniformCube { .. } => None,
        }
    }
}

impl FromStr for SyntheticSpec {
    type Err = Error;

    /// Parses an inline spec such as
    /// `n=5,T=200,noise=0.5,x=cube:1,theta=random,adv=constant_x`.
    /// `x` is `cube:X` or `sphere:Z`; `theta` is `random` or
    /// `v1;v2;...`. Defaults: `noise=1`, `x=cube:1`, `theta=random`.
    fn from_str(s: &str) -> Result<Self> {
        let mut n = None;
        let mut steps = None;
        let mut noise_sigma = 1.0;
        let mut x_dist = InputDistribution::UniformCube { bound: 1.0 };
        let mut theta_star = ThetaStar::Random;
        let mut adversarial = None;
        let bad = |part: &str| Error::Config(format!("bad synthetic parameter '{part}'"));
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part.split_once('=').ok_or_else(|| bad(part))?;
            let value = value.trim();
            match key.trim() {
                "n" => n = Some(value.parse().map_err(|_| bad(part))?),
                "T" => steps = Some(value.parse().map_err(|_| bad(part))?),
                "noise" => noise_sigma = value.parse().map_err(|_| bad(part))?,
                "x" => {
                    let (kind, bound) = value.split_once(':').ok_or_else(|| bad(part))?;
                    let bound: f64 = bound.parse().map_err(|_| bad(part))?;
                    x_dist = match kind {
                        "cube" => InputDistribution::UniformCube { bound },
                        "sphere" => InputDistribution::Sphere { radius: bound },
                        _ => return Err(bad(part)),
                    };
                }
                "theta" => {
                    theta_star = if value == "random" {
                        ThetaStar::Random
                    } else {
                        ThetaStar::Fixed(
                            value
                                .split(';')
                                .map(|v| v.trim().parse::<f64>())
                                .collect::<std::result::Result<_, _>>()
                                .map_err(|_| bad(part))?,
                        )
                    }
                }
                "adv" => {
                    adversarial = match value {
                        "none" => None,
                        "constant_x" => Some(Adversarial::ConstantX),
                        "alternating_sign" => Some(Adversarial::AlternatingSign),
                        _ => return Err(bad(part)),
                    }
                }
                _ => return Err(bad(part)),
            }
        }
        let spec = SyntheticSpec {
            n: n.ok_or_else(|| Error::Config("synthetic spec needs n=".into()))?,
            steps: steps.ok_or_else(|| Error::Config("synthetic spec needs T=".into()))?,
            theta_star,
            noise_sigma,
            x_dist,
            adversarial,
        };
        spec.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(spec)
    }
}

/// What was actually generated, recorded alongside the stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticMeta {
    pub seed: u64,
    pub theta_star: Vec<f64>,
    pub max_l2_norm: f64,
    pub max_linf_norm: f64,
    pub max_abs_y: f64,
}

fn sample_input(dist: InputDistribution, n: usize, rng: &mut ChaCha8Rng) -> Vector {
    match dist {
        InputDistribution::UniformCube { bound } => {
            if bound == 0.0 {
                return Vector::zeros(n);
            }
            Vector::from_fn(n, |_, _| rng.random_range(-bound..=bound))
        }
        InputDistribution::Sphere { radius } => loop {
            let g = Vector::from_fn(n, |_, _| StandardNormal.sample(rng));
            let norm = g.norm();
            if norm > 1e-12 {
                let mut x = g * (radius / norm);
                // Rounding can leave the norm a few ulps above the radius.
                while x.norm() > radius {
                    x *= 1.0 - f64::EPSILON;
                }
                break x;
            }
        },
    }
}

/// Generates `yₜ = θ*ᵀxₜ + εₜ`, `εₜ ~ N(0, noise²)`, deterministically from `seed`.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<(Stream, SyntheticMeta)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta = match &spec.theta_star {
        ThetaStar::Fixed(v) => Vector::from_column_slice(v),
        ThetaStar::Random => Vector::from_fn(spec.n, |_, _| StandardNormal.sample(&mut rng)),
    };
    let base = spec
        .adversarial
        .map(|_| sample_input(spec.x_dist, spec.n, &mut rng));
    let mut samples = Vec::with_capacity(spec.steps);
    for t in 0..spec.steps {
        let x = match (spec.adversarial, &base) {
            (Some(Adversarial::ConstantX), Some(b)) => b.clone(),
            (Some(Adversarial::AlternatingSign), Some(b)) if t % 2 == 1 => -b,
            (Some(Adversarial::AlternatingSign), Some(b)) => b.clone(),
            _ => sample_input(spec.x_dist, spec.n, &mut rng),
        };
        let noise = if spec.noise_sigma > 0.0 {
            let z: f64 = StandardNormal.sample(&mut rng);
            spec.noise_sigma * z
        } else {
            0.0
        };
        let y = theta.dot(&x) + noise;
        samples.push(Sample { x, y });
    }
    let stream = Stream::new(spec.n, samples)?;
    let meta = SyntheticMeta {
        seed,
        theta_star: theta.iter().copied().collect(),
        max_l2_norm: stream.max_l2_norm(),
        max_linf_norm: stream.max_linf_norm(),
        max_abs_y: stream.max_abs_outcome(),
    };
    Ok((stream, meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn load_unit_stream() {
        let s = read_stream_csv("f1,y\n1,1\n1,1\n".as_bytes()).unwrap();
        assert_eq!(s, Stream::from_pairs(1, vec![(vec![1.0], 1.0), (vec![1.0], 1.0)]).unwrap());
    }

    #[test]
    fn empty_file_has_no_header() {
        assert!(matches!(read_stream_csv("".as_bytes()), Err(Error::Parse { .. })));
    }

    #[test]
    fn nan_cell_is_located() {
        let err = read_stream_csv("f1,f2,y\n1,2,3\n4,NaN,6\n".as_bytes()).unwrap_err();
        match err {
            Error::Parse { line, column, .. } => assert_eq!((line, column), (3, 2)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ragged_and_malformed_rows() {
        assert!(matches!(
            read_stream_csv("f1,f2,y\n1,2,3\n4,5\n".as_bytes()),
            Err(Error::Parse { line: 3, .. })
        ));
        assert!(matches!(
            read_stream_csv("f1,y\nabc,1\n".as_bytes()),
            Err(Error::Parse { line: 2, column: 1, .. })
        ));
        assert!(matches!(
            read_stream_csv("a,b\n1,1\n".as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            load_csv(Path::new("/definitely/not/here.csv")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn precomputed_rows() {
        let p = read_precomputed_csv("1,0.5\n0.2,1,-1\n\n0.1,0.3,1,2\n".as_bytes()).unwrap();
        assert_eq!(p.len(), 3);
        let g = p.gram();
        assert_eq!(g[(0, 1)], 0.2);
        assert_eq!(g[(1, 2)], 0.3);
        assert_eq!(g[(2, 2)], 1.0);
        assert!(matches!(
            read_precomputed_csv("1,0.5\n1,0.5\n".as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(read_precomputed_csv("".as_bytes()).is_err());
    }

    #[test]
    fn parse_inline_spec() {
        let s: SyntheticSpec = "n=3,T=10,noise=0.5,x=sphere:2,theta=1;2;3,adv=alternating_sign"
            .parse()
            .unwrap();
        assert_eq!(s.n, 3);
        assert_eq!(s.steps, 10);
        assert_eq!(s.x_dist, InputDistribution::Sphere { radius: 2.0 });
        assert_eq!(s.theta_star, ThetaStar::Fixed(vec![1.0, 2.0, 3.0]));
        assert_eq!(s.adversarial, Some(Adversarial::AlternatingSign));
        assert!("n=3".parse::<SyntheticSpec>().is_err());
        assert!("n=2,T=3,theta=1".parse::<SyntheticSpec>().is_err());
        assert!("n=2,T=3,noise=-1".parse::<SyntheticSpec>().is_err());
    }

    #[test]
    fn zero_steps_is_empty() {
        let spec: SyntheticSpec = "n=2,T=0".parse().unwrap();
        let (s, _) = generate_synthetic(&spec, 1).unwrap();
        assert!(s.is_empty());
    }

    #[test]
    fn declared_bounds_hold() {
        let spec: SyntheticSpec = "n=7,T=300,x=sphere:1.7".parse().unwrap();
        let (s, meta) = generate_synthetic(&spec, 9).unwrap();
        assert!(s.samples().iter().all(|x| x.x.norm() <= 1.7));
        assert!(meta.max_l2_norm <= 1.7);

        let spec: SyntheticSpec = "n=4,T=300,x=cube:0.5".parse().unwrap();
        let (s, _) = generate_synthetic(&spec, 9).unwrap();
        assert!(s.max_linf_norm() <= 0.5);
    }

    #[test]
    fn adversarial_patterns() {
        let spec: SyntheticSpec = "n=3,T=6,adv=constant_x".parse().unwrap();
        let (s, _) = generate_synthetic(&spec, 4).unwrap();
        assert!(s.samples().windows(2).all(|w| w[0].x == w[1].x));

        let spec: SyntheticSpec = "n=3,T=6,adv=alternating_sign".parse().unwrap();
        let (s, _) = generate_synthetic(&spec, 4).unwrap();
        assert!(s.samples().windows(2).all(|w| w[0].x == -&w[1].x));
    }
}
