use crate::error::{check_dim, Error, Result};
use crate::linalg::Vector;

/// One round of the online protocol: the announced input and the outcome
/// revealed after the prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Vector,
    pub y: f64,
}

/// An ordered sequence of samples sharing one input dimension. Order is
/// significant.
#[derive(Debug, Clone, PartialEq)]
pub struct Stream {
    dim: usize,
    samples: Vec<Sample>,
}

impl Stream {
    pub fn new(dim: usize, samples: Vec<Sample>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Param("input dimension must be at least 1".into()));
        }
        for (t, s) in samples.iter().enumerate() {
            check_dim(dim, s.x.len()).map_err(|e| e.at_step(t + 1))?;
            if !s.y.is_finite() || s.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric("non-finite sample".into()).at_step(t + 1));
            }
        }
        Ok(Stream { dim, samples })
    }

    pub fn from_pairs(dim: usize, pairs: impl IntoIterator<Item = (Vec<f64>, f64)>) -> Result<Self> {
        let samples = pairs
            .into_iter()
            .map(|(x, y)| Sample {
                x: Vector::from_vec(x),
                y,
            })
            .collect();
        Stream::new(dim, samples)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn inputs(&self) -> Vec<Vector> {
        self.samples.iter().map(|s| s.x.clone()).collect()
    }

    pub fn outcomes(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.y).collect()
    }

    pub fn max_abs_outcome(&self) -> f64 {
        self.samples.iter().map(|s| s.y.abs()).fold(0.0, f64::max)
    }

    pub fn max_l2_norm(&self) -> f64 {
        self.samples.iter().map(|s| s.x.norm()).fold(0.0, f64::max)
    }

    pub fn max_linf_norm(&self) -> f64 {
        self.samples.iter().map(|s| s.x.amax()).fold(0.0, f64::max)
    }
}
