use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::math::{dot, Matrix};

/// A bias-free linear map `y = W x` with `W` stored row-major as
/// `out_dim x in_dim`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LinearMap {
    in_dim: usize,
    out_dim: usize,
    seed: u64,
    weights: Vec<f64>,
}

/// The EF1 embedding-fusion model.
pub type LinearFusionModel = LinearMap;
/// Encoder trained by the toy gaze trainer.
pub type LinearEncoder = LinearMap;

impl LinearMap {
    /// Seeded fan-in uniform initialization in `[-1/sqrt(in), 1/sqrt(in)]`.
    pub fn init_uniform(in_dim: usize, out_dim: usize, seed: u64) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            bail!(InvalidArgument, "linear map dimensions must be positive");
        }
        let bound = 1.0 / libm::sqrt(in_dim as f64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = (0..in_dim * out_dim).map(|_| rng.random_range(-bound..=bound)).collect();
        Ok(Self {
            in_dim,
            out_dim,
            seed,
            weights,
        })
    }

    pub fn from_weights(out_dim: usize, in_dim: usize, weights: Vec<f64>, seed: u64) -> Result<Self> {
        if weights.len() != in_dim * out_dim {
            return Err(Error::ShapeMismatch {
                expected: in_dim * out_dim,
                found: weights.len(),
            });
        }
        crate::math::check_finite(&weights, "linear map weights")?;
        Ok(Self {
            in_dim,
            out_dim,
            seed,
            weights,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.in_dim {
            return Err(Error::ShapeMismatch {
                expected: self.in_dim,
                found: x.len(),
            });
        }
        Ok(self.weights.chunks_exact(self.in_dim).map(|row| dot(row, x)).collect())
    }

    /// Applies the map to every row of `inputs` (`m x in_dim` -> `m x out_dim`).
    pub fn forward(&self, inputs: &Matrix) -> Matrix {
        debug_assert_eq!(inputs.cols(), self.in_dim);
        let mut out = Matrix::zeros(inputs.rows(), self.out_dim);
        for i in 0..inputs.rows() {
            let x = inputs.row(i);
            for (o, row) in self.weights.chunks_exact(self.in_dim).enumerate() {
                out.set(i, o, dot(row, x));
            }
        }
        out
    }
}
