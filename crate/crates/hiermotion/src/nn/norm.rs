//! Per-dimension standardization fitted on training data and persisted next
//! to model weights.

use super::layers::ParamStore;
use super::Scalar;
use ndarray::{ArrayD, IxDyn};

#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    /// Identity normalizer.
    pub fn unit(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    /// Fits mean and standard deviation per dimension; constant dimensions
    /// get a floor of 1e-4 so they pass through unchanged in scale.
    pub fn fit<'a, I>(rows: I, dim: usize) -> Self
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut mean = vec![0.0; dim];
        let mut sq = vec![0.0; dim];
        let mut n = 0usize;
        for row in rows {
            assert_eq!(row.len(), dim, "normalizer row dim");
            for (i, &v) in row.iter().enumerate() {
                mean[i] += v;
                sq[i] += v * v;
            }
            n += 1;
        }
        assert!(n > 0, "normalizer needs data");
        let nf = n as f64;
        for i in 0..dim {
            mean[i] /= nf;
            sq[i] = (sq[i] / nf - mean[i] * mean[i]).max(0.0);
        }
        let std = sq.iter().map(|v| v.sqrt().max(1e-4)).collect();
        Self { mean, std }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn normalize(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(&v, (&m, &s))| (v - m) / s)
            .collect()
    }

    pub fn denormalize(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(&v, (&m, &s))| v * s + m)
            .collect()
    }

    /// Registers the normalizer as non-trainable parameters under `prefix`.
    pub fn register<F: Scalar>(&self, ps: &mut ParamStore<F>, prefix: &str) {
        let to_arr = |v: &[f64]| {
            ArrayD::from_shape_vec(IxDyn(&[v.len()]), v.iter().map(|&x| F::cast_from(x)).collect())
                .unwrap()
        };
        ps.insert(&format!("{prefix}.mean"), to_arr(&self.mean), false);
        ps.insert(&format!("{prefix}.std"), to_arr(&self.std), false);
    }

    /// Overwrites previously registered normalizer parameters.
    pub fn store<F: Scalar>(&self, ps: &mut ParamStore<F>, prefix: &str) {
        let to_arr = |v: &[f64]| {
            ArrayD::from_shape_vec(IxDyn(&[v.len()]), v.iter().map(|&x| F::cast_from(x)).collect())
                .unwrap()
        };
        ps.set(&format!("{prefix}.mean"), to_arr(&self.mean))
            .expect("normalizer registered");
        ps.set(&format!("{prefix}.std"), to_arr(&self.std))
            .expect("normalizer registered");
    }

    pub fn load<F: Scalar>(ps: &ParamStore<F>, prefix: &str) -> Option<Self> {
        let mean = ps.get(&format!("{prefix}.mean"))?;
        let std = ps.get(&format!("{prefix}.std"))?;
        Some(Self {
            mean: mean.iter().map(|v| v.cast_f64()).collect(),
            std: std.iter().map(|v| v.cast_f64()).collect(),
        })
    }
}
