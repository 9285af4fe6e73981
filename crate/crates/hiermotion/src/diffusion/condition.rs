//! Condition containers: named modality tokens plus optional per-frame
//! vectors aligned with sequence positions.

use super::DiffusionError;
use ndarray::{Array2, Array3};

/// Conditioning for one sample: an ordered list of named vectors (each
/// becomes one token) and optionally one condition vector per sequence
/// position.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionSet {
    pub tokens: Vec<(String, Vec<f64>)>,
    pub per_frame: Option<Vec<Vec<f64>>>,
}

impl ConditionSet {
    pub fn new(tokens: Vec<(String, Vec<f64>)>) -> Self {
        Self {
            tokens,
            per_frame: None,
        }
    }

    pub fn with_per_frame(mut self, per_frame: Vec<Vec<f64>>) -> Self {
        self.per_frame = Some(per_frame);
        self
    }

    pub fn token(&self, name: &str) -> Option<&[f64]> {
        self.tokens
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    /// Deterministic byte serialization (names and little-endian floats in
    /// fixed order).
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for (name, vals) in &self.tokens {
            out.extend_from_slice(name.as_bytes());
            out.push(0);
            for v in vals {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        if let Some(pf) = &self.per_frame {
            out.extend_from_slice(b"per_frame");
            out.push(0);
            for row in pf {
                for v in row {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        out
    }
}

/// A batch of condition sets stacked into dense arrays, validated against
/// the model's expected token names/dims.
#[derive(Debug, Clone)]
pub struct CondBatch {
    /// One (batch, dim) array per condition token, in model token order.
    pub tokens: Vec<Array2<f64>>,
    /// (batch, seq, dim) per-frame conditions when the model uses them.
    pub per_frame: Option<Array3<f64>>,
}

impl CondBatch {
    pub fn batch_size(&self) -> usize {
        self.tokens
            .first()
            .map(|t| t.shape()[0])
            .or_else(|| self.per_frame.as_ref().map(|p| p.shape()[0]))
            .unwrap_or(0)
    }

    /// Stacks per-sample conditions, checking names, dims and per-frame
    /// lengths against the expected spec.
    pub fn stack(
        sets: &[&ConditionSet],
        expected_tokens: &[(String, usize)],
        per_frame_dim: Option<usize>,
        seq_len: usize,
    ) -> Result<Self, DiffusionError> {
        let b = sets.len();
        if b == 0 {
            return Err(DiffusionError::ConditionMismatch("empty batch".into()));
        }
        let mut tokens = Vec::with_capacity(expected_tokens.len());
        for (name, dim) in expected_tokens {
            let mut arr = Array2::<f64>::zeros((b, *dim));
            for (i, set) in sets.iter().enumerate() {
                let vals = set.token(name).ok_or_else(|| {
                    DiffusionError::ConditionMismatch(format!("missing token {name:?}"))
                })?;
                if vals.len() != *dim {
                    return Err(DiffusionError::ConditionMismatch(format!(
                        "token {name:?} has dim {}, expected {dim}",
                        vals.len()
                    )));
                }
                for (j, &v) in vals.iter().enumerate() {
                    arr[(i, j)] = v;
                }
            }
            tokens.push(arr);
        }
        let per_frame = match per_frame_dim {
            None => None,
            Some(dim) => {
                let mut arr = Array3::<f64>::zeros((b, seq_len, dim));
                for (i, set) in sets.iter().enumerate() {
                    let pf = set.per_frame.as_ref().ok_or_else(|| {
                        DiffusionError::ConditionMismatch("missing per-frame conditions".into())
                    })?;
                    if pf.len() != seq_len {
                        return Err(DiffusionError::ConditionMismatch(format!(
                            "per-frame count {} != sequence length {seq_len}",
                            pf.len()
                        )));
                    }
                    for (s, row) in pf.iter().enumerate() {
                        if row.len() != dim {
                            return Err(DiffusionError::ConditionMismatch(format!(
                                "per-frame dim {} != {dim}",
                                row.len()
                            )));
                        }
                        for (j, &v) in row.iter().enumerate() {
                            arr[(i, s, j)] = v;
                        }
                    }
                }
                Some(arr)
            }
        };
        Ok(Self { tokens, per_frame })
    }
}
