use ndarray::Array2;

use super::TokenKind;
use crate::error::{GprError, Result};

/// Additive attention mask with entries in {0, -inf}.
#[derive(Clone, Debug, PartialEq)]
pub struct HybridMask {
    matrix: Array2<f64>,
}

impl HybridMask {
    pub fn from_matrix(matrix: Array2<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.is_empty() {
            return Err(GprError::invalid("mask must be a non-empty square matrix"));
        }
        if matrix.iter().any(|&v| v != 0.0 && v != f64::NEG_INFINITY) {
            return Err(GprError::invalid("mask entries must be 0 or -inf"));
        }
        Ok(HybridMask { matrix })
    }

    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[[i, j]]
    }

    pub fn visible(&self, i: usize, j: usize) -> bool {
        self.matrix[[i, j]] == 0.0
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }
}

/// Causal visibility everywhere, plus full visibility among U/O/E tokens
/// regardless of where they sit in the sequence.
pub fn build_hybrid_mask(kinds: &[TokenKind]) -> Result<HybridMask> {
    if kinds.is_empty() {
        return Err(GprError::invalid("cannot build a mask for an empty sequence"));
    }
    let t = kinds.len();
    let matrix = Array2::from_shape_fn((t, t), |(i, j)| {
        if j <= i || (kinds[i].is_prefix() && kinds[j].is_prefix()) {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    });
    Ok(HybridMask { matrix })
}
