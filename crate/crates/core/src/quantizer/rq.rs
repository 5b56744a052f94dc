//! Residual codebooks and greedy residual encoding.

use ndarray::{Array1, Array2, ArrayView1};

use super::{nearest, CodePath};
use crate::error::{GprError, Result};

/// One centroid matrix per level; level `l` holds `K_l` rows of dimension `d`.
#[derive(Clone, Debug, PartialEq)]
pub struct Codebook {
    levels: Vec<Array2<f64>>,
}

impl Codebook {
    pub fn new(levels: Vec<Array2<f64>>) -> Result<Self> {
        let Some(first) = levels.first() else {
            return Err(GprError::invalid("codebook needs at least one level"));
        };
        let d = first.ncols();
        for (l, m) in levels.iter().enumerate() {
            if m.nrows() == 0 {
                return Err(GprError::invalid(format!("level {l} has no centroids")));
            }
            if m.ncols() != d {
                return Err(GprError::invalid(format!(
                    "level {l} has dimension {}, expected {d}",
                    m.ncols()
                )));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(GprError::invalid(format!("level {l} has a non-finite centroid")));
            }
        }
        Ok(Codebook { levels })
    }

    pub fn dim(&self) -> usize {
        self.levels[0].ncols()
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn level_sizes(&self) -> Vec<usize> {
        self.levels.iter().map(|m| m.nrows()).collect()
    }

    pub fn level(&self, l: usize) -> &Array2<f64> {
        &self.levels[l]
    }

    pub(crate) fn level_mut(&mut self, l: usize) -> &mut Array2<f64> {
        &mut self.levels[l]
    }

    pub fn levels(&self) -> &[Array2<f64>] {
        &self.levels
    }

    /// Sum of the centroids a path selects.
    pub fn decode(&self, path: &CodePath) -> Result<Array1<f64>> {
        path.validate(&self.level_sizes())?;
        let mut out = Array1::zeros(self.dim());
        for (l, &code) in path.codes().iter().enumerate() {
            out += &self.levels[l].row(code as usize);
        }
        Ok(out)
    }
}

/// Greedy residual quantization: at each level pick the nearest centroid to
/// the running residual and subtract it. Returns the path and the summed centroids.
pub fn rq_encode(vector: ArrayView1<'_, f64>, codebook: &Codebook) -> Result<(CodePath, Array1<f64>)> {
    if vector.len() != codebook.dim() {
        return Err(GprError::invalid(format!(
            "vector dimension {} does not match codebook dimension {}",
            vector.len(),
            codebook.dim()
        )));
    }
    let (codes, recon, _) = encode_residuals(vector, codebook);
    Ok((CodePath(codes), recon))
}

/// Codes, reconstruction, and the residual entering each level.
pub(crate) fn encode_residuals(
    vector: ArrayView1<'_, f64>,
    codebook: &Codebook,
) -> (Vec<u32>, Array1<f64>, Vec<Array1<f64>>) {
    let mut residual = vector.to_owned();
    let mut recon = Array1::zeros(vector.len());
    let mut codes = Vec::with_capacity(codebook.num_levels());
    let mut residuals = Vec::with_capacity(codebook.num_levels());
    for level in codebook.levels() {
        let (code, _) = nearest(level.view(), residual.view());
        let c = level.row(code);
        residuals.push(residual.clone());
        residual -= &c;
        recon += &c;
        codes.push(code as u32);
    }
    (codes, recon, residuals)
}
