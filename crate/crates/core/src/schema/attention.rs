use ndarray::{Array2, ArrayView2};

use super::HybridMask;
use crate::error::{GprError, Result};

/// Row-wise `softmax(Q Kᵀ / sqrt(d) + M)`.
pub fn attention_weights(q: ArrayView2<'_, f64>, k: ArrayView2<'_, f64>, mask: &HybridMask) -> Result<Array2<f64>> {
    let (t, d) = q.dim();
    if d == 0 || k.dim() != (t, d) || mask.len() != t {
        return Err(GprError::invalid(format!(
            "attention shapes disagree: Q {:?}, K {:?}, mask {}",
            q.dim(),
            k.dim(),
            mask.len()
        )));
    }
    let scale = 1.0 / (d as f64).sqrt();
    let mut w = q.dot(&k.t()) * scale + mask.matrix();
    for (i, mut row) in w.outer_iter_mut().enumerate() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        if max == f64::NEG_INFINITY {
            return Err(GprError::invalid(format!("attention row {i} is fully masked")));
        }
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    Ok(w)
}

/// `softmax(Q Kᵀ / sqrt(d) + M) V ⊙ U`.
pub fn hybrid_attention_forward(
    q: ArrayView2<'_, f64>,
    k: ArrayView2<'_, f64>,
    v: ArrayView2<'_, f64>,
    u: ArrayView2<'_, f64>,
    mask: &HybridMask,
) -> Result<Array2<f64>> {
    if v.dim() != q.dim() || u.dim() != q.dim() {
        return Err(GprError::invalid(format!(
            "attention shapes disagree: Q {:?}, V {:?}, U {:?}",
            q.dim(),
            v.dim(),
            u.dim()
        )));
    }
    let w = attention_weights(q, k, mask)?;
    Ok(w.dot(&v) * u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{build_hybrid_mask, TokenKind};
    use ndarray::array;

    #[test]
    fn single_token_returns_modulated_value() {
        let mask = build_hybrid_mask(&[TokenKind::I]).unwrap();
        let out = hybrid_attention_forward(
            array![[0.3, -1.0]].view(),
            array![[2.0, 0.5]].view(),
            array![[1.5, 2.0]].view(),
            array![[2.0, -1.0]].view(),
            &mask,
        )
        .unwrap();
        assert_eq!(out, array![[3.0, -2.0]]);
    }

    #[test]
    fn unit_modulation_and_open_mask_is_plain_attention() {
        let q = array![[1.0, 0.0], [0.0, 1.0]];
        let k = array![[1.0, 1.0], [0.0, 2.0]];
        let v = array![[1.0, 2.0], [3.0, 4.0]];
        let mask = build_hybrid_mask(&[TokenKind::U, TokenKind::O]).unwrap();
        let out = hybrid_attention_forward(q.view(), k.view(), v.view(), Array2::ones((2, 2)).view(), &mask).unwrap();
        let s = 2f64.sqrt();
        // row 0 scores (1, 0)/sqrt2, row 1 scores (1, 2)/sqrt2
        for (i, (a, b)) in [(1.0 / s, 0.0), (1.0 / s, 2.0 / s)].into_iter().enumerate() {
            let (ea, eb) = (f64::exp(a), f64::exp(b));
            let (wa, wb) = (ea / (ea + eb), eb / (ea + eb));
            for c in 0..2 {
                assert!((out[[i, c]] - (wa * v[[0, c]] + wb * v[[1, c]])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn masked_values_do_not_leak() {
        let mask = build_hybrid_mask(&[TokenKind::U, TokenKind::I, TokenKind::I]).unwrap();
        let q = array![[0.1, 0.2], [0.3, -0.4], [0.5, 0.6]];
        let v = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
        let mut v2 = v.clone();
        v2.row_mut(2).fill(100.0);
        let u = Array2::ones((3, 2));
        let a = hybrid_attention_forward(q.view(), q.view(), v.view(), u.view(), &mask).unwrap();
        let b = hybrid_attention_forward(q.view(), q.view(), v2.view(), u.view(), &mask).unwrap();
        assert_eq!(a.row(0), b.row(0));
        assert_eq!(a.row(1), b.row(1));
    }

    #[test]
    fn fully_masked_row_and_shape_errors() {
        let m = HybridMask::from_matrix(array![[f64::NEG_INFINITY, f64::NEG_INFINITY], [0.0, 0.0]]).unwrap();
        let x = Array2::ones((2, 1));
        assert!(hybrid_attention_forward(x.view(), x.view(), x.view(), x.view(), &m).is_err());
        let y = Array2::ones((2, 2));
        let ok = build_hybrid_mask(&[TokenKind::U, TokenKind::I]).unwrap();
        assert!(hybrid_attention_forward(x.view(), x.view(), y.view(), x.view(), &ok).is_err());
    }
}
