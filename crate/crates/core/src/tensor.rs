//! Dense double-precision tensors (row-major) and the raw matrix kernels the
//! tape engine is built on.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense numeric array, row-major, double precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        let numel: usize = shape.iter().product();
        assert_eq!(numel, data.len(), "shape {:?} does not match data length {}", shape, data.len());
        Tensor { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Tensor { shape, data: vec![0.0; numel] }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor { shape: vec![1], data: vec![v] }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor { shape: vec![data.len()], data }
    }

    /// Build a 2D tensor from rows. All rows must have equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Tensor { shape: vec![r, c], data }
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.numel() == 1
    }

    /// (rows, cols) of a 2D tensor; 1D tensors are treated as a single row.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape.len() {
            1 => Ok((1, self.shape[0])),
            2 => Ok((self.shape[0], self.shape[1])),
            _ => Err(Error::invalid(format!("expected 1D or 2D tensor, got shape {:?}", self.shape))),
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let (_, c) = self.dims2().expect("row() on non-2D tensor");
        &self.data[i * c..(i + 1) * c]
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        let c = self.shape[self.shape.len() - 1];
        self.data[i * c + j]
    }
}

// ── Raw kernels ──────────────────────────────────────────────────────

/// C[m,n] = A[m,k] @ B[k,n]. Skips zero multiplicands, so exact-zero
/// weights (masked attention columns) contribute nothing, bit-for-bit.
pub(crate) fn mm(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let a_ip = a[i * k + p];
            if a_ip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for j in 0..n {
                orow[j] += a_ip * brow[j];
            }
        }
    }
    out
}

/// C[m,n] = A[m,k] @ B[n,k]^T.
pub(crate) fn mm_nt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            let mut s = 0.0;
            for p in 0..k {
                s += arow[p] * brow[p];
            }
            out[i * n + j] = s;
        }
    }
    out
}

/// C[k,n] = A[m,k]^T @ B[m,n].
pub(crate) fn mm_tn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let a_ip = a[i * k + p];
            if a_ip == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for j in 0..n {
                orow[j] += a_ip * brow[j];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernels_agree_on_small_matrices() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2x3
        let b = [7.0, 8.0, 9.0, 10.0, 11.0, 12.0]; // 3x2
        let c = mm(&a, &b, 2, 3, 2);
        assert_eq!(c, vec![58.0, 64.0, 139.0, 154.0]);

        // A @ B == A @ (B^T)^T via mm_nt with B stored transposed
        let bt = [7.0, 9.0, 11.0, 8.0, 10.0, 12.0]; // 2x3 = B^T
        assert_eq!(mm_nt(&a, &bt, 2, 3, 2), c);

        // A^T @ A
        let ata = mm_tn(&a, &a, 2, 3, 3);
        assert_eq!(ata, vec![17.0, 22.0, 27.0, 22.0, 29.0, 36.0, 27.0, 36.0, 45.0]);
    }

    #[test]
    fn from_rows_is_row_major() {
        let t = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert_eq!(t.shape, vec![2, 2]);
        assert_eq!(t.at(1, 0), 3.0);
    }
}
