//! Dense row-major matrices of 64-bit floats.
//!
//! Everything the layer stack needs is a handful of GEMM variants and
//! elementwise maps, so this stays a plain `Vec<f64>` with explicit loops
//! rather than pulling in a linear-algebra crate. Row vectors (biases,
//! batch-norm parameters) are 1xN matrices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidDimension(format!(
                "matrix data length {} does not match {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Row vector (1xN).
    pub fn row_vector(data: Vec<f64>) -> Self {
        Self {
            rows: 1,
            cols: data.len(),
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn same_shape(&self, other: &Matrix) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
        debug_assert!(self.same_shape(other));
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Matrix) {
        debug_assert!(self.same_shape(other));
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += b;
        }
    }

    pub fn scale_assign(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    /// Adds a 1xN row vector to every row.
    pub fn add_row_broadcast(&mut self, row: &Matrix) {
        debug_assert_eq!(row.rows, 1);
        debug_assert_eq!(row.cols, self.cols);
        for r in 0..self.rows {
            let off = r * self.cols;
            for c in 0..self.cols {
                self.data[off + c] += row.data[c];
            }
        }
    }

    /// Per-column sums, returned as a 1xN row vector.
    pub fn col_sums(&self) -> Matrix {
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            let off = r * self.cols;
            for (c, acc) in out.iter_mut().enumerate() {
                *acc += self.data[off + c];
            }
        }
        Matrix::row_vector(out)
    }

    /// C = A * B with A (m x k), B (k x n).
    pub fn matmul(&self, b: &Matrix) -> Matrix {
        assert_eq!(self.cols, b.rows, "matmul shape mismatch");
        let (m, k, n) = (self.rows, self.cols, b.cols);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let a_off = i * k;
            let o_off = i * n;
            for p in 0..k {
                let a_ip = self.data[a_off + p];
                if a_ip == 0.0 {
                    continue;
                }
                let b_off = p * n;
                for j in 0..n {
                    out[o_off + j] += a_ip * b.data[b_off + j];
                }
            }
        }
        Matrix {
            rows: m,
            cols: n,
            data: out,
        }
    }

    /// C = A * B^T with A (m x k), B (n x k). Cache-friendly for row-major B.
    pub fn matmul_bt(&self, b: &Matrix) -> Matrix {
        assert_eq!(self.cols, b.cols, "matmul_bt shape mismatch");
        let (m, k, n) = (self.rows, self.cols, b.rows);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let a_row = &self.data[i * k..(i + 1) * k];
            let o_off = i * n;
            for j in 0..n {
                let b_row = &b.data[j * k..(j + 1) * k];
                let mut acc = 0.0;
                for p in 0..k {
                    acc += a_row[p] * b_row[p];
                }
                out[o_off + j] = acc;
            }
        }
        Matrix {
            rows: m,
            cols: n,
            data: out,
        }
    }

    /// C = A^T * B with A (k x m), B (k x n).
    pub fn matmul_at(&self, b: &Matrix) -> Matrix {
        assert_eq!(self.rows, b.rows, "matmul_at shape mismatch");
        let (k, m, n) = (self.rows, self.cols, b.cols);
        let mut out = vec![0.0; m * n];
        for p in 0..k {
            let a_off = p * m;
            let b_off = p * n;
            for i in 0..m {
                let a_pi = self.data[a_off + i];
                if a_pi == 0.0 {
                    continue;
                }
                let o_off = i * n;
                for j in 0..n {
                    out[o_off + j] += a_pi * b.data[b_off + j];
                }
            }
        }
        Matrix {
            rows: m,
            cols: n,
            data: out,
        }
    }
}

/// Numerically stable logistic function, clamped to the open interval (0, 1)
/// so downstream logs and gradients stay finite for any finite input.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    let p = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    p.clamp(1e-300, 1.0 - 1e-16)
}
