use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Dense row-major matrix of 64-bit reals. Rows are batch items everywhere
/// in this crate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RealMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        RealMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, Error> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "matrix data length {} does not match {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(RealMatrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, Error> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::Shape("ragged rows".into()));
            }
            data.extend_from_slice(row);
        }
        Ok(RealMatrix { rows: r, cols: c, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = RealMatrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// self (m x k) * other^T (k x n given as n x k) -> m x n.
    ///
    /// Dense layers store weights as (out x in), so the forward pass is
    /// `input.matmul_transpose(weights)`.
    pub fn matmul_transpose(&self, other: &RealMatrix) -> Result<RealMatrix, Error> {
        if self.cols != other.cols {
            return Err(Error::Shape(format!(
                "matmul_transpose: {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = RealMatrix::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let a = self.row(i);
            for j in 0..other.rows {
                let b = other.row(j);
                let mut acc = 0.0;
                for k in 0..self.cols {
                    acc += a[k] * b[k];
                }
                out.data[i * other.rows + j] = acc;
            }
        }
        Ok(out)
    }

    /// self^T (as k x m given m x k) * other (k x n) -> m... transposed-left
    /// product: result (self.cols x other.cols).
    pub fn transpose_matmul(&self, other: &RealMatrix) -> Result<RealMatrix, Error> {
        if self.rows != other.rows {
            return Err(Error::Shape(format!(
                "transpose_matmul: {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = RealMatrix::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let a = self.row(k);
            let b = other.row(k);
            for i in 0..self.cols {
                let ai = a[i];
                if ai == 0.0 {
                    continue;
                }
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for j in 0..other.cols {
                    dst[j] += ai * b[j];
                }
            }
        }
        Ok(out)
    }

    /// self (m x k) * other (k x n).
    pub fn matmul(&self, other: &RealMatrix) -> Result<RealMatrix, Error> {
        if self.cols != other.rows {
            return Err(Error::Shape(format!(
                "matmul: {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = RealMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let a = self.row(i);
            for k in 0..self.cols {
                let aik = a[k];
                if aik == 0.0 {
                    continue;
                }
                let src = &other.data[k * other.cols..(k + 1) * other.cols];
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for j in 0..other.cols {
                    dst[j] += aik * src[j];
                }
            }
        }
        Ok(out)
    }

    pub fn add_row_vector(&mut self, v: &[f64]) -> Result<(), Error> {
        if v.len() != self.cols {
            return Err(Error::Shape(format!(
                "bias length {} vs {} cols",
                v.len(),
                self.cols
            )));
        }
        for r in 0..self.rows {
            let row = self.row_mut(r);
            for (x, b) in row.iter_mut().zip(v) {
                *x += b;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, a: f64) {
        for v in &mut self.data {
            *v *= a;
        }
    }

    pub fn add_assign(&mut self, other: &RealMatrix) -> Result<(), Error> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Shape(format!(
                "add: {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    /// Horizontal concatenation of equally tall matrices.
    pub fn hconcat(parts: &[&RealMatrix]) -> Result<RealMatrix, Error> {
        let rows = parts.first().map_or(0, |m| m.rows);
        if parts.iter().any(|m| m.rows != rows) {
            return Err(Error::Shape("hconcat: row count mismatch".into()));
        }
        let cols: usize = parts.iter().map(|m| m.cols).sum();
        let mut out = RealMatrix::zeros(rows, cols);
        for r in 0..rows {
            let dst = out.row_mut(r);
            let mut off = 0;
            for m in parts {
                dst[off..off + m.cols].copy_from_slice(m.row(r));
                off += m.cols;
            }
        }
        Ok(out)
    }

    /// Columns [lo, hi) as a new matrix.
    pub fn col_slice(&self, lo: usize, hi: usize) -> RealMatrix {
        assert!(lo <= hi && hi <= self.cols);
        let mut out = RealMatrix::zeros(self.rows, hi - lo);
        for r in 0..self.rows {
            out.row_mut(r).copy_from_slice(&self.row(r)[lo..hi]);
        }
        out
    }

    /// Gather a subset of rows.
    pub fn select_rows(&self, idx: &[usize]) -> RealMatrix {
        let mut out = RealMatrix::zeros(idx.len(), self.cols);
        for (r, &i) in idx.iter().enumerate() {
            out.row_mut(r).copy_from_slice(self.row(i));
        }
        out
    }
}

/// One-hot encode integer labels into an (n x card) matrix.
pub fn one_hot(labels: &[usize], card: usize) -> Result<RealMatrix, Error> {
    let mut m = RealMatrix::zeros(labels.len(), card);
    for (r, &l) in labels.iter().enumerate() {
        if l >= card {
            return Err(Error::Label(format!("label {} out of range [0,{})", l, card)));
        }
        m.set(r, l, 1.0);
    }
    Ok(m)
}
