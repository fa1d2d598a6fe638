//! Dense row-major matrices and the row-stochastic assignment matrix.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Dense row-major `rows x cols` matrix of `f64`.
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
        check_dim(rows * cols, data.len())?;
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            check_dim(c, row.len())?;
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: r,
            cols: c,
            data,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn add_at(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] += v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn check_shape(&self, rows: usize, cols: usize) -> Result<()> {
        check_dim(rows, self.rows)?;
        check_dim(cols, self.cols)
    }

    /// `self += other`.
    pub fn add_assign(&mut self, other: &Matrix) -> Result<()> {
        other.check_shape(self.rows, self.cols)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        let mut out = self.clone();
        out.add_assign(other)?;
        Ok(out)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        other.check_shape(self.rows, self.cols)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    /// Entrywise max-abs norm.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Entrywise 1-norm.
    pub fn l1(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).sum()
    }

    /// Frobenius inner product.
    pub fn dot(&self, other: &Matrix) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    /// Returns the matrix with columns reordered so that output column `c`
    /// is input column `perm[c]`.
    pub fn permute_cols(&self, perm: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for (c, &src) in perm.iter().enumerate() {
                out.set(i, c, self.get(i, src));
            }
        }
        out
    }
}

/// A point of the multi-simplex: nonnegative entries, every row sums to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Matrix", into = "Matrix")]
pub struct AssignmentMatrix(Matrix);

/// Row-sum tolerance accepted when validating an assignment.
pub const ROW_SUM_TOL: f64 = 1e-9;

impl AssignmentMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        for i in 0..m.rows() {
            let row = m.row(i);
            if row.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
                return Err(Error::Domain(format!(
                    "row {i} has a negative or non-finite entry"
                )));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::Domain(format!("row {i} sums to {s}, expected 1")));
            }
        }
        Ok(Self(m))
    }

    pub fn uniform(rows: usize, cols: usize) -> Self {
        Self(Matrix::filled(rows, cols, 1.0 / cols as f64))
    }

    /// Builds an assignment without validating it. Callers guarantee the
    /// multi-simplex property (closed-form learner outputs, projections).
    pub(crate) fn from_matrix_unchecked(m: Matrix) -> Self {
        Self(m)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn rows(&self) -> usize {
        self.0.rows()
    }

    pub fn cols(&self) -> usize {
        self.0.cols()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0.get(i, j)
    }
}

impl TryFrom<Matrix> for AssignmentMatrix {
    type Error = Error;
    fn try_from(m: Matrix) -> Result<Self> {
        AssignmentMatrix::new(m)
    }
}

impl From<AssignmentMatrix> for Matrix {
    fn from(a: AssignmentMatrix) -> Matrix {
        a.0
    }
}

pub(crate) fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

pub(crate) fn sub_vec(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn assignment_validation() {
        assert!(AssignmentMatrix::new(Matrix::from_rows(&[vec![0.5, 0.5]]).unwrap()).is_ok());
        assert!(AssignmentMatrix::new(Matrix::from_rows(&[vec![0.6, 0.5]]).unwrap()).is_err());
        assert!(AssignmentMatrix::new(Matrix::from_rows(&[vec![1.5, -0.5]]).unwrap()).is_err());
    }

    #[test]
    fn permute_columns() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        assert_eq!(m.permute_cols(&[2, 0, 1]).row(0), &[3.0, 1.0, 2.0]);
    }
}
