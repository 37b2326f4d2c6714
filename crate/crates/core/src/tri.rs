//! Packed lower-triangular matrices.

use crate::error::{DeconvError, Result};

/// Square lower-triangular matrix stored row by row; row `i` holds
/// columns `0..=i`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerTriangular {
    n: usize,
    data: Vec<f64>,
}

fn row_start(i: usize) -> usize {
    i * (i + 1) / 2
}

impl LowerTriangular {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; row_start(n)] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            *m.get_mut(i, i) = 1.0;
        }
        m
    }

    /// Build from rows; row `i` must have exactly `i + 1` entries.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(row_start(n));
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != i + 1 {
                return Err(DeconvError::Length { expected: i + 1, got: row.len() });
            }
            data.extend(row);
        }
        Ok(Self { n, data })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Entry `(i, j)`; zero above the diagonal.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j > i {
            0.0
        } else {
            self.data[row_start(i) + j]
        }
    }

    pub fn get_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        assert!(j <= i, "({i}, {j}) is above the diagonal");
        &mut self.data[row_start(i) + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[row_start(i)..row_start(i + 1)]
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).iter().sum()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|i| self.row(i).iter().zip(x).map(|(w, v)| w * v).sum())
            .collect()
    }

    pub fn scale(&mut self, c: f64) {
        self.data.iter_mut().for_each(|v| *v *= c);
    }

    pub fn add_diagonal(&mut self, c: f64) {
        for i in 0..self.n {
            *self.get_mut(i, i) += c;
        }
    }

    pub fn add_assign(&mut self, other: &LowerTriangular) {
        assert_eq!(self.n, other.n);
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += b);
    }

    /// Product `self · other`, again lower-triangular.
    pub fn matmul(&self, other: &LowerTriangular) -> LowerTriangular {
        assert_eq!(self.n, other.n);
        let mut out = LowerTriangular::zeros(self.n);
        for i in 0..self.n {
            let a = self.row(i);
            for j in 0..=i {
                let mut acc = 0.0;
                for (k, aik) in a.iter().enumerate().skip(j) {
                    acc += aik * other.get(k, j);
                }
                *out.get_mut(i, j) = acc;
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Dense row-major copy.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| (0..self.n).map(|j| self.get(i, j)).collect()).collect()
    }
}
