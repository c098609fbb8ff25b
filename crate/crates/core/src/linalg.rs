//! Dense row-major vectors and matrices in double precision.
//!
//! Only what the rest of the crate needs: products, an LU-based inverse with a
//! 1-norm condition estimate, and the max-shifted softmax / log-sum-exp pair.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pivots smaller than this, relative to the largest entry, count as zero.
pub const SINGULAR_PIVOT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DenseVector {
    entries: Vec<f64>,
}

impl DenseVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("vector"));
        }
        Ok(Self { entries })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            entries: vec![0.0; dim],
        }
    }

    pub(crate) fn from_vec_unchecked(entries: Vec<f64>) -> Self {
        Self { entries }
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.entries
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.entries
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.entries
    }

    pub fn get(&self, i: usize) -> f64 {
        self.entries[i]
    }

    pub fn sum(&self) -> f64 {
        self.entries.iter().sum()
    }

    pub fn dot(&self, other: &DenseVector) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::Dimension(format!(
                "dot of {} and {}",
                self.dim(),
                other.dim()
            )));
        }
        Ok(self.entries.iter().zip(&other.entries).map(|(a, b)| a * b).sum())
    }

    /// Index of the largest entry; the lowest index wins ties.
    pub fn argmax(&self) -> usize {
        argmax(&self.entries)
    }
}

impl std::ops::Index<usize> for DenseVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.entries[i]
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
}

impl DenseMatrix {
    pub fn from_row_major(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} entries for a {rows}x{cols} matrix",
                entries.len()
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix"));
        }
        Ok(Self {
            rows,
            cols,
            entries,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        Self::from_row_major(rows.len(), cols, rows.concat())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            entries: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.entries[i * n + i] = 1.0;
        }
        m
    }

    pub(crate) fn from_vec_unchecked(rows: usize, cols: usize, entries: Vec<f64>) -> Self {
        debug_assert_eq!(entries.len(), rows * cols);
        Self {
            rows,
            cols,
            entries,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.entries[r * self.cols + c]
    }

    pub(crate) fn set(&mut self, r: usize, c: usize, v: f64) {
        self.entries[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.entries[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.entries
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.entries
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.entries[c * self.rows + r] = self.get(r, c);
            }
        }
        out
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.rows {
            return Err(Error::Dimension(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                let src = other.row(k);
                let dst = &mut out.entries[i * other.cols..(i + 1) * other.cols];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        Ok(out)
    }

    /// `a·self + b·other`, entrywise.
    pub fn combine(&self, a: f64, other: &DenseMatrix, b: f64) -> Result<DenseMatrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Dimension("combine of unequal shapes".into()));
        }
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Ok(DenseMatrix::from_vec_unchecked(self.rows, self.cols, entries))
    }

    /// Maximum absolute column sum.
    pub fn norm_1(&self) -> f64 {
        (0..self.cols)
            .map(|c| (0..self.rows).map(|r| self.get(r, c).abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows)
            .map(|r| self.row(r).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

pub fn matvec(m: &DenseMatrix, v: &DenseVector) -> Result<DenseVector> {
    if m.cols() != v.dim() {
        return Err(Error::Dimension(format!(
            "{}x{} matrix times vector of dim {}",
            m.rows(),
            m.cols(),
            v.dim()
        )));
    }
    let out = (0..m.rows())
        .map(|r| m.row(r).iter().zip(v.as_slice()).map(|(a, b)| a * b).sum())
        .collect();
    Ok(DenseVector::from_vec_unchecked(out))
}

/// An inverse together with its 1-norm condition estimate `‖M‖₁·‖M⁻¹‖₁`.
#[derive(Debug, Clone)]
pub struct Inverse {
    pub matrix: DenseMatrix,
    pub condition: f64,
}

/// Inverts a square matrix by LU factorisation with partial pivoting.
pub fn solve_or_invert(m: &DenseMatrix) -> Result<Inverse> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "cannot invert a {}x{} matrix",
            m.rows(),
            m.cols()
        )));
    }
    let n = m.rows();
    let scale = m.as_slice().iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    if n == 0 {
        return Ok(Inverse {
            matrix: DenseMatrix::zeros(0, 0),
            condition: 1.0,
        });
    }
    if scale == 0.0 {
        return Err(Error::SingularMatrix {
            condition: f64::INFINITY,
        });
    }

    let mut lu = m.as_slice().to_vec();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut tiny_pivot = false;
    for k in 0..n {
        let (p, pivot_abs) = (k..n)
            .map(|r| (r, lu[r * n + k].abs()))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pivot_abs == 0.0 {
            return Err(Error::SingularMatrix {
                condition: f64::INFINITY,
            });
        }
        if pivot_abs < SINGULAR_PIVOT_TOL * scale {
            tiny_pivot = true;
        }
        if p != k {
            for c in 0..n {
                lu.swap(k * n + c, p * n + c);
            }
            perm.swap(k, p);
        }
        let pivot = lu[k * n + k];
        for r in k + 1..n {
            let factor = lu[r * n + k] / pivot;
            lu[r * n + k] = factor;
            if factor != 0.0 {
                for c in k + 1..n {
                    lu[r * n + c] -= factor * lu[k * n + c];
                }
            }
        }
    }

    // Solve L U x = P e_j column by column.
    let mut inv = vec![0.0; n * n];
    let mut col = vec![0.0; n];
    for j in 0..n {
        for (i, slot) in col.iter_mut().enumerate() {
            *slot = if perm[i] == j { 1.0 } else { 0.0 };
        }
        for i in 0..n {
            let mut s = col[i];
            for k in 0..i {
                s -= lu[i * n + k] * col[k];
            }
            col[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = col[i];
            for k in i + 1..n {
                s -= lu[i * n + k] * col[k];
            }
            col[i] = s / lu[i * n + i];
        }
        for i in 0..n {
            inv[i * n + j] = col[i];
        }
    }

    if inv.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularMatrix {
            condition: f64::INFINITY,
        });
    }
    let inverse = DenseMatrix::from_vec_unchecked(n, n, inv);
    let condition = m.norm_1() * inverse.norm_1();
    if tiny_pivot {
        return Err(Error::SingularMatrix { condition });
    }
    Ok(Inverse {
        matrix: inverse,
        condition,
    })
}

pub fn softmax(z: &DenseVector) -> DenseVector {
    DenseVector::from_vec_unchecked(softmax_slice(z.as_slice()))
}

pub(crate) fn softmax_slice(z: &[f64]) -> Vec<f64> {
    let mut out = z.to_vec();
    softmax_in_place(&mut out);
    out
}

pub(crate) fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in z.iter_mut() {
        *v /= total;
    }
}

pub fn log_sum_exp(z: &DenseVector) -> f64 {
    let z = z.as_slice();
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if z.is_empty() {
        return f64::NEG_INFINITY;
    }
    max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}
