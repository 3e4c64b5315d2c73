use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::LinalgError;

/// Dense row-major f64 matrix. Columns hold samples throughout this crate,
/// so an m×n data matrix is m features by n samples.
///
/// Invariants: at least one row and one column, every entry finite.
/// Checked constructors enforce both; arithmetic that could only violate
/// finiteness through overflow is left unchecked.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        if rows == 0 || cols == 0 {
            return Err(LinalgError::ShapeMismatch(format!(
                "matrix dimensions must be at least 1x1, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(LinalgError::ShapeMismatch(format!(
                "expected {} values for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(LinalgError::NonFiniteInput);
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, LinalgError> {
        if rows.is_empty() {
            return Err(LinalgError::ShapeMismatch("no rows given".into()));
        }
        let cols = rows[0].len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(LinalgError::ShapeMismatch("ragged rows".into()));
        }
        Self::from_vec(rows.len(), cols, rows.concat())
    }

    /// Unchecked construction for internal results whose shape is known good.
    pub(crate) fn from_parts(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert!(rows > 0 && cols > 0 && data.len() == rows * cols);
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "zero-sized matrix");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
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
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_vec(&self, i: usize) -> Vec<f64> {
        self.row(i).to_vec()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    /// self (m×k) times other (k×n). Each output entry is an independent dot
    /// product, so results on a column subset match the full product bitwise.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix, LinalgError> {
        if self.cols != other.rows {
            return Err(LinalgError::ShapeMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let lhs = self.row(i);
            for j in 0..other.cols {
                let mut acc = 0.0;
                for (k, &l) in lhs.iter().enumerate() {
                    acc += l * other[(k, j)];
                }
                out[(i, j)] = acc;
            }
        }
        Ok(out)
    }

    /// selfᵀ times other, without materializing the transpose.
    pub fn transpose_matmul(&self, other: &Matrix) -> Result<Matrix, LinalgError> {
        if self.rows != other.rows {
            return Err(LinalgError::ShapeMismatch(format!(
                "cannot multiply ({}x{})ᵀ by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.cols, other.cols);
        for i in 0..self.cols {
            for j in 0..other.cols {
                let mut acc = 0.0;
                for k in 0..self.rows {
                    acc += self[(k, i)] * other[(k, j)];
                }
                out[(i, j)] = acc;
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if v.len() != self.cols {
            return Err(LinalgError::ShapeMismatch(format!(
                "cannot multiply {}x{} by vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// Column j scaled by factors[j].
    pub fn scale_columns(&self, factors: &[f64]) -> Result<Matrix, LinalgError> {
        if factors.len() != self.cols {
            return Err(LinalgError::ShapeMismatch(format!(
                "{} scale factors for {} columns",
                factors.len(),
                self.cols
            )));
        }
        let mut out = self.clone();
        for i in 0..self.rows {
            for (j, &f) in factors.iter().enumerate() {
                out[(i, j)] *= f;
            }
        }
        Ok(out)
    }

    pub fn select_columns(&self, indices: &[usize]) -> Result<Matrix, LinalgError> {
        if indices.is_empty() {
            return Err(LinalgError::EmptyInput);
        }
        if let Some(&bad) = indices.iter().find(|&&j| j >= self.cols) {
            return Err(LinalgError::ShapeMismatch(format!(
                "column index {bad} out of range for {} columns",
                self.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, indices.len());
        for i in 0..self.rows {
            for (jj, &j) in indices.iter().enumerate() {
                out[(i, jj)] = self[(i, j)];
            }
        }
        Ok(out)
    }

    pub fn hconcat(parts: &[&Matrix]) -> Result<Matrix, LinalgError> {
        let first = parts.first().ok_or(LinalgError::EmptyInput)?;
        let rows = first.rows;
        if parts.iter().any(|p| p.rows != rows) {
            return Err(LinalgError::ShapeMismatch(
                "row counts differ across concatenated blocks".into(),
            ));
        }
        let cols: usize = parts.iter().map(|p| p.cols).sum();
        let mut out = Matrix::zeros(rows, cols);
        for i in 0..rows {
            let mut off = 0;
            for p in parts {
                out.data[i * cols + off..i * cols + off + p.cols].copy_from_slice(p.row(i));
                off += p.cols;
            }
        }
        Ok(out)
    }

    /// Appends a constant-one row (bias absorption for closed-form solves).
    pub fn with_ones_row(&self) -> Matrix {
        let mut data = Vec::with_capacity((self.rows + 1) * self.cols);
        data.extend_from_slice(&self.data);
        data.extend(std::iter::repeat_n(1.0, self.cols));
        Matrix::from_parts(self.rows + 1, self.cols, data)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix::from_parts(
            self.rows,
            self.cols,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }

    /// Adds bias[i] to every entry of row i.
    pub fn add_col_vector(&self, bias: &[f64]) -> Result<Matrix, LinalgError> {
        if bias.len() != self.rows {
            return Err(LinalgError::ShapeMismatch(format!(
                "bias length {} does not match {} rows",
                bias.len(),
                self.rows
            )));
        }
        let mut out = self.clone();
        for (i, &b) in bias.iter().enumerate() {
            for j in 0..self.cols {
                out[(i, j)] += b;
            }
        }
        Ok(out)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!(self.rows, other.rows);
        assert_eq!(self.cols, other.cols);
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

// Wire format: row-major nested arrays.
impl Serialize for Matrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq((0..self.rows).map(|i| self.row(i)))
    }
}

impl<'de> Deserialize<'de> for Matrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(deserializer)?;
        Matrix::from_rows(&rows).map_err(|e| D::Error::custom(format!("invalid matrix: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite() {
        let err = Matrix::from_vec(1, 2, vec![1.0, f64::NAN]).unwrap_err();
        assert!(matches!(err, LinalgError::NonFiniteInput));
        let err = Matrix::from_vec(1, 2, vec![f64::INFINITY, 0.0]).unwrap_err();
        assert!(matches!(err, LinalgError::NonFiniteInput));
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(Matrix::from_vec(0, 2, vec![]).is_err());
        assert!(Matrix::from_vec(2, 2, vec![1.0; 3]).is_err());
        assert!(Matrix::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn matmul_against_hand_product() {
        let a = Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let b = Matrix::from_vec(3, 2, vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.values(), &[58.0, 64.0, 139.0, 154.0]);
        assert!(a.matmul(&a).is_err());
    }

    #[test]
    fn transpose_matmul_matches_explicit() {
        let a = Matrix::from_vec(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let b = Matrix::from_vec(3, 2, vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
        let fast = a.transpose_matmul(&b).unwrap();
        let slow = a.transpose().matmul(&b).unwrap();
        assert_eq!(fast, slow);
    }

    #[test]
    fn hconcat_and_select_are_inverse() {
        let a = Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Matrix::from_vec(2, 1, vec![5.0, 6.0]).unwrap();
        let cat = Matrix::hconcat(&[&a, &b]).unwrap();
        assert_eq!(cat.cols(), 3);
        assert_eq!(cat.column(2), vec![5.0, 6.0]);
        let back = cat.select_columns(&[0, 1]).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn ones_row_appended_last() {
        let a = Matrix::from_vec(1, 3, vec![2.0, 4.0, 6.0]).unwrap();
        let aug = a.with_ones_row();
        assert_eq!(aug.rows(), 2);
        assert_eq!(aug.row(1), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn serde_round_trip_is_bitwise() {
        let a = Matrix::from_vec(2, 2, vec![0.1, -2.5e-17, 3.0, f64::MIN_POSITIVE]).unwrap();
        let text = serde_json::to_string(&a).unwrap();
        let back: Matrix = serde_json::from_str(&text).unwrap();
        assert_eq!(a.values(), back.values());
    }
}
