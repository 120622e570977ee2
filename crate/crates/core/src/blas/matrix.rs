use std::fmt;

use super::BlasError;

/// Column-major `f64` matrix with an explicit leading dimension.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    ld: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix {}x{} (ld {})", self.rows, self.cols, self.ld)?;
        if self.rows * self.cols <= 64 {
            for i in 0..self.rows {
                f.write_str("\n ")?;
                for j in 0..self.cols {
                    write!(f, " {:>10.4}", self.get(i, j))?;
                }
            }
        }
        Ok(())
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::zeros_with_ld(rows, cols, rows)
    }

    /// # Panics
    /// If `ld < rows`.
    pub fn zeros_with_ld(rows: usize, cols: usize, ld: usize) -> Self {
        assert!(ld >= rows, "leading dimension {ld} < rows {rows}");
        Self {
            rows,
            cols,
            ld,
            data: vec![0.0; ld * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for j in 0..cols {
            for i in 0..rows {
                m.data[i + j * rows] = f(i, j);
            }
        }
        m
    }

    /// Wraps column-major storage with `ld == rows`.
    pub fn from_col_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, BlasError> {
        if data.len() != rows * cols {
            return Err(BlasError::BadStorage {
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Self {
            rows,
            cols,
            ld: rows,
            data,
        })
    }

    /// Builds a matrix from row-major nested rows, e.g. `[[1, 2], [3, 4]]`.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, BlasError> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, |r| r.as_ref().len());
        if let Some(bad) = rows.iter().find(|r| r.as_ref().len() != n_cols) {
            return Err(BlasError::BadStorage {
                expected: n_cols,
                actual: bad.as_ref().len(),
            });
        }
        Ok(Self::from_fn(n_rows, n_cols, |i, j| rows[i].as_ref()[j]))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn ld(&self) -> usize {
        self.ld
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i + j * self.ld]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i + j * self.ld] = v;
    }

    /// Raw storage, `ld * cols` elements.
    pub fn storage(&self) -> &[f64] {
        &self.data
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.ld..j * self.ld + self.rows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        let ld = self.ld;
        let rows = self.rows;
        &mut self.data[j * ld..j * ld + rows]
    }

    /// Elements in column-major order without leading-dimension padding.
    pub fn to_packed(&self) -> Vec<f64> {
        if self.ld == self.rows {
            return self.data.clone();
        }
        (0..self.cols).flat_map(|j| self.col(j).iter().copied()).collect()
    }

    /// Overwrites the logical elements from packed column-major values.
    pub fn fill_from_packed(&mut self, packed: &[f64]) {
        assert_eq!(packed.len(), self.rows * self.cols);
        let rows = self.rows;
        for j in 0..self.cols {
            self.col_mut(j).copy_from_slice(&packed[j * rows..(j + 1) * rows]);
        }
    }

    pub fn packed_bytes(&self) -> u64 {
        (self.rows * self.cols * 8) as u64
    }

    /// Bitwise equality of the logical elements, ignoring padding.
    pub fn bitwise_eq(&self, other: &Matrix) -> bool {
        self.rows == other.rows
            && self.cols == other.cols
            && (0..self.cols).all(|j| {
                self.col(j)
                    .iter()
                    .zip(other.col(j))
                    .all(|(a, b)| a.to_bits() == b.to_bits())
            })
    }
}
