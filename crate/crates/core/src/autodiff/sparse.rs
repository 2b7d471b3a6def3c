use crate::error::{ensure, Error, Result};

/// Compressed sparse row structure (pattern only; values live on the tape).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Csr {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    row_of: Vec<usize>,
}

impl Csr {
    pub fn new(n_rows: usize, n_cols: usize, row_ptr: Vec<usize>, col_idx: Vec<usize>) -> Result<Self> {
        ensure!(
            row_ptr.len() == n_rows + 1 && row_ptr[0] == 0,
            Error::Dimension(format!("row_ptr of length {} for {n_rows} rows", row_ptr.len()))
        );
        ensure!(
            row_ptr.windows(2).all(|w| w[0] <= w[1]) && row_ptr[n_rows] == col_idx.len(),
            Error::Contract("row_ptr must be nondecreasing and end at nnz".into())
        );
        ensure!(
            col_idx.iter().all(|&c| c < n_cols),
            Error::Dimension(format!("column index out of range for {n_cols} columns"))
        );
        let mut row_of = Vec::with_capacity(col_idx.len());
        for r in 0..n_rows {
            row_of.extend(std::iter::repeat(r).take(row_ptr[r + 1] - row_ptr[r]));
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            row_of,
        })
    }

    /// Builds from per-row neighbor lists (kept in the given order).
    pub fn from_rows(n_cols: usize, rows: &[Vec<usize>]) -> Result<Self> {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        for r in rows {
            col_idx.extend_from_slice(r);
            row_ptr.push(col_idx.len());
        }
        Self::new(rows.len(), n_cols, row_ptr, col_idx)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    /// Row index of every stored entry.
    pub fn row_of(&self) -> &[usize] {
        &self.row_of
    }

    pub fn row_range(&self, r: usize) -> std::ops::Range<usize> {
        self.row_ptr[r]..self.row_ptr[r + 1]
    }

    pub fn row(&self, r: usize) -> &[usize] {
        &self.col_idx[self.row_range(r)]
    }

    /// Position of entry `(r, c)`, if stored.
    pub fn find(&self, r: usize, c: usize) -> Option<usize> {
        self.row_range(r).find(|&e| self.col_idx[e] == c)
    }
}
