use std::sync::Arc;

use nalgebra::DMatrix;

use crate::autodiff::Csr;
use crate::error::{ensure, Error, Result};

/// Row tolerance for stochasticity checks.
pub const STOCHASTIC_TOL: f64 = 1e-10;

/// Sparse row-stochastic transition matrix over a support pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    pub support: Arc<Csr>,
    pub values: Vec<f64>,
}

/// Dense blocks of `P` under a labeled / unlabeled partition. Rows and
/// columns follow ascending node order within each part.
#[derive(Debug, Clone)]
pub struct TransitionBlocks {
    pub labeled: Vec<usize>,
    pub unlabeled: Vec<usize>,
    pub ll: DMatrix<f64>,
    pub lu: DMatrix<f64>,
    pub ul: DMatrix<f64>,
    pub uu: DMatrix<f64>,
}

/// First row whose entries are negative or do not sum to one.
fn bad_row(support: &Csr, values: &[f64], tol: f64) -> Option<(usize, f64)> {
    (0..support.n_rows()).find_map(|i| {
        let r = &values[support.row_range(i)];
        let s: f64 = r.iter().sum();
        ((s - 1.0).abs() > tol || r.iter().any(|&v| v < 0.0 || !v.is_finite())).then_some((i, s))
    })
}

impl TransitionMatrix {
    /// Wraps head-averaged attention weights. They are already row-stochastic,
    /// so any violation is an internal error.
    pub fn from_edge_weights(values: Vec<f64>, support: Arc<Csr>) -> Result<Self> {
        ensure!(
            values.len() == support.nnz() && support.n_rows() == support.n_cols(),
            Error::Dimension(format!("{} weights for {} support entries", values.len(), support.nnz()))
        );
        if let Some((i, s)) = bad_row(&support, &values, STOCHASTIC_TOL) {
            return Err(Error::Invariant(format!("transition row {i} sums to {s}")));
        }
        Ok(Self { support, values })
    }

    /// Builds from a dense matrix, keeping the nonzero pattern.
    pub fn from_dense(p: &DMatrix<f64>) -> Result<Self> {
        let n = p.nrows();
        let rows: Vec<Vec<usize>> = (0..n).map(|i| (0..p.ncols()).filter(|&j| p[(i, j)] != 0.0).collect()).collect();
        let support = Arc::new(Csr::from_rows(p.ncols(), &rows)?);
        let values = rows.iter().enumerate().flat_map(|(i, r)| r.iter().map(move |&j| p[(i, j)])).collect();
        Self::from_edge_weights(values, support)
    }

    pub fn n(&self) -> usize {
        self.support.n_rows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.support.find(i, j).map_or(0.0, |e| self.values[e])
    }

    /// Contract check used by consumers that accept an external `P`.
    pub fn check_stochastic(&self) -> Result<()> {
        match bad_row(&self.support, &self.values, STOCHASTIC_TOL) {
            Some((i, s)) => Err(Error::Contract(format!("row {i} of P sums to {s}"))),
            None => Ok(()),
        }
    }

    pub fn dense(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for e in self.support.row_range(i) {
                m[(i, self.support.col_idx()[e])] = self.values[e];
            }
        }
        m
    }

    pub fn blocks(&self, is_labeled: &[bool]) -> Result<TransitionBlocks> {
        ensure!(
            is_labeled.len() == self.n(),
            Error::Dimension(format!("{} labeled flags for {} nodes", is_labeled.len(), self.n()))
        );
        let labeled: Vec<usize> = (0..self.n()).filter(|&i| is_labeled[i]).collect();
        let unlabeled: Vec<usize> = (0..self.n()).filter(|&i| !is_labeled[i]).collect();
        let block = |r: &[usize], c: &[usize]| DMatrix::from_fn(r.len(), c.len(), |a, b| self.get(r[a], c[b]));
        Ok(TransitionBlocks {
            ll: block(&labeled, &labeled),
            lu: block(&labeled, &unlabeled),
            ul: block(&unlabeled, &labeled),
            uu: block(&unlabeled, &unlabeled),
            labeled,
            unlabeled,
        })
    }
}
