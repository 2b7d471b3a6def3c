//! Exact k-nearest-neighbor sample graphs over embeddings, searched with a
//! ball tree.

mod ball_tree;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::autodiff::Csr;
use crate::error::{ensure, Error, Result};

pub use ball_tree::{distance, Ball, BallKind, BallTree};

pub const DEFAULT_LEAF_SIZE: usize = 32;

/// Directed k-NN graph: node `i` points at its `k` nearest other nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleGraph {
    pub n: usize,
    pub k: usize,
    /// Per node, `(neighbor, distance)` ascending by distance then index.
    pub neighbors: Vec<Vec<(usize, f64)>>,
}

impl SampleGraph {
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(i, nb)| nb.iter().map(move |&(j, d)| (i, j, d)))
    }

    pub fn num_edges(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum()
    }

    /// Undirected support (union of both edge directions) plus self-loops,
    /// columns sorted within each row.
    pub fn symmetric_support(&self) -> Result<Csr> {
        let mut rows: Vec<Vec<usize>> = (0..self.n).map(|i| vec![i]).collect();
        for (i, j, _) in self.edges() {
            rows[i].push(j);
            rows[j].push(i);
        }
        for r in &mut rows {
            r.sort_unstable();
            r.dedup();
        }
        Csr::from_rows(self.n, &rows)
    }

    /// Writes `src,dst,distance` rows with a header line.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "src,dst,distance")?;
        for (i, j, d) in self.edges() {
            writeln!(w, "{i},{j},{d}")?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Every ordered pair plus self-loops: the support of a complete graph.
pub fn complete_support(n: usize) -> Result<Csr> {
    let rows: Vec<Vec<usize>> = (0..n).map(|_| (0..n).collect()).collect();
    Csr::from_rows(n, &rows)
}

/// Builds one ball tree and queries every point against it, excluding itself.
pub fn build_knn_graph(points: &[f64], dim: usize, k: usize) -> Result<SampleGraph> {
    build_knn_graph_with(points, dim, k, DEFAULT_LEAF_SIZE)
}

pub fn build_knn_graph_with(points: &[f64], dim: usize, k: usize, leaf_size: usize) -> Result<SampleGraph> {
    ensure!(dim >= 1 && points.len() % dim == 0, Error::Dimension("points do not match dimension".into()));
    let n = points.len() / dim;
    ensure!(n > k && k >= 1, Error::Contract(format!("k-NN graph needs n > k >= 1, got n = {n}, k = {k}")));
    let tree = BallTree::build(points, dim, leaf_size)?;
    let neighbors = (0..n)
        .into_par_iter()
        .map(|i| tree.query(tree.point(i), k, Some(i)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SampleGraph { n, k, neighbors })
}
