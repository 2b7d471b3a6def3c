use std::sync::Arc;

use crate::autodiff::Csr;
use crate::error::{ensure, Error, Result};
use crate::siggen::SignalRecord;

/// Bipartite antenna graph of one record for one IQ component.
///
/// Nodes `0..n_tx` are transmit antennas, `n_tx..n_tx + n_rx` receive
/// antennas. Every TX node links to every RX node in both directions.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemGraph {
    pub n_tx: usize,
    pub n_rx: usize,
    pub adjacency: Arc<Csr>,
    /// One feature row per node; `None` marks a TX node that takes the
    /// trainable placeholder.
    pub features: Vec<Option<Vec<f64>>>,
}

impl SystemGraph {
    pub fn n_nodes(&self) -> usize {
        self.n_tx + self.n_rx
    }

    pub fn is_tx(&self, node: usize) -> bool {
        node < self.n_tx
    }
}

/// Complete bipartite adjacency between `n_tx` and `n_rx` nodes.
pub fn bipartite_adjacency(n_tx: usize, n_rx: usize) -> Result<Csr> {
    let rows: Vec<Vec<usize>> = (0..n_tx)
        .map(|_| (n_tx..n_tx + n_rx).collect())
        .chain((0..n_rx).map(|_| (0..n_tx).collect()))
        .collect();
    Csr::from_rows(n_tx + n_rx, &rows)
}

/// Builds the I-component and Q-component graphs of a record. They share one
/// adjacency. Blind records get `record.channel.n_tx` placeholder TX nodes.
pub fn build_bipartite(rec: &SignalRecord) -> Result<(SystemGraph, SystemGraph)> {
    let n_rx = rec.rx.len();
    let n_tx = if rec.is_blind() { rec.channel.n_tx } else { rec.tx.len() };
    ensure!(
        n_tx > 0 && n_rx > 0,
        Error::Contract(format!("record {} has {n_tx} transmit and {n_rx} receive antennas", rec.id))
    );
    let adjacency = Arc::new(bipartite_adjacency(n_tx, n_rx)?);
    let feats = |pick: fn(&crate::siggen::IqStream) -> &Vec<f64>| -> Vec<Option<Vec<f64>>> {
        let tx: Vec<Option<Vec<f64>>> = if rec.is_blind() {
            vec![None; n_tx]
        } else {
            rec.tx.iter().map(|s| Some(pick(s).clone())).collect()
        };
        tx.into_iter().chain(rec.rx.iter().map(|s| Some(pick(s).clone()))).collect()
    };
    let gi = SystemGraph {
        n_tx,
        n_rx,
        adjacency: Arc::clone(&adjacency),
        features: feats(|s| &s.i),
    };
    let gq = SystemGraph {
        n_tx,
        n_rx,
        adjacency,
        features: feats(|s| &s.q),
    };
    Ok((gi, gq))
}

/// Disjoint union of several system graphs, ready for batched layers.
#[derive(Debug, Clone)]
pub struct GraphBatch {
    pub n_nodes: usize,
    pub width: usize,
    pub adjacency: Arc<Csr>,
    /// Row `b` lists the nodes of graph `b`; used for per-graph softmax and sums.
    pub segments: Arc<Csr>,
    /// Graph index of every node.
    pub graph_of: Arc<Vec<usize>>,
    /// Row-major `n_nodes x width` features, zero at placeholder rows.
    pub features: Vec<f64>,
    pub placeholder_rows: Arc<Vec<usize>>,
}

impl GraphBatch {
    pub fn new(graphs: &[&SystemGraph], width: usize) -> Result<Self> {
        ensure!(!graphs.is_empty(), Error::Contract("empty graph batch".into()));
        let n_nodes: usize = graphs.iter().map(|g| g.n_nodes()).sum();
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut seg_ptr = vec![0];
        let mut graph_of = Vec::with_capacity(n_nodes);
        let mut features = vec![0.0; n_nodes * width];
        let mut placeholder_rows = Vec::new();
        let mut offset = 0;
        for (b, g) in graphs.iter().enumerate() {
            ensure!(g.n_nodes() > 0, Error::Contract(format!("graph {b} has no nodes")));
            for u in 0..g.n_nodes() {
                col_idx.extend(g.adjacency.row(u).iter().map(|&v| v + offset));
                row_ptr.push(col_idx.len());
                graph_of.push(b);
                match &g.features[u] {
                    Some(f) => {
                        ensure!(
                            f.len() == width,
                            Error::Dimension(format!("node feature of width {} for layer width {width}", f.len()))
                        );
                        features[(offset + u) * width..(offset + u + 1) * width].copy_from_slice(f);
                    }
                    None => placeholder_rows.push(offset + u),
                }
            }
            offset += g.n_nodes();
            seg_ptr.push(offset);
        }
        Ok(Self {
            n_nodes,
            width,
            adjacency: Arc::new(Csr::new(n_nodes, n_nodes, row_ptr, col_idx)?),
            segments: Arc::new(Csr::new(graphs.len(), n_nodes, seg_ptr, (0..n_nodes).collect())?),
            graph_of: Arc::new(graph_of),
            features,
            placeholder_rows: Arc::new(placeholder_rows),
        })
    }

    pub fn n_graphs(&self) -> usize {
        self.segments.n_rows()
    }
}
