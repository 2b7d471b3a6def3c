//! Fixed-length embeddings of antenna systems: two bipartite graphs (I and
//! Q) through shared GIN layers, set2set readout, and channel attention.

mod antenna;
mod attention;
mod dim;
mod gin;
mod graph;
mod set2set;

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::{ensure, Error, Result};
use crate::siggen::SignalRecord;

pub use antenna::estimate_tx_antennas;
pub use attention::ChannelAttention;
pub use dim::DimTransform;
pub use gin::GinLayer;
pub use graph::{bipartite_adjacency, build_bipartite, GraphBatch, SystemGraph};
pub use set2set::{Set2Set, Set2SetTrace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedConfig {
    /// Node feature width (samples per stream after preprocessing).
    pub input_length: usize,
    pub gin_hidden: usize,
    /// Node width after each GIN layer.
    pub node_width: usize,
    pub set2set_steps: usize,
    /// Output embedding width `d`.
    pub embed_dim: usize,
    /// Use one set of GIN/set2set parameters for both I and Q graphs.
    pub share_components: bool,
    pub leaky_slope: f64,
    /// Eigenvalue ratio used to count transmit antennas of blind records.
    pub antenna_tau: f64,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self {
            input_length: 1024,
            gin_hidden: 256,
            node_width: 128,
            set2set_steps: 3,
            embed_dim: 128,
            share_components: true,
            leaky_slope: 0.2,
            antenna_tau: 0.05,
        }
    }
}

impl EmbedConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.input_length >= 2 && self.gin_hidden > 0 && self.node_width > 0 && self.embed_dim > 0,
            Error::Config("embedding widths must be positive".into())
        );
        ensure!(self.set2set_steps >= 1, Error::Config("set2set_steps must be at least 1".into()));
        ensure!(
            self.antenna_tau > 0.0 && self.antenna_tau < 1.0,
            Error::Config("antenna_tau must lie in (0, 1)".into())
        );
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Branch {
    gin: [GinLayer; 2],
    readout: Set2Set,
}

impl Branch {
    fn new<R: Rng>(store: &mut ParamStore, name: &str, cfg: &EmbedConfig, rng: &mut R) -> Result<Self> {
        let (l, h, w, a) = (cfg.input_length, cfg.gin_hidden, cfg.node_width, cfg.leaky_slope);
        Ok(Self {
            gin: [
                GinLayer::new(store, &format!("{name}.gin0"), [l, h, w], a, rng)?,
                GinLayer::new(store, &format!("{name}.gin1"), [w, w, w], a, rng)?,
            ],
            readout: Set2Set::new(store, &format!("{name}.set2set"), w, cfg.set2set_steps, a, rng)?,
        })
    }
}

/// Parameters of the embedding network, stored in a shared [`ParamStore`].
#[derive(Debug, Clone)]
pub struct EmbedNet {
    pub cfg: EmbedConfig,
    branch_i: Branch,
    branch_q: Branch,
    placeholder: ParamId,
    pub attention: ChannelAttention,
}

/// Forward values of one batch.
#[derive(Debug, Clone)]
pub struct EmbedOutput {
    /// `B x d`.
    pub embedding: Var,
    /// `B x 2` channel gates `(g_I, g_Q)`.
    pub gates: Var,
    pub readout_i: Var,
    pub readout_q: Var,
    pub trace_i: Set2SetTrace,
    pub trace_q: Set2SetTrace,
}

/// Embedding of one record.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    pub id: u64,
    pub values: Vec<f64>,
}

impl EmbedNet {
    pub fn new<R: Rng>(cfg: EmbedConfig, store: &mut ParamStore, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let branch_i = Branch::new(store, "embed.i", &cfg, rng)?;
        let branch_q = if cfg.share_components {
            branch_i
        } else {
            Branch::new(store, "embed.q", &cfg, rng)?
        };
        let limit = (3.0 / cfg.input_length as f64).sqrt();
        // Placeholder rows read -1 after centering, so this starts near 0.
        let ph: Vec<f64> = (0..cfg.input_length).map(|_| 1.0 + rng.gen_range(-limit..limit)).collect();
        let placeholder = store.add("embed.tx_placeholder", Tensor::matrix(1, cfg.input_length, ph)?)?;
        let attention = ChannelAttention::new(
            store,
            "embed.attention",
            2 * cfg.node_width,
            cfg.embed_dim,
            cfg.leaky_slope,
            rng,
        )?;
        Ok(Self {
            cfg,
            branch_i,
            branch_q,
            placeholder,
            attention,
        })
    }

    fn node_features(&self, tape: &mut Tape, store: &ParamStore, batch: &GraphBatch) -> Result<Var> {
        let x = tape.constant(Tensor::matrix(batch.n_nodes, batch.width, batch.features.clone())?);
        // [0, 1] samples are mapped to [-1, 1].
        let x = tape.affine(x, 2.0, -1.0);
        if batch.placeholder_rows.is_empty() {
            return Ok(x);
        }
        let ph = tape.param(store, self.placeholder);
        let copies = tape.gather_rows(ph, Arc::new(vec![0; batch.placeholder_rows.len()]))?;
        let placed = tape.scatter_rows(copies, Arc::clone(&batch.placeholder_rows), batch.n_nodes)?;
        tape.add(x, placed)
    }

    fn run_branch(&self, tape: &mut Tape, store: &ParamStore, branch: &Branch, batch: &GraphBatch) -> Result<(Var, Set2SetTrace)> {
        let x = self.node_features(tape, store, batch)?;
        let h = branch.gin[0].forward(tape, store, x, &batch.adjacency)?;
        let h = tape.leaky_relu(h, self.cfg.leaky_slope);
        let h = branch.gin[1].forward(tape, store, h, &batch.adjacency)?;
        branch.readout.forward(tape, store, h, &batch.segments, &batch.graph_of)
    }

    /// Records the forward pass of a batch of preprocessed records.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, records: &[&SignalRecord]) -> Result<EmbedOutput> {
        ensure!(!records.is_empty(), Error::Contract("empty record batch".into()));
        let mut gi = Vec::with_capacity(records.len());
        let mut gq = Vec::with_capacity(records.len());
        for r in records {
            let (a, b) = build_bipartite(r)?;
            gi.push(a);
            gq.push(b);
        }
        let bi = GraphBatch::new(&gi.iter().collect::<Vec<_>>(), self.cfg.input_length)?;
        let bq = GraphBatch::new(&gq.iter().collect::<Vec<_>>(), self.cfg.input_length)?;
        let (readout_i, trace_i) = self.run_branch(tape, store, &self.branch_i, &bi)?;
        let (readout_q, trace_q) = self.run_branch(tape, store, &self.branch_q, &bq)?;
        let (_, embedding, gates) = self.attention.forward(tape, store, readout_i, readout_q)?;
        Ok(EmbedOutput {
            embedding,
            gates,
            readout_i,
            readout_q,
            trace_i,
            trace_q,
        })
    }

    /// Gradient-free embeddings of many records, computed in parallel chunks.
    pub fn embed_all(&self, store: &ParamStore, records: &[SignalRecord], chunk: usize) -> Result<Vec<Vec<f64>>> {
        use rayon::prelude::*;
        let chunks: Vec<Vec<Vec<f64>>> = records
            .par_chunks(chunk.max(1))
            .map(|c| {
                let mut tape = Tape::new();
                let refs: Vec<&SignalRecord> = c.iter().collect();
                let out = self.forward(&mut tape, store, &refs)?;
                let t = tape.value(out.embedding);
                Ok((0..t.rows()).map(|i| t.row(i).to_vec()).collect())
            })
            .collect::<Result<_>>()?;
        Ok(chunks.into_iter().flatten().collect())
    }
}

/// Embeds a single preprocessed record.
pub fn embed_sample(rec: &SignalRecord, net: &EmbedNet, store: &ParamStore) -> Result<EmbeddingVector> {
    let mut tape = Tape::new();
    let out = net.forward(&mut tape, store, &[rec])?;
    let values = tape.value(out.embedding).data().to_vec();
    ensure!(
        values.iter().all(|v| v.is_finite()),
        Error::Invariant(format!("non-finite embedding for record {}", rec.id))
    );
    Ok(EmbeddingVector { id: rec.id, values })
}
