use std::sync::Arc;

use rand::Rng;

use crate::autodiff::{Csr, ParamId, ParamStore, Tape, Var};
use crate::error::{ensure, Error, Result};

/// Multi-head dot-product graph attention.
///
/// Each head scores an edge by the leaky-ReLU of the dot product of the two
/// projected endpoints, normalises over the neighbourhood, and aggregates the
/// projected neighbours. Head outputs are averaged before the ELU.
#[derive(Debug, Clone)]
pub struct GatLayer {
    pub heads: Vec<ParamId>,
    pub in_dim: usize,
    pub out_dim: usize,
    pub slope: f64,
    /// Multiplies every score before the softmax.
    pub score_scale: f64,
}

#[derive(Debug, Clone)]
pub struct GatOutput {
    /// `n x out_dim`.
    pub features: Var,
    /// Head-averaged attention per stored support entry.
    pub edge_weights: Var,
    pub head_weights: Vec<Var>,
}

impl GatLayer {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        heads: usize,
        slope: f64,
        rng: &mut R,
    ) -> Result<Self> {
        ensure!(heads > 0, Error::Config("GAT needs at least one head".into()));
        let heads = (0..heads)
            .map(|h| store.add_glorot(&format!("{name}.head{h}"), in_dim, out_dim, rng))
            .collect::<Result<_>>()?;
        Ok(Self {
            heads,
            in_dim,
            out_dim,
            slope,
            score_scale: 1.0,
        })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var, support: &Arc<Csr>) -> Result<GatOutput> {
        let shape = tape.shape(x).to_vec();
        ensure!(
            shape.len() == 2 && shape[1] == self.in_dim && shape[0] == support.n_rows(),
            Error::Dimension(format!(
                "GAT layer {}->{} got input {shape:?} on {} nodes",
                self.in_dim,
                self.out_dim,
                support.n_rows()
            ))
        );
        let m = self.heads.len() as f64;
        let mut msg_sum: Option<Var> = None;
        let mut att_sum: Option<Var> = None;
        let mut head_weights = Vec::with_capacity(self.heads.len());
        for &w in &self.heads {
            let w = tape.param(store, w);
            let z = tape.matmul(x, w)?;
            let s = tape.edge_dot(z, support)?;
            let s = if self.score_scale == 1.0 { s } else { tape.scale(s, self.score_scale) };
            let e = tape.leaky_relu(s, self.slope);
            let a = tape.segment_softmax(e, support)?;
            let msg = tape.spmm(a, z, support)?;
            msg_sum = Some(match msg_sum {
                Some(acc) => tape.add(acc, msg)?,
                None => msg,
            });
            att_sum = Some(match att_sum {
                Some(acc) => tape.add(acc, a)?,
                None => a,
            });
            head_weights.push(a);
        }
        let mean_msg = tape.scale(msg_sum.expect("at least one head"), 1.0 / m);
        let features = tape.elu(mean_msg);
        let edge_weights = tape.scale(att_sum.expect("at least one head"), 1.0 / m);
        Ok(GatOutput {
            features,
            edge_weights,
            head_weights,
        })
    }
}
