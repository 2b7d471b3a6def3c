use std::sync::Arc;

use rand::Rng;

use crate::autodiff::{Csr, ParamStore, Tape, Tensor, Var};
use crate::error::{ensure, Error, Result};
use crate::nn::{Linear, Mlp2};

/// Order-invariant readout: an LSTM controller attends over node memories
/// `m_i = MLP(x_i)` for `steps` rounds and returns `[q_T, r_T]`.
#[derive(Debug, Clone, Copy)]
pub struct Set2Set {
    pub memory: Mlp2,
    pub input_gates: Linear,
    pub hidden_gates: Linear,
    pub width: usize,
    pub steps: usize,
}

/// Per-step values kept for inspection.
#[derive(Debug, Clone)]
pub struct Set2SetTrace {
    pub logits: Vec<Var>,
    pub weights: Vec<Var>,
}

impl Set2Set {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, width: usize, steps: usize, slope: f64, rng: &mut R) -> Result<Self> {
        ensure!(steps >= 1, Error::Config("set2set needs at least one step".into()));
        Ok(Self {
            memory: Mlp2::new(store, &format!("{name}.memory"), [width, width, width], slope, rng)?,
            input_gates: Linear::new(store, &format!("{name}.lstm.x"), 2 * width, 4 * width, true, rng)?,
            hidden_gates: Linear::new(store, &format!("{name}.lstm.h"), width, 4 * width, false, rng)?,
            width,
            steps,
        })
    }

    /// `x` holds all nodes of a batch; `segments` row `b` lists graph `b`'s
    /// nodes and `graph_of[i]` is node `i`'s graph. Returns `B x 2 width`.
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        x: Var,
        segments: &Arc<Csr>,
        graph_of: &Arc<Vec<usize>>,
    ) -> Result<(Var, Set2SetTrace)> {
        let d = self.width;
        let b = segments.n_rows();
        ensure!(segments.nnz() > 0, Error::Contract("set2set over an empty graph".into()));
        ensure!(
            tape.shape(x) == [segments.n_cols(), d],
            Error::Contract(format!("set2set expects {} x {d} node features, got {:?}", segments.n_cols(), tape.shape(x)))
        );
        let m = self.memory.forward(tape, store, x)?;
        let mut q_star = tape.constant(Tensor::zeros(&[b, 2 * d]));
        let mut h = tape.constant(Tensor::zeros(&[b, d]));
        let mut c = tape.constant(Tensor::zeros(&[b, d]));
        let mut trace = Set2SetTrace {
            logits: Vec::with_capacity(self.steps),
            weights: Vec::with_capacity(self.steps),
        };
        for _ in 0..self.steps {
            let gx = self.input_gates.forward(tape, store, q_star)?;
            let gh = self.hidden_gates.forward(tape, store, h)?;
            let gates = tape.add(gx, gh)?;
            let i = tape.slice_cols(gates, 0, d)?;
            let i = tape.sigmoid(i);
            let f = tape.slice_cols(gates, d, 2 * d)?;
            let f = tape.sigmoid(f);
            let g = tape.slice_cols(gates, 2 * d, 3 * d)?;
            let g = tape.tanh(g);
            let o = tape.slice_cols(gates, 3 * d, 4 * d)?;
            let o = tape.sigmoid(o);
            let fc = tape.mul(f, c)?;
            let ig = tape.mul(i, g)?;
            c = tape.add(fc, ig)?;
            let tc = tape.tanh(c);
            h = tape.mul(o, tc)?;

            let q_nodes = tape.gather_rows(h, Arc::clone(graph_of))?;
            let e = tape.row_dot(m, q_nodes)?;
            let a = tape.segment_softmax(e, segments)?;
            let r = tape.spmm(a, m, segments)?;
            q_star = tape.concat(&[h, r], 1)?;
            trace.logits.push(e);
            trace.weights.push(a);
        }
        Ok((q_star, trace))
    }
}
