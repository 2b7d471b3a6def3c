use rand::Rng;

use crate::autodiff::{ParamStore, ReduceKind, Tape, Var};
use crate::error::{ensure, Error, Result};
use crate::nn::Linear;

/// Squeeze-and-excitation over the two component channels {I, Q}, then a
/// gated sum and a bias-free projection to the embedding width.
#[derive(Debug, Clone, Copy)]
pub struct ChannelAttention {
    pub squeeze_down: Linear,
    pub squeeze_up: Linear,
    pub projection: Linear,
    pub slope: f64,
}

impl ChannelAttention {
    /// Reduction ratio 2 over two channels gives a one-unit bottleneck.
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, width: usize, out: usize, slope: f64, rng: &mut R) -> Result<Self> {
        Ok(Self {
            squeeze_down: Linear::new(store, &format!("{name}.excite.0"), 2, 1, true, rng)?,
            squeeze_up: Linear::new(store, &format!("{name}.excite.1"), 1, 2, true, rng)?,
            projection: Linear::new(store, &format!("{name}.project"), width, out, false, rng)?,
            slope,
        })
    }

    /// Returns `(gated sum, embedding, gates)` with shapes `B x width`,
    /// `B x out`, `B x 2`.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, v_i: Var, v_q: Var) -> Result<(Var, Var, Var)> {
        ensure!(
            tape.shape(v_i) == tape.shape(v_q),
            Error::Contract(format!("channel widths differ: {:?} vs {:?}", tape.shape(v_i), tape.shape(v_q)))
        );
        let b = tape.shape(v_i)[0];
        let si = tape.reduce(v_i, ReduceKind::Mean, Some(1))?;
        let si = tape.reshape(si, vec![b, 1])?;
        let sq = tape.reduce(v_q, ReduceKind::Mean, Some(1))?;
        let sq = tape.reshape(sq, vec![b, 1])?;
        let s = tape.concat(&[si, sq], 1)?;
        let z = self.squeeze_down.forward(tape, store, s)?;
        let z = tape.leaky_relu(z, self.slope);
        let z = self.squeeze_up.forward(tape, store, z)?;
        let gates = tape.sigmoid(z);
        let gi = tape.slice_cols(gates, 0, 1)?;
        let gi = tape.reshape(gi, vec![b])?;
        let gq = tape.slice_cols(gates, 1, 2)?;
        let gq = tape.reshape(gq, vec![b])?;
        let wi = tape.mul_col(v_i, gi)?;
        let wq = tape.mul_col(v_q, gq)?;
        let fused = tape.add(wi, wq)?;
        let out = self.projection.forward(tape, store, fused)?;
        Ok((fused, out, gates))
    }
}
