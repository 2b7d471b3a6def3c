use std::sync::Arc;

use rand::Rng;

use crate::autodiff::{Csr, ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::{ensure, Error, Result};
use crate::nn::Mlp2;

/// `h'(u) = MLP((1 + eps) h(u) + sum over neighbors v of h(v))`.
#[derive(Debug, Clone, Copy)]
pub struct GinLayer {
    pub eps: ParamId,
    pub mlp: Mlp2,
}

impl GinLayer {
    /// `widths = [in, hidden, out]`; `eps` starts at 0.
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, widths: [usize; 3], slope: f64, rng: &mut R) -> Result<Self> {
        Ok(Self {
            eps: store.add_zeros(&format!("{name}.eps"), &[1])?,
            mlp: Mlp2::new(store, &format!("{name}.mlp"), widths, slope, rng)?,
        })
    }

    pub fn in_width(&self) -> usize {
        self.mlp.first.fan_in
    }

    pub fn out_width(&self) -> usize {
        self.mlp.second.fan_out
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, h: Var, adj: &Arc<Csr>) -> Result<Var> {
        let shape = tape.shape(h).to_vec();
        ensure!(
            shape.len() == 2 && shape[1] == self.in_width(),
            Error::Contract(format!("GIN layer expects width {}, got shape {shape:?}", self.in_width()))
        );
        let ones = tape.constant(Tensor::full(&[adj.nnz()], 1.0));
        let agg = tape.spmm(ones, h, adj)?;
        let eps = tape.param(store, self.eps);
        let one_plus = tape.affine(eps, 1.0, 1.0);
        let own = tape.mul_scalar(h, one_plus)?;
        let z = tape.add(own, agg)?;
        self.mlp.forward(tape, store, z)
    }
}
