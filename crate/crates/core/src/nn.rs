//! Small trainable building blocks shared by the embedding and classifier.

use rand::Rng;

use crate::autodiff::{ParamId, ParamStore, Tape, Var};
use crate::error::Result;

/// `x W (+ b)`.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        bias: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let w = store.add_glorot(&format!("{name}.w"), fan_in, fan_out, rng)?;
        let b = if bias {
            Some(store.add_zeros(&format!("{name}.b"), &[fan_out])?)
        } else {
            None
        };
        Ok(Self { w, b, fan_in, fan_out })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w = tape.param(store, self.w);
        let y = tape.matmul(x, w)?;
        match self.b {
            Some(b) => {
                let b = tape.param(store, b);
                tape.add_row(y, b)
            }
            None => Ok(y),
        }
    }
}

/// Two affine maps with a leaky ReLU between them.
#[derive(Debug, Clone, Copy)]
pub struct Mlp2 {
    pub first: Linear,
    pub second: Linear,
    pub slope: f64,
}

impl Mlp2 {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        widths: [usize; 3],
        slope: f64,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self {
            first: Linear::new(store, &format!("{name}.0"), widths[0], widths[1], true, rng)?,
            second: Linear::new(store, &format!("{name}.1"), widths[1], widths[2], true, rng)?,
            slope,
        })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let h = self.first.forward(tape, store, x)?;
        let h = tape.leaky_relu(h, self.slope);
        self.second.forward(tape, store, h)
    }
}
