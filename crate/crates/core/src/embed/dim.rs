use rand::Rng;

use crate::autodiff::{ParamStore, Tape, Tensor, Var};
use crate::error::{ensure, Error, Result};
use crate::nn::Mlp2;
use crate::siggen::{IqStream, SignalRecord};

fn component(s: &IqStream, q: bool) -> &[f64] {
    if q {
        &s.q
    } else {
        &s.i
    }
}

/// Baseline embedding without graphs: the antenna axis is linearly
/// resampled to a fixed count, flattened, and mapped by an MLP.
#[derive(Debug, Clone, Copy)]
pub struct DimTransform {
    pub antennas: usize,
    pub length: usize,
    pub mlp: Mlp2,
}

impl DimTransform {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        antennas: usize,
        length: usize,
        hidden: usize,
        out: usize,
        slope: f64,
        rng: &mut R,
    ) -> Result<Self> {
        ensure!(antennas > 0, Error::Config("dim-transform needs at least one antenna row".into()));
        Ok(Self {
            antennas,
            length,
            mlp: Mlp2::new(store, "dim", [2 * antennas * length, hidden, out], slope, rng)?,
        })
    }

    /// `[I rows..., Q rows...]` after resampling the stream axis.
    pub fn flatten(&self, rec: &SignalRecord) -> Result<Vec<f64>> {
        let streams: Vec<&IqStream> = rec.tx.iter().chain(&rec.rx).collect();
        ensure!(!streams.is_empty(), Error::Contract(format!("record {} has no streams", rec.id)));
        ensure!(
            streams.iter().all(|s| s.len() == self.length),
            Error::Dimension(format!("record {} streams are not {} samples long", rec.id, self.length))
        );
        let s = streams.len();
        let mut out = Vec::with_capacity(2 * self.antennas * self.length);
        for q in [false, true] {
            for a in 0..self.antennas {
                let pos = if self.antennas == 1 || s == 1 {
                    0.0
                } else {
                    a as f64 * (s - 1) as f64 / (self.antennas - 1) as f64
                };
                let lo = pos.floor() as usize;
                let hi = (lo + 1).min(s - 1);
                let t = pos - lo as f64;
                let (x0, x1) = (component(streams[lo], q), component(streams[hi], q));
                out.extend(x0.iter().zip(x1).map(|(a, b)| (1.0 - t) * a + t * b));
            }
        }
        Ok(out)
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, records: &[&SignalRecord]) -> Result<Var> {
        let width = 2 * self.antennas * self.length;
        let mut data = Vec::with_capacity(records.len() * width);
        for r in records {
            data.extend(self.flatten(r)?);
        }
        let x = tape.constant(Tensor::matrix(records.len(), width, data)?);
        self.mlp.forward(tape, store, x)
    }
}
