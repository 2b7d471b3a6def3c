use std::sync::Arc;

use rand::Rng;

use crate::autodiff::{Csr, ParamStore, Tape, Var};
use crate::error::{ensure, Error, Result};
use crate::nn::{Linear, Mlp2};

use super::gat::GatLayer;
use super::labels::SoftLabelMatrix;
use super::lpa::propagate_on_tape;
use super::{BranchLayout, SelConfig, TransitionSource};

/// Parallel GAT branches, a projected skip, and a residual MLP head.
#[derive(Debug, Clone)]
pub struct SelNetwork {
    pub cfg: SelConfig,
    pub in_dim: usize,
    pub classes: usize,
    pub branches: Vec<Vec<GatLayer>>,
    pub skip: Linear,
    pub head: Mlp2,
}

#[derive(Debug, Clone)]
pub struct SelForward {
    /// Branch mean plus skip, `n x gat_width`.
    pub features: Var,
    /// `n x C` unconstrained head output.
    pub residual: Var,
    /// Edge weights that define `P`.
    pub transition: Var,
    /// Head-averaged attention of every layer, branch by branch.
    pub layer_weights: Vec<Var>,
    /// Propagated soft labels, `n x C`; absent when no label input is given.
    pub f_lpa: Option<Var>,
}

impl SelNetwork {
    pub fn new<R: Rng>(cfg: SelConfig, in_dim: usize, classes: usize, store: &mut ParamStore, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let depths: Vec<usize> = match cfg.layout {
            BranchLayout::Inception => vec![1, 2, 3, 4],
            BranchLayout::Uniform => vec![4; 4],
        };
        let g = cfg.gat_width;
        let mut branches = Vec::with_capacity(depths.len());
        for (b, &depth) in depths.iter().enumerate() {
            let mut layers = Vec::with_capacity(depth);
            for l in 0..depth {
                let input = if l == 0 { in_dim } else { g };
                let mut layer = GatLayer::new(store, &format!("sel.branch{b}.gat{l}"), input, g, cfg.heads, cfg.leaky_slope, rng)?;
                layer.score_scale = cfg.score_scale;
                layers.push(layer);
            }
            branches.push(layers);
        }
        Ok(Self {
            skip: Linear::new(store, "sel.skip", in_dim, g, false, rng)?,
            head: Mlp2::new(store, "sel.head", [g, cfg.head_hidden, classes], cfg.leaky_slope, rng)?,
            cfg,
            in_dim,
            classes,
            branches,
        })
    }

    /// Runs the branches, the skip and the head. With `labels`, also
    /// propagates them through the attention-derived transition matrix.
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        x: Var,
        support: &Arc<Csr>,
        labels: Option<&SoftLabelMatrix>,
    ) -> Result<SelForward> {
        ensure!(
            tape.shape(x).get(1) == Some(&self.in_dim),
            Error::Dimension(format!("classifier expects width {}, got {:?}", self.in_dim, tape.shape(x)))
        );
        let mut layer_weights = Vec::new();
        let mut sum: Option<Var> = None;
        let mut last = Vec::with_capacity(self.branches.len());
        for layers in &self.branches {
            let mut h = x;
            let mut w = None;
            for layer in layers {
                let out = layer.forward(tape, store, h, support)?;
                h = out.features;
                layer_weights.push(out.edge_weights);
                w = Some(out.edge_weights);
            }
            last.push(w.expect("branches are nonempty"));
            sum = Some(match sum {
                Some(s) => tape.add(s, h)?,
                None => h,
            });
        }
        let mean = tape.scale(sum.expect("four branches"), 1.0 / self.branches.len() as f64);
        let skip = self.skip.forward(tape, store, x)?;
        let features = tape.add(mean, skip)?;
        let residual = self.head.forward(tape, store, features)?;
        let transition = match self.cfg.transition_source {
            TransitionSource::DeepestLast => {
                let deepest = (0..self.branches.len()).max_by_key(|&b| (self.branches[b].len(), b)).expect("branches");
                last[deepest]
            }
            TransitionSource::MeanLast => {
                let mut acc = last[0];
                for &w in &last[1..] {
                    acc = tape.add(acc, w)?;
                }
                tape.scale(acc, 1.0 / last.len() as f64)
            }
        };
        let f_lpa = match labels {
            Some(soft) => Some(propagate_on_tape(
                tape,
                transition,
                support,
                &soft.f,
                &soft.labeled,
                self.cfg.lpa_iters,
                self.cfg.lpa_tol,
            )?),
            None => None,
        };
        Ok(SelForward {
            features,
            residual,
            transition,
            layer_weights,
            f_lpa,
        })
    }
}
