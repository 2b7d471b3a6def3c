//! Semi-supervised classification on the sample graph: GAT features, an
//! attention-derived transition matrix, label propagation and a residual head.

mod gat;
mod labels;
mod lpa;
mod network;
mod transition;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

pub use gat::{GatLayer, GatOutput};
pub use labels::{apply_mask, cross_entropy, sel_loss, smoothed_one_hot, SelLoss, SoftLabelMatrix, LOG_CLIP};
pub use lpa::{check_reachability, lpa_closed_form, lpa_iterate, propagate_on_tape, LpaMode, LpaResult};
pub use network::{SelForward, SelNetwork};
pub use transition::{TransitionBlocks, TransitionMatrix, STOCHASTIC_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BranchLayout {
    /// Four branches of depth 1, 2, 3 and 4.
    #[default]
    Inception,
    /// Four branches of depth 4.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransitionSource {
    /// Attention of the last layer of the deepest branch.
    #[default]
    DeepestLast,
    /// Mean of every branch's last-layer attention.
    MeanLast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelConfig {
    pub heads: usize,
    pub gat_width: usize,
    pub head_hidden: usize,
    pub layout: BranchLayout,
    pub transition_source: TransitionSource,
    pub leaky_slope: f64,
    /// Multiplier on attention scores before the softmax.
    pub score_scale: f64,
    pub lambda: f64,
    pub mask_rate: f64,
    pub label_smoothing: f64,
    pub lpa_iters: usize,
    pub lpa_tol: f64,
    pub lpa_mode: LpaMode,
}

impl Default for SelConfig {
    fn default() -> Self {
        Self {
            heads: 4,
            gat_width: 128,
            head_hidden: 64,
            layout: BranchLayout::Inception,
            transition_source: TransitionSource::DeepestLast,
            leaky_slope: 0.2,
            score_scale: 1.0,
            lambda: 0.5,
            mask_rate: 0.5,
            label_smoothing: 0.1,
            lpa_iters: 20,
            lpa_tol: 1e-8,
            lpa_mode: LpaMode::Synchronous,
        }
    }
}

impl SelConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.heads > 0 && self.gat_width > 0 && self.head_hidden > 0,
            Error::Config("heads and widths must be positive".into())
        );
        ensure!(
            self.mask_rate > 0.0 && self.mask_rate < 1.0,
            Error::Config(format!("mask_rate {} outside (0, 1)", self.mask_rate))
        );
        ensure!(
            (0.0..1.0).contains(&self.label_smoothing),
            Error::Config(format!("label_smoothing {} outside [0, 1)", self.label_smoothing))
        );
        ensure!(self.lambda >= 0.0, Error::Config("lambda must be nonnegative".into()));
        ensure!(
            self.score_scale > 0.0 && self.score_scale.is_finite(),
            Error::Config("score_scale must be positive".into())
        );
        ensure!(self.lpa_iters > 0, Error::Config("lpa_iters must be positive".into()));
        Ok(())
    }
}
