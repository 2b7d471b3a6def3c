use std::sync::Arc;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{ensure, Error, Result};

/// Probability floor applied before taking logs.
pub const LOG_CLIP: f64 = 1e-12;

/// One-hot row mixed with the uniform distribution.
pub fn smoothed_one_hot(class: usize, classes: usize, eps: f64) -> Vec<f64> {
    let mut row = vec![eps / classes as f64; classes];
    row[class] += 1.0 - eps;
    row
}

/// LPA input `F = [Y_L; Y_U]`: smoothed one-hot rows for visible labels,
/// uniform rows elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftLabelMatrix {
    pub classes: usize,
    pub smoothing: f64,
    pub f: Tensor,
    pub labeled: Vec<bool>,
}

impl SoftLabelMatrix {
    pub fn new(visible: &[Option<usize>], classes: usize, smoothing: f64) -> Result<Self> {
        ensure!(
            (0.0..1.0).contains(&smoothing),
            Error::Config(format!("label smoothing {smoothing} outside [0, 1)"))
        );
        let mut data = Vec::with_capacity(visible.len() * classes);
        for v in visible {
            match *v {
                Some(c) => {
                    ensure!(c < classes, Error::Contract(format!("label {c} out of {classes} classes")));
                    data.extend(smoothed_one_hot(c, classes, smoothing));
                }
                None => data.extend(std::iter::repeat(1.0 / classes as f64).take(classes)),
            }
        }
        Ok(Self {
            classes,
            smoothing,
            f: Tensor::matrix(visible.len(), classes, data)?,
            labeled: visible.iter().map(Option::is_some).collect(),
        })
    }

    /// Every row is a probability vector.
    pub fn check(&self) -> Result<()> {
        for i in 0..self.f.rows() {
            let r = self.f.row(i);
            let s: f64 = r.iter().sum();
            ensure!(
                (s - 1.0).abs() <= 1e-10 && r.iter().all(|&v| v >= 0.0),
                Error::Invariant(format!("soft label row {i} sums to {s}"))
            );
        }
        Ok(())
    }

    /// Masked rows must be unlabeled and exactly uniform.
    pub fn check_no_leak(&self, masked: &[usize]) -> Result<()> {
        let u = 1.0 / self.classes as f64;
        for &i in masked {
            ensure!(
                !self.labeled[i] && self.f.row(i).iter().all(|&v| v == u),
                Error::Invariant(format!("masked node {i} leaks into the propagation input"))
            );
        }
        Ok(())
    }
}

/// Hides `round(rate * L)` of the visible labels. Returns the propagation
/// labels and the hidden (evaluation) nodes in ascending order.
pub fn apply_mask(labels: &[Option<usize>], rate: f64, seed: u64) -> Result<(Vec<Option<usize>>, Vec<usize>)> {
    ensure!(rate > 0.0 && rate < 1.0, Error::Config(format!("mask rate {rate} outside (0, 1)")));
    let labeled: Vec<usize> = (0..labels.len()).filter(|&i| labels[i].is_some()).collect();
    let count = (rate * labeled.len() as f64).round() as usize;
    // The count is fixed by the rate, so a degenerate draw cannot be fixed by resampling.
    ensure!(
        count > 0 && count < labeled.len(),
        Error::Contract(format!(
            "mask rate {rate} over {} labels hides {count}; need some hidden and some visible",
            labeled.len()
        ))
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut masked: Vec<usize> = sample(&mut rng, labeled.len(), count).into_iter().map(|k| labeled[k]).collect();
    masked.sort_unstable();
    let mut input = labels.to_vec();
    for &i in &masked {
        input[i] = None;
    }
    Ok((input, masked))
}

/// Mean over `rows` of `-sum_k t_k log(max(p_k, clip))`, with `targets`
/// holding one row per entry of `rows`.
pub fn cross_entropy(tape: &mut Tape, probs: Var, targets: &Tensor, rows: &Arc<Vec<usize>>) -> Result<Var> {
    ensure!(!rows.is_empty(), Error::Contract("cross-entropy over an empty row set".into()));
    ensure!(
        targets.shape() == [rows.len(), tape.shape(probs)[1]],
        Error::Dimension(format!("targets {:?} for {} rows", targets.shape(), rows.len()))
    );
    let p = tape.gather_rows(probs, Arc::clone(rows))?;
    let p = tape.clamp_min(p, LOG_CLIP);
    let lp = tape.log(p)?;
    let t = tape.constant(targets.clone());
    let prod = tape.mul(lp, t)?;
    let total = tape.sum(prod);
    Ok(tape.scale(total, -1.0 / rows.len() as f64))
}

/// Terms of the combined objective.
#[derive(Debug, Clone, Copy)]
pub struct SelLoss {
    pub total: Var,
    pub cross_entropy: Var,
    pub residual: Var,
}

/// `CE(F_lpa) + lambda * MSE(residual, onehot - F_lpa)` over `rows`. The
/// residual target is a constant.
pub fn sel_loss(
    tape: &mut Tape,
    f_lpa: Var,
    residual: Var,
    labels: &[usize],
    rows: &Arc<Vec<usize>>,
    smoothing: f64,
    lambda: f64,
) -> Result<SelLoss> {
    ensure!(
        labels.len() == rows.len(),
        Error::Dimension(format!("{} labels for {} rows", labels.len(), rows.len()))
    );
    ensure!(!rows.is_empty(), Error::Contract("loss over an empty evaluation set".into()));
    let c = tape.shape(f_lpa)[1];
    let targets = Tensor::matrix(
        rows.len(),
        c,
        labels.iter().flat_map(|&l| smoothed_one_hot(l, c, smoothing)).collect(),
    )?;
    let ce = cross_entropy(tape, f_lpa, &targets, rows)?;
    let fv = tape.value(f_lpa);
    let mut goal = Vec::with_capacity(rows.len() * c);
    for (&i, &l) in rows.iter().zip(labels) {
        goal.extend(fv.row(i).iter().enumerate().map(|(k, &p)| f64::from(u8::from(k == l)) - p));
    }
    let goal = tape.constant(Tensor::matrix(rows.len(), c, goal)?);
    let r = tape.gather_rows(residual, Arc::clone(rows))?;
    let diff = tape.sub(r, goal)?;
    let sq = tape.mul(diff, diff)?;
    let mse = tape.mean(sq);
    let weighted = tape.scale(mse, lambda);
    let total = tape.add(ce, weighted)?;
    Ok(SelLoss {
        total,
        cross_entropy: ce,
        residual: mse,
    })
}
