use std::collections::VecDeque;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Csr, Tape, Tensor, Var};
use crate::error::{ensure, Error, Result};

use super::transition::TransitionMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LpaMode {
    /// Every unlabeled row is updated from the previous iterate.
    #[default]
    Synchronous,
    /// Unlabeled rows are swept in a random order, each using the latest rows.
    Asynchronous,
}

#[derive(Debug, Clone)]
pub struct LpaResult {
    /// `n x C`.
    pub f: Tensor,
    pub iterations: usize,
    pub converged: bool,
}

fn check_f0(p: &TransitionMatrix, f0: &Tensor, labeled: &[bool]) -> Result<usize> {
    let (n, c) = f0.dims2()?;
    ensure!(
        n == p.n() && labeled.len() == n,
        Error::Dimension(format!("F0 has {n} rows, P {} and {} labeled flags", p.n(), labeled.len()))
    );
    Ok(c)
}

fn propagate_row(p: &TransitionMatrix, f: &[f64], c: usize, u: usize, out: &mut [f64]) {
    out.iter_mut().for_each(|x| *x = 0.0);
    for e in p.support.row_range(u) {
        let j = p.support.col_idx()[e];
        let w = p.values[e];
        out.iter_mut().zip(&f[j * c..(j + 1) * c]).for_each(|(o, x)| *o += w * x);
    }
}

/// Iterates `f_U <- P_UU f_U + P_UL Y_L` with labeled rows held fixed, until
/// the largest entry change drops below `tol` or `max_iters` is reached.
pub fn lpa_iterate(
    p: &TransitionMatrix,
    f0: &Tensor,
    labeled: &[bool],
    max_iters: usize,
    mode: LpaMode,
    tol: f64,
    seed: u64,
) -> Result<LpaResult> {
    p.check_stochastic()?;
    let c = check_f0(p, f0, labeled)?;
    let mut f = f0.data().to_vec();
    let mut unlabeled: Vec<usize> = (0..p.n()).filter(|&i| !labeled[i]).collect();
    if unlabeled.is_empty() {
        return Ok(LpaResult {
            f: f0.clone(),
            iterations: 0,
            converged: true,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut row = vec![0.0; c];
    let mut next = f.clone();
    for it in 1..=max_iters {
        let mut delta = 0.0f64;
        match mode {
            LpaMode::Synchronous => {
                for &u in &unlabeled {
                    propagate_row(p, &f, c, u, &mut row);
                    for (k, &v) in row.iter().enumerate() {
                        delta = delta.max((v - f[u * c + k]).abs());
                    }
                    next[u * c..(u + 1) * c].copy_from_slice(&row);
                }
                std::mem::swap(&mut f, &mut next);
            }
            LpaMode::Asynchronous => {
                unlabeled.shuffle(&mut rng);
                for &u in &unlabeled {
                    propagate_row(p, &f, c, u, &mut row);
                    for (k, &v) in row.iter().enumerate() {
                        delta = delta.max((v - f[u * c + k]).abs());
                    }
                    f[u * c..(u + 1) * c].copy_from_slice(&row);
                }
            }
        }
        if delta < tol {
            return Ok(LpaResult {
                f: Tensor::matrix(p.n(), c, f)?,
                iterations: it,
                converged: true,
            });
        }
    }
    Ok(LpaResult {
        f: Tensor::matrix(p.n(), c, f)?,
        iterations: max_iters,
        converged: false,
    })
}

/// Fails with the first unlabeled node that cannot reach any labeled node
/// along positive entries of `P`.
pub fn check_reachability(p: &TransitionMatrix, labeled: &[bool]) -> Result<()> {
    let n = p.n();
    let mut rev: Vec<Vec<usize>> = vec![Vec::new(); n];
    for u in 0..n {
        for e in p.support.row_range(u) {
            if p.values[e] > 0.0 {
                rev[p.support.col_idx()[e]].push(u);
            }
        }
    }
    let mut seen = labeled.to_vec();
    let mut queue: VecDeque<usize> = (0..n).filter(|&i| labeled[i]).collect();
    while let Some(j) = queue.pop_front() {
        for &u in &rev[j] {
            if !seen[u] {
                seen[u] = true;
                queue.push_back(u);
            }
        }
    }
    match seen.iter().position(|&s| !s) {
        Some(node) => Err(Error::Connectivity { node }),
        None => Ok(()),
    }
}

/// Solves `(I - P_UU) f_U = P_UL Y_L`. Returns the unlabeled rows in
/// ascending node order.
pub fn lpa_closed_form(p: &TransitionMatrix, f0: &Tensor, labeled: &[bool]) -> Result<Tensor> {
    p.check_stochastic()?;
    let c = check_f0(p, f0, labeled)?;
    check_reachability(p, labeled)?;
    let b = p.blocks(labeled)?;
    let u = b.unlabeled.len();
    if u == 0 {
        return Tensor::matrix(0, c, Vec::new());
    }
    let y_l = DMatrix::from_fn(b.labeled.len(), c, |i, k| f0.get(b.labeled[i], k));
    let a = DMatrix::identity(u, u) - &b.uu;
    let rhs = &b.ul * y_l;
    let sol = a.lu().solve(&rhs).ok_or(Error::Connectivity { node: b.unlabeled[0] })?;
    Tensor::matrix(u, c, (0..u).flat_map(|i| (0..c).map(move |k| (i, k))).map(|(i, k)| sol[(i, k)]).collect())
}

/// Differentiable synchronous propagation of `f0` through edge weights
/// `p_vals` on `support`, clamping rows flagged in `labeled`. Stops early
/// once an iteration moves no entry by more than `tol`.
pub fn propagate_on_tape(
    tape: &mut Tape,
    p_vals: Var,
    support: &Arc<Csr>,
    f0: &Tensor,
    labeled: &[bool],
    iters: usize,
    tol: f64,
) -> Result<Var> {
    let (n, c) = f0.dims2()?;
    ensure!(
        n == support.n_rows() && labeled.len() == n,
        Error::Dimension(format!("F0 has {n} rows for {} nodes", support.n_rows()))
    );
    let free = tape.constant(Tensor::vector(labeled.iter().map(|&l| if l { 0.0 } else { 1.0 }).collect())?);
    let mut fixed = f0.data().to_vec();
    for (i, row) in fixed.chunks_mut(c).enumerate() {
        if !labeled[i] {
            row.iter_mut().for_each(|x| *x = 0.0);
        }
    }
    let fixed = tape.constant(Tensor::matrix(n, c, fixed)?);
    let mut f = tape.constant(f0.clone());
    for _ in 0..iters {
        let g = tape.spmm(p_vals, f, support)?;
        let g = tape.mul_col(g, free)?;
        let next = tape.add(g, fixed)?;
        let delta = tape.value(next).max_abs_diff(tape.value(f));
        f = next;
        if delta < tol {
            break;
        }
    }
    Ok(f)
}
