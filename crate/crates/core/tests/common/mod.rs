#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use selamr_core::autodiff::{Tape, Tensor, Var};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut impl Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

/// Evaluates the scalar built by `f` on plain (non-differentiated) inputs.
fn eval(inputs: &[Tensor], f: &dyn Fn(&mut Tape, &[Var]) -> Var) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
    let out = f(&mut tape, &vars);
    tape.value(out).item().unwrap()
}

/// Central finite differences of `f` w.r.t. every input entry.
pub fn numeric_grads(inputs: &[Tensor], f: &dyn Fn(&mut Tape, &[Var]) -> Var, h: f64) -> Vec<Vec<f64>> {
    let mut work: Vec<Tensor> = inputs.to_vec();
    let mut grads = Vec::new();
    for k in 0..inputs.len() {
        let mut g = vec![0.0; inputs[k].numel()];
        for i in 0..g.len() {
            let orig = work[k].data()[i];
            work[k].data_mut()[i] = orig + h;
            let up = eval(&work, f);
            work[k].data_mut()[i] = orig - h;
            let down = eval(&work, f);
            work[k].data_mut()[i] = orig;
            g[i] = (up - down) / (2.0 * h);
        }
        grads.push(g);
    }
    grads
}

/// Reverse-mode gradients of `f` w.r.t. every input.
pub fn analytic_grads(inputs: &[Tensor], f: &dyn Fn(&mut Tape, &[Var]) -> Var) -> Vec<Vec<f64>> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone().with_grad())).collect();
    let out = f(&mut tape, &vars);
    let g = tape.backward(out).unwrap();
    vars.iter()
        .zip(inputs)
        .map(|(&v, t)| g.get(v).map_or_else(|| vec![0.0; t.numel()], <[f64]>::to_vec))
        .collect()
}

/// Largest norm-relative error ||a - n|| / max(||a||, ||n||) over the inputs.
pub fn grad_rel_error(inputs: &[Tensor], f: &dyn Fn(&mut Tape, &[Var]) -> Var, h: f64) -> f64 {
    let num = numeric_grads(inputs, f, h);
    let ana = analytic_grads(inputs, f);
    num.iter()
        .zip(&ana)
        .map(|(n, a)| {
            let diff: f64 = n.iter().zip(a).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            let scale = norm(n).max(norm(a)).max(1e-12);
            diff / scale
        })
        .fold(0.0, f64::max)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Contracts any tensor to a scalar with fixed pseudo-random weights, so that
/// gradients are not uniform.
pub fn weighted_sum(tape: &mut Tape, v: Var) -> Var {
    let n = tape.value(v).numel();
    let shape = tape.shape(v).to_vec();
    let w: Vec<f64> = (0..n).map(|i| ((i * 7919 % 13) as f64 - 6.0) / 5.0 + 0.05).collect();
    let w = tape.constant(Tensor::new(shape, w).unwrap());
    let p = tape.mul(v, w).unwrap();
    tape.sum(p)
}

/// Largest norm-relative error between reverse-mode and central-difference
/// gradients of `f` w.r.t. every parameter tensor in `store`.
pub fn param_grad_rel_error(
    store: &selamr_core::autodiff::ParamStore,
    f: &dyn Fn(&mut Tape, &selamr_core::autodiff::ParamStore) -> Var,
    h: f64,
) -> f64 {
    let eval = |s: &selamr_core::autodiff::ParamStore| {
        let mut tape = Tape::new();
        let out = f(&mut tape, s);
        tape.value(out).item().unwrap()
    };
    let mut acc = store.clone();
    acc.zero_grad();
    {
        let mut tape = Tape::new();
        let out = f(&mut tape, store);
        tape.backward(out).unwrap().accumulate_into(&mut acc).unwrap();
    }
    let mut work = store.clone();
    let ids: Vec<_> = store.ids().collect();
    let mut worst = 0.0f64;
    for id in ids {
        let n = store.get(id).numel();
        let mut num = vec![0.0; n];
        for i in 0..n {
            let orig = work.get(id).data()[i];
            work.get_mut(id).data_mut()[i] = orig + h;
            let up = eval(&work);
            work.get_mut(id).data_mut()[i] = orig - h;
            let down = eval(&work);
            work.get_mut(id).data_mut()[i] = orig;
            num[i] = (up - down) / (2.0 * h);
        }
        let ana = acc.get(id).grad().map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
        let diff: f64 = num.iter().zip(&ana).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let scale = norm(&num).max(norm(&ana));
        if scale > 1e-10 {
            worst = worst.max(diff / scale);
        } else {
            worst = worst.max(diff);
        }
    }
    worst
}
