mod common;

use std::sync::Arc;

use common::{grad_rel_error, random_tensor, rng, weighted_sum};
use proptest::prelude::*;
use selamr_core::autodiff::{Activation, Csr, ReduceKind, Tape, Tensor, Var};

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

type Builder = Box<dyn Fn(&mut Tape, &[Var]) -> Var>;

fn check(name: &str, shapes: &[&[usize]], lo: f64, hi: f64, f: Builder) {
    let mut r = rng(0xAD);
    for point in 0..10 {
        let inputs: Vec<Tensor> = shapes.iter().map(|s| random_tensor(&mut r, s, lo, hi)).collect();
        let err = grad_rel_error(&inputs, &*f, H);
        assert!(err < TOL, "{name}: point {point} relative error {err:e}");
    }
}

fn pattern() -> Arc<Csr> {
    Arc::new(Csr::from_rows(4, &[vec![0, 1, 3], vec![1, 2], vec![0, 2, 3], vec![3]]).unwrap())
}

#[test]
fn matmul_gradient_matches_finite_differences() {
    let mut r = rng(1);
    for _ in 0..10 {
        let a = random_tensor(&mut r, &[3, 4], -1.0, 1.0);
        let b = random_tensor(&mut r, &[4, 2], -1.0, 1.0);
        let f = |t: &mut Tape, v: &[Var]| {
            let p = t.matmul(v[0], v[1]).unwrap();
            t.sum(p)
        };
        assert!(grad_rel_error(&[a, b], &f, H) < 1e-6);
    }
}

#[test]
fn elementwise_gradients() {
    check("add", &[&[3, 2], &[3, 2]], -1.0, 1.0, Box::new(|t, v| {
        let y = t.add(v[0], v[1]).unwrap();
        weighted_sum(t, y)
    }));
    check("sub", &[&[3, 2], &[3, 2]], -1.0, 1.0, Box::new(|t, v| {
        let y = t.sub(v[0], v[1]).unwrap();
        weighted_sum(t, y)
    }));
    check("mul", &[&[3, 2], &[3, 2]], -1.0, 1.0, Box::new(|t, v| {
        let y = t.mul(v[0], v[1]).unwrap();
        weighted_sum(t, y)
    }));
    check("add_row", &[&[3, 2], &[2]], -1.0, 1.0, Box::new(|t, v| {
        let y = t.add_row(v[0], v[1]).unwrap();
        weighted_sum(t, y)
    }));
    check("mul_col", &[&[3, 2], &[3]], -1.0, 1.0, Box::new(|t, v| {
        let y = t.mul_col(v[0], v[1]).unwrap();
        weighted_sum(t, y)
    }));
    check("mul_scalar", &[&[3, 2], &[1]], -1.0, 1.0, Box::new(|t, v| {
        let y = t.mul_scalar(v[0], v[1]).unwrap();
        weighted_sum(t, y)
    }));
    check("affine", &[&[4]], -1.0, 1.0, Box::new(|t, v| {
        let y = t.affine(v[0], -1.5, 0.3);
        weighted_sum(t, y)
    }));
}

#[test]
fn activation_gradients() {
    for kind in [
        Activation::LeakyRelu(0.2),
        Activation::Sigmoid,
        Activation::Tanh,
        Activation::Exp,
        Activation::Elu,
    ] {
        check(&format!("{kind:?}"), &[&[3, 3]], -2.0, 2.0, Box::new(move |t, v| {
            let y = t.activation(v[0], kind).unwrap();
            weighted_sum(t, y)
        }));
    }
    check("log", &[&[3, 3]], 0.2, 3.0, Box::new(|t, v| {
        let y = t.log(v[0]).unwrap();
        weighted_sum(t, y)
    }));
    check("clamp_min", &[&[3, 3]], 0.5, 3.0, Box::new(|t, v| {
        let y = t.clamp_min(v[0], 0.1);
        weighted_sum(t, y)
    }));
}

#[test]
fn softmax_and_reduction_gradients() {
    check("softmax_rows", &[&[3, 4]], -2.0, 2.0, Box::new(|t, v| {
        let mask = [true, false, true, true, true, true, true, true, false, false, true, false];
        let y = t.softmax_rows(v[0], Some(&mask)).unwrap();
        weighted_sum(t, y)
    }));
    for axis in [None, Some(0), Some(1)] {
        for kind in [ReduceKind::Sum, ReduceKind::Mean] {
            check("reduce", &[&[3, 4]], -1.0, 1.0, Box::new(move |t, v| {
                let y = t.reduce(v[0], kind, axis).unwrap();
                weighted_sum(t, y)
            }));
        }
    }
    check("concat", &[&[2, 3], &[2, 1]], -1.0, 1.0, Box::new(|t, v| {
        let y = t.concat(&[v[0], v[1]], 1).unwrap();
        weighted_sum(t, y)
    }));
    check("concat0", &[&[2, 3], &[1, 3]], -1.0, 1.0, Box::new(|t, v| {
        let y = t.concat(&[v[0], v[1]], 0).unwrap();
        weighted_sum(t, y)
    }));
    check("slice_cols", &[&[3, 5]], -1.0, 1.0, Box::new(|t, v| {
        let y = t.slice_cols(v[0], 1, 4).unwrap();
        weighted_sum(t, y)
    }));
    check("reshape", &[&[2, 3]], -1.0, 1.0, Box::new(|t, v| {
        let y = t.reshape(v[0], vec![3, 2]).unwrap();
        let z = t.mul(y, y).unwrap();
        weighted_sum(t, z)
    }));
}

#[test]
fn indexing_and_sparse_gradients() {
    check("gather_rows", &[&[4, 2]], -1.0, 1.0, Box::new(|t, v| {
        let y = t.gather_rows(v[0], Arc::new(vec![3, 0, 3, 1])).unwrap();
        weighted_sum(t, y)
    }));
    check("scatter_rows", &[&[2, 2]], -1.0, 1.0, Box::new(|t, v| {
        let y = t.scatter_rows(v[0], Arc::new(vec![3, 1]), 5).unwrap();
        weighted_sum(t, y)
    }));
    check("spmm", &[&[9], &[4, 3]], -1.0, 1.0, Box::new(|t, v| {
        let y = t.spmm(v[0], v[1], &pattern()).unwrap();
        weighted_sum(t, y)
    }));
    check("edge_dot", &[&[4, 3]], -1.0, 1.0, Box::new(|t, v| {
        let y = t.edge_dot(v[0], &pattern()).unwrap();
        weighted_sum(t, y)
    }));
    check("segment_softmax", &[&[9]], -2.0, 2.0, Box::new(|t, v| {
        let y = t.segment_softmax(v[0], &pattern()).unwrap();
        weighted_sum(t, y)
    }));
    check("row_dot", &[&[3, 4], &[3, 4]], -1.0, 1.0, Box::new(|t, v| {
        let y = t.row_dot(v[0], v[1]).unwrap();
        weighted_sum(t, y)
    }));
}

#[test]
fn composite_gin_style_gradient() {
    // leaky(((1 + eps) * h + A h) W1 + b1) W2 summed: the GIN update shape.
    let adj = Arc::new(Csr::from_rows(3, &[vec![2], vec![2], vec![0, 1]]).unwrap());
    check("gin-composite", &[&[3, 4], &[1], &[4, 5], &[5], &[5, 2]], -1.0, 1.0, Box::new(move |t, v| {
        let ones = t.constant(Tensor::full(&[adj.nnz()], 1.0));
        let agg = t.spmm(ones, v[0], &adj).unwrap();
        let one_plus = t.affine(v[1], 1.0, 1.0);
        let selfw = t.mul_scalar(v[0], one_plus).unwrap();
        let z = t.add(selfw, agg).unwrap();
        let h1 = t.matmul(z, v[2]).unwrap();
        let h1 = t.add_row(h1, v[3]).unwrap();
        let h1 = t.leaky_relu(h1, 0.2);
        let out = t.matmul(h1, v[4]).unwrap();
        weighted_sum(t, out)
    }));
}

#[test]
fn backward_is_bitwise_deterministic() {
    let mut r = rng(3);
    let a = random_tensor(&mut r, &[5, 6], -1.0, 1.0);
    let b = random_tensor(&mut r, &[6, 3], -1.0, 1.0);
    let run = || {
        let mut t = Tape::new();
        let va = t.leaf(a.clone().with_grad());
        let vb = t.leaf(b.clone().with_grad());
        let p = t.matmul(va, vb).unwrap();
        let p = t.tanh(p);
        let s = t.softmax_rows(p, None).unwrap();
        let l = weighted_sum(&mut t, s);
        let g = t.backward(l).unwrap();
        let bits = |v| g.get(v).unwrap().iter().map(|x: &f64| x.to_bits()).collect::<Vec<_>>();
        (bits(va), bits(vb))
    };
    assert_eq!(run(), run());
}

proptest! {
    #[test]
    fn softmax_rows_sum_to_one_and_ignore_shifts(
        rows in prop::collection::vec(prop::collection::vec(-50.0f64..50.0, 5), 1..6),
        shift in -100.0f64..100.0,
    ) {
        let x = Tensor::from_rows(&rows).unwrap();
        let shifted: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| v + shift).collect()).collect();
        let mut t = Tape::new();
        let a = t.constant(x);
        let b = t.constant(Tensor::from_rows(&shifted).unwrap());
        let ya = t.softmax_rows(a, None).unwrap();
        let yb = t.softmax_rows(b, None).unwrap();
        for row in t.value(ya).data().chunks(5) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        prop_assert!(t.value(ya).max_abs_diff(t.value(yb)) < 1e-12);
    }
}
