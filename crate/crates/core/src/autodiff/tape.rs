//! Tape-based reverse-mode differentiation over dense tensors.
//!
//! Every operation appends a node holding its output value and the handles of
//! its inputs. Nodes are only ever appended, so the tape is topologically
//! ordered by construction and [`Tape::backward`] is a single reverse sweep.

use std::sync::Arc;

use super::gemm::{gemm, MatRef};
use super::{Csr, ParamId, ParamStore, Tensor};
use crate::error::{ensure, Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    LeakyRelu(f64),
    Sigmoid,
    Tanh,
    Exp,
    Log,
    Elu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceKind {
    Sum,
    Mean,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulCol(Var, Var),
    MulScalar(Var, Var),
    Affine(Var, f64),
    Act(Var, Activation),
    ClampMin(Var, f64),
    SoftmaxRows(Var),
    Reduce {
        x: Var,
        kind: ReduceKind,
        axis: Option<usize>,
    },
    Concat {
        xs: Vec<Var>,
        axis: usize,
    },
    SliceCols {
        x: Var,
        start: usize,
    },
    GatherRows {
        x: Var,
        idx: Arc<Vec<usize>>,
    },
    ScatterRows {
        x: Var,
        idx: Arc<Vec<usize>>,
    },
    SpMM {
        vals: Var,
        x: Var,
        csr: Arc<Csr>,
    },
    EdgeDot {
        x: Var,
        csr: Arc<Csr>,
    },
    SegmentSoftmax {
        x: Var,
        csr: Arc<Csr>,
    },
    RowDot(Var, Var),
    Reshape(Var),
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Ordered record of operations for one forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<(Var, ParamId)>,
}

/// Gradients of a scalar loss with respect to every leaf on the tape.
#[derive(Debug, Clone)]
pub struct Gradients {
    leaves: Vec<Option<Vec<f64>>>,
    params: Vec<(Var, ParamId)>,
}

impl Gradients {
    /// Gradient w.r.t. a leaf, if the loss depends on it.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.leaves.get(v.0).and_then(|g| g.as_deref())
    }

    /// Adds parameter gradients into the store's accumulators.
    pub fn accumulate_into(&self, store: &mut ParamStore) -> Result<()> {
        for &(v, id) in &self.params {
            if let Some(g) = self.get(v) {
                store.get_mut(id).accumulate_grad(g)?;
            }
        }
        Ok(())
    }
}

fn as2d(shape: &[usize]) -> (usize, usize) {
    (shape[0], shape[1..].iter().product())
}

fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Records a leaf; it is differentiated iff the tensor requires grad.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        let ng = t.requires_grad();
        self.push(t, Op::Leaf, ng)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Records a copy of a stored parameter as a differentiable leaf.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let t = store.get(id);
        let v = self.push(Tensor::from_parts(t.shape().to_vec(), t.data().to_vec()), Op::Leaf, true);
        self.params.push((v, id));
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, k) = ta.dims2()?;
        let (k2, n) = tb.dims2()?;
        ensure!(
            k == k2,
            Error::Dimension(format!("matmul {:?} x {:?}", ta.shape(), tb.shape()))
        );
        let mut out = vec![0.0; m * n];
        gemm(1.0, MatRef::new(ta.data(), m, k), MatRef::new(tb.data(), k, n), 0.0, &mut out);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(Tensor::from_parts(vec![m, n], out), Op::MatMul(a, b), ng))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        ensure!(
            self.shape(a) == self.shape(b),
            Error::Dimension(format!("{what} {:?} vs {:?}", self.shape(a), self.shape(b)))
        );
        Ok(())
    }

    fn zip_with(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64, what: &str) -> Result<Var> {
        self.same_shape(a, b, what)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let t = Tensor::from_parts(ta.shape().to_vec(), data);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(t, op, ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, Op::Add(a, b), |x, y| x + y, "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, Op::Sub(a, b), |x, y| x - y, "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, Op::Mul(a, b), |x, y| x * y, "mul")
    }

    /// Adds a row vector (length = column count) to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(bias));
        let (r, c) = as2d(ta.shape());
        ensure!(
            tb.numel() == c,
            Error::Dimension(format!("add_row {:?} + {:?}", ta.shape(), tb.shape()))
        );
        let mut data = ta.data().to_vec();
        for row in data.chunks_mut(c) {
            row.iter_mut().zip(tb.data()).for_each(|(x, b)| *x += b);
        }
        debug_assert_eq!(data.len(), r * c);
        let t = Tensor::from_parts(ta.shape().to_vec(), data);
        let ng = self.ng(a) || self.ng(bias);
        Ok(self.push(t, Op::AddRow(a, bias), ng))
    }

    /// Scales row `i` of `a` by `c[i]`.
    pub fn mul_col(&mut self, a: Var, c: Var) -> Result<Var> {
        let (ta, tc) = (self.value(a), self.value(c));
        let (r, cols) = as2d(ta.shape());
        ensure!(
            tc.numel() == r,
            Error::Dimension(format!("mul_col {:?} * {:?}", ta.shape(), tc.shape()))
        );
        let mut data = ta.data().to_vec();
        for (row, s) in data.chunks_mut(cols).zip(tc.data()) {
            row.iter_mut().for_each(|x| *x *= s);
        }
        let t = Tensor::from_parts(ta.shape().to_vec(), data);
        let ng = self.ng(a) || self.ng(c);
        Ok(self.push(t, Op::MulCol(a, c), ng))
    }

    /// Multiplies every entry of `a` by the one-element tensor `s`.
    pub fn mul_scalar(&mut self, a: Var, s: Var) -> Result<Var> {
        let sv = self.value(s).item()?;
        let ta = self.value(a);
        let t = Tensor::from_parts(ta.shape().to_vec(), ta.data().iter().map(|x| x * sv).collect());
        let ng = self.ng(a) || self.ng(s);
        Ok(self.push(t, Op::MulScalar(a, s), ng))
    }

    /// `scale * a + shift` with constant coefficients.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Var {
        let ta = self.value(a);
        let t = Tensor::from_parts(
            ta.shape().to_vec(),
            ta.data().iter().map(|x| scale * x + shift).collect(),
        );
        let ng = self.ng(a);
        self.push(t, Op::Affine(a, scale), ng)
    }

    pub fn scale(&mut self, a: Var, scale: f64) -> Var {
        self.affine(a, scale, 0.0)
    }

    pub fn activation(&mut self, a: Var, kind: Activation) -> Result<Var> {
        let ta = self.value(a);
        if kind == Activation::Log {
            if let Some(bad) = ta.data().iter().find(|&&x| !(x > 0.0)) {
                return Err(Error::Domain(format!("log of non-positive value {bad}")));
            }
        }
        let f: fn(f64, f64) -> f64 = match kind {
            Activation::LeakyRelu(_) => |x, alpha| if x > 0.0 { x } else { alpha * x },
            Activation::Sigmoid => |x, _| {
                if x >= 0.0 {
                    1.0 / (1.0 + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (1.0 + e)
                }
            },
            Activation::Tanh => |x, _| x.tanh(),
            Activation::Exp => |x, _| x.exp(),
            Activation::Log => |x, _| x.ln(),
            Activation::Elu => |x, _| if x > 0.0 { x } else { x.exp_m1() },
        };
        let alpha = match kind {
            Activation::LeakyRelu(a) => a,
            _ => 0.0,
        };
        let t = Tensor::from_parts(ta.shape().to_vec(), ta.data().iter().map(|&x| f(x, alpha)).collect());
        let ng = self.ng(a);
        Ok(self.push(t, Op::Act(a, kind), ng))
    }

    pub fn leaky_relu(&mut self, a: Var, alpha: f64) -> Var {
        self.activation(a, Activation::LeakyRelu(alpha)).expect("total function")
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.activation(a, Activation::Sigmoid).expect("total function")
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.activation(a, Activation::Tanh).expect("total function")
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.activation(a, Activation::Exp).expect("total function")
    }

    pub fn elu(&mut self, a: Var) -> Var {
        self.activation(a, Activation::Elu).expect("total function")
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.activation(a, Activation::Log)
    }

    /// `max(a, min)`; the gradient is zero where the floor is active.
    pub fn clamp_min(&mut self, a: Var, min: f64) -> Var {
        let ta = self.value(a);
        let t = Tensor::from_parts(ta.shape().to_vec(), ta.data().iter().map(|&x| x.max(min)).collect());
        let ng = self.ng(a);
        self.push(t, Op::ClampMin(a, min), ng)
    }

    /// Row-wise softmax; masked-out (`false`) entries are exactly zero.
    pub fn softmax_rows(&mut self, a: Var, mask: Option<&[bool]>) -> Result<Var> {
        let ta = self.value(a);
        let (r, c) = ta.dims2()?;
        if let Some(m) = mask {
            ensure!(
                m.len() == r * c,
                Error::Dimension(format!("mask of length {} for shape {:?}", m.len(), ta.shape()))
            );
        }
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let row = &ta.data()[i * c..(i + 1) * c];
            let keep = |j: usize| mask.map_or(true, |m| m[i * c + j]);
            let max = (0..c)
                .filter(|&j| keep(j))
                .map(|j| row[j])
                .fold(f64::NEG_INFINITY, f64::max);
            ensure!(max > f64::NEG_INFINITY, Error::DegenerateRow { row: i });
            let o = &mut out[i * c..(i + 1) * c];
            let mut z = 0.0;
            for j in (0..c).filter(|&j| keep(j)) {
                o[j] = (row[j] - max).exp();
                z += o[j];
            }
            o.iter_mut().for_each(|v| *v /= z);
        }
        let t = Tensor::from_parts(vec![r, c], out);
        let ng = self.ng(a);
        Ok(self.push(t, Op::SoftmaxRows(a), ng))
    }

    /// Sum or mean over one axis, or over everything when `axis` is `None`.
    pub fn reduce(&mut self, a: Var, kind: ReduceKind, axis: Option<usize>) -> Result<Var> {
        let ta = self.value(a);
        let shape = ta.shape().to_vec();
        let t = match axis {
            None => {
                let s: f64 = ta.data().iter().sum();
                let v = match kind {
                    ReduceKind::Sum => s,
                    ReduceKind::Mean => s / ta.numel() as f64,
                };
                Tensor::scalar(v)
            }
            Some(ax) => {
                ensure!(
                    ax < shape.len(),
                    Error::Dimension(format!("axis {ax} out of range for shape {shape:?}"))
                );
                let (outer, mid, inner) = axis_split(&shape, ax);
                let mut out = vec![0.0; outer * inner];
                for o in 0..outer {
                    for m in 0..mid {
                        let src = &ta.data()[(o * mid + m) * inner..(o * mid + m + 1) * inner];
                        out[o * inner..(o + 1) * inner]
                            .iter_mut()
                            .zip(src)
                            .for_each(|(d, s)| *d += s);
                    }
                }
                if kind == ReduceKind::Mean {
                    out.iter_mut().for_each(|v| *v /= mid as f64);
                }
                let mut new_shape: Vec<usize> = shape.clone();
                new_shape.remove(ax);
                if new_shape.is_empty() {
                    new_shape.push(1);
                }
                Tensor::from_parts(new_shape, out)
            }
        };
        let ng = self.ng(a);
        Ok(self.push(t, Op::Reduce { x: a, kind, axis }, ng))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        self.reduce(a, ReduceKind::Sum, None).expect("full reduction")
    }

    pub fn mean(&mut self, a: Var) -> Var {
        self.reduce(a, ReduceKind::Mean, None).expect("full reduction")
    }

    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        ensure!(!xs.is_empty(), Error::Contract("concat of nothing".into()));
        let first = self.shape(xs[0]).to_vec();
        ensure!(
            axis < first.len(),
            Error::Dimension(format!("axis {axis} out of range for shape {first:?}"))
        );
        for &x in &xs[1..] {
            let s = self.shape(x);
            let ok = s.len() == first.len()
                && s.iter().zip(&first).enumerate().all(|(d, (a, b))| d == axis || a == b);
            ensure!(
                ok,
                Error::Dimension(format!("concat along {axis}: {first:?} vs {s:?}"))
            );
        }
        let total: usize = xs.iter().map(|&x| self.shape(x)[axis]).sum();
        let (outer, _, inner) = axis_split(&first, axis);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &x in xs {
                let t = self.value(x);
                let w = t.shape()[axis] * inner;
                out.extend_from_slice(&t.data()[o * w..(o + 1) * w]);
            }
        }
        let mut shape = first;
        shape[axis] = total;
        let ng = xs.iter().any(|&x| self.ng(x));
        Ok(self.push(
            Tensor::from_parts(shape, out),
            Op::Concat {
                xs: xs.to_vec(),
                axis,
            },
            ng,
        ))
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let ta = self.value(a);
        let (r, c) = ta.dims2()?;
        ensure!(
            start < end && end <= c,
            Error::Dimension(format!("columns {start}..{end} of shape {:?}", ta.shape()))
        );
        let w = end - start;
        let mut out = Vec::with_capacity(r * w);
        for i in 0..r {
            out.extend_from_slice(&ta.data()[i * c + start..i * c + end]);
        }
        let ng = self.ng(a);
        Ok(self.push(Tensor::from_parts(vec![r, w], out), Op::SliceCols { x: a, start }, ng))
    }

    /// Row `k` of the output is row `idx[k]` of `a`.
    pub fn gather_rows(&mut self, a: Var, idx: Arc<Vec<usize>>) -> Result<Var> {
        let ta = self.value(a);
        let (r, c) = as2d(ta.shape());
        ensure!(!idx.is_empty(), Error::Dimension("gather of zero rows".into()));
        ensure!(
            idx.iter().all(|&i| i < r),
            Error::Dimension(format!("gather index out of range for {r} rows"))
        );
        let mut out = Vec::with_capacity(idx.len() * c);
        for &i in idx.iter() {
            out.extend_from_slice(&ta.data()[i * c..(i + 1) * c]);
        }
        let mut shape = ta.shape().to_vec();
        shape[0] = idx.len();
        let ng = self.ng(a);
        Ok(self.push(Tensor::from_parts(shape, out), Op::GatherRows { x: a, idx }, ng))
    }

    /// Places row `k` of `a` at row `idx[k]` of an `n_rows` zero matrix.
    pub fn scatter_rows(&mut self, a: Var, idx: Arc<Vec<usize>>, n_rows: usize) -> Result<Var> {
        let ta = self.value(a);
        let (r, c) = as2d(ta.shape());
        ensure!(
            idx.len() == r,
            Error::Dimension(format!("{} indices for {r} rows", idx.len()))
        );
        let mut seen = vec![false; n_rows];
        for &i in idx.iter() {
            ensure!(
                i < n_rows && !seen[i],
                Error::Contract(format!("scatter index {i} out of range or repeated"))
            );
            seen[i] = true;
        }
        let mut out = vec![0.0; n_rows * c];
        for (k, &i) in idx.iter().enumerate() {
            out[i * c..(i + 1) * c].copy_from_slice(&ta.data()[k * c..(k + 1) * c]);
        }
        let mut shape = ta.shape().to_vec();
        shape[0] = n_rows;
        let ng = self.ng(a);
        Ok(self.push(Tensor::from_parts(shape, out), Op::ScatterRows { x: a, idx }, ng))
    }

    /// Sparse-dense product: `out[i] = sum_e vals[e] * x[col(e)]` over row `i`.
    pub fn spmm(&mut self, vals: Var, x: Var, csr: &Arc<Csr>) -> Result<Var> {
        let (tv, tx) = (self.value(vals), self.value(x));
        let (n, d) = as2d(tx.shape());
        ensure!(
            tv.numel() == csr.nnz() && n == csr.n_cols(),
            Error::Dimension(format!(
                "spmm: {} values / {n} rows for a {}x{} pattern with {} entries",
                tv.numel(),
                csr.n_rows(),
                csr.n_cols(),
                csr.nnz()
            ))
        );
        let mut out = vec![0.0; csr.n_rows() * d];
        let (v, xd) = (tv.data(), tx.data());
        for i in 0..csr.n_rows() {
            let o = &mut out[i * d..(i + 1) * d];
            for e in csr.row_range(i) {
                let j = csr.col_idx()[e];
                let w = v[e];
                o.iter_mut().zip(&xd[j * d..(j + 1) * d]).for_each(|(a, b)| *a += w * b);
            }
        }
        let ng = self.ng(vals) || self.ng(x);
        Ok(self.push(
            Tensor::from_parts(vec![csr.n_rows(), d], out),
            Op::SpMM {
                vals,
                x,
                csr: Arc::clone(csr),
            },
            ng,
        ))
    }

    /// Per stored entry `(i, j)`: `dot(x[i], x[j])`.
    pub fn edge_dot(&mut self, x: Var, csr: &Arc<Csr>) -> Result<Var> {
        let tx = self.value(x);
        let (n, d) = tx.dims2()?;
        ensure!(
            csr.n_rows() == n && csr.n_cols() == n,
            Error::Dimension(format!("edge_dot: {n} nodes for a {}x{} pattern", csr.n_rows(), csr.n_cols()))
        );
        let xd = tx.data();
        let out: Vec<f64> = csr
            .row_of()
            .iter()
            .zip(csr.col_idx())
            .map(|(&i, &j)| dot(&xd[i * d..(i + 1) * d], &xd[j * d..(j + 1) * d]))
            .collect();
        let ng = self.ng(x);
        Ok(self.push(
            Tensor::from_parts(vec![csr.nnz()], out),
            Op::EdgeDot {
                x,
                csr: Arc::clone(csr),
            },
            ng,
        ))
    }

    /// Softmax over the stored entries of each row of the pattern.
    pub fn segment_softmax(&mut self, x: Var, csr: &Arc<Csr>) -> Result<Var> {
        let tx = self.value(x);
        ensure!(
            tx.numel() == csr.nnz(),
            Error::Dimension(format!("segment_softmax: {} values for {} entries", tx.numel(), csr.nnz()))
        );
        let mut out = vec![0.0; csr.nnz()];
        for i in 0..csr.n_rows() {
            let range = csr.row_range(i);
            ensure!(!range.is_empty(), Error::DegenerateRow { row: i });
            let seg = &tx.data()[range.clone()];
            let max = seg.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let o = &mut out[range];
            let mut z = 0.0;
            for (a, &s) in o.iter_mut().zip(seg) {
                *a = (s - max).exp();
                z += *a;
            }
            o.iter_mut().for_each(|a| *a /= z);
        }
        let ng = self.ng(x);
        Ok(self.push(
            Tensor::from_parts(vec![csr.nnz()], out),
            Op::SegmentSoftmax {
                x,
                csr: Arc::clone(csr),
            },
            ng,
        ))
    }

    /// Row-wise dot product of two equally shaped matrices.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "row_dot")?;
        let (ta, tb) = (self.value(a), self.value(b));
        let (r, c) = ta.dims2()?;
        let out = (0..r)
            .map(|i| dot(&ta.data()[i * c..(i + 1) * c], &tb.data()[i * c..(i + 1) * c]))
            .collect();
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(Tensor::from_parts(vec![r], out), Op::RowDot(a, b), ng))
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let t = self.value(a).reshape(shape)?;
        let ng = self.ng(a);
        Ok(self.push(t, Op::Reshape(a), ng))
    }

    /// Reverse sweep from a one-element loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lt = self.value(loss);
        ensure!(
            lt.numel() == 1,
            Error::Contract(format!("backward needs a scalar loss, got shape {:?}", lt.shape()))
        );
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                grads[i] = None;
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
        }
        Ok(Gradients {
            leaves: grads,
            params: self.params.clone(),
        })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let y = node.value.data();
        let val = |v: Var| self.nodes[v.0].value.data();
        let shp = |v: Var| self.nodes[v.0].value.shape();
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            let n = self.nodes[v.0].value.numel();
            let buf = grads[v.0].get_or_insert_with(|| vec![0.0; n]);
            f(buf);
        };
        match &node.op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                let (m, k) = as2d(shp(a));
                let n = shp(b)[1];
                acc(a, &mut |ga| {
                    gemm(1.0, MatRef::new(g, m, n), MatRef::new(val(b), k, n).t(), 1.0, ga)
                });
                acc(b, &mut |gb| {
                    gemm(1.0, MatRef::new(val(a), m, k).t(), MatRef::new(g, m, n), 1.0, gb)
                });
            }
            &Op::Add(a, b) => {
                acc(a, &mut |ga| axpy(ga, 1.0, g));
                acc(b, &mut |gb| axpy(gb, 1.0, g));
            }
            &Op::Sub(a, b) => {
                acc(a, &mut |ga| axpy(ga, 1.0, g));
                acc(b, &mut |gb| axpy(gb, -1.0, g));
            }
            &Op::Mul(a, b) => {
                acc(a, &mut |ga| {
                    ga.iter_mut().zip(g).zip(val(b)).for_each(|((d, g), y)| *d += g * y)
                });
                acc(b, &mut |gb| {
                    gb.iter_mut().zip(g).zip(val(a)).for_each(|((d, g), x)| *d += g * x)
                });
            }
            &Op::AddRow(a, bias) => {
                let c = val(bias).len();
                acc(a, &mut |ga| axpy(ga, 1.0, g));
                acc(bias, &mut |gb| {
                    for row in g.chunks(c) {
                        axpy(gb, 1.0, row);
                    }
                });
            }
            &Op::MulCol(a, c) => {
                let cols = as2d(shp(a)).1;
                acc(a, &mut |ga| {
                    for ((d, gr), s) in ga.chunks_mut(cols).zip(g.chunks(cols)).zip(val(c)) {
                        axpy(d, *s, gr);
                    }
                });
                acc(c, &mut |gc| {
                    for ((d, gr), ar) in gc.iter_mut().zip(g.chunks(cols)).zip(val(a).chunks(cols)) {
                        *d += dot(gr, ar);
                    }
                });
            }
            &Op::MulScalar(a, s) => {
                let sv = val(s)[0];
                acc(a, &mut |ga| axpy(ga, sv, g));
                acc(s, &mut |gs| gs[0] += dot(g, val(a)));
            }
            &Op::Affine(a, scale) => acc(a, &mut |ga| axpy(ga, scale, g)),
            &Op::Act(a, kind) => {
                let x = val(a);
                acc(a, &mut |ga| {
                    for i in 0..ga.len() {
                        let d = match kind {
                            Activation::LeakyRelu(alpha) => {
                                if x[i] > 0.0 {
                                    1.0
                                } else {
                                    alpha
                                }
                            }
                            Activation::Sigmoid => y[i] * (1.0 - y[i]),
                            Activation::Tanh => 1.0 - y[i] * y[i],
                            Activation::Exp => y[i],
                            Activation::Log => 1.0 / x[i],
                            Activation::Elu => {
                                if x[i] > 0.0 {
                                    1.0
                                } else {
                                    y[i] + 1.0
                                }
                            }
                        };
                        ga[i] += g[i] * d;
                    }
                });
            }
            &Op::ClampMin(a, min) => {
                let x = val(a);
                acc(a, &mut |ga| {
                    for i in 0..ga.len() {
                        if x[i] > min {
                            ga[i] += g[i];
                        }
                    }
                });
            }
            &Op::SoftmaxRows(a) => {
                let c = node.value.cols();
                acc(a, &mut |ga| {
                    for ((d, gr), yr) in ga.chunks_mut(c).zip(g.chunks(c)).zip(y.chunks(c)) {
                        let s = dot(gr, yr);
                        for j in 0..c {
                            d[j] += yr[j] * (gr[j] - s);
                        }
                    }
                });
            }
            &Op::Reduce { x, kind, axis } => {
                let n = val(x).len();
                match axis {
                    None => {
                        let s = match kind {
                            ReduceKind::Sum => g[0],
                            ReduceKind::Mean => g[0] / n as f64,
                        };
                        acc(x, &mut |gx| gx.iter_mut().for_each(|d| *d += s));
                    }
                    Some(ax) => {
                        let (outer, mid, inner) = axis_split(shp(x), ax);
                        let s = match kind {
                            ReduceKind::Sum => 1.0,
                            ReduceKind::Mean => 1.0 / mid as f64,
                        };
                        acc(x, &mut |gx| {
                            for o in 0..outer {
                                let src = &g[o * inner..(o + 1) * inner];
                                for m in 0..mid {
                                    let off = (o * mid + m) * inner;
                                    axpy(&mut gx[off..off + inner], s, src);
                                }
                            }
                        });
                    }
                }
            }
            Op::Concat { xs, axis } => {
                let shape = node.value.shape();
                let (outer, total, inner) = axis_split(shape, *axis);
                let mut offset = 0;
                for &x in xs {
                    let w = shp(x)[*axis] * inner;
                    acc(x, &mut |gx| {
                        for o in 0..outer {
                            let src = o * total * inner + offset;
                            axpy(&mut gx[o * w..(o + 1) * w], 1.0, &g[src..src + w]);
                        }
                    });
                    offset += w;
                }
            }
            &Op::SliceCols { x, start } => {
                let c = shp(x)[1];
                let w = node.value.shape()[1];
                acc(x, &mut |gx| {
                    for (i, gr) in g.chunks(w).enumerate() {
                        axpy(&mut gx[i * c + start..i * c + start + w], 1.0, gr);
                    }
                });
            }
            Op::GatherRows { x, idx } => {
                let c = as2d(shp(*x)).1;
                acc(*x, &mut |gx| {
                    for (k, &i) in idx.iter().enumerate() {
                        axpy(&mut gx[i * c..(i + 1) * c], 1.0, &g[k * c..(k + 1) * c]);
                    }
                });
            }
            Op::ScatterRows { x, idx } => {
                let c = as2d(shp(*x)).1;
                acc(*x, &mut |gx| {
                    for (k, &i) in idx.iter().enumerate() {
                        axpy(&mut gx[k * c..(k + 1) * c], 1.0, &g[i * c..(i + 1) * c]);
                    }
                });
            }
            Op::SpMM { vals, x, csr } => {
                let d = node.value.cols();
                let (v, xd) = (val(*vals), val(*x));
                acc(*vals, &mut |gv| {
                    for (e, (&i, &j)) in csr.row_of().iter().zip(csr.col_idx()).enumerate() {
                        gv[e] += dot(&g[i * d..(i + 1) * d], &xd[j * d..(j + 1) * d]);
                    }
                });
                acc(*x, &mut |gx| {
                    for (e, (&i, &j)) in csr.row_of().iter().zip(csr.col_idx()).enumerate() {
                        axpy(&mut gx[j * d..(j + 1) * d], v[e], &g[i * d..(i + 1) * d]);
                    }
                });
            }
            Op::EdgeDot { x, csr } => {
                let d = shp(*x)[1];
                let xd = val(*x);
                acc(*x, &mut |gx| {
                    for (e, (&i, &j)) in csr.row_of().iter().zip(csr.col_idx()).enumerate() {
                        let ge = g[e];
                        if ge == 0.0 {
                            continue;
                        }
                        axpy(&mut gx[i * d..(i + 1) * d], ge, &xd[j * d..(j + 1) * d]);
                        axpy(&mut gx[j * d..(j + 1) * d], ge, &xd[i * d..(i + 1) * d]);
                    }
                });
            }
            Op::SegmentSoftmax { x, csr } => {
                acc(*x, &mut |gx| {
                    for i in 0..csr.n_rows() {
                        let r = csr.row_range(i);
                        let s = dot(&g[r.clone()], &y[r.clone()]);
                        for e in r {
                            gx[e] += y[e] * (g[e] - s);
                        }
                    }
                });
            }
            &Op::RowDot(a, b) => {
                let c = shp(a)[1];
                acc(a, &mut |ga| {
                    for ((d, br), gi) in ga.chunks_mut(c).zip(val(b).chunks(c)).zip(g) {
                        axpy(d, *gi, br);
                    }
                });
                acc(b, &mut |gb| {
                    for ((d, ar), gi) in gb.chunks_mut(c).zip(val(a).chunks(c)).zip(g) {
                        axpy(d, *gi, ar);
                    }
                });
            }
            &Op::Reshape(a) => acc(a, &mut |ga| axpy(ga, 1.0, g)),
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    y.iter_mut().zip(x).for_each(|(y, x)| *y += a * x);
}
