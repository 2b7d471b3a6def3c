use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{ensure, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum BallKind {
    /// Range into [`BallTree::order`].
    Leaf { start: usize, end: usize },
    Inner { left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ball {
    pub centroid: Vec<f64>,
    pub radius: f64,
    pub kind: BallKind,
}

/// Nested-hypersphere index over `n` points in `R^d`.
#[derive(Debug, Clone)]
pub struct BallTree {
    points: Vec<f64>,
    dim: usize,
    leaf_size: usize,
    order: Vec<usize>,
    nodes: Vec<Ball>,
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `(distance, index)` ordered lexicographically, so the heap top is the
/// current worst neighbor and equal distances prefer the lower index.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Cand(f64, usize);

impl Eq for Cand {}

impl PartialOrd for Cand {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Cand {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

impl BallTree {
    /// Builds the tree over row-major `points` of width `dim`.
    pub fn build(points: &[f64], dim: usize, leaf_size: usize) -> Result<Self> {
        ensure!(dim >= 1, Error::Contract("points need at least one dimension".into()));
        ensure!(leaf_size >= 1, Error::Contract("leaf size must be positive".into()));
        ensure!(
            !points.is_empty() && points.len() % dim == 0,
            Error::Contract(format!("{} values do not form a non-empty set of {dim}-d points", points.len()))
        );
        let n = points.len() / dim;
        let mut tree = Self {
            points: points.to_vec(),
            dim,
            leaf_size,
            order: (0..n).collect(),
            nodes: Vec::new(),
        };
        tree.build_node(0, n);
        Ok(tree)
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn nodes(&self) -> &[Ball] {
        &self.nodes
    }

    /// Point indices stored in a leaf's range.
    pub fn leaf_points(&self, start: usize, end: usize) -> &[usize] {
        &self.order[start..end]
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let d = self.dim;
        let count = (end - start) as f64;
        let mut centroid = vec![0.0; d];
        for &i in &self.order[start..end] {
            for (c, v) in centroid.iter_mut().zip(self.point(i)) {
                *c += v;
            }
        }
        centroid.iter_mut().for_each(|c| *c /= count);
        let radius = self.order[start..end]
            .iter()
            .map(|&i| distance(&centroid, self.point(i)))
            .fold(0.0, f64::max);
        let id = self.nodes.len();
        self.nodes.push(Ball {
            centroid,
            radius,
            kind: BallKind::Leaf { start, end },
        });
        if end - start <= self.leaf_size {
            return id;
        }

        let mut best = (0, f64::NEG_INFINITY);
        for j in 0..d {
            let (lo, hi) = self.order[start..end].iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                let v = self.points[i * d + j];
                (lo.min(v), hi.max(v))
            });
            if hi - lo > best.1 {
                best = (j, hi - lo);
            }
        }
        let axis = best.0;
        // Lower median goes left: the left child takes ceil(n / 2) points.
        let mid = (end - start).div_ceil(2);
        let pts = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - 1, |&a, &b| {
            pts[a * d + axis].total_cmp(&pts[b * d + axis]).then(a.cmp(&b))
        });
        let left = self.build_node(start, start + mid);
        let right = self.build_node(start + mid, end);
        self.nodes[id].kind = BallKind::Inner { left, right };
        id
    }

    /// Exact `k` nearest neighbors of `q`, ascending by `(distance, index)`,
    /// skipping index `exclude`.
    pub fn query(&self, q: &[f64], k: usize, exclude: Option<usize>) -> Result<Vec<(usize, f64)>> {
        let mut visits = 0;
        self.query_counted(q, k, exclude, &mut visits)
    }

    /// Like [`query`](Self::query); adds the number of point-distance
    /// evaluations to `visits`.
    pub fn query_counted(
        &self,
        q: &[f64],
        k: usize,
        exclude: Option<usize>,
        visits: &mut usize,
    ) -> Result<Vec<(usize, f64)>> {
        ensure!(
            q.len() == self.dim,
            Error::Dimension(format!("query of width {} for {}-d points", q.len(), self.dim))
        );
        let available = self.len() - usize::from(exclude.is_some_and(|e| e < self.len()));
        ensure!(
            k >= 1 && k <= available,
            Error::Contract(format!("k = {k} with {available} candidate points"))
        );
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.search(0, q, k, exclude, &mut heap, visits);
        let mut out: Vec<Cand> = heap.into_vec();
        out.sort();
        Ok(out.into_iter().map(|Cand(d, i)| (i, d)).collect())
    }

    fn search(&self, node: usize, q: &[f64], k: usize, exclude: Option<usize>, heap: &mut BinaryHeap<Cand>, visits: &mut usize) {
        let ball = &self.nodes[node];
        if heap.len() == k {
            let worst = heap.peek().map_or(f64::INFINITY, |c| c.0);
            let lower = distance(q, &ball.centroid) - ball.radius;
            // Small slack keeps rounding in the bound from pruning a tie.
            if lower > worst + 1e-12 * (1.0 + worst) {
                return;
            }
        }
        match ball.kind {
            BallKind::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    if Some(i) == exclude {
                        continue;
                    }
                    *visits += 1;
                    let c = Cand(distance(q, self.point(i)), i);
                    if heap.len() < k {
                        heap.push(c);
                    } else if c < *heap.peek().expect("heap is full") {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
            BallKind::Inner { left, right } => {
                let dl = distance(q, &self.nodes[left].centroid);
                let dr = distance(q, &self.nodes[right].centroid);
                let (a, b) = if dl <= dr { (left, right) } else { (right, left) };
                self.search(a, q, k, exclude, heap, visits);
                self.search(b, q, k, exclude, heap, visits);
            }
        }
    }
}
