mod common;

use std::sync::Arc;

use common::{param_grad_rel_error, random_tensor, rng, weighted_sum};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::Rng;
use selamr_core::autodiff::{Csr, ParamStore, Tape, Tensor};
use selamr_core::embed::{
    bipartite_adjacency, embed_sample, estimate_tx_antennas, ChannelAttention, EmbedConfig, EmbedNet, GinLayer,
    Set2Set,
};
use selamr_core::preprocess::{preprocess_record, PreprocessConfig};
use selamr_core::siggen::{generate_records, GenerateConfig, Geometry, ModulationScheme, SignalRecord, SnrSpec};

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn small_cfg() -> EmbedConfig {
    EmbedConfig {
        input_length: 16,
        gin_hidden: 6,
        node_width: 4,
        set2set_steps: 3,
        embed_dim: 5,
        ..Default::default()
    }
}

fn records(g: Geometry, n: usize, len: usize, seed: u64) -> Vec<SignalRecord> {
    let cfg = GenerateConfig {
        schemes: vec![ModulationScheme::Qam16, ModulationScheme::Psk8, ModulationScheme::Fsk4],
        samples_per_cell: n.div_ceil(3),
        snr: SnrSpec::Uniform { min: 0.0, max: 20.0 },
        geometries: vec![g],
        length: 64,
        ..Default::default()
    };
    let pc = PreprocessConfig {
        target_length: len,
        ..Default::default()
    };
    generate_records(&cfg, seed)
        .unwrap()
        .iter()
        .take(n)
        .map(|r| preprocess_record(r, &pc).unwrap())
        .collect()
}

fn pattern() -> Arc<Csr> {
    Arc::new(Csr::from_rows(5, &[vec![1, 2], vec![0], vec![0, 3, 4], vec![2], vec![2]]).unwrap())
}

#[test]
fn gin_layer_gradients() {
    let adj = pattern();
    for point in 0..10 {
        let mut r = rng(100 + point);
        let mut store = ParamStore::new();
        let layer = GinLayer::new(&mut store, "g", [3, 4, 2], 0.2, &mut r).unwrap();
        store.get_mut(layer.eps).data_mut()[0] = r.gen_range(-0.5..0.5);
        let x = random_tensor(&mut r, &[5, 3], -1.0, 1.0);
        let err = param_grad_rel_error(
            &store,
            &|t, s| {
                let xv = t.constant(x.clone());
                let y = layer.forward(t, s, xv, &adj).unwrap();
                weighted_sum(t, y)
            },
            H,
        );
        assert!(err < TOL, "point {point}: {err:e}");
    }
}

#[test]
fn set2set_gradients() {
    let segments = Arc::new(Csr::from_rows(5, &[vec![0, 1], vec![2, 3, 4]]).unwrap());
    let graph_of = Arc::new(vec![0, 0, 1, 1, 1]);
    for point in 0..10 {
        let mut r = rng(200 + point);
        let mut store = ParamStore::new();
        let s2s = Set2Set::new(&mut store, "s", 3, 3, 0.2, &mut r).unwrap();
        let x = random_tensor(&mut r, &[5, 3], -1.0, 1.0);
        let err = param_grad_rel_error(
            &store,
            &|t, s| {
                let xv = t.constant(x.clone());
                let (y, _) = s2s.forward(t, s, xv, &segments, &graph_of).unwrap();
                weighted_sum(t, y)
            },
            H,
        );
        assert!(err < TOL, "point {point}: {err:e}");
    }
}

#[test]
fn channel_attention_gradients() {
    for point in 0..10 {
        let mut r = rng(300 + point);
        let mut store = ParamStore::new();
        let ca = ChannelAttention::new(&mut store, "c", 4, 3, 0.2, &mut r).unwrap();
        let vi = random_tensor(&mut r, &[3, 4], -1.0, 1.0);
        let vq = random_tensor(&mut r, &[3, 4], -1.0, 1.0);
        let err = param_grad_rel_error(
            &store,
            &|t, s| {
                let a = t.constant(vi.clone());
                let b = t.constant(vq.clone());
                let (_, y, _) = ca.forward(t, s, a, b).unwrap();
                weighted_sum(t, y)
            },
            H,
        );
        assert!(err < TOL, "point {point}: {err:e}");
    }
}

#[test]
fn full_embedding_gradients_with_blind_and_mimo_records() {
    let mut recs = records(Geometry { n_tx: 2, n_rx: 2 }, 2, 16, 4);
    recs.extend(records(Geometry::SISO, 1, 16, 5));
    recs[1].tx.clear();
    let refs: Vec<&SignalRecord> = recs.iter().collect();
    for point in 0..3 {
        let mut r = rng(400 + point);
        let mut store = ParamStore::new();
        let net = EmbedNet::new(small_cfg(), &mut store, &mut r).unwrap();
        let err = param_grad_rel_error(
            &store,
            &|t, s| {
                let out = net.forward(t, s, &refs).unwrap();
                weighted_sum(t, out.embedding)
            },
            H,
        );
        assert!(err < TOL, "point {point}: {err:e}");
    }
}

#[test]
fn isolated_node_sees_only_itself() {
    let mut r = rng(7);
    let mut store = ParamStore::new();
    let layer = GinLayer::new(&mut store, "g", [3, 3, 3], 0.2, &mut r).unwrap();
    for lin in [layer.mlp.first, layer.mlp.second] {
        store.get_mut(lin.w).data_mut().copy_from_slice(Tensor::identity(3).data());
    }
    let adj = Arc::new(Csr::from_rows(3, &[vec![], vec![2], vec![1]]).unwrap());
    let x = Tensor::from_rows(&[vec![1.0, -2.0, 0.5], vec![3.0, 1.0, 1.0], vec![0.0, 0.0, 1.0]]).unwrap();
    let mut t = Tape::new();
    let xv = t.constant(x.clone());
    let y = layer.forward(&mut t, &store, xv, &adj).unwrap();
    let row0 = t.constant(Tensor::from_rows(&[x.row(0).to_vec()]).unwrap());
    let alone = layer.mlp.forward(&mut t, &store, row0).unwrap();
    assert_eq!(t.value(y).row(0), t.value(alone).row(0));
    // Identity weights with zero bias: leaky_relu applied to the input row.
    assert_eq!(t.value(y).row(0), &[1.0, -0.4, 0.5]);
}

#[test]
fn gin_symmetry_and_equivariance() {
    let mut r = rng(8);
    let mut store = ParamStore::new();
    let layer = GinLayer::new(&mut store, "g", [4, 5, 3], 0.2, &mut r).unwrap();
    let adj = Arc::new(bipartite_adjacency(2, 3).unwrap());
    let mut t = Tape::new();
    let same = t.constant(Tensor::full(&[5, 4], 0.3));
    let y = layer.forward(&mut t, &store, same, &adj).unwrap();
    assert_eq!(t.value(y).row(0), t.value(y).row(1));
    assert_eq!(t.value(y).row(2), t.value(y).row(4));

    let x = random_tensor(&mut r, &[5, 4], -1.0, 1.0);
    let perm = [1usize, 0, 4, 2, 3];
    let px = Tensor::from_rows(&perm.iter().map(|&p| x.row(p).to_vec()).collect::<Vec<_>>()).unwrap();
    let xv = t.constant(x);
    let pv = t.constant(px);
    let a = layer.forward(&mut t, &store, xv, &adj).unwrap();
    let b = layer.forward(&mut t, &store, pv, &adj).unwrap();
    for (k, &p) in perm.iter().enumerate() {
        let d = t.value(a).row(p).iter().zip(t.value(b).row(k)).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
        assert!(d < 1e-12);
    }
}

fn set2set_single(x: Tensor, seed: u64) -> (Vec<f64>, Vec<Vec<f64>>, Vec<f64>) {
    let n = x.rows();
    let mut r = rng(seed);
    let mut store = ParamStore::new();
    let s2s = Set2Set::new(&mut store, "s", x.cols(), 3, 0.2, &mut r).unwrap();
    let segments = Arc::new(Csr::from_rows(n, &[(0..n).collect()]).unwrap());
    let graph_of = Arc::new(vec![0; n]);
    let mut t = Tape::new();
    let xv = t.constant(x);
    let (y, trace) = s2s.forward(&mut t, &store, xv, &segments, &graph_of).unwrap();
    let m = s2s.memory.forward(&mut t, &store, xv).unwrap();
    let weights = trace.weights.iter().map(|&w| t.value(w).data().to_vec()).collect();
    (t.value(y).data().to_vec(), weights, t.value(m).data().to_vec())
}

#[test]
fn set2set_single_node_and_uniform_memories() {
    let (y, weights, m) = set2set_single(Tensor::from_rows(&[vec![0.2, -0.7, 1.1]]).unwrap(), 9);
    assert!(weights.iter().all(|w| w == &vec![1.0]));
    for (a, b) in y[3..].iter().zip(&m) {
        assert!((a - b).abs() < 1e-15);
    }
    let (_, weights, _) = set2set_single(Tensor::full(&[4, 3], 0.6), 9);
    for w in weights {
        assert!(w.iter().all(|v| (v - 0.25).abs() < 1e-15));
    }
}

#[test]
fn set2set_is_permutation_invariant_and_normalized() {
    let mut r = rng(10);
    let x = random_tensor(&mut r, &[5, 4], -1.0, 1.0);
    let (base, weights, _) = set2set_single(x.clone(), 11);
    for w in &weights {
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    for perm in [[4usize, 3, 2, 1, 0], [2, 0, 4, 1, 3]] {
        let px = Tensor::from_rows(&perm.iter().map(|&p| x.row(p).to_vec()).collect::<Vec<_>>()).unwrap();
        let (y, _, _) = set2set_single(px, 11);
        let d = y.iter().zip(&base).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(d < 1e-9, "{d}");
    }
}

#[test]
fn channel_attention_contracts() {
    let mut r = rng(12);
    let mut store = ParamStore::new();
    let ca = ChannelAttention::new(&mut store, "c", 4, 3, 0.2, &mut r).unwrap();
    let v = random_tensor(&mut r, &[2, 4], -1.0, 1.0);
    let w = random_tensor(&mut r, &[2, 4], -1.0, 1.0);
    let mut t = Tape::new();
    let a = t.constant(v.clone());
    let b = t.constant(v.clone());
    let (fused, _, gates) = ca.forward(&mut t, &store, a, b).unwrap();
    for i in 0..2 {
        let f = t.value(fused).row(i);
        let ratio = f[0] / v.row(i)[0];
        assert!(f.iter().zip(v.row(i)).all(|(x, y)| (x - ratio * y).abs() < 1e-12));
        assert!(t.value(gates).row(i).iter().all(|g| *g > 0.0 && *g < 1.0));
    }

    let mut t = Tape::new();
    let a = t.leaf(v.with_grad());
    let b = t.leaf(w.with_grad());
    let (_, out, _) = ca.forward(&mut t, &store, a, b).unwrap();
    let l = weighted_sum(&mut t, out);
    let g = t.backward(l).unwrap();
    assert!(g.get(a).unwrap().iter().any(|x| x.abs() > 1e-8));
    assert!(g.get(b).unwrap().iter().any(|x| x.abs() > 1e-8));

    let mut t = Tape::new();
    let a = t.constant(Tensor::zeros(&[2, 4]));
    let b = t.constant(Tensor::zeros(&[2, 5]));
    assert!(ca.forward(&mut t, &store, a, b).is_err());
}

fn cn(r: &mut impl Rng) -> Complex64 {
    Complex64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0))
}

/// Rank by Gaussian elimination with partial pivoting on the real embedding
/// `[Re -Im; Im Re]` (whose rank is twice the complex rank).
fn oracle_rank(y: &[Vec<Complex64>]) -> usize {
    let n = y.len();
    let l = y[0].len();
    let mut m: Vec<Vec<f64>> = Vec::new();
    for row in y {
        m.push(row.iter().flat_map(|c| [c.re, -c.im]).collect());
        m.push(row.iter().flat_map(|c| [c.im, c.re]).collect());
    }
    let cols = 2 * l;
    let mut rank = 0;
    for c in 0..cols {
        let Some(p) = (rank..2 * n).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs())) else { break };
        if m[p][c].abs() < 1e-9 {
            continue;
        }
        m.swap(rank, p);
        for i in 0..2 * n {
            if i != rank {
                let f = m[i][c] / m[rank][c];
                for k in c..cols {
                    m[i][k] -= f * m[rank][k];
                }
            }
        }
        rank += 1;
    }
    rank / 2
}

#[test]
fn antenna_count_matches_rank_oracle() {
    let mut r = rng(13);
    let l = 256;
    for streams in [1usize, 2, 3] {
        let s: Vec<Vec<Complex64>> = (0..streams).map(|_| (0..l).map(|_| cn(&mut r)).collect()).collect();
        let h: Vec<Vec<Complex64>> = (0..4).map(|_| (0..streams).map(|_| cn(&mut r)).collect()).collect();
        let y: Vec<Vec<Complex64>> = h
            .iter()
            .map(|hr| (0..l).map(|t| hr.iter().zip(&s).map(|(a, x)| a * x[t]).sum()).collect())
            .collect();
        assert_eq!(oracle_rank(&y), streams);
        assert_eq!(estimate_tx_antennas(&y, 0.05).unwrap(), streams);
    }
}

#[test]
fn antenna_count_edge_cases() {
    let mut r = rng(14);
    let l = 4096;
    let noise: Vec<Vec<Complex64>> = (0..4).map(|_| (0..l).map(|_| cn(&mut r)).collect()).collect();
    assert_eq!(estimate_tx_antennas(&noise, 0.05).unwrap(), 4);
    let s: Vec<Complex64> = (0..l).map(|_| cn(&mut r)).collect();
    let y: Vec<Vec<Complex64>> = (0..4)
        .map(|k| s.iter().map(|v| v * Complex64::new(1.0 + k as f64, 0.5) + cn(&mut r) * 1e-3).collect())
        .collect();
    assert_eq!(estimate_tx_antennas(&y, 0.05).unwrap(), 1);
    let zero = vec![vec![Complex64::new(0.0, 0.0); 16]; 2];
    assert_eq!(estimate_tx_antennas(&zero, 0.05).unwrap(), 0);
    assert!(estimate_tx_antennas(&zero[..1].iter().map(|v| v[..1].to_vec()).collect::<Vec<_>>(), 0.05).is_err());
}

fn net(seed: u64, len: usize) -> (EmbedNet, ParamStore) {
    let mut store = ParamStore::new();
    let cfg = EmbedConfig {
        input_length: len,
        gin_hidden: 24,
        node_width: 12,
        embed_dim: 10,
        ..Default::default()
    };
    let net = EmbedNet::new(cfg, &mut store, &mut rng(seed)).unwrap();
    (net, store)
}

#[test]
fn every_geometry_embeds_to_width_d() {
    let (net, store) = net(15, 32);
    for g in [Geometry::SISO, Geometry { n_tx: 4, n_rx: 2 }, Geometry { n_tx: 16, n_rx: 4 }] {
        let r = &records(g, 1, 32, 16)[0];
        let e = embed_sample(r, &net, &store).unwrap();
        assert_eq!(e.values.len(), 10);
        assert!(e.values.iter().all(|v| v.is_finite()));
    }
}

#[test]
fn label_is_not_an_input() {
    let (net, store) = net(17, 32);
    let r = records(Geometry { n_tx: 4, n_rx: 2 }, 1, 32, 18).remove(0);
    let a = embed_sample(&r, &net, &store).unwrap();
    let b = embed_sample(&r.unlabeled(), &net, &store).unwrap();
    assert_eq!(a, b);
}

#[test]
fn batched_and_single_embeddings_agree() {
    let (net, store) = net(19, 32);
    let recs = records(Geometry { n_tx: 4, n_rx: 2 }, 5, 32, 20);
    let all = net.embed_all(&store, &recs, 2).unwrap();
    for (r, e) in recs.iter().zip(&all) {
        let single = embed_sample(r, &net, &store).unwrap();
        let d = single.values.iter().zip(e).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(d < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn antenna_permutations_leave_embedding_unchanged(seed in 0u64..10_000, rx_rot in 0usize..2, tx_rot in 0usize..4, blind in any::<bool>()) {
        let (net, store) = net(21, 32);
        let mut r = records(Geometry { n_tx: 4, n_rx: 2 }, 1, 32, seed).remove(0);
        if blind {
            r.tx.clear();
        }
        let base = embed_sample(&r, &net, &store).unwrap();
        let mut p = r.clone();
        p.rx.rotate_left(rx_rot);
        p.tx.reverse();
        if !p.tx.is_empty() {
            p.tx.rotate_left(tx_rot);
        }
        let e = embed_sample(&p, &net, &store).unwrap();
        let d = e.values.iter().zip(&base.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(d < 1e-6, "{}", d);
    }
}
