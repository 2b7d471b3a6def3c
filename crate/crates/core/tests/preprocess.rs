use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use selamr_core::preprocess::{
    mean_filter, minmax_normalize, preprocess_record, preprocess_series, resample_linear, universal_threshold,
    wavelet_denoise, PreprocessConfig,
};
use selamr_core::siggen::{generate_records, GenerateConfig, Geometry, ModulationScheme, SnrSpec};

/// Dense orthonormal single-level Haar matrix: rows 0..n/2 are averages,
/// rows n/2..n are differences.
fn haar_matrix(n: usize) -> Vec<Vec<f64>> {
    let s = 0.5f64.sqrt();
    let mut w = vec![vec![0.0; n]; n];
    for k in 0..n / 2 {
        w[k][2 * k] = s;
        w[k][2 * k + 1] = s;
        w[n / 2 + k][2 * k] = s;
        w[n / 2 + k][2 * k + 1] = -s;
    }
    w
}

/// Oracle: transform by matrix, shrink the detail half, transform back by the transpose.
fn haar_oracle(x: &[f64], t: f64) -> Vec<f64> {
    let n = x.len();
    assert!(n % 2 == 0);
    let w = haar_matrix(n);
    let mut c: Vec<f64> = w.iter().map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect();
    for v in &mut c[n / 2..] {
        *v = v.signum() * (v.abs() - t).max(0.0);
    }
    (0..n).map(|j| (0..n).map(|i| w[i][j] * c[i]).sum()).collect()
}

fn oracle_threshold(x: &[f64]) -> f64 {
    let s = 0.5f64.sqrt();
    let mut d: Vec<f64> = x.chunks(2).map(|p| ((p[0] - p[1]) * s).abs()).collect();
    d.sort_by(f64::total_cmp);
    let m = d.len();
    let med = if m % 2 == 1 { d[m / 2] } else { 0.5 * (d[m / 2 - 1] + d[m / 2]) };
    med / 0.6745 * (2.0 * (x.len() as f64).ln()).sqrt()
}

#[test]
fn wavelet_matches_dense_haar_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for n in [2usize, 8, 64, 256] {
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let t = oracle_threshold(&x);
        assert!((universal_threshold(&x).unwrap() - t).abs() < 1e-12);
        let got = wavelet_denoise(&x).unwrap();
        let want = haar_oracle(&x, t);
        let err = got.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-12, "n={n}: {err}");
    }
}

#[test]
fn odd_length_reflects_then_trims() {
    let x = [0.1, 0.9, 0.3, 0.5, 0.2];
    let padded = [0.1, 0.9, 0.3, 0.5, 0.2, 0.5];
    let want = haar_oracle(&padded, oracle_threshold(&padded));
    let got = wavelet_denoise(&x).unwrap();
    assert_eq!(got.len(), 5);
    for (a, b) in got.iter().zip(&want) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn ramp_changes_by_at_most_threshold_over_root_two() {
    let x: Vec<f64> = (0..512).map(|i| 0.003 * i as f64).collect();
    let t = universal_threshold(&x).unwrap();
    let y = wavelet_denoise(&x).unwrap();
    let change = x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(change <= t / 2f64.sqrt() + 1e-15, "{change} > {}", t / 2f64.sqrt());
}

/// Ramp plus noise of std `sigma` plus a `100 sigma` spike at sample `at`.
fn spiky(n: usize, at: usize, sigma: f64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let base: Vec<f64> = (0..n)
        .map(|i| 0.001 * i as f64 + sigma * rand_distr::Distribution::<f64>::sample(&rand_distr::StandardNormal, &mut rng))
        .collect();
    let mut x = base.clone();
    x[at] += 100.0 * sigma;
    (base, x)
}

#[test]
fn spike_shrinkage_follows_the_haar_oracle() {
    let sigma = 0.01;
    let (base, x) = spiky(1024, 300, sigma);
    let t = oracle_threshold(&x);
    let y = wavelet_denoise(&x).unwrap();
    let want = haar_oracle(&x, t);
    assert!((y[300] - want[300]).abs() < 1e-12);
    // Single-level soft shrinkage lowers an isolated spike by exactly t / sqrt(2).
    let before = x[300] - base[300];
    let after = y[300] - base[300];
    assert!((before - after - t / 2f64.sqrt()).abs() < 2.0 * sigma, "{before} -> {after}, t = {t}");
}

#[test]
fn full_chain_reduces_an_isolated_spike_by_more_than_half() {
    let sigma = 0.01;
    let (base, x) = spiky(1024, 300, sigma);
    let cfg = PreprocessConfig::default();
    let yb = preprocess_series(&base, &cfg).unwrap();
    let ys = preprocess_series(&x, &cfg).unwrap();
    // Compare on the spiky signal's own min-max scale.
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let raw = (x[300] - base[300]) / (hi - lo);
    let bl = base.iter().copied().fold(f64::INFINITY, f64::min);
    let bh = base.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scaled_base = (yb[300] * (bh - bl) + bl - lo) / (hi - lo);
    let left = ys[300] - scaled_base;
    assert!(left < 0.5 * raw, "spike {raw} left at {left}");
}

#[test]
fn output_shape_and_range() {
    let cfg = GenerateConfig {
        schemes: ModulationScheme::ALL.to_vec(),
        samples_per_cell: 3,
        snr: SnrSpec::Uniform { min: -20.0, max: 20.0 },
        geometries: vec![Geometry::SISO, Geometry { n_tx: 4, n_rx: 2 }],
        length: 512,
        ..Default::default()
    };
    let recs = generate_records(&cfg, 21).unwrap();
    let pc = PreprocessConfig::default();
    let mut checked = 0;
    for r in recs.iter().take(100) {
        let p = preprocess_record(r, &pc).unwrap();
        let (s, l, two) = p.stacked_shape();
        assert_eq!((s, l, two), (r.channel.n_tx + r.channel.n_rx, 1024, 2));
        for (raw, st) in r.tx.iter().chain(&r.rx).zip(p.tx.iter().chain(&p.rx)) {
            for (x, y) in [(&raw.i, &st.i), (&raw.q, &st.q)] {
                let filtered = mean_filter(&minmax_normalize(&resample_linear(x, 1024).unwrap()), 5).unwrap();
                let delta = universal_threshold(&filtered).unwrap();
                assert!(y.iter().all(|v| *v >= -delta && *v <= 1.0 + delta));
            }
        }
        checked += 1;
    }
    assert_eq!(checked, 66);
}

#[test]
fn second_application_differs() {
    let cfg = GenerateConfig {
        schemes: vec![ModulationScheme::Qam16],
        samples_per_cell: 1,
        snr: SnrSpec::Grid(vec![5.0]),
        ..Default::default()
    };
    let r = &generate_records(&cfg, 2).unwrap()[0];
    let pc = PreprocessConfig::default();
    let once = preprocess_record(r, &pc).unwrap();
    let twice = preprocess_record(&once, &pc).unwrap();
    assert_ne!(once.rx, twice.rx);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn stages_run_in_documented_order(x in prop::collection::vec(-5.0f64..5.0, 2..300), len in 2usize..200) {
        let cfg = PreprocessConfig { target_length: len, ..Default::default() };
        let manual = wavelet_denoise(&mean_filter(&minmax_normalize(&resample_linear(&x, len).unwrap()), 5).unwrap()).unwrap();
        prop_assert_eq!(preprocess_series(&x, &cfg).unwrap(), manual);
    }

    #[test]
    fn antenna_permutation_permutes_outputs(seed in 0u64..1000, rot in 1usize..4) {
        let cfg = GenerateConfig {
            schemes: vec![ModulationScheme::Psk8],
            samples_per_cell: 1,
            snr: SnrSpec::Grid(vec![0.0]),
            geometries: vec![Geometry { n_tx: 4, n_rx: 4 }],
            length: 64,
            ..Default::default()
        };
        let r = generate_records(&cfg, seed).unwrap().remove(0);
        let mut p = r.clone();
        p.rx.rotate_left(rot);
        p.tx.rotate_right(rot);
        let pc = PreprocessConfig { target_length: 64, ..Default::default() };
        let a = preprocess_record(&r, &pc).unwrap();
        let mut b = preprocess_record(&p, &pc).unwrap();
        b.rx.rotate_right(rot);
        b.tx.rotate_left(rot);
        prop_assert_eq!(a, b);
    }
}
