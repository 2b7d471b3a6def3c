//! Per-stream signal conditioning: resample, min-max scale, mean filter,
//! Haar wavelet shrinkage, applied in that order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::siggen::{IqStream, SignalRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdRule {
    /// `sigma * sqrt(2 ln n)` with `sigma = median(|d|) / 0.6745`.
    #[default]
    Universal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub target_length: usize,
    pub mean_filter_window: usize,
    pub wavelet_levels: usize,
    pub threshold_rule: ThresholdRule,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            target_length: 1024,
            mean_filter_window: 5,
            wavelet_levels: 1,
            threshold_rule: ThresholdRule::Universal,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.target_length >= 2, Error::Config("target_length must be at least 2".into()));
        ensure!(
            self.mean_filter_window % 2 == 1,
            Error::Config(format!("mean_filter_window must be odd, got {}", self.mean_filter_window))
        );
        ensure!(self.wavelet_levels >= 1, Error::Config("wavelet_levels must be at least 1".into()));
        Ok(())
    }
}

/// Linear interpolation at `len` equispaced positions over `[0, n-1]`.
pub fn resample_linear(x: &[f64], len: usize) -> Result<Vec<f64>> {
    let n = x.len();
    ensure!(n >= 2, Error::Contract(format!("resampling needs at least 2 samples, got {n}")));
    ensure!(len >= 2, Error::Contract(format!("target length must be at least 2, got {len}")));
    if n == len {
        return Ok(x.to_vec());
    }
    let scale = (n - 1) as f64 / (len - 1) as f64;
    let mut out: Vec<f64> = (0..len)
        .map(|j| {
            let pos = j as f64 * scale;
            let k = (pos.floor() as usize).min(n - 2);
            let frac = pos - k as f64;
            x[k] + frac * (x[k + 1] - x[k])
        })
        .collect();
    out[len - 1] = x[n - 1];
    Ok(out)
}

/// `(x - min) / (max - min)`; a constant sequence maps to 0.5.
pub fn minmax_normalize(x: &[f64]) -> Vec<f64> {
    let (lo, hi) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    if !(span > 0.0) {
        return vec![0.5; x.len()];
    }
    x.iter().map(|v| (v - lo) / span).collect()
}

/// Centered moving average with edge replication.
pub fn mean_filter(x: &[f64], window: usize) -> Result<Vec<f64>> {
    ensure!(window % 2 == 1, Error::Contract(format!("mean filter window must be odd, got {window}")));
    let n = x.len();
    if n == 0 || window == 1 {
        return Ok(x.to_vec());
    }
    let h = window / 2;
    let at = |i: isize| x[i.clamp(0, n as isize - 1) as usize];
    // Direct window sums: a running sum drifts and can leave [min, max].
    Ok((0..n as isize)
        .map(|i| (i - h as isize..=i + h as isize).map(at).sum::<f64>() / window as f64)
        .collect())
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn soft(d: f64, t: f64) -> f64 {
    d.signum() * (d.abs() - t).max(0.0)
}

/// One unnormalized Haar step: pair means and half-differences. The
/// orthonormal coefficients are these times `sqrt(2)`.
fn haar_split(x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    x.chunks_exact(2).map(|p| ((p[0] + p[1]) * 0.5, (p[0] - p[1]) * 0.5)).unzip()
}

fn haar_merge(a: &[f64], d: &[f64]) -> Vec<f64> {
    a.iter().zip(d).flat_map(|(a, d)| [a + d, a - d]).collect()
}

/// Appends the reflection `x[n-2]` to odd-length input (or repeats a single sample).
fn pad_even(x: &[f64]) -> Vec<f64> {
    let mut v = x.to_vec();
    if v.len() % 2 == 1 {
        v.push(if v.len() >= 2 { v[v.len() - 2] } else { v[0] });
    }
    v
}

/// Universal threshold on the orthonormal finest detail band of the
/// (reflect-padded) signal.
pub fn universal_threshold(x: &[f64]) -> Result<f64> {
    ensure!(!x.is_empty(), Error::Contract("cannot threshold an empty signal".into()));
    let padded = pad_even(x);
    let (_, d) = haar_split(&padded);
    let sigma = median(d.iter().map(|v| v.abs() * std::f64::consts::SQRT_2).collect()) / 0.6745;
    Ok(sigma * (2.0 * (padded.len() as f64).ln()).sqrt())
}

/// Haar decomposition over `levels` levels, soft-thresholding every detail
/// band at the universal threshold, then reconstruction.
pub fn wavelet_denoise_levels(x: &[f64], levels: usize) -> Result<Vec<f64>> {
    ensure!(!x.is_empty(), Error::Contract("cannot denoise an empty signal".into()));
    // Shrinking orthonormal details by t equals shrinking half-differences by t / sqrt(2).
    let t = universal_threshold(x)? * std::f64::consts::FRAC_1_SQRT_2;
    fn go(x: &[f64], t: f64, levels: usize) -> Vec<f64> {
        if levels == 0 || x.len() < 2 {
            return x.to_vec();
        }
        let padded = pad_even(x);
        let (a, d) = haar_split(&padded);
        let a = go(&a, t, levels - 1);
        let d: Vec<f64> = d.iter().map(|&v| soft(v, t)).collect();
        let mut y = haar_merge(&a, &d);
        y.truncate(x.len());
        y
    }
    Ok(go(x, t, levels))
}

/// Single-level Haar shrinkage with the universal threshold.
pub fn wavelet_denoise(x: &[f64]) -> Result<Vec<f64>> {
    wavelet_denoise_levels(x, 1)
}

/// Runs the full chain on one real sequence.
pub fn preprocess_series(x: &[f64], cfg: &PreprocessConfig) -> Result<Vec<f64>> {
    let y = resample_linear(x, cfg.target_length)?;
    let y = minmax_normalize(&y);
    let y = mean_filter(&y, cfg.mean_filter_window)?;
    match cfg.threshold_rule {
        ThresholdRule::Universal => wavelet_denoise_levels(&y, cfg.wavelet_levels),
    }
}

fn preprocess_stream(s: &IqStream, cfg: &PreprocessConfig) -> Result<IqStream> {
    Ok(IqStream {
        i: preprocess_series(&s.i, cfg)?,
        q: preprocess_series(&s.q, cfg)?,
    })
}

/// Conditions every I and Q series of every antenna independently.
pub fn preprocess_record(rec: &SignalRecord, cfg: &PreprocessConfig) -> Result<SignalRecord> {
    cfg.validate()?;
    ensure!(!rec.rx.is_empty(), Error::Contract(format!("record {} has no receive streams", rec.id)));
    let map = |v: &[IqStream]| v.iter().map(|s| preprocess_stream(s, cfg)).collect::<Result<Vec<_>>>();
    Ok(SignalRecord {
        tx: map(&rec.tx)?,
        rx: map(&rec.rx)?,
        ..rec.clone()
    })
}

pub fn preprocess_records(recs: &[SignalRecord], cfg: &PreprocessConfig) -> Result<Vec<SignalRecord>> {
    recs.par_iter().map(|r| preprocess_record(r, cfg)).collect()
}
