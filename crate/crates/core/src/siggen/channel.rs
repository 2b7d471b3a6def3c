use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::ChannelSpec;
use crate::error::{ensure, Error, Result};

/// Flat-fading model for the channel matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Fading {
    /// i.i.d. circular complex Gaussian entries of unit variance.
    Rayleigh,
    /// Unit-magnitude random-phase line-of-sight term plus scattered part,
    /// with power ratio `k`.
    Rician { k: f64 },
}

impl Default for Fading {
    fn default() -> Self {
        Self::Rayleigh
    }
}

fn cn01<R: Rng>(rng: &mut R) -> Complex64 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re * s, im * s)
}

/// Draws a row-major `n_rx x n_tx` channel matrix.
pub fn draw_channel<R: Rng>(n_tx: usize, n_rx: usize, fading: Fading, rng: &mut R) -> Vec<Complex64> {
    (0..n_tx * n_rx)
        .map(|_| match fading {
            Fading::Rayleigh => cn01(rng),
            Fading::Rician { k } => {
                let los = Complex64::from_polar(1.0, rng.gen_range(0.0..2.0 * PI));
                los * (k / (k + 1.0)).sqrt() + cn01(rng) * (1.0 / (k + 1.0)).sqrt()
            }
        })
        .collect()
}

fn mean_power(streams: &[Vec<Complex64>]) -> f64 {
    let n: usize = streams.iter().map(Vec::len).sum();
    streams.iter().flatten().map(|c| c.norm_sqr()).sum::<f64>() / n as f64
}

/// `y = H x + n`, with per-stream noise power equal to the mean received
/// signal power divided by `10^(snr_db / 10)`.
pub fn apply_channel<R: Rng>(x: &[Vec<Complex64>], spec: &ChannelSpec, rng: &mut R) -> Result<Vec<Vec<Complex64>>> {
    ensure!(
        x.len() == spec.n_tx,
        Error::Contract(format!("{} transmit streams for n_tx = {}", x.len(), spec.n_tx))
    );
    let h = spec
        .h
        .as_ref()
        .ok_or_else(|| Error::Contract("channel matrix is not set".into()))?;
    ensure!(
        h.len() == spec.n_tx * spec.n_rx,
        Error::Contract(format!("channel matrix has {} entries for {}x{}", h.len(), spec.n_rx, spec.n_tx))
    );
    let len = x.first().map_or(0, Vec::len);
    ensure!(
        len > 0 && x.iter().all(|s| s.len() == len),
        Error::Contract("transmit streams must be non-empty and of equal length".into())
    );

    let mut y: Vec<Vec<Complex64>> = (0..spec.n_rx)
        .map(|r| {
            (0..len)
                .map(|t| (0..spec.n_tx).map(|c| h[r * spec.n_tx + c] * x[c][t]).sum())
                .collect()
        })
        .collect();
    let noise_power = mean_power(&y) / 10f64.powf(spec.snr_db / 10.0);
    let sigma = noise_power.sqrt();
    for stream in &mut y {
        for v in stream.iter_mut() {
            *v += cn01(rng) * sigma;
        }
    }
    Ok(y)
}

/// Empirical SNR of `noisy` relative to its noiseless version.
pub fn measured_snr_db(clean: &[Vec<Complex64>], noisy: &[Vec<Complex64>]) -> f64 {
    let noise: Vec<Vec<Complex64>> = clean
        .iter()
        .zip(noisy)
        .map(|(c, n)| c.iter().zip(n).map(|(a, b)| b - a).collect())
        .collect();
    10.0 * (mean_power(clean) / mean_power(&noise)).log10()
}
