//! Baseband modulators with Gray-coded, unit-power constellations.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::ModulationScheme;
use crate::error::{ensure, Error, Result};

/// Pulse and tone settings shared by all modulators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModulationParams {
    /// Samples per symbol (rectangular pulses).
    pub sps: usize,
    /// FSK tone spacing in cycles per sample; `None` selects the orthogonal
    /// spacing `1 / sps`.
    pub fsk_spacing: Option<f64>,
    /// Highest allowed tone magnitude in cycles per sample. Spacings that would
    /// exceed it are scaled down.
    pub fsk_max_frequency: f64,
}

impl Default for ModulationParams {
    fn default() -> Self {
        Self {
            sps: 8,
            fsk_spacing: None,
            fsk_max_frequency: 0.45,
        }
    }
}

impl ModulationParams {
    /// Tone frequencies (cycles/sample) for an `m`-ary FSK, symmetric about 0.
    pub fn fsk_tones(&self, m: usize) -> Vec<f64> {
        let mut spacing = self.fsk_spacing.unwrap_or(1.0 / self.sps as f64);
        let half_span = (m as f64 - 1.0) / 2.0;
        if half_span * spacing > self.fsk_max_frequency {
            spacing = self.fsk_max_frequency / half_span;
        }
        (0..m).map(|k| (k as f64 - half_span) * spacing).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Ask,
    Psk,
    Qam,
    Fsk,
}

/// Inverse of the binary-reflected Gray code.
fn gray_decode(mut g: usize) -> usize {
    let mut b = g;
    while g > 1 {
        g >>= 1;
        b ^= g;
    }
    b
}

fn normalize(points: Vec<Complex64>) -> Vec<Complex64> {
    let power = points.iter().map(|p| p.norm_sqr()).sum::<f64>() / points.len() as f64;
    let s = power.sqrt();
    points.into_iter().map(|p| p / s).collect()
}

/// Square QAM levels per axis for `m` points, Gray-coded per axis.
fn square_qam(m: usize) -> Vec<Complex64> {
    let side = (m as f64).sqrt() as usize;
    let bits_axis = side.trailing_zeros();
    let level = |g: usize| 2.0 * gray_decode(g) as f64 - (side as f64 - 1.0);
    (0..m)
        .map(|word| {
            let i_bits = word >> bits_axis;
            let q_bits = word & (side - 1);
            Complex64::new(level(i_bits), level(q_bits))
        })
        .collect()
}

/// 32-point cross constellation: the 6x6 grid without its four corners.
/// Exact Gray coding does not exist for this shape; points are indexed in
/// row-major order through the Gray decoder.
fn cross_qam32() -> Vec<Complex64> {
    let lv = [-5.0, -3.0, -1.0, 1.0, 3.0, 5.0];
    let grid: Vec<Complex64> = lv
        .iter()
        .flat_map(|&i| lv.iter().map(move |&q| Complex64::new(i, q)))
        .filter(|p| !(p.re.abs() == 5.0 && p.im.abs() == 5.0))
        .collect();
    (0..32).map(|word| grid[gray_decode(word)]).collect()
}

/// Constellation indexed by the symbol's bit word. FSK has no constellation.
pub fn constellation(scheme: ModulationScheme) -> Option<Vec<Complex64>> {
    let m = scheme.order();
    let pts = match scheme.family() {
        Family::Psk => {
            let offset = if m == 4 { PI / 4.0 } else { 0.0 };
            (0..m)
                .map(|word| Complex64::from_polar(1.0, 2.0 * PI * gray_decode(word) as f64 / m as f64 + offset))
                .collect()
        }
        Family::Ask => (0..m).map(|word| Complex64::new(gray_decode(word) as f64, 0.0)).collect(),
        Family::Qam if m == 32 => cross_qam32(),
        Family::Qam => square_qam(m),
        Family::Fsk => return None,
    };
    Some(normalize(pts))
}

/// Modulates `bits` into `length` complex baseband samples.
pub fn modulate(
    bits: &[u8],
    scheme: ModulationScheme,
    params: &ModulationParams,
    length: usize,
) -> Result<Vec<Complex64>> {
    let sps = params.sps;
    ensure!(
        sps > 0 && length % sps == 0,
        Error::Length(format!("length {length} is not divisible by {sps} samples per symbol"))
    );
    let bps = scheme.bits_per_symbol();
    let n_sym = length / sps;
    ensure!(
        bits.len() >= n_sym * bps,
        Error::Contract(format!(
            "{scheme} needs {} bits for {length} samples, got {}",
            n_sym * bps,
            bits.len()
        ))
    );
    let words = bits[..n_sym * bps]
        .chunks(bps)
        .map(|c| c.iter().fold(0usize, |w, &b| (w << 1) | (b & 1) as usize));

    let mut out = Vec::with_capacity(length);
    match constellation(scheme) {
        Some(points) => {
            for w in words {
                out.extend(std::iter::repeat(points[w]).take(sps));
            }
        }
        None => {
            let tones = params.fsk_tones(scheme.order());
            let mut phase = 0.0f64;
            for w in words {
                let f = tones[gray_decode(w)];
                for _ in 0..sps {
                    out.push(Complex64::from_polar(1.0, phase));
                    phase = (phase + 2.0 * PI * f).rem_euclid(2.0 * PI);
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bpsk_symbols() {
        let p = ModulationParams {
            sps: 1,
            ..Default::default()
        };
        let y = modulate(&[0, 1], ModulationScheme::Psk2, &p, 2).unwrap();
        let want = [Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)];
        for (a, b) in y.iter().zip(want) {
            assert!((a - b).norm() < 1e-15, "{a} vs {b}");
        }
    }

    #[test]
    fn constellations_have_unit_power_and_distinct_points() {
        for s in ModulationScheme::ALL {
            let Some(pts) = constellation(s) else { continue };
            assert_eq!(pts.len(), s.order(), "{s}");
            let power = pts.iter().map(|p| p.norm_sqr()).sum::<f64>() / pts.len() as f64;
            assert!((power - 1.0).abs() < 1e-9, "{s}: {power}");
            for i in 0..pts.len() {
                for j in 0..i {
                    assert!((pts[i] - pts[j]).norm() > 1e-6, "{s}: duplicate point");
                }
            }
        }
    }

    #[test]
    fn square_qam_neighbours_differ_in_one_bit() {
        let pts = constellation(ModulationScheme::Qam16).unwrap();
        let min_d = 2.0 / (10.0f64).sqrt();
        for a in 0..16 {
            for b in 0..16 {
                if ((pts[a] - pts[b]).norm() - min_d).abs() < 1e-9 {
                    assert_eq!((a ^ b).count_ones(), 1);
                }
            }
        }
    }

    #[test]
    fn length_and_bit_errors() {
        let p = ModulationParams::default();
        assert!(matches!(
            modulate(&[0; 64], ModulationScheme::Psk2, &p, 20),
            Err(Error::Length(_))
        ));
        assert!(matches!(
            modulate(&[0; 3], ModulationScheme::Psk2, &p, 64),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn fsk_tones_stay_below_nyquist() {
        let p = ModulationParams {
            sps: 4,
            ..Default::default()
        };
        let tones = p.fsk_tones(8);
        assert!(tones.iter().all(|f| f.abs() <= 0.45 + 1e-12));
        let d = ModulationParams::default().fsk_tones(2);
        assert_eq!(d, vec![-1.0 / 16.0, 1.0 / 16.0]);
    }
}
