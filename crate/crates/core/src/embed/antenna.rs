use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{ensure, Error, Result};

/// Estimates the number of transmit antennas from the eigenvalue spread of
/// the receive autocorrelation `R = Y Y^H / L`: the count of eigenvalues
/// above `tau * lambda_max`, capped at `N_R`. An all-zero `R` gives 0.
pub fn estimate_tx_antennas(rx: &[Vec<Complex64>], tau: f64) -> Result<usize> {
    let n_rx = rx.len();
    ensure!(n_rx >= 1, Error::Contract("need at least one receive stream".into()));
    let l = rx[0].len();
    ensure!(
        rx.iter().all(|s| s.len() == l),
        Error::Contract("receive streams differ in length".into())
    );
    ensure!(l > n_rx, Error::Contract(format!("need more than {n_rx} samples, got {l}")));
    let y = DMatrix::from_fn(n_rx, l, |r, t| rx[r][t]);
    let r = (&y * y.adjoint()) / Complex64::new(l as f64, 0.0);
    if r.iter().all(|v| v.norm() == 0.0) {
        log::warn!("receive autocorrelation is all zero; antenna count estimate is 0");
        return Ok(0);
    }
    let eig = r.symmetric_eigenvalues();
    let max = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(eig.iter().filter(|&&v| v > tau * max).count().min(n_rx))
}
