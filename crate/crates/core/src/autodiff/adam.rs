use super::ParamStore;
use crate::error::{ensure, Error, Result};

/// Adam optimizer state with bias-corrected moments.
#[derive(Debug, Clone)]
pub struct AdamState {
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(store: &ParamStore, lr: f64) -> Self {
        let zeros = || store.iter().map(|(_, t)| vec![0.0; t.numel()]).collect();
        Self {
            first: zeros(),
            second: zeros(),
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update from the accumulated gradients, then zeroes them.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        ensure!(
            store.len() == self.first.len(),
            Error::Contract(format!(
                "optimizer tracks {} parameters, store has {}",
                self.first.len(),
                store.len()
            ))
        );
        for ((_, t), m) in store.iter().zip(&self.first) {
            ensure!(
                t.numel() == m.len(),
                Error::Contract(format!("parameter shape drifted: {:?}", t.shape()))
            );
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for ((t, m), v) in store.tensors_mut().zip(&mut self.first).zip(&mut self.second) {
            let Some(g) = t.grad().map(<[f64]>::to_vec) else { continue };
            let data = t.data_mut();
            for i in 0..data.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                data[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
            t.zero_grad();
        }
        Ok(())
    }
}
