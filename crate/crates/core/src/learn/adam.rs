//! Adam updates over the flattened parameter vector.

use crate::error::{CopathError, Result};
use crate::model::ModelParams;

/// First/second moment accumulators plus the step counter. One state
/// serves one parameter vector for the whole run.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
}

impl AdamState {
    pub fn new(len: usize, beta1: f64, beta2: f64, epsilon: f64) -> Result<Self> {
        for (name, beta) in [("beta1", beta1), ("beta2", beta2)] {
            if !(0.0..1.0).contains(&beta) {
                return Err(CopathError::InvalidInput(format!(
                    "{name} must lie in [0, 1), got {beta}"
                )));
            }
        }
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(CopathError::InvalidInput(format!(
                "epsilon must be a positive finite number, got {epsilon}"
            )));
        }
        Ok(AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
            beta1,
            beta2,
            epsilon,
        })
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update:
    /// `θ ← θ − lr · m̂ / (√v̂ + ε)` with `m̂ = m/(1−β₁ᵗ)`, `v̂ = v/(1−β₂ᵗ)`.
    pub fn apply(&mut self, params: &mut ModelParams, grads: &ModelParams, lr: f64) -> Result<()> {
        if !(lr.is_finite() && lr >= 0.0) {
            return Err(CopathError::InvalidInput(format!(
                "learning rate must be a non-negative finite number, got {lr}"
            )));
        }
        let mut flat = params.flatten();
        let gflat = grads.flatten();
        if flat.len() != self.m.len() || gflat.len() != self.m.len() {
            return Err(CopathError::InvalidInput(format!(
                "optimizer tracks {} parameters but received {} values and {} gradients",
                self.m.len(),
                flat.len(),
                gflat.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let m_corr = 1.0 - self.beta1.powi(t);
        let v_corr = 1.0 - self.beta2.powi(t);
        for idx in 0..flat.len() {
            let g = gflat[idx];
            self.m[idx] = self.beta1 * self.m[idx] + (1.0 - self.beta1) * g;
            self.v[idx] = self.beta2 * self.v[idx] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[idx] / m_corr;
            let v_hat = self.v[idx] / v_corr;
            flat[idx] -= lr * m_hat / (v_hat.sqrt() + self.epsilon);
            if !flat[idx].is_finite() {
                return Err(CopathError::Numeric(format!(
                    "parameter {idx} became non-finite during the optimizer update"
                )));
            }
        }
        params.assign_from_flat(&flat)
    }
}
