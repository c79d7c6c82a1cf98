//! Adaptive-moment gradient descent with global gradient-norm clipping.

use crate::{DiffusionError, Result};

/// Adam state over a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global L2 gradient-norm ceiling applied before the moment updates.
    pub clip: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl Adam {
    pub fn new(n_params: usize, lr: f64, clip: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
        }
    }

    /// Rebuilds an optimizer from checkpointed state.
    #[allow(clippy::too_many_arguments)]
    pub fn from_state(
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
        clip: f64,
        m: Vec<f64>,
        v: Vec<f64>,
        step: u64,
    ) -> Result<Self> {
        if m.len() != v.len() {
            return Err(DiffusionError::InvalidArgument(
                "moment vectors must have equal length".into(),
            ));
        }
        Ok(Adam { lr, beta1, beta2, eps, clip, m, v, step })
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[f64], &[f64]) {
        (&self.m, &self.v)
    }

    /// One update. Gradients are scaled down if their global L2 norm
    /// exceeds `clip`; the caller's buffer is left untouched.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(DiffusionError::InvalidArgument(format!(
                "optimizer sized for {} params, got {} params / {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
        if !norm.is_finite() {
            return Err(DiffusionError::Training(format!(
                "non-finite gradient norm {norm}"
            )));
        }
        let scale = if norm > self.clip { self.clip / norm } else { 1.0 };

        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grads[i] * scale;
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}
