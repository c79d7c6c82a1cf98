//! The variance schedule and its derived tables.

use crate::{DiffusionError, Result};

/// Precomputed noise schedule: per-step variances β_t, their running
/// products ᾱ_t = Π (1 − β_i), and the stochasticity knob eta that scales
/// the DDIM σ_t. Timesteps are 1-based; ᾱ_0 is defined as 1.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    t_max: usize,
    beta: Vec<f64>,
    alpha_bar: Vec<f64>,
    eta: f64,
}

/// Builds a linear β schedule from `beta_start` at t = 1 to `beta_end` at
/// t = `t_max`.
pub fn make_schedule(
    t_max: usize,
    beta_start: f64,
    beta_end: f64,
    eta: f64,
) -> Result<NoiseSchedule> {
    if t_max < 1 {
        return Err(DiffusionError::InvalidArgument("t_max must be >= 1".into()));
    }
    if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
        return Err(DiffusionError::InvalidArgument(format!(
            "need 0 < beta_start <= beta_end < 1, got [{beta_start}, {beta_end}]"
        )));
    }
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(DiffusionError::InvalidArgument(format!(
            "eta must be finite and >= 0, got {eta}"
        )));
    }
    let mut beta = Vec::with_capacity(t_max);
    let mut alpha_bar = Vec::with_capacity(t_max);
    let mut prod = 1.0;
    for t in 0..t_max {
        let b = if t_max == 1 {
            beta_start
        } else {
            beta_start + (beta_end - beta_start) * t as f64 / (t_max - 1) as f64
        };
        prod *= 1.0 - b;
        beta.push(b);
        alpha_bar.push(prod);
    }
    Ok(NoiseSchedule { t_max, beta, alpha_bar, eta })
}

impl NoiseSchedule {
    pub fn t_max(&self) -> usize {
        self.t_max
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// β_t for t in 1..=t_max.
    pub fn beta(&self, t: usize) -> f64 {
        assert!((1..=self.t_max).contains(&t), "beta index {t} out of 1..={}", self.t_max);
        self.beta[t - 1]
    }

    /// ᾱ_t for t in 0..=t_max; ᾱ_0 = 1.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        assert!(t <= self.t_max, "alpha_bar index {t} out of 0..={}", self.t_max);
        if t == 0 {
            1.0
        } else {
            self.alpha_bar[t - 1]
        }
    }

    /// DDIM σ for a reverse jump from `t_hi` to `t_lo` (`t_lo < t_hi`):
    /// eta · sqrt((1 − ᾱ_lo)/(1 − ᾱ_hi)) · sqrt(1 − ᾱ_hi/ᾱ_lo).
    /// Zero when eta = 0, and at t_lo = 0 where ᾱ_0 = 1.
    pub fn sigma_between(&self, t_hi: usize, t_lo: usize) -> f64 {
        assert!(t_lo < t_hi, "sigma needs t_lo < t_hi, got {t_hi} -> {t_lo}");
        if self.eta == 0.0 {
            return 0.0;
        }
        let ab_hi = self.alpha_bar(t_hi);
        let ab_lo = self.alpha_bar(t_lo);
        self.eta * ((1.0 - ab_lo) / (1.0 - ab_hi)).sqrt() * (1.0 - ab_hi / ab_lo).sqrt()
    }

    /// Adjacent-step σ_t, the Eq.-3 form.
    pub fn sigma(&self, t: usize) -> f64 {
        self.sigma_between(t, t - 1)
    }
}
