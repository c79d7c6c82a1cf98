//! Network hyperparameters.

use diffusion_core::{DiffusionError, Result};
use serde::{Deserialize, Serialize};

/// Architecture hyperparameters. Serialized verbatim into checkpoints and
/// run configs, so field names are the stable external interface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetConfig {
    /// Side length of the latent coordinate grid (one token per cell).
    pub latent_size: usize,
    /// Side length document images are resized to before encoding.
    pub input_size: usize,
    /// Model width.
    pub dim: usize,
    /// Condition embedding block count.
    pub n_ceb: usize,
    /// Fusion generation block count.
    pub n_fgb: usize,
    /// Attention heads; must divide `dim`.
    pub n_heads: usize,
    /// Width of the sinusoidal timestep embedding.
    pub time_dim: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            latent_size: 64,
            input_size: 256,
            dim: 256,
            n_ceb: 12,
            n_fgb: 6,
            n_heads: 8,
            time_dim: 256,
        }
    }
}

impl NetConfig {
    /// A configuration small enough to train on one CPU core.
    pub fn toy() -> Self {
        NetConfig {
            latent_size: 16,
            input_size: 64,
            dim: 128,
            n_ceb: 4,
            n_fgb: 2,
            n_heads: 4,
            time_dim: 64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(DiffusionError::InvalidArgument(msg));
        if self.latent_size < 2 {
            return bad(format!("latent_size {} below minimum 2", self.latent_size));
        }
        if self.input_size < self.latent_size
            || !self.input_size.is_multiple_of(self.latent_size)
            || !(self.input_size / self.latent_size).is_power_of_two()
        {
            return bad(format!(
                "input_size {} must be latent_size {} times a power of two",
                self.input_size, self.latent_size
            ));
        }
        if self.dim < 4 || !self.dim.is_multiple_of(4) {
            return bad(format!(
                "dim {} must be a positive multiple of 4 (positional embedding quadrants)",
                self.dim
            ));
        }
        if self.n_heads == 0 || !self.dim.is_multiple_of(self.n_heads) {
            return bad(format!(
                "dim {} must be divisible by n_heads {}",
                self.dim, self.n_heads
            ));
        }
        if self.n_ceb == 0 {
            return bad("n_ceb must be at least 1".into());
        }
        if self.time_dim < 2 || !self.time_dim.is_multiple_of(2) {
            return bad(format!("time_dim {} must be even and >= 2", self.time_dim));
        }
        Ok(())
    }

    /// Number of stride-2 stages between input and latent resolution.
    pub fn n_down(&self) -> usize {
        (self.input_size / self.latent_size).trailing_zeros() as usize
    }
}
