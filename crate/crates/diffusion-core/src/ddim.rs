//! The x0-predicting DDIM reverse step.

use mapping_core::GridMapping;

use crate::{DiffusionError, LatentGrid, NoiseSchedule, Result};

/// One reverse step from `t_hi` down to `t_lo` (`t_lo < t_hi`):
///
/// m_lo = sqrt(ᾱ_lo)·m̂_0
///      + sqrt(1 − ᾱ_lo − σ²) · (m_hi − sqrt(ᾱ_hi)·m̂_0) / sqrt(1 − ᾱ_hi)
///      + σ·z
///
/// where m̂_0 is the network's denoised-mapping prediction. `z` is required
/// exactly when σ > 0.
pub fn ddim_step_between(
    m_t: &LatentGrid,
    x0_hat: &GridMapping,
    t_hi: usize,
    t_lo: usize,
    sched: &NoiseSchedule,
    z: Option<&LatentGrid>,
) -> Result<LatentGrid> {
    if !(1..=sched.t_max()).contains(&t_hi) {
        return Err(DiffusionError::InvalidArgument(format!(
            "t_hi {t_hi} out of 1..={}",
            sched.t_max()
        )));
    }
    if t_lo >= t_hi {
        return Err(DiffusionError::InvalidArgument(format!(
            "reverse step needs t_lo < t_hi, got {t_hi} -> {t_lo}"
        )));
    }
    if (m_t.height(), m_t.width()) != (x0_hat.height(), x0_hat.width()) {
        return Err(DiffusionError::ShapeMismatch(format!(
            "m_t is {}x{} but x0_hat is {}x{}",
            m_t.height(),
            m_t.width(),
            x0_hat.height(),
            x0_hat.width()
        )));
    }

    let ab_hi = sched.alpha_bar(t_hi);
    let ab_lo = sched.alpha_bar(t_lo);
    let sigma = sched.sigma_between(t_hi, t_lo);
    let dir_sq = 1.0 - ab_lo - sigma * sigma;
    // Tolerate only float dust below zero; a genuinely negative direction
    // coefficient means the (eta, schedule) pair is inconsistent.
    if dir_sq < -1e-12 {
        return Err(DiffusionError::Schedule(format!(
            "1 - alpha_bar({t_lo}) - sigma^2 = {dir_sq:.3e} < 0; eta {} too large",
            sched.eta()
        )));
    }
    let dir = dir_sq.max(0.0).sqrt() / (1.0 - ab_hi).sqrt();
    let anchor = ab_lo.sqrt();
    let scale_hi = ab_hi.sqrt();

    let x0 = x0_hat.coords();
    let mut values =
        anchor * &x0 + dir * (m_t.values() - &(scale_hi * &x0));
    match (sigma > 0.0, z) {
        (true, Some(noise)) => {
            if (noise.height(), noise.width()) != (m_t.height(), m_t.width()) {
                return Err(DiffusionError::ShapeMismatch("noise shape differs from m_t".into()));
            }
            values = values + sigma * noise.values();
        }
        (true, None) => {
            return Err(DiffusionError::InvalidArgument(
                "sigma > 0 requires a noise draw".into(),
            ));
        }
        (false, _) => {}
    }
    LatentGrid::new(values)
}

/// The adjacent-step form: t down to t − 1.
pub fn ddim_step(
    m_t: &LatentGrid,
    x0_hat: &GridMapping,
    t: usize,
    sched: &NoiseSchedule,
    z: Option<&LatentGrid>,
) -> Result<LatentGrid> {
    if t == 0 {
        return Err(DiffusionError::InvalidArgument("t must be >= 1".into()));
    }
    ddim_step_between(m_t, x0_hat, t, t - 1, sched, z)
}
