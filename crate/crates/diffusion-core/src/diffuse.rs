//! Forward diffusion.

use mapping_core::GridMapping;

use crate::{DiffusionError, LatentGrid, NoiseSchedule, Result};

/// Diffuses a clean mapping to timestep `t`:
/// m_t = sqrt(ᾱ_t)·m_0 + sqrt(1 − ᾱ_t)·z.
///
/// `t = 0` is the identity (ᾱ_0 = 1) and is accepted for convenience.
pub fn forward_diffuse(
    m0: &GridMapping,
    t: usize,
    z: &LatentGrid,
    sched: &NoiseSchedule,
) -> Result<LatentGrid> {
    if t > sched.t_max() {
        return Err(DiffusionError::InvalidArgument(format!(
            "timestep {t} out of 0..={}",
            sched.t_max()
        )));
    }
    if (m0.height(), m0.width()) != (z.height(), z.width()) {
        return Err(DiffusionError::ShapeMismatch(format!(
            "m0 is {}x{} but z is {}x{}",
            m0.height(),
            m0.width(),
            z.height(),
            z.width()
        )));
    }
    let ab = sched.alpha_bar(t);
    let (sa, sn) = (ab.sqrt(), (1.0 - ab).sqrt());
    let values = sa * &m0.coords() + sn * z.values();
    LatentGrid::new(values)
}
