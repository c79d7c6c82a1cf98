//! The x0-space training loss.

use mapping_core::GridMapping;
use ndarray::Array3;

use crate::{DiffusionError, Result};

/// Mean squared error between the clean mapping and its prediction,
/// averaged over all elements.
pub fn diffusion_loss(m0: &GridMapping, x0_hat: &GridMapping) -> Result<f64> {
    check_shapes(m0, x0_hat)?;
    let diff = &x0_hat.coords() - &m0.coords();
    Ok(diff.iter().map(|d| d * d).sum::<f64>() / diff.len() as f64)
}

/// d(loss)/d(x0_hat) for [`diffusion_loss`], scaled by `weight` (use
/// 1/batch_size when accumulating a batch-mean loss).
pub fn loss_gradient(m0: &GridMapping, x0_hat: &GridMapping, weight: f64) -> Result<Array3<f64>> {
    check_shapes(m0, x0_hat)?;
    let n = (m0.height() * m0.width() * 2) as f64;
    Ok((&x0_hat.coords() - &m0.coords()) * (2.0 * weight / n))
}

fn check_shapes(m0: &GridMapping, x0_hat: &GridMapping) -> Result<()> {
    if (m0.height(), m0.width()) != (x0_hat.height(), x0_hat.width()) {
        return Err(DiffusionError::ShapeMismatch(format!(
            "m0 is {}x{} but x0_hat is {}x{}",
            m0.height(),
            m0.width(),
            x0_hat.height(),
            x0_hat.width()
        )));
    }
    Ok(())
}
