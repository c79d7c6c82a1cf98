//! Geometric distortion metrics over a dense flow field.
//!
//! Local distortion is the mean flow magnitude in pixels. Aligned
//! distortion first removes the best global similarity (isotropic scale
//! plus translation, least squares over all pixels) from the flow, then
//! averages the residual magnitude weighted by the reference image's
//! gradient magnitude, so featureless regions where flow is guesswork
//! carry almost no weight.

use mapping_core::DocumentImage;
use ndarray::Array2;

use crate::flow::{DenseFlowBackend, FlowField};
use crate::{MetricError, Result};

/// Mean L2 flow magnitude in pixels from `dewarped` to `gt`.
pub fn local_distortion(
    dewarped: &DocumentImage,
    gt: &DocumentImage,
    backend: &dyn DenseFlowBackend,
) -> Result<f64> {
    let (ld, _) = flow_distortions(dewarped, gt, backend)?;
    Ok(ld)
}

/// Similarity-invariant distortion: mean residual flow magnitude after
/// removing the least-squares global similarity, gradient-weighted.
pub fn aligned_distortion(
    dewarped: &DocumentImage,
    gt: &DocumentImage,
    backend: &dyn DenseFlowBackend,
) -> Result<f64> {
    let (_, ad) = flow_distortions(dewarped, gt, backend)?;
    Ok(ad)
}

/// Computes both distortion metrics from a single flow estimate.
pub fn flow_distortions(
    dewarped: &DocumentImage,
    gt: &DocumentImage,
    backend: &dyn DenseFlowBackend,
) -> Result<(f64, f64)> {
    if dewarped.height() != gt.height() || dewarped.width() != gt.width() {
        return Err(MetricError::SizeMismatch {
            a: (dewarped.height(), dewarped.width()),
            b: (gt.height(), gt.width()),
        });
    }
    let a = gray64(dewarped);
    let b = gray64(gt);
    let flow = backend.flow(&a, &b)?;
    let ld = mean_magnitude(&flow);
    let ad = aligned_residual(&flow, &b);
    Ok((ld, ad))
}

fn gray64(img: &DocumentImage) -> Array2<f64> {
    let gray = img.to_gray();
    let px = gray.pixels();
    Array2::from_shape_fn((img.height(), img.width()), |(u, v)| px[[u, v, 0]] as f64)
}

fn mean_magnitude(flow: &FlowField) -> f64 {
    let n = flow.dx.len() as f64;
    flow.dx
        .iter()
        .zip(flow.dy.iter())
        .map(|(&dx, &dy)| (dx * dx + dy * dy).sqrt())
        .sum::<f64>()
        / n
}

/// Removes the least-squares similarity model `F(p) ~ (s-1)·(p-c) + t` and
/// returns the gradient-weighted mean residual magnitude.
fn aligned_residual(flow: &FlowField, reference: &Array2<f64>) -> f64 {
    let (h, w) = flow.dx.dim();
    let cx = (w - 1) as f64 / 2.0;
    let cy = (h - 1) as f64 / 2.0;

    // Normal equations for unknowns (a, tx, ty) with a = s - 1:
    // minimize sum |a·p + t - F(p)|^2 over centered coordinates p.
    let mut spp = 0.0;
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut spf = 0.0;
    let mut sfx = 0.0;
    let mut sfy = 0.0;
    let n = (h * w) as f64;
    for u in 0..h {
        for v in 0..w {
            let x = v as f64 - cx;
            let y = u as f64 - cy;
            let fx = flow.dx[[u, v]];
            let fy = flow.dy[[u, v]];
            spp += x * x + y * y;
            sx += x;
            sy += y;
            spf += x * fx + y * fy;
            sfx += fx;
            sfy += fy;
        }
    }
    // Solve the 3x3 system [[spp, sx, sy], [sx, n, 0], [sy, 0, n]].
    let det = spp * n * n - n * (sx * sx + sy * sy);
    let (a, tx, ty) = if det.abs() < 1e-12 {
        (0.0, sfx / n, sfy / n)
    } else {
        let a = (spf * n - sx * sfx - sy * sfy) * n / det;
        let tx = (sfx - a * sx) / n;
        let ty = (sfy - a * sy) / n;
        (a, tx, ty)
    };

    let mut weight_sum = 0.0;
    let mut weighted = 0.0;
    for u in 0..h {
        for v in 0..w {
            let x = v as f64 - cx;
            let y = u as f64 - cy;
            let rx = flow.dx[[u, v]] - (a * x + tx);
            let ry = flow.dy[[u, v]] - (a * y + ty);
            let wgt = gradient_magnitude(reference, u, v);
            weight_sum += wgt;
            weighted += wgt * (rx * rx + ry * ry).sqrt();
        }
    }
    if weight_sum <= 1e-12 {
        // Featureless reference: fall back to the unweighted mean residual.
        let mut total = 0.0;
        for u in 0..h {
            for v in 0..w {
                let x = v as f64 - cx;
                let y = u as f64 - cy;
                let rx = flow.dx[[u, v]] - (a * x + tx);
                let ry = flow.dy[[u, v]] - (a * y + ty);
                total += (rx * rx + ry * ry).sqrt();
            }
        }
        return total / (h * w) as f64;
    }
    weighted / weight_sum
}

fn gradient_magnitude(img: &Array2<f64>, u: usize, v: usize) -> f64 {
    let (h, w) = img.dim();
    let vr = v.min(w - 2) + 1;
    let vl = v.max(1) - 1;
    let ud = u.min(h - 2) + 1;
    let uu = u.max(1) - 1;
    let gx = (img[[u, vr]] - img[[u, vl]]) / (vr - vl) as f64;
    let gy = (img[[ud, v]] - img[[uu, v]]) / (ud - uu) as f64;
    (gx * gx + gy * gy).sqrt()
}
