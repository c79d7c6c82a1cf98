//! Multi-scale structural similarity.
//!
//! The canonical formulation: 11x11 Gaussian window (sigma 1.5), K1=0.01,
//! K2=0.03 on unit dynamic range, valid windowing, 2x2 mean pooling between
//! scales (odd trailing row/column cropped), contrast-structure terms at
//! every scale and the luminance term only at the coarsest, combined as a
//! weighted geometric product. Inputs smaller than 176 pixels use fewer
//! scales with renormalized weights; negative term means clamp to zero, so
//! the result stays in [0, 1].

use mapping_core::DocumentImage;
use ndarray::Array2;

use crate::{MetricError, Result};

const WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];
const K1: f64 = 0.01;
const K2: f64 = 0.03;
const WINDOW: usize = 11;
const SIGMA: f64 = 1.5;

/// Multi-scale structural similarity in [0, 1]. Inputs are converted to
/// grayscale internally; both images must have equal dimensions and a
/// smallest side of at least 11 pixels.
pub fn ms_ssim(a: &DocumentImage, b: &DocumentImage) -> Result<f64> {
    if a.height() != b.height() || a.width() != b.width() {
        return Err(MetricError::SizeMismatch {
            a: (a.height(), a.width()),
            b: (b.height(), b.width()),
        });
    }
    let mut ga = to_gray64(a);
    let mut gb = to_gray64(b);

    let min_dim = ga.dim().0.min(ga.dim().1);
    let mut scales = 5usize;
    while scales > 1 && min_dim / (1 << (scales - 1)) < WINDOW {
        scales -= 1;
    }
    if min_dim < WINDOW {
        return Err(MetricError::InvalidArgument(format!(
            "images must be at least {WINDOW}px on the short side, got {min_dim}"
        )));
    }
    let weight_sum: f64 = WEIGHTS[..scales].iter().sum();

    let mut value = 1.0;
    for (s, weight) in WEIGHTS[..scales].iter().enumerate() {
        let (l, cs) = ssim_terms(&ga, &gb);
        let w = weight / weight_sum;
        if s == scales - 1 {
            value *= l.max(0.0).powf(w) * cs.max(0.0).powf(w);
        } else {
            value *= cs.max(0.0).powf(w);
            ga = pool2(&ga);
            gb = pool2(&gb);
        }
    }
    Ok(value)
}

fn to_gray64(img: &DocumentImage) -> Array2<f64> {
    let gray = img.to_gray();
    let px = gray.pixels();
    Array2::from_shape_fn((img.height(), img.width()), |(u, v)| px[[u, v, 0]] as f64)
}

/// Mean luminance and contrast-structure terms over valid windows.
fn ssim_terms(a: &Array2<f64>, b: &Array2<f64>) -> (f64, f64) {
    let kernel = gauss_kernel();
    let c1 = K1 * K1;
    let c2 = K2 * K2;
    let mu1 = filt_valid(a, &kernel);
    let mu2 = filt_valid(b, &kernel);
    let s11 = &filt_valid(&(a * a), &kernel) - &(&mu1 * &mu1);
    let s22 = &filt_valid(&(b * b), &kernel) - &(&mu2 * &mu2);
    let s12 = &filt_valid(&(a * b), &kernel) - &(&mu1 * &mu2);

    let mut l_sum = 0.0;
    let mut cs_sum = 0.0;
    let n = mu1.len() as f64;
    for ((((&m1, &m2), &v11), &v22), &v12) in mu1
        .iter()
        .zip(mu2.iter())
        .zip(s11.iter())
        .zip(s22.iter())
        .zip(s12.iter())
    {
        l_sum += (2.0 * m1 * m2 + c1) / (m1 * m1 + m2 * m2 + c1);
        cs_sum += (2.0 * v12 + c2) / (v11 + v22 + c2);
    }
    (l_sum / n, cs_sum / n)
}

fn gauss_kernel() -> [f64; WINDOW] {
    let half = (WINDOW - 1) as f64 / 2.0;
    let mut k = [0.0; WINDOW];
    let mut sum = 0.0;
    for (i, slot) in k.iter_mut().enumerate() {
        let x = i as f64 - half;
        *slot = (-x * x / (2.0 * SIGMA * SIGMA)).exp();
        sum += *slot;
    }
    for slot in &mut k {
        *slot /= sum;
    }
    k
}

/// Separable valid-mode convolution with a symmetric 1-D kernel.
fn filt_valid(img: &Array2<f64>, kernel: &[f64; WINDOW]) -> Array2<f64> {
    let (h, w) = img.dim();
    let mut rows = Array2::zeros((h, w - WINDOW + 1));
    for u in 0..h {
        for v in 0..w - WINDOW + 1 {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                acc += kv * img[[u, v + k]];
            }
            rows[[u, v]] = acc;
        }
    }
    let mut out = Array2::zeros((h - WINDOW + 1, w - WINDOW + 1));
    for v in 0..out.dim().1 {
        for u in 0..out.dim().0 {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                acc += kv * rows[[u + k, v]];
            }
            out[[u, v]] = acc;
        }
    }
    out
}

/// 2x2 mean pooling; an odd trailing row or column is cropped.
fn pool2(img: &Array2<f64>) -> Array2<f64> {
    let (h, w) = img.dim();
    let (oh, ow) = (h / 2, w / 2);
    Array2::from_shape_fn((oh, ow), |(u, v)| {
        (img[[2 * u, 2 * v]]
            + img[[2 * u, 2 * v + 1]]
            + img[[2 * u + 1, 2 * v]]
            + img[[2 * u + 1, 2 * v + 1]])
            / 4.0
    })
}
