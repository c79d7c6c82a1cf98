//! Pair generation: warp a flat page and keep the exact dewarping map.
//!
//! The stored forward field G maps flat coordinates to warped-photo
//! coordinates, so sampling the warped image at G reconstructs the flat
//! page. The warped image itself is produced through the numerical inverse
//! of G, which exists frame-wide because every component of G (deformation
//! and the tapered projective part) vanishes at the frame border.

use mapping_core::{
    apply_backward_mapping, downsample_mapping, invert_mapping, DocumentImage, GridMapping,
};
use ndarray::Array3;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::warp::{min_jacobian_det, sample_field_with_effective, MIN_JACOBIAN_DET};
use crate::{
    derive_seed, CaptureAngle, DomainTags, LayoutCategory, Lighting, Result, SynthError, WarpSpec,
    DESK,
};

/// Inputs to [`generate_pair`] beyond the page and warp themselves.
#[derive(Debug, Clone)]
pub struct PairParams {
    pub id: String,
    pub layout: LayoutCategory,
    pub lighting: Lighting,
    pub angle: CaptureAngle,
    pub latent_size: usize,
}

/// One fully annotated training sample.
#[derive(Debug, Clone)]
pub struct SampleRecord {
    pub id: String,
    pub warped: DocumentImage,
    pub flat: DocumentImage,
    pub gt_map_latent: GridMapping,
    pub gt_map_full: GridMapping,
    pub fg_mask: DocumentImage,
    pub textline_mask: DocumentImage,
    pub domains: DomainTags,
    /// Displacement amplitude actually accepted after bijectivity backoff.
    pub amplitude: f64,
    pub seed: u64,
}

const INVERT_ITERS: usize = 80;
const INVERT_TOL: f64 = 1e-5;
const MAX_COMPOSITE_RETRIES: usize = 10;

/// Builds a sample: synthesizes the field, folds in the capture angle,
/// inverts, applies lighting to the flat page, and warps page and masks.
///
/// `flat` must be square; `textline` is its text-line mask in flat space.
pub fn generate_pair(
    flat: &DocumentImage,
    textline: &DocumentImage,
    spec: &WarpSpec,
    params: &PairParams,
) -> Result<SampleRecord> {
    let size = flat.height();
    if flat.width() != size {
        return Err(SynthError::InvalidArgument(format!(
            "flat page must be square, got {}x{}",
            size,
            flat.width()
        )));
    }
    if textline.height() != size || textline.width() != size || textline.channels() != 1 {
        return Err(SynthError::InvalidArgument(
            "textline mask must be single-channel at the page size".into(),
        ));
    }
    if params.latent_size < 2 {
        return Err(SynthError::InvalidArgument(format!(
            "latent size {} below minimum 2",
            params.latent_size
        )));
    }

    let oblique = match params.angle {
        CaptureAngle::Frontal => None,
        CaptureAngle::Oblique => Some(oblique_displacement(size, spec.seed)),
    };

    // The tapered projective part can push a field that passed its own
    // Jacobian check below the floor, so the composite is re-checked with
    // the same amplitude backoff.
    let mut amplitude = spec.amplitude;
    let mut retries = 0;
    let (gt_map_full, effective) = loop {
        let attempt = WarpSpec { amplitude, ..*spec };
        let (field, eff) = sample_field_with_effective(&attempt, size)?;
        let composite = match &oblique {
            None => field,
            Some(disp) => {
                let mut coords = field.into_coords();
                coords += disp;
                GridMapping::new(coords)?
            }
        };
        let det = min_jacobian_det(&composite);
        if det > MIN_JACOBIAN_DET {
            break (composite, eff);
        }
        if retries == MAX_COMPOSITE_RETRIES || spec.amplitude == 0.0 {
            return Err(SynthError::Generation {
                retries,
                reason: format!("composite Jacobian determinant {det:.4} below floor"),
            });
        }
        retries += 1;
        amplitude *= 0.75;
    };

    let inverse = invert_mapping(&gt_map_full, INVERT_ITERS, INVERT_TOL)?;
    let gt_map_latent = downsample_mapping(&gt_map_full, params.latent_size, params.latent_size)?;

    let gains = lighting_gains(params.lighting, spec.seed);
    let lit = apply_lighting(flat, gains);
    let fill = DESK * (gains[0] + gains[1] + gains[2]) / 3.0;
    let warped = apply_backward_mapping(&lit, &inverse, fill)?;

    let indicator = crate::layout::page_indicator(size);
    let fg_mask = binarize(&apply_backward_mapping(&indicator, &inverse, 0.0)?);
    let textline_mask = binarize(&apply_backward_mapping(textline, &inverse, 0.0)?);

    Ok(SampleRecord {
        id: params.id.clone(),
        warped,
        flat: lit,
        gt_map_latent,
        gt_map_full,
        fg_mask,
        textline_mask,
        domains: DomainTags {
            layout: params.layout,
            lighting: params.lighting,
            angle: params.angle,
            warp_kind: spec.kind,
        },
        amplitude: effective,
        seed: spec.seed,
    })
}

/// Per-channel gains for a lighting condition, jittered by the sample seed.
fn lighting_gains(lighting: Lighting, seed: u64) -> [f32; 3] {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "lighting", 0));
    match lighting {
        Lighting::Bright => {
            let g = rng.random_range(1.00..1.06) as f32;
            [g, g, g]
        }
        Lighting::Dark => {
            let g = rng.random_range(0.62..0.75) as f32;
            [g, g, g]
        }
        Lighting::Warm => [
            rng.random_range(1.02..1.06) as f32,
            rng.random_range(0.96..1.00) as f32,
            rng.random_range(0.82..0.90) as f32,
        ],
    }
}

fn apply_lighting(img: &DocumentImage, gains: [f32; 3]) -> DocumentImage {
    let px = img.pixels();
    DocumentImage::from_fn(img.height(), img.width(), img.channels(), |u, v, c| {
        px[[u, v, c]] * gains[c.min(2)]
    })
}

fn binarize(img: &DocumentImage) -> DocumentImage {
    let px = img.pixels();
    DocumentImage::from_fn(img.height(), img.width(), 1, |u, v, _| {
        if px[[u, v, 0]] > 0.5 {
            1.0
        } else {
            0.0
        }
    })
}

/// Border-tapered projective displacement env(x)·(P(x) − x) for an oblique
/// capture. P is a mild homography (keystone, slight scale/rotation); the
/// taper keeps the composite field a frame bijection, which a raw
/// contracting homography cannot be.
fn oblique_displacement(size: usize, seed: u64) -> Array3<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "oblique", 0));
    let scale: f64 = rng.random_range(0.94..0.97);
    let theta: f64 = rng.random_range(-0.03..0.03);
    let sign = |r: &mut ChaCha8Rng| if r.random_range(0..2) == 0 { 1.0 } else { -1.0 };
    let px: f64 = sign(&mut rng) * rng.random_range(0.015..0.035);
    let py: f64 = sign(&mut rng) * rng.random_range(0.015..0.035);
    let tx: f64 = rng.random_range(-0.015..0.015);
    let ty: f64 = rng.random_range(-0.015..0.015);
    let (ct, st) = (theta.cos(), theta.sin());

    let n = size as f64 - 1.0;
    let norm = |i: usize| 2.0 * i as f64 / n - 1.0;
    let taper = |t: f64| {
        let t = (t / 0.3).clamp(0.0, 1.0);
        t * t * (3.0 - 2.0 * t)
    };
    let mut disp = Array3::zeros((size, size, 2));
    for u in 0..size {
        let y = norm(u);
        for v in 0..size {
            let x = norm(v);
            let den = 1.0 + px * x + py * y;
            let hx = (scale * (ct * x - st * y) + tx) / den;
            let hy = (scale * (st * x + ct * y) + ty) / den;
            let env = taper(1.0 - x.abs()) * taper(1.0 - y.abs());
            disp[[u, v, 0]] = env * (hx - x);
            disp[[u, v, 1]] = env * (hy - y);
        }
    }
    disp
}
