//! Parametric forward deformation fields.
//!
//! A field is synthesized as a displacement grid on normalized coordinates,
//! tapered to zero at the frame border, and rescaled so its largest
//! displacement component equals the requested amplitude exactly. The taper
//! guarantees the resulting mapping stays inside [-1, 1]: along each axis the
//! coordinate is x + a*s((1-|x|)/B) with smoothstep s, whose derivative is
//! at least 1 - 1.5*a/B > 0 for the amplitudes admitted here, so the value
//! never crosses the frame edge it vanishes on.

use mapping_core::GridMapping;
use ndarray::Array3;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rand::SeedableRng;

use crate::{derive_seed, Result, SynthError, WarpKind};

/// Upper bound on the displacement amplitude, in normalized units.
pub const MAX_AMPLITUDE: f64 = 0.15;

/// Width of the border taper band, in normalized units.
const TAPER_BAND: f64 = 0.3;

/// Jacobian determinant floor for accepting a field as bijective.
pub(crate) const MIN_JACOBIAN_DET: f64 = 0.05;

/// Amplitude backoff factor applied on each bijectivity retry.
const RETRY_BACKOFF: f64 = 0.75;

const MAX_RETRIES: usize = 10;

/// Parameters of one forward deformation field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarpSpec {
    pub kind: WarpKind,
    /// Maximum displacement component in normalized units, in [0, 0.15].
    pub amplitude: f64,
    /// Kind-specific shape parameter: sinusoid frequency in half-cycles for
    /// curve, crease count (rounded, 1..=4) for fold, wavenumber-band
    /// multiplier for crumple.
    pub shape: f64,
    pub seed: u64,
}

impl WarpSpec {
    fn validate(&self) -> Result<()> {
        if !self.amplitude.is_finite() || self.amplitude < 0.0 || self.amplitude > MAX_AMPLITUDE {
            return Err(SynthError::InvalidArgument(format!(
                "amplitude {} outside [0, {}]",
                self.amplitude, MAX_AMPLITUDE
            )));
        }
        if !self.shape.is_finite() || self.shape <= 0.0 {
            return Err(SynthError::InvalidArgument(format!(
                "shape parameter {} must be positive",
                self.shape
            )));
        }
        Ok(())
    }
}

/// Synthesizes a smooth bijective forward field at `size`×`size`.
///
/// Bijectivity is checked with a finite-difference Jacobian; on failure the
/// amplitude is reduced by [`RETRY_BACKOFF`] and the same-shaped field is
/// rebuilt, up to 10 times.
pub fn sample_forward_field(spec: &WarpSpec, size: usize) -> Result<GridMapping> {
    sample_field_with_effective(spec, size).map(|(field, _)| field)
}

/// Like [`sample_forward_field`] but also reports the amplitude that was
/// actually accepted after bijectivity backoff, for record metadata.
pub(crate) fn sample_field_with_effective(
    spec: &WarpSpec,
    size: usize,
) -> Result<(GridMapping, f64)> {
    spec.validate()?;
    if size < 4 {
        return Err(SynthError::InvalidArgument(format!(
            "field size {size} below minimum 4"
        )));
    }
    if spec.amplitude == 0.0 {
        return Ok((GridMapping::identity(size, size), 0.0));
    }
    let mut amplitude = spec.amplitude;
    for retry in 0..=MAX_RETRIES {
        let field = build_field(spec, size, amplitude);
        let det = min_jacobian_det(&field);
        if det > MIN_JACOBIAN_DET {
            return Ok((field, amplitude));
        }
        if retry == MAX_RETRIES {
            return Err(SynthError::Generation {
                retries: MAX_RETRIES,
                reason: format!(
                    "Jacobian determinant {det:.4} stayed at or below {MIN_JACOBIAN_DET} \
                     down to amplitude {amplitude:.4}"
                ),
            });
        }
        amplitude *= RETRY_BACKOFF;
    }
    unreachable!("retry loop returns or errors on the last iteration")
}

/// Builds the field at a fixed amplitude: raw shape, border taper, then an
/// exact rescale so the maximum displacement component equals `amplitude`.
fn build_field(spec: &WarpSpec, size: usize, amplitude: f64) -> GridMapping {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, "field-shape", 0));
    let mut disp = match spec.kind {
        WarpKind::Curve => curve_displacement(size, spec.shape, &mut rng),
        WarpKind::Fold => fold_displacement(size, spec.shape, &mut rng),
        WarpKind::Crumple => crumple_displacement(size, spec.shape, &mut rng),
    };
    apply_taper(&mut disp);
    let max_abs = disp.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = if max_abs > 1e-12 { amplitude / max_abs } else { 0.0 };
    GridMapping::from_fn(size, size, |u, v| {
        let x = norm(v, size);
        let y = norm(u, size);
        (x + disp[[u, v, 0]] * scale, y + disp[[u, v, 1]] * scale)
    })
}

fn norm(i: usize, n: usize) -> f64 {
    2.0 * i as f64 / (n - 1) as f64 - 1.0
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Separable border taper: 1 in the interior plateau, 0 on the frame edge.
fn apply_taper(disp: &mut Array3<f64>) {
    let (h, w, _) = disp.dim();
    let ey: Vec<f64> = (0..h)
        .map(|u| smoothstep((1.0 - norm(u, h).abs()) / TAPER_BAND))
        .collect();
    let ex: Vec<f64> = (0..w)
        .map(|v| smoothstep((1.0 - norm(v, w).abs()) / TAPER_BAND))
        .collect();
    for u in 0..h {
        for v in 0..w {
            let e = ey[u] * ex[v];
            disp[[u, v, 0]] *= e;
            disp[[u, v, 1]] *= e;
        }
    }
}

/// Single-axis sinusoid: one coordinate is displaced by a sine of the other.
fn curve_displacement(size: usize, frequency: f64, rng: &mut ChaCha8Rng) -> Array3<f64> {
    let axis = rng.random_range(0..2usize);
    let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let omega = std::f64::consts::PI * frequency;
    let mut disp = Array3::zeros((size, size, 2));
    for u in 0..size {
        for v in 0..size {
            let along = if axis == 0 { norm(u, size) } else { norm(v, size) };
            disp[[u, v, axis]] = (omega * along + phase).sin();
        }
    }
    disp
}

/// Crease ridges: tent profiles across random lines, displacing along each
/// crease normal, then smoothed by a small grid-space Gaussian.
fn fold_displacement(size: usize, fold_count: f64, rng: &mut ChaCha8Rng) -> Array3<f64> {
    let count = (fold_count.round() as usize).clamp(1, 4);
    let mut disp = Array3::zeros((size, size, 2));
    for i in 0..count {
        let cx: f64 = rng.random_range(-0.5..0.5);
        let cy: f64 = rng.random_range(-0.5..0.5);
        let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let (nx, ny) = (theta.cos(), theta.sin());
        let half_width: f64 = rng.random_range(0.12..0.22);
        let sign = if rng.random_range(0..2) == 0 { 1.0 } else { -1.0 };
        let weight = sign * 0.6f64.powi(i as i32);
        for u in 0..size {
            for v in 0..size {
                let s = (norm(v, size) - cx) * nx + (norm(u, size) - cy) * ny;
                let tent = (1.0 - (s / half_width).abs()).max(0.0);
                disp[[u, v, 0]] += weight * tent * nx;
                disp[[u, v, 1]] += weight * tent * ny;
            }
        }
    }
    let sigma = (0.012 * size as f64).max(1.0);
    gaussian_blur(&mut disp, sigma);
    disp
}

/// Band-limited random field: a sum of sinusoidal plane waves with random
/// directions, phases, and per-channel coefficients. `roughness` scales the
/// wavenumber band, raising spatial frequency content.
fn crumple_displacement(size: usize, roughness: f64, rng: &mut ChaCha8Rng) -> Array3<f64> {
    const WAVES: usize = 10;
    let mut params = Vec::with_capacity(WAVES);
    for _ in 0..WAVES {
        let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let wavenumber =
            std::f64::consts::PI * roughness * rng.random_range(0.3..1.0);
        let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let cx: f64 = StandardNormal.sample(rng);
        let cy: f64 = StandardNormal.sample(rng);
        params.push((theta.cos() * wavenumber, theta.sin() * wavenumber, phase, cx, cy));
    }
    let mut disp = Array3::zeros((size, size, 2));
    for u in 0..size {
        for v in 0..size {
            let (x, y) = (norm(v, size), norm(u, size));
            let (mut dx, mut dy) = (0.0, 0.0);
            for &(kx, ky, phase, cx, cy) in &params {
                let s = (kx * x + ky * y + phase).sin();
                dx += cx * s;
                dy += cy * s;
            }
            disp[[u, v, 0]] = dx;
            disp[[u, v, 1]] = dy;
        }
    }
    disp
}

/// Separable Gaussian blur with clamped edges, applied per channel.
fn gaussian_blur(disp: &mut Array3<f64>, sigma: f64) {
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|k| (-0.5 * (k as f64 / sigma).powi(2)).exp())
        .collect();
    let norm: f64 = kernel.iter().sum();
    let (h, w, _) = disp.dim();
    let mut tmp = disp.clone();
    for c in 0..2 {
        for u in 0..h {
            for v in 0..w {
                let mut acc = 0.0;
                for (ki, k) in kernel.iter().enumerate() {
                    let vv = (v as isize + ki as isize - radius).clamp(0, w as isize - 1);
                    acc += k * disp[[u, vv as usize, c]];
                }
                tmp[[u, v, c]] = acc / norm;
            }
        }
        for u in 0..h {
            for v in 0..w {
                let mut acc = 0.0;
                for (ki, k) in kernel.iter().enumerate() {
                    let uu = (u as isize + ki as isize - radius).clamp(0, h as isize - 1);
                    acc += k * tmp[[uu as usize, v, c]];
                }
                disp[[u, v, c]] = acc / norm;
            }
        }
    }
}

/// Minimum finite-difference Jacobian determinant over interior grid nodes.
pub fn min_jacobian_det(map: &GridMapping) -> f64 {
    let (h, w) = (map.height(), map.width());
    let hx = 2.0 / (w - 1) as f64;
    let hy = 2.0 / (h - 1) as f64;
    let mut min_det = f64::INFINITY;
    for u in 1..h - 1 {
        for v in 1..w - 1 {
            let (xr, yr) = map.at(u, v + 1);
            let (xl, yl) = map.at(u, v - 1);
            let (xd, yd) = map.at(u + 1, v);
            let (xu, yu) = map.at(u - 1, v);
            let gxx = (xr - xl) / (2.0 * hx);
            let gyx = (yr - yl) / (2.0 * hx);
            let gxy = (xd - xu) / (2.0 * hy);
            let gyy = (yd - yu) / (2.0 * hy);
            let det = gxx * gyy - gxy * gyx;
            if det < min_det {
                min_det = det;
            }
        }
    }
    min_det
}
