use ndarray::{Array3, ArrayView3};
use num_traits::{FromPrimitive, ToPrimitive};

use crate::{DocumentImage, MappingError, Result};

/// A dense backward mapping: for each output cell, the normalized `(x, y)`
/// source coordinate to sample from.
///
/// Shape is `height x width x 2` with channel order `(x, y)`. A valid
/// ground-truth mapping keeps every component in `[-1, 1]`; predicted
/// mappings may stray outside, which downstream samplers treat as
/// out-of-frame (see [`apply_backward_mapping`]).
#[derive(Debug, Clone, PartialEq)]
pub struct GridMapping {
    coords: Array3<f64>,
}

impl GridMapping {
    /// Wraps a raw coordinate grid. The last axis must have exactly two
    /// channels and both spatial dims must be nonzero.
    pub fn new(coords: Array3<f64>) -> Result<Self> {
        let (h, w, c) = coords.dim();
        if h == 0 || w == 0 {
            return Err(MappingError::InvalidArgument(
                "mapping dimensions must be nonzero".into(),
            ));
        }
        if c != 2 {
            return Err(MappingError::InvalidArgument(format!(
                "mapping must have 2 coordinate channels, got {c}"
            )));
        }
        Ok(Self { coords })
    }

    /// The identity mapping: `coords[u, v] = (2v/(w-1) - 1, 2u/(h-1) - 1)`.
    /// A degenerate axis of length 1 maps to coordinate 0 (the center).
    pub fn identity(height: usize, width: usize) -> Self {
        Self::from_fn(height, width, |u, v| {
            (norm_coord(v, width), norm_coord(u, height))
        })
    }

    /// Builds a mapping by evaluating `f(row, col) -> (x, y)` at every cell.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> (f64, f64)) -> Self {
        assert!(height > 0 && width > 0, "mapping dims must be nonzero");
        let mut coords = Array3::zeros((height, width, 2));
        for u in 0..height {
            for v in 0..width {
                let (x, y) = f(u, v);
                coords[[u, v, 0]] = x;
                coords[[u, v, 1]] = y;
            }
        }
        Self { coords }
    }

    pub fn height(&self) -> usize {
        self.coords.dim().0
    }

    pub fn width(&self) -> usize {
        self.coords.dim().1
    }

    pub fn coords(&self) -> ArrayView3<'_, f64> {
        self.coords.view()
    }

    pub fn coords_mut(&mut self) -> &mut Array3<f64> {
        &mut self.coords
    }

    pub fn into_coords(self) -> Array3<f64> {
        self.coords
    }

    /// The `(x, y)` coordinate stored at `(row, col)`.
    pub fn at(&self, row: usize, col: usize) -> (f64, f64) {
        (self.coords[[row, col, 0]], self.coords[[row, col, 1]])
    }

    /// True when every component lies in `[-1, 1]` (the ground-truth range).
    pub fn is_in_range(&self) -> bool {
        self.coords.iter().all(|c| (-1.0..=1.0).contains(c))
    }

    /// Largest absolute deviation from `other`, elementwise.
    pub fn linf_distance(&self, other: &GridMapping) -> f64 {
        assert_eq!(self.coords.dim(), other.coords.dim(), "shape mismatch");
        self.coords
            .iter()
            .zip(other.coords.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// A dense feature grid at latent resolution: `h x w x dim` activations.
///
/// This is the shared currency between the feature encoders, the condition
/// bundle, and feature-space warping; values carry no range constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    values: Array3<f32>,
}

impl FeatureGrid {
    pub fn new(values: Array3<f32>) -> Result<Self> {
        let (h, w, d) = values.dim();
        if h == 0 || w == 0 || d == 0 {
            return Err(MappingError::InvalidArgument(
                "feature grid dimensions must be nonzero".into(),
            ));
        }
        Ok(Self { values })
    }

    pub fn zeros(h: usize, w: usize, dim: usize) -> Self {
        Self {
            values: Array3::zeros((h, w, dim)),
        }
    }

    pub fn height(&self) -> usize {
        self.values.dim().0
    }

    pub fn width(&self) -> usize {
        self.values.dim().1
    }

    pub fn dim(&self) -> usize {
        self.values.dim().2
    }

    pub fn values(&self) -> ArrayView3<'_, f32> {
        self.values.view()
    }

    pub fn values_mut(&mut self) -> &mut Array3<f32> {
        &mut self.values
    }

    pub fn into_values(self) -> Array3<f32> {
        self.values
    }

    /// Warps the feature grid by a backward mapping; out-of-range
    /// coordinates produce zero features.
    pub fn warp(&self, map: &GridMapping) -> FeatureGrid {
        FeatureGrid {
            values: warp_grid(self.values.view(), map, 0.0),
        }
    }
}

/// Normalized coordinate of index `i` along an axis of length `n`,
/// corner-aligned.
pub(crate) fn norm_coord(i: usize, n: usize) -> f64 {
    if n <= 1 {
        0.0
    } else {
        2.0 * i as f64 / (n - 1) as f64 - 1.0
    }
}

/// Inverse of [`norm_coord`]: pixel position of a normalized coordinate.
#[inline]
fn denorm_coord(c: f64, n: usize) -> f64 {
    (c + 1.0) * 0.5 * (n - 1) as f64
}

/// Bilinear read of channel `ch` at pixel position `(x, y)`; neighbor
/// indices are clamped so exact-edge positions read the border texel.
#[inline]
fn bilinear<F: Copy + ToPrimitive>(src: &ArrayView3<F>, x: f64, y: f64, ch: usize) -> f64 {
    let (h, w, _) = src.dim();
    let x0f = x.floor();
    let y0f = y.floor();
    let fx = x - x0f;
    let fy = y - y0f;
    let x0 = (x0f as isize).clamp(0, w as isize - 1) as usize;
    let y0 = (y0f as isize).clamp(0, h as isize - 1) as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let p = |u: usize, v: usize| src[[u, v, ch]].to_f64().unwrap();
    let top = p(y0, x0) * (1.0 - fx) + p(y0, x1) * fx;
    let bot = p(y1, x0) * (1.0 - fx) + p(y1, x1) * fx;
    top * (1.0 - fy) + bot * fy
}

/// Samples every channel of `src` at the positions named by `map`.
/// Coordinates outside `[-1, 1]` (including NaN) yield `fill` in every
/// channel. The output takes the mapping's spatial shape and the source's
/// channel count.
pub fn warp_grid<F>(src: ArrayView3<F>, map: &GridMapping, fill: F) -> Array3<F>
where
    F: Copy + ToPrimitive + FromPrimitive,
{
    let (sh, sw, sc) = src.dim();
    let (oh, ow) = (map.height(), map.width());
    let mut out = Array3::from_elem((oh, ow, sc), fill);
    for u in 0..oh {
        for v in 0..ow {
            let (cx, cy) = map.at(u, v);
            // NaN fails both bounds checks and falls through to `fill`.
            if (-1.0..=1.0).contains(&cx) && (-1.0..=1.0).contains(&cy) {
                let x = denorm_coord(cx, sw);
                let y = denorm_coord(cy, sh);
                for ch in 0..sc {
                    out[[u, v, ch]] = F::from_f64(bilinear(&src, x, y, ch)).unwrap();
                }
            }
        }
    }
    out
}

/// Like [`warp_grid`] but clamps out-of-range coordinates onto the frame
/// border instead of substituting a fill value. Used where constant
/// extension is the right boundary model (inversion, composition).
pub fn warp_grid_clamped<F>(src: ArrayView3<F>, map: &GridMapping) -> Array3<F>
where
    F: Copy + ToPrimitive + FromPrimitive,
{
    let (sh, sw, sc) = src.dim();
    let (oh, ow) = (map.height(), map.width());
    let mut out = Array3::from_elem((oh, ow, sc), F::from_f64(0.0).unwrap());
    for u in 0..oh {
        for v in 0..ow {
            let (cx, cy) = map.at(u, v);
            let x = denorm_coord(cx.clamp(-1.0, 1.0), sw);
            let y = denorm_coord(cy.clamp(-1.0, 1.0), sh);
            for ch in 0..sc {
                out[[u, v, ch]] = F::from_f64(bilinear(&src, x, y, ch)).unwrap();
            }
        }
    }
    out
}

/// Dewarps `src` by bilinear sampling at the mapping's coordinates:
/// `out[u, v] = src(map[u, v])`, with `fill` for out-of-frame lookups.
/// Output dimensions come from the mapping.
pub fn apply_backward_mapping(
    src: &DocumentImage,
    map: &GridMapping,
    fill: f32,
) -> Result<DocumentImage> {
    if src.height() == 0 || src.width() == 0 {
        return Err(MappingError::InvalidArgument("empty source image".into()));
    }
    let pixels = warp_grid(src.pixels(), map, fill.clamp(0.0, 1.0));
    DocumentImage::new(pixels)
}

/// Composition `outer after inner`: `result[u, v] = outer(inner[u, v])`,
/// sampling `outer` bilinearly with border clamping. The result takes the
/// inner mapping's shape.
pub fn compose_mappings(outer: &GridMapping, inner: &GridMapping) -> Result<GridMapping> {
    GridMapping::new(warp_grid_clamped(outer.coords(), inner))
}

/// Inverts a smooth bijective forward field by damped fixed-point iteration
/// on its displacement: `inv_{k+1} = identity - disp(inv_k)`.
///
/// Convergence is declared when the round-trip `fwd(inv(q)) - q` has
/// max-norm at most `tol` over interior grid points (the outermost ring is
/// excluded, where clamped sampling distorts the residual). Requires a
/// contraction, which the synthetic generator guarantees by keeping the
/// forward Jacobian positive.
pub fn invert_mapping(fwd: &GridMapping, iters: usize, tol: f64) -> Result<GridMapping> {
    if iters == 0 {
        return Err(MappingError::InvalidArgument("iters must be >= 1".into()));
    }
    let (h, w) = (fwd.height(), fwd.width());
    let identity = GridMapping::identity(h, w);
    // Displacement field of the forward mapping on its own grid.
    let disp = &fwd.coords() - &identity.coords();
    let mut inv = identity.clone();
    let mut residual = f64::INFINITY;
    for _ in 0..iters {
        // disp sampled at the current inverse estimate, border-clamped.
        let disp_at_inv = warp_grid_clamped(disp.view(), &inv);
        inv = GridMapping::new(&identity.coords() + &(-&disp_at_inv))?;
        residual = round_trip_residual(fwd, &inv, &identity);
        if residual <= tol {
            return Ok(inv);
        }
    }
    Err(MappingError::Convergence {
        iters,
        residual,
        tol,
    })
}

/// Max-norm of `fwd(inv(q)) - q` over interior grid points.
fn round_trip_residual(fwd: &GridMapping, inv: &GridMapping, identity: &GridMapping) -> f64 {
    let trip = warp_grid_clamped(fwd.coords(), inv);
    let (h, w) = (inv.height(), inv.width());
    let mut worst: f64 = 0.0;
    for u in 0..h {
        for v in 0..w {
            let interior = u > 0 && v > 0 && u + 1 < h && v + 1 < w;
            if !interior && h > 2 && w > 2 {
                continue;
            }
            for c in 0..2 {
                worst = worst.max((trip[[u, v, c]] - identity.coords()[[u, v, c]]).abs());
            }
        }
    }
    worst
}
