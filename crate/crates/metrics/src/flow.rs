//! Dense correspondence estimation.
//!
//! The distortion metrics are defined over a dense flow field produced by a
//! pluggable backend, and every report records which backend produced its
//! numbers. The default backend is a coarse-to-fine variational solver
//! (Horn-Schunck data + smoothness terms, incremental warping across a
//! shallow image pyramid, seeded by a full-resolution global translation
//! search), which recovers global shifts of at least 8 px and has a
//! sub-0.1 px noise floor on identical inputs. The pyramid is deliberately
//! shallow: document images are near-periodic (text lines, word spacing),
//! and once a level can no longer resolve individual words its data term
//! locks onto the wrong stripe; the translation seed does the global work
//! instead.

use ndarray::Array2;

use crate::{MetricError, Result};

/// Dense per-pixel motion in pixels: position `p` in the source image
/// corresponds to `p + (dx, dy)` in the target image.
#[derive(Debug, Clone)]
pub struct FlowField {
    pub dx: Array2<f64>,
    pub dy: Array2<f64>,
}

impl FlowField {
    pub fn zeros(h: usize, w: usize) -> Self {
        FlowField { dx: Array2::zeros((h, w)), dy: Array2::zeros((h, w)) }
    }
}

/// A dense-flow estimator from a source to a target grayscale image.
pub trait DenseFlowBackend {
    fn flow(&self, from: &Array2<f64>, to: &Array2<f64>) -> Result<FlowField>;
    /// Stable identifier recorded in reports for comparability.
    fn id(&self) -> &'static str;
}

/// Coarse-to-fine Horn-Schunck flow with incremental warping.
#[derive(Debug, Clone)]
pub struct HornSchunckFlow {
    /// Smoothness weight; the solver balances `alpha^2` against squared
    /// image gradients on unit-range intensities.
    pub alpha: f64,
    /// Jacobi iterations per warp update.
    pub iterations: usize,
    /// Warp updates per pyramid level.
    pub warps: usize,
    /// Shortest side at the coarsest pyramid level.
    pub min_level_size: usize,
    /// Per-warp increment cap in pixels. The linearized data term is only
    /// trustworthy near the current estimate; larger apparent updates are
    /// aliasing artifacts and are clamped, leaving later warps to close
    /// the remaining distance.
    pub max_increment: f64,
    /// Search radius in pixels for the full-resolution global translation
    /// seed. Zero disables seeding.
    pub seed_radius: usize,
}

impl Default for HornSchunckFlow {
    fn default() -> Self {
        HornSchunckFlow {
            alpha: 0.3,
            iterations: 100,
            warps: 4,
            min_level_size: 64,
            max_increment: 1.5,
            seed_radius: 12,
        }
    }
}

impl DenseFlowBackend for HornSchunckFlow {
    fn flow(&self, from: &Array2<f64>, to: &Array2<f64>) -> Result<FlowField> {
        if from.dim() != to.dim() {
            return Err(MetricError::SizeMismatch { a: from.dim(), b: to.dim() });
        }
        let (h, w) = from.dim();
        if h < 8 || w < 8 {
            return Err(MetricError::FlowFailure(format!(
                "image {h}x{w} too small for flow estimation"
            )));
        }
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(self.alpha)
            || !positive(self.max_increment)
            || self.iterations == 0
            || self.warps == 0
        {
            return Err(MetricError::FlowFailure("invalid solver parameters".into()));
        }

        // Slight pre-smoothing stabilizes derivatives on hard edges and
        // keeps the identical-input flow exactly zero.
        let pyr_a = build_pyramid(&blur5(from), self.min_level_size);
        let pyr_b = build_pyramid(&blur5(to), self.min_level_size);

        // Global-to-local: seed the coarsest level with the best integer
        // translation found at FULL resolution. Documents are periodic-ish
        // (text lines, words), so both a purely local solver and a search
        // run at a coarse level can lock onto the wrong stripe; at full
        // resolution the word content makes the true motion the unique
        // minimum, and the seed puts every level inside its basin.
        let coarsest = pyr_a.len() - 1;
        let (ch, cw) = pyr_a[coarsest].dim();
        let (sdx, sdy) = global_shift(&pyr_a[0], &pyr_b[0], self.seed_radius);
        let mut flow = FlowField {
            dx: Array2::from_elem((ch, cw), sdx * cw as f64 / w as f64),
            dy: Array2::from_elem((ch, cw), sdy * ch as f64 / h as f64),
        };
        for level in (0..pyr_a.len()).rev() {
            let (lh, lw) = pyr_a[level].dim();
            if flow.dx.dim() != (lh, lw) {
                flow = upscale_flow(&flow, lh, lw);
            }
            for _ in 0..self.warps {
                self.refine(&pyr_a[level], &pyr_b[level], &mut flow);
            }
        }
        Ok(flow)
    }

    fn id(&self) -> &'static str {
        "hs-pyramid-v1"
    }
}

impl HornSchunckFlow {
    /// One warp update: linearize around the current flow and relax the
    /// increment with Jacobi iterations of the classic coupled equations.
    fn refine(&self, from: &Array2<f64>, to: &Array2<f64>, flow: &mut FlowField) {
        let (h, w) = from.dim();
        let (warped, data_ok) = warp_by_flow(to, flow);
        // Derivatives of the average of both images, the symmetric choice.
        let mut ix = Array2::zeros((h, w));
        let mut iy = Array2::zeros((h, w));
        let mut it = Array2::zeros((h, w));
        for u in 0..h {
            for v in 0..w {
                // Where the warp sampled outside the frame the image
                // difference is a lie (clamped border values); drop the data
                // term there and let smoothness extend the field.
                if !data_ok[[u, v]] {
                    continue;
                }
                let avg = |uu: usize, vv: usize| (from[[uu, vv]] + warped[[uu, vv]]) / 2.0;
                let vr = v.min(w - 2) + 1;
                let vl = v.max(1) - 1;
                let ud = u.min(h - 2) + 1;
                let uu_ = u.max(1) - 1;
                ix[[u, v]] = (avg(u, vr) - avg(u, vl)) / (vr - vl) as f64;
                iy[[u, v]] = (avg(ud, v) - avg(uu_, v)) / (ud - uu_) as f64;
                it[[u, v]] = warped[[u, v]] - from[[u, v]];
            }
        }

        // Relax the TOTAL flow, not the increment: the smoothness term must
        // keep acting on flow accumulated by earlier warps and coarser
        // levels, or their noise survives every later pass. The data term
        // stays linearized at the warp point (fx0, fy0).
        let a2 = self.alpha * self.alpha;
        let fx0 = flow.dx.clone();
        let fy0 = flow.dy.clone();
        let mut fx = flow.dx.clone();
        let mut fy = flow.dy.clone();
        for _ in 0..self.iterations {
            let fx_bar = neighbor_mean(&fx);
            let fy_bar = neighbor_mean(&fy);
            for u in 0..h {
                for v in 0..w {
                    let gx = ix[[u, v]];
                    let gy = iy[[u, v]];
                    let rhs = gx * (fx_bar[[u, v]] - fx0[[u, v]])
                        + gy * (fy_bar[[u, v]] - fy0[[u, v]])
                        + it[[u, v]];
                    let denom = a2 + gx * gx + gy * gy;
                    fx[[u, v]] = fx_bar[[u, v]] - gx * rhs / denom;
                    fy[[u, v]] = fy_bar[[u, v]] - gy * rhs / denom;
                }
            }
        }
        let cap = self.max_increment;
        for ((f, &base), &new) in flow.dx.iter_mut().zip(&fx0).zip(&fx) {
            *f = base + (new - base).clamp(-cap, cap);
        }
        for ((f, &base), &new) in flow.dy.iter_mut().zip(&fy0).zip(&fy) {
            *f = base + (new - base).clamp(-cap, cap);
        }
    }
}

/// Best integer translation by mean squared difference over the overlap,
/// searched out to `radius` but at most a third of the image extent.
/// Candidates are ordered by L1 length so ties resolve to the smallest
/// motion.
fn global_shift(a: &Array2<f64>, b: &Array2<f64>, radius: usize) -> (f64, f64) {
    let (h, w) = a.dim();
    let rh = (radius as isize).min(h as isize / 3);
    let rw = (radius as isize).min(w as isize / 3);
    let mut candidates = Vec::new();
    for dy in -rh..=rh {
        for dx in -rw..=rw {
            candidates.push((dy, dx));
        }
    }
    candidates.sort_by_key(|&(dy, dx)| (dy.abs() + dx.abs(), dy, dx));
    let mut best = (0.0, 0.0);
    let mut best_cost = f64::INFINITY;
    for (dy, dx) in candidates {
        let u0 = (-dy).max(0) as usize;
        let u1 = (h as isize - dy).min(h as isize) as usize;
        let v0 = (-dx).max(0) as usize;
        let v1 = (w as isize - dx).min(w as isize) as usize;
        let mut cost = 0.0;
        for u in u0..u1 {
            for v in v0..v1 {
                let d = a[[u, v]] - b[[(u as isize + dy) as usize, (v as isize + dx) as usize]];
                cost += d * d;
            }
        }
        let count = ((u1 - u0) * (v1 - v0)) as f64;
        cost /= count;
        if cost < best_cost {
            best_cost = cost;
            best = (dx as f64, dy as f64);
        }
    }
    best
}

/// Standard Horn-Schunck neighborhood average (edge-weighted 8-neighbor
/// kernel, border indices clamped).
fn neighbor_mean(f: &Array2<f64>) -> Array2<f64> {
    let (h, w) = f.dim();
    let at = |u: isize, v: isize| {
        f[[u.clamp(0, h as isize - 1) as usize, v.clamp(0, w as isize - 1) as usize]]
    };
    Array2::from_shape_fn((h, w), |(u, v)| {
        let (ui, vi) = (u as isize, v as isize);
        let cross =
            at(ui - 1, vi) + at(ui + 1, vi) + at(ui, vi - 1) + at(ui, vi + 1);
        let diag = at(ui - 1, vi - 1) + at(ui - 1, vi + 1) + at(ui + 1, vi - 1)
            + at(ui + 1, vi + 1);
        cross / 6.0 + diag / 12.0
    })
}

/// Samples `img` at `p + flow(p)` with bilinear interpolation, clamping
/// out-of-range positions to the border. The second return marks pixels
/// whose sample position was inside the frame; clamped samples carry no
/// correspondence information.
fn warp_by_flow(img: &Array2<f64>, flow: &FlowField) -> (Array2<f64>, Array2<bool>) {
    let (h, w) = img.dim();
    let mut ok = Array2::from_elem((h, w), true);
    let warped = Array2::from_shape_fn((h, w), |(u, v)| {
        let xr = v as f64 + flow.dx[[u, v]];
        let yr = u as f64 + flow.dy[[u, v]];
        let x = xr.clamp(0.0, (w - 1) as f64);
        let y = yr.clamp(0.0, (h - 1) as f64);
        if x != xr || y != yr {
            ok[[u, v]] = false;
        }
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(w - 1);
        let y1 = (y0 + 1).min(h - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        img[[y0, x0]] * (1.0 - fx) * (1.0 - fy)
            + img[[y0, x1]] * fx * (1.0 - fy)
            + img[[y1, x0]] * (1.0 - fx) * fy
            + img[[y1, x1]] * fx * fy
    });
    (warped, ok)
}

/// Gaussian-ish 5-tap separable blur with clamped borders.
fn blur5(img: &Array2<f64>) -> Array2<f64> {
    const K: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
    let (h, w) = img.dim();
    let mut rows = Array2::zeros((h, w));
    for u in 0..h {
        for v in 0..w {
            let mut acc = 0.0;
            for (k, &kv) in K.iter().enumerate() {
                let vv = (v as isize + k as isize - 2).clamp(0, w as isize - 1) as usize;
                acc += kv * img[[u, vv]];
            }
            rows[[u, v]] = acc;
        }
    }
    let mut out = Array2::zeros((h, w));
    for u in 0..h {
        for v in 0..w {
            let mut acc = 0.0;
            for (k, &kv) in K.iter().enumerate() {
                let uu = (u as isize + k as isize - 2).clamp(0, h as isize - 1) as usize;
                acc += kv * rows[[uu, v]];
            }
            out[[u, v]] = acc;
        }
    }
    out
}

/// Blur-then-decimate pyramid, finest first.
fn build_pyramid(img: &Array2<f64>, min_size: usize) -> Vec<Array2<f64>> {
    let mut levels = vec![img.clone()];
    loop {
        let last = levels.last().unwrap();
        let (h, w) = last.dim();
        if h / 2 < min_size || w / 2 < min_size {
            break;
        }
        let blurred = blur5(last);
        let down = Array2::from_shape_fn((h / 2, w / 2), |(u, v)| blurred[[2 * u, 2 * v]]);
        levels.push(down);
    }
    levels
}

/// Bilinear upscaling of a flow field with the vectors stretched by the
/// per-axis magnification. Decimation pairs coarse node u with fine node
/// 2u, so both the sample positions and the value scale use the exact
/// size ratio rather than corner alignment.
fn upscale_flow(flow: &FlowField, out_h: usize, out_w: usize) -> FlowField {
    let (ih, iw) = flow.dx.dim();
    let sx = out_w as f64 / iw as f64;
    let sy = out_h as f64 / ih as f64;
    let resize = |src: &Array2<f64>, scale: f64| {
        Array2::from_shape_fn((out_h, out_w), |(u, v)| {
            let y = (u as f64 / sy).min((ih - 1) as f64);
            let x = (v as f64 / sx).min((iw - 1) as f64);
            let x0 = x.floor() as usize;
            let y0 = y.floor() as usize;
            let x1 = (x0 + 1).min(iw - 1);
            let y1 = (y0 + 1).min(ih - 1);
            let fx = x - x0 as f64;
            let fy = y - y0 as f64;
            let val = src[[y0, x0]] * (1.0 - fx) * (1.0 - fy)
                + src[[y0, x1]] * fx * (1.0 - fy)
                + src[[y1, x0]] * (1.0 - fx) * fy
                + src[[y1, x1]] * fx * fy;
            val * scale
        })
    };
    FlowField { dx: resize(&flow.dx, sx), dy: resize(&flow.dy, sy) }
}
