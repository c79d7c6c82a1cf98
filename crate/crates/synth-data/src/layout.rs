//! Flat synthetic page rendering.
//!
//! Pages are grids of dark "text-line" bars on light paper, drawn with
//! analytically anti-aliased edges (about a pixel of linear ramp). Soft
//! edges matter downstream: the warped/dewarped round trip resamples the
//! page twice, and hard edges would dominate the reconstruction error.

use mapping_core::DocumentImage;
use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{derive_seed, LayoutCategory};

const PAPER: [f32; 3] = [0.97, 0.97, 0.95];
const INK: [f32; 3] = [0.20, 0.20, 0.24];
const FIGURE_GRAY: [f32; 3] = [0.55, 0.57, 0.60];
/// Uniform desk shade behind the page; warp fill matches it so out-of-page
/// regions of a warped photo blend with the visible desk.
pub const DESK: f32 = 0.30;

/// Fraction of the frame on each side occupied by desk rather than paper.
pub const PAGE_INSET_FRAC: f64 = 0.055;

/// Edge ramp half-width in pixels for text bars.
const TEXT_RAMP: f64 = 1.2;
/// Softer ramp for large figure blocks and the paper boundary.
const FIGURE_RAMP: f64 = 2.0;

/// Soft indicator of the paper rectangle, 1 on paper and 0 on desk, used to
/// derive the warped document-foreground mask.
pub fn page_indicator(size: usize) -> DocumentImage {
    let s = size as f64;
    let inset = PAGE_INSET_FRAC * s;
    let mut cov = Array2::<f64>::zeros((size, size));
    draw_rect(&mut cov, inset, s - inset, inset, s - inset, FIGURE_RAMP);
    DocumentImage::from_fn(size, size, 1, |u, v, _| cov[[u, v]] as f32)
}

/// Renders a flat page on a desk background plus its text-line mask.
/// Deterministic given `seed`.
///
/// The mask is 1 exactly where text-bar coverage exceeds one half; figure
/// blocks in the complex layout are drawn but never masked.
pub fn render_flat_document(
    layout: LayoutCategory,
    size: usize,
    seed: u64,
) -> (DocumentImage, DocumentImage) {
    assert!(size >= 64, "page size {size} below minimum 64");
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "layout", 0));
    let mut text_cov = Array2::<f64>::zeros((size, size));
    let mut fig_cov = Array2::<f64>::zeros((size, size));
    let mut paper_cov = Array2::<f64>::zeros((size, size));

    let s = size as f64;
    let inset = PAGE_INSET_FRAC * s;
    draw_rect(&mut paper_cov, inset, s - inset, inset, s - inset, FIGURE_RAMP);
    let margin = inset + 0.09 * s;
    let line_height = rng.random_range(0.038..0.052) * s;
    let line_gap = line_height * rng.random_range(0.70..1.00);

    match layout {
        LayoutCategory::SingleColumn => {
            let x0 = margin;
            let x1 = s - margin;
            let mut y = margin;
            y = draw_title(&mut text_cov, &mut rng, x0, x1, y, line_height);
            fill_lines(&mut text_cov, &mut rng, x0, x1, y, s - margin, line_height, line_gap);
        }
        LayoutCategory::TwoColumn => {
            let gutter_half = 0.035 * s;
            let cols = [
                (margin, s / 2.0 - gutter_half),
                (s / 2.0 + gutter_half, s - margin),
            ];
            for (x0, x1) in cols {
                fill_lines(&mut text_cov, &mut rng, x0, x1, margin, s - margin, line_height, line_gap);
            }
        }
        LayoutCategory::Complex => {
            let x0 = margin;
            let x1 = s - margin;
            let mut y = margin;
            y = draw_title(&mut text_cov, &mut rng, x0, x1, y, line_height);
            let fig_w = rng.random_range(0.32..0.42) * (x1 - x0);
            let fig_h = rng.random_range(0.26..0.38) * (s - 2.0 * margin);
            let fig_left = rng.random_range(0..2usize) == 0;
            let pad = 0.03 * s;
            let (fx0, fx1) = if fig_left { (x0, x0 + fig_w) } else { (x1 - fig_w, x1) };
            draw_rect(&mut fig_cov, fx0, fx1, y, y + fig_h, FIGURE_RAMP);
            let (tx0, tx1) = if fig_left { (fx1 + pad, x1) } else { (x0, fx0 - pad) };
            fill_lines(&mut text_cov, &mut rng, tx0, tx1, y, y + fig_h, line_height, line_gap);
            y += fig_h + line_gap + pad;
            fill_lines(&mut text_cov, &mut rng, x0, x1, y, s - margin, line_height, line_gap);
        }
    }

    let image = DocumentImage::from_fn(size, size, 3, |u, v, c| {
        let p = paper_cov[[u, v]] as f32;
        let t = text_cov[[u, v]] as f32;
        let f = fig_cov[[u, v]] as f32;
        let page = PAPER[c] + t * (INK[c] - PAPER[c]) + f * (FIGURE_GRAY[c] - PAPER[c]);
        DESK + p * (page - DESK)
    });
    let mask = DocumentImage::from_fn(size, size, 1, |u, v, _| {
        if text_cov[[u, v]] > 0.5 {
            1.0
        } else {
            0.0
        }
    });
    (image, mask)
}

/// Draws a heavier title bar and returns the y cursor below it.
fn draw_title(
    cov: &mut Array2<f64>,
    rng: &mut ChaCha8Rng,
    x0: f64,
    x1: f64,
    y: f64,
    line_height: f64,
) -> f64 {
    let height = 1.8 * line_height;
    let width = rng.random_range(0.5..0.8) * (x1 - x0);
    draw_rect(cov, x0, x0 + width, y, y + height, TEXT_RAMP);
    y + height + 1.2 * line_height
}

/// Fills the band [y0, y1] with word-segmented text lines; paragraphs end
/// with a shortened line and an extra gap.
#[allow(clippy::too_many_arguments)]
fn fill_lines(
    cov: &mut Array2<f64>,
    rng: &mut ChaCha8Rng,
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    line_height: f64,
    line_gap: f64,
) {
    if x1 - x0 < 4.0 * line_height {
        return;
    }
    let mut y = y0;
    let mut lines_left_in_para = rng.random_range(3..=6);
    while y + line_height <= y1 {
        lines_left_in_para -= 1;
        let last = lines_left_in_para == 0;
        let width_frac = if last { rng.random_range(0.4..1.0) } else { rng.random_range(0.9..1.0) };
        draw_words(cov, rng, x0, x0 + width_frac * (x1 - x0), y, y + line_height);
        y += line_height + line_gap;
        if last {
            y += 0.6 * line_height;
            lines_left_in_para = rng.random_range(3..=6);
        }
    }
}

/// Splits a line extent into word rectangles with random lengths and gaps.
fn draw_words(
    cov: &mut Array2<f64>,
    rng: &mut ChaCha8Rng,
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
) {
    let em = y1 - y0;
    let mut x = x0;
    while x < x1 {
        let word = rng.random_range(1.5..4.5) * em;
        let gap = rng.random_range(0.5..0.9) * em;
        let end = (x + word).min(x1);
        if end - x > 0.8 * em {
            draw_rect(cov, x, end, y0, y1, TEXT_RAMP);
        }
        x = end + gap;
    }
}

/// Accumulates anti-aliased rectangle coverage by per-pixel max.
fn draw_rect(cov: &mut Array2<f64>, x0: f64, x1: f64, y0: f64, y1: f64, ramp: f64) {
    if x1 <= x0 || y1 <= y0 {
        return;
    }
    let (h, w) = cov.dim();
    let u_lo = ((y0 - ramp).floor().max(0.0)) as usize;
    let u_hi = ((y1 + ramp).ceil() as usize).min(h.saturating_sub(1));
    let v_lo = ((x0 - ramp).floor().max(0.0)) as usize;
    let v_hi = ((x1 + ramp).ceil() as usize).min(w.saturating_sub(1));
    for u in u_lo..=u_hi {
        let py = u as f64 + 0.5;
        let cy = edge_cov(py - y0, ramp) * edge_cov(y1 - py, ramp);
        if cy == 0.0 {
            continue;
        }
        for v in v_lo..=v_hi {
            let px = v as f64 + 0.5;
            let c = cy * edge_cov(px - x0, ramp) * edge_cov(x1 - px, ramp);
            if c > cov[[u, v]] {
                cov[[u, v]] = c;
            }
        }
    }
}

/// Linear edge coverage: signed inside-distance `d` mapped through a ramp of
/// half-width `r`, so a pixel centered on the edge gets one half.
fn edge_cov(d: f64, r: f64) -> f64 {
    (d / (2.0 * r) + 0.5).clamp(0.0, 1.0)
}
