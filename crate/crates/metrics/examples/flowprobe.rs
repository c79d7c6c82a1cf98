//! Parameter sweep for the dense-flow solver against known-motion cases.
//!
//! Prints LD/AD for wrapped shifts on a periodic texture, pure translation
//! and random similarities on rendered pages, and the identical-image
//! noise floor, for a grid of solver settings.

use mapping_core::DocumentImage;
use metrics::{flow_distortions, HornSchunckFlow};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;
use synth_data::{render_flat_document, LayoutCategory};

const SIZE: usize = 128;

fn page(seed: u64) -> DocumentImage {
    render_flat_document(LayoutCategory::SingleColumn, SIZE, seed).0
}

fn periodic_texture() -> DocumentImage {
    let tau = std::f64::consts::TAU / SIZE as f64;
    DocumentImage::from_fn(SIZE, SIZE, 1, |u, v, _| {
        let (i, j) = (u as f64 * tau, v as f64 * tau);
        (0.5 + 0.2 * (3.0 * j).sin() * (2.0 * i).cos()
            + 0.15 * (5.0 * (i + j)).sin()
            + 0.1 * (7.0 * i).cos()) as f32
    })
}

fn wrapped_shift(img: &DocumentImage, shift: usize) -> DocumentImage {
    let px = img.pixels();
    let (h, w, c) = (img.height(), img.width(), img.channels());
    DocumentImage::from_fn(h, w, c, |u, v, ch| px[[u, (v + shift) % w, ch]])
}

fn similarity_transform(img: &DocumentImage, tx: f64, ty: f64, s: f64) -> DocumentImage {
    let px = img.pixels();
    let (h, w, c) = (img.height(), img.width(), img.channels());
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    DocumentImage::from_fn(h, w, c, |u, v, ch| {
        let x = (cx + (v as f64 - cx - tx) / s).clamp(0.0, w as f64 - 1.0);
        let y = (cy + (u as f64 - cy - ty) / s).clamp(0.0, h as f64 - 1.0);
        let (x0, y0) = (x.floor() as usize, y.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
        let (fx, fy) = ((x - x0 as f64) as f32, (y - y0 as f64) as f32);
        let top = px[[y0, x0, ch]] * (1.0 - fx) + px[[y0, x1, ch]] * fx;
        let bot = px[[y1, x0, ch]] * (1.0 - fx) + px[[y1, x1, ch]] * fx;
        top * (1.0 - fy) + bot * fy
    })
}

fn main() {
    let combos: Vec<(&str, HornSchunckFlow)> = vec![
        (
            "a.30 it100 w4 min64",
            HornSchunckFlow { alpha: 0.3, warps: 4, min_level_size: 64, ..Default::default() },
        ),
        (
            "a.30 it200 w4 min64",
            HornSchunckFlow {
                alpha: 0.3,
                iterations: 200,
                warps: 4,
                min_level_size: 64,
                ..Default::default()
            },
        ),
        (
            "a.30 it100 w4 min128",
            HornSchunckFlow { alpha: 0.3, warps: 4, min_level_size: 128, ..Default::default() },
        ),
        (
            "a.30 it200 w6 min128",
            HornSchunckFlow {
                alpha: 0.3,
                iterations: 200,
                warps: 6,
                min_level_size: 128,
                ..Default::default()
            },
        ),
        (
            "a.20 it200 w4 min64",
            HornSchunckFlow {
                alpha: 0.2,
                iterations: 200,
                warps: 4,
                min_level_size: 64,
                ..Default::default()
            },
        ),
        (
            "a.50 it200 w4 min64",
            HornSchunckFlow {
                alpha: 0.5,
                iterations: 200,
                warps: 4,
                min_level_size: 64,
                ..Default::default()
            },
        ),
    ];

    let tex = periodic_texture();
    let pg23 = page(23);
    let pg42 = page(42);
    let pg11 = page(11);

    for (name, be) in &combos {
        let t0 = Instant::now();
        println!("--- {name}");
        let (ld0, ad0) = flow_distortions(&pg11, &pg11, be).unwrap();
        println!("  identical: LD {ld0:.4} AD {ad0:.4}  (want <=0.1)");
        for shift in [2usize, 4, 8] {
            let (ld, ad) = flow_distortions(&tex, &wrapped_shift(&tex, shift), be).unwrap();
            println!("  shift {shift}: LD {ld:.3} (want {shift}+-0.5)  AD {ad:.3}");
        }
        let moved = similarity_transform(&pg23, 4.0, -3.0, 1.0);
        let (ld, ad) = flow_distortions(&pg23, &moved, be).unwrap();
        println!("  translate (4,-3): LD {ld:.3} (want 5+-0.5)  AD {ad:.4} (want <=0.1)");
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for case in 0..5 {
            let tx: f64 = rng.random_range(-8.0..8.0);
            let ty: f64 = rng.random_range(-8.0..8.0);
            let s: f64 = rng.random_range(0.95..1.05);
            if tx.hypot(ty) < 2.0 {
                continue;
            }
            let moved = similarity_transform(&pg42, tx, ty, s);
            let (ld, ad) = flow_distortions(&pg42, &moved, be).unwrap();
            println!(
                "  sim {case} t=({tx:.2},{ty:.2}) s={s:.3}: LD {ld:.3}  AD {ad:.4} (want <=0.2)"
            );
        }
        println!("  elapsed {:?}", t0.elapsed());
    }
}
