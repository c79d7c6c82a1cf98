use mapping_core::DocumentImage;
use metrics::{flow_distortions, local_distortion, DenseFlowBackend, HornSchunckFlow, MetricError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use synth_data::{render_flat_document, LayoutCategory};

const SIZE: usize = 128;

fn backend() -> HornSchunckFlow {
    HornSchunckFlow::default()
}

/// Rendered document page: the content distribution the metrics run on.
fn page(seed: u64) -> DocumentImage {
    render_flat_document(LayoutCategory::SingleColumn, SIZE, seed).0
}

/// Texture that is exactly periodic in both axes, so a wrapped crop is a
/// true translation with no seam.
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

/// Samples `img` under the inverse of the similarity q -> c + s(q-c) + t,
/// with bilinear interpolation and clamped coordinates.
fn similarity_transform(img: &DocumentImage, tx: f64, ty: f64, s: f64) -> DocumentImage {
    let px = img.pixels();
    let (h, w, c) = (img.height(), img.width(), img.channels());
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    DocumentImage::from_fn(h, w, c, |u, v, ch| {
        let x = cx + (v as f64 - cx - tx) / s;
        let y = cy + (u as f64 - cy - ty) / s;
        let x = x.clamp(0.0, w as f64 - 1.0);
        let y = y.clamp(0.0, h as f64 - 1.0);
        let (x0, y0) = (x.floor() as usize, y.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
        let (fx, fy) = ((x - x0 as f64) as f32, (y - y0 as f64) as f32);
        let top = px[[y0, x0, ch]] * (1.0 - fx) + px[[y0, x1, ch]] * fx;
        let bot = px[[y1, x0, ch]] * (1.0 - fx) + px[[y1, x1, ch]] * fx;
        top * (1.0 - fy) + bot * fy
    })
}

#[test]
fn identical_images_sit_on_the_noise_floor() {
    let img = page(11);
    let (ld, ad) = flow_distortions(&img, &img, &backend()).unwrap();
    assert!(ld <= 0.1, "LD noise floor exceeded: {ld}");
    assert!(ad <= 0.1, "AD noise floor exceeded: {ad}");
}

#[test]
fn known_shifts_are_recovered() {
    let x = periodic_texture();
    for shift in [2usize, 4, 8] {
        let shifted = wrapped_shift(&x, shift);
        let ld = local_distortion(&x, &shifted, &backend()).unwrap();
        assert!(
            (ld - shift as f64).abs() <= 0.5,
            "shift {shift}: LD {ld} outside +-0.5"
        );
    }
}

#[test]
fn pure_translation_aligns_away() {
    let img = page(23);
    let moved = similarity_transform(&img, 4.0, -3.0, 1.0);
    let (ld, ad) = flow_distortions(&img, &moved, &backend()).unwrap();
    assert!((ld - 5.0).abs() <= 0.5, "translation magnitude missed: LD {ld}");
    assert!(ad <= 0.1, "AD must absorb a global translation, got {ad}");
}

#[test]
fn global_similarities_align_away() {
    let img = page(42);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..5 {
        let tx: f64 = rng.random_range(-8.0..8.0);
        let ty: f64 = rng.random_range(-8.0..8.0);
        let s: f64 = rng.random_range(0.95..1.05);
        // Keep the perturbation visible so "LD grows" is meaningful.
        if tx.hypot(ty) < 2.0 {
            continue;
        }
        let moved = similarity_transform(&img, tx, ty, s);
        let (ld, ad) = flow_distortions(&img, &moved, &backend()).unwrap();
        assert!(
            ad <= 0.2,
            "case {case} (t=({tx:.2},{ty:.2}), s={s:.3}): AD {ad} above 0.2"
        );
        assert!(
            ld >= 0.5,
            "case {case}: LD {ld} failed to register the perturbation"
        );
        assert!(ad <= ld, "case {case}: AD {ad} exceeds LD {ld}");
    }
}

#[test]
fn backend_identifier_is_stable() {
    assert_eq!(backend().id(), "hs-pyramid-v1");
}

#[test]
fn mismatched_and_tiny_inputs_are_rejected() {
    let a = page(1);
    let b = render_flat_document(LayoutCategory::SingleColumn, 64, 1).0;
    match flow_distortions(&a, &b, &backend()) {
        Err(MetricError::SizeMismatch { .. }) => {}
        other => panic!("expected size mismatch, got {other:?}"),
    }
    let tiny = DocumentImage::constant(6, 6, 1, 0.5);
    assert!(flow_distortions(&tiny, &tiny, &backend()).is_err());
}

#[test]
fn split_calls_agree_with_the_combined_one() {
    let a = page(5);
    let b = similarity_transform(&a, 2.0, 1.0, 1.0);
    let be = backend();
    let (ld, ad) = flow_distortions(&a, &b, &be).unwrap();
    assert_eq!(local_distortion(&a, &b, &be).unwrap(), ld);
    assert_eq!(metrics::aligned_distortion(&a, &b, &be).unwrap(), ad);
}
