use std::fs;

use mapping_core::{apply_backward_mapping, psnr, upsample_mapping, GridMapping};
use proptest::prelude::*;
use synth_data::{
    generate_corpus, generate_pair, read_dataset, render_flat_document, sample_forward_field,
    CaptureAngle, CorpusParams, LayoutCategory, Lighting, PairParams, SampleRecord, SynthError,
    WarpKind, WarpSpec,
};

fn pair_params(id: &str, angle: CaptureAngle, lighting: Lighting, latent: usize) -> PairParams {
    PairParams {
        id: id.into(),
        layout: LayoutCategory::SingleColumn,
        lighting,
        angle,
        latent_size: latent,
    }
}

fn make_pair(
    kind: WarpKind,
    amplitude: f64,
    shape: f64,
    angle: CaptureAngle,
    lighting: Lighting,
    seed: u64,
    size: usize,
) -> SampleRecord {
    let (flat, textline) = render_flat_document(LayoutCategory::SingleColumn, size, seed);
    let spec = WarpSpec { kind, amplitude, shape, seed };
    generate_pair(&flat, &textline, &spec, &pair_params("t", angle, lighting, 32)).unwrap()
}

/// Independent finite-difference Jacobian determinant, written against the
/// raw coordinate array rather than the library helper.
fn fd_min_det(map: &GridMapping) -> f64 {
    let c = map.coords();
    let (h, w) = (map.height(), map.width());
    let step_x = 2.0 / (w as f64 - 1.0);
    let step_y = 2.0 / (h as f64 - 1.0);
    let mut worst = f64::INFINITY;
    for u in 1..h - 1 {
        for v in 1..w - 1 {
            let dxdx = (c[[u, v + 1, 0]] - c[[u, v - 1, 0]]) / (2.0 * step_x);
            let dydx = (c[[u, v + 1, 1]] - c[[u, v - 1, 1]]) / (2.0 * step_x);
            let dxdy = (c[[u + 1, v, 0]] - c[[u - 1, v, 0]]) / (2.0 * step_y);
            let dydy = (c[[u + 1, v, 1]] - c[[u - 1, v, 1]]) / (2.0 * step_y);
            worst = worst.min(dxdx * dydy - dxdy * dydx);
        }
    }
    worst
}

fn max_displacement(map: &GridMapping) -> f64 {
    let id = GridMapping::identity(map.height(), map.width());
    let mut max = 0.0f64;
    for (a, b) in map.coords().iter().zip(id.coords().iter()) {
        max = max.max((a - b).abs());
    }
    max
}

#[test]
fn render_is_deterministic() {
    let (a_img, a_mask) = render_flat_document(LayoutCategory::SingleColumn, 128, 7);
    let (b_img, b_mask) = render_flat_document(LayoutCategory::SingleColumn, 128, 7);
    assert_eq!(a_img.pixels(), b_img.pixels());
    assert_eq!(a_mask.pixels(), b_mask.pixels());
}

#[test]
fn textline_fraction_within_bounds() {
    for layout in LayoutCategory::ALL {
        for seed in [1u64, 2, 3] {
            for size in [64usize, 128] {
                let (_, mask) = render_flat_document(layout, size, seed);
                let total: f32 = mask.pixels().iter().sum();
                let frac = total as f64 / (size * size) as f64;
                assert!(
                    frac > 0.05 && frac < 0.6,
                    "{layout:?} size {size} seed {seed}: fraction {frac:.3}"
                );
            }
        }
    }
}

#[test]
fn two_column_mask_has_central_gutter() {
    for seed in [1u64, 2, 3, 4] {
        let size = 128;
        let (_, mask) = render_flat_document(LayoutCategory::TwoColumn, size, seed);
        let px = mask.pixels();
        for v in size / 2 - 3..size / 2 + 3 {
            for u in 0..size {
                assert_eq!(px[[u, v, 0]], 0.0, "seed {seed}: ink at ({u}, {v})");
            }
        }
    }
}

#[test]
fn zero_amplitude_field_is_identity() {
    for kind in WarpKind::ALL {
        let spec = WarpSpec { kind, amplitude: 0.0, shape: 1.0, seed: 11 };
        let field = sample_forward_field(&spec, 64).unwrap();
        assert_eq!(field.coords(), GridMapping::identity(64, 64).coords());
    }
}

#[test]
fn curve_max_displacement_equals_amplitude() {
    for (amplitude, seed) in [(0.05, 1u64), (0.12, 2), (0.15, 3)] {
        let spec = WarpSpec { kind: WarpKind::Curve, amplitude, shape: 1.0, seed };
        let field = sample_forward_field(&spec, 96).unwrap();
        let max = max_displacement(&field);
        assert!(
            (max - amplitude).abs() <= 1e-6,
            "seed {seed}: max {max} vs amplitude {amplitude}"
        );
    }
}

#[test]
fn accepted_fields_have_positive_jacobian() {
    for kind in WarpKind::ALL {
        for seed in [5u64, 6, 7] {
            let spec = WarpSpec { kind, amplitude: 0.12, shape: 1.5, seed };
            let field = sample_forward_field(&spec, 96).unwrap();
            let det = fd_min_det(&field);
            assert!(det > 0.0, "{kind:?} seed {seed}: min det {det}");
        }
    }
}

#[test]
fn invalid_specs_are_rejected() {
    let bad_amp = WarpSpec { kind: WarpKind::Curve, amplitude: 0.2, shape: 1.0, seed: 1 };
    assert!(matches!(
        sample_forward_field(&bad_amp, 64),
        Err(SynthError::InvalidArgument(_))
    ));
    let bad_shape = WarpSpec { kind: WarpKind::Curve, amplitude: 0.1, shape: 0.0, seed: 1 };
    assert!(matches!(
        sample_forward_field(&bad_shape, 64),
        Err(SynthError::InvalidArgument(_))
    ));
}

#[test]
fn identity_pair_reproduces_flat_exactly() {
    let size = 96;
    let (flat, textline) = render_flat_document(LayoutCategory::SingleColumn, size, 21);
    let spec = WarpSpec { kind: WarpKind::Curve, amplitude: 0.0, shape: 1.0, seed: 21 };
    let params = pair_params("id0", CaptureAngle::Frontal, Lighting::Bright, 32);
    let rec = generate_pair(&flat, &textline, &spec, &params).unwrap();
    assert_eq!(rec.warped.pixels(), rec.flat.pixels());
    assert_eq!(rec.gt_map_full.coords(), GridMapping::identity(size, size).coords());
    let latent_id = GridMapping::identity(32, 32);
    assert!(rec.gt_map_latent.linf_distance(&latent_id) <= 1e-12);
}

#[test]
fn round_trip_reconstruction_meets_psnr_floor() {
    let mut worst = f64::INFINITY;
    for (kind, shape) in [(WarpKind::Curve, 1.2), (WarpKind::Fold, 2.0), (WarpKind::Crumple, 1.8)]
    {
        for angle in CaptureAngle::ALL {
            let rec = make_pair(kind, 0.1, shape, angle, Lighting::Dark, 31, 128);
            let rebuilt = apply_backward_mapping(&rec.warped, &rec.gt_map_full, 0.0).unwrap();
            let db = psnr(&rebuilt, &rec.flat, 2);
            worst = worst.min(db);
            assert!(db >= 25.0, "{kind:?}/{angle:?}: reconstruction {db:.2} dB");
        }
    }
    // Headroom so renderer tweaks cannot silently erode the invariant.
    assert!(worst >= 26.0, "worst reconstruction {worst:.2} dB leaves no margin");
}

#[test]
fn latent_map_reconstruction_stays_within_3db() {
    for (kind, seed) in [(WarpKind::Curve, 41u64), (WarpKind::Fold, 42), (WarpKind::Crumple, 43)]
    {
        let rec = make_pair(kind, 0.1, 1.5, CaptureAngle::Frontal, Lighting::Bright, seed, 128);
        let up = upsample_mapping(&rec.gt_map_latent, 128, 128).unwrap();
        let full = psnr(
            &apply_backward_mapping(&rec.warped, &rec.gt_map_full, 0.0).unwrap(),
            &rec.flat,
            2,
        );
        let coarse = psnr(&apply_backward_mapping(&rec.warped, &up, 0.0).unwrap(), &rec.flat, 2);
        assert!(
            coarse >= full - 3.0,
            "{kind:?}: latent {coarse:.2} dB vs full {full:.2} dB"
        );
    }
}

#[test]
fn masks_are_binary_and_fg_tracks_page() {
    let rec = make_pair(
        WarpKind::Fold,
        0.1,
        2.0,
        CaptureAngle::Oblique,
        Lighting::Warm,
        51,
        128,
    );
    for img in [&rec.fg_mask, &rec.textline_mask] {
        assert!(img.pixels().iter().all(|&v| v == 0.0 || v == 1.0));
    }
    let fg: f32 = rec.fg_mask.pixels().iter().sum();
    let frac = fg as f64 / (128.0 * 128.0);
    // The page keeps most of the frame but the oblique keystone must leave
    // visible desk, so the footprint is strictly inside (0.5, 0.98).
    assert!(frac > 0.5 && frac < 0.98, "fg fraction {frac:.3}");
    let tl: f32 = rec.textline_mask.pixels().iter().sum();
    assert!(tl > 0.0, "warped textline mask is empty");
}

#[test]
fn corpus_covers_domain_cross_product() {
    let dir = tempfile::tempdir().unwrap();
    let params = CorpusParams {
        count: 8 * 54,
        size: 64,
        latent_size: 16,
        seed: 99,
        layouts: vec![],
        config_hash: None,
    };
    let index = generate_corpus(&params, dir.path()).unwrap();
    assert_eq!(index.count, 432);
    let records = read_dataset(dir.path()).unwrap();
    let mut counts = std::collections::HashMap::new();
    for r in &records {
        *counts.entry((r.domains.layout, r.domains.lighting, r.domains.angle, r.domains.warp_kind))
            .or_insert(0usize) += 1;
    }
    assert_eq!(counts.len(), 54, "missing domain combinations");
    for (combo, n) in counts {
        assert!(n >= 8, "{combo:?} appeared only {n} times");
    }
}

#[test]
fn corpus_generation_is_byte_identical() {
    let params = CorpusParams {
        count: 6,
        size: 64,
        latent_size: 8,
        seed: 123,
        layouts: vec![LayoutCategory::TwoColumn],
        config_hash: Some("abc".into()),
    };
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    generate_corpus(&params, dir_a.path()).unwrap();
    generate_corpus(&params, dir_b.path()).unwrap();

    let mut files = Vec::new();
    collect_files(dir_a.path(), dir_a.path(), &mut files);
    assert!(files.len() > 6 * 7, "expected all sample files plus index");
    for rel in files {
        let a = fs::read(dir_a.path().join(&rel)).unwrap();
        let b = fs::read(dir_b.path().join(&rel)).unwrap();
        assert_eq!(a, b, "{} differs between runs", rel);
    }
}

fn collect_files(root: &std::path::Path, dir: &std::path::Path, out: &mut Vec<String>) {
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            collect_files(root, &path, out);
        } else {
            out.push(path.strip_prefix(root).unwrap().display().to_string());
        }
    }
}

#[test]
fn dataset_round_trip_preserves_fields() {
    let dir = tempfile::tempdir().unwrap();
    let params = CorpusParams {
        count: 16,
        size: 64,
        latent_size: 8,
        seed: 7,
        layouts: vec![],
        config_hash: None,
    };
    generate_corpus(&params, dir.path()).unwrap();
    let records = read_dataset(dir.path()).unwrap();
    assert_eq!(records.len(), 16);

    // Regenerate the same corpus in memory by reading a second copy.
    let dir2 = tempfile::tempdir().unwrap();
    generate_corpus(&params, dir2.path()).unwrap();
    let again = read_dataset(dir2.path()).unwrap();
    for (a, b) in records.iter().zip(again.iter()) {
        assert_eq!(a.id, b.id);
        assert_eq!(a.domains, b.domains);
        assert_eq!(a.seed, b.seed);
        assert!((a.amplitude - b.amplitude).abs() < 1e-12);
        assert_eq!(a.warped.pixels(), b.warped.pixels());
        assert_eq!(a.fg_mask.pixels(), b.fg_mask.pixels());
        assert!(a.gt_map_full.linf_distance(&b.gt_map_full) == 0.0);
        assert!(a.gt_map_latent.linf_distance(&b.gt_map_latent) == 0.0);
    }
}

#[test]
fn read_reports_missing_meta() {
    let dir = tempfile::tempdir().unwrap();
    let params = CorpusParams {
        count: 2,
        size: 64,
        latent_size: 8,
        seed: 5,
        layouts: vec![LayoutCategory::SingleColumn],
        config_hash: None,
    };
    generate_corpus(&params, dir.path()).unwrap();
    fs::remove_file(dir.path().join("samples/s00001/meta.json")).unwrap();
    let err = read_dataset(dir.path()).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("meta.json"), "error does not name the file: {msg}");
}

#[test]
fn read_reports_corrupt_mapping_magic() {
    let dir = tempfile::tempdir().unwrap();
    let params = CorpusParams {
        count: 1,
        size: 64,
        latent_size: 8,
        seed: 5,
        layouts: vec![LayoutCategory::SingleColumn],
        config_hash: None,
    };
    generate_corpus(&params, dir.path()).unwrap();
    let path = dir.path().join("samples/s00000/gt_full.dvdm");
    let mut bytes = fs::read(&path).unwrap();
    bytes[0] = b'X';
    fs::write(&path, bytes).unwrap();
    let err = read_dataset(dir.path()).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("gt_full.dvdm"), "error does not name the file: {msg}");
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn accepted_fields_are_bounded_and_bijective(
        kind_ix in 0usize..3,
        amplitude in 0.01f64..0.15,
        shape in 0.5f64..2.5,
        seed in 0u64..1_000_000,
    ) {
        let kind = WarpKind::ALL[kind_ix];
        let shape = if kind == WarpKind::Fold { shape.round().max(1.0) } else { shape };
        let spec = WarpSpec { kind, amplitude, shape, seed };
        let field = sample_forward_field(&spec, 33).unwrap();
        for &v in field.coords().iter() {
            prop_assert!((-1.0..=1.0).contains(&v), "coordinate {v} out of range");
        }
        prop_assert!(fd_min_det(&field) > 0.0);
        prop_assert!(max_displacement(&field) <= amplitude + 1e-9);
    }
}
