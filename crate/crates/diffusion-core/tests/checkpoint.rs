use diffusion_core::{load_checkpoint, save_checkpoint, Adam, DiffusionError};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

/// A populated optimizer: a few real steps so the moments are nonzero.
fn warmed_up(n: usize) -> (Vec<f64>, Adam) {
    let mut params: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
    let mut opt = Adam::new(n, 1e-3, 1.0);
    for k in 1..=3 {
        let grads: Vec<f64> = (0..n).map(|i| ((i + k) as f64 * 0.11).cos()).collect();
        opt.step(&mut params, &grads).unwrap();
    }
    (params, opt)
}

#[test]
fn round_trip_is_bitwise_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    let (mut params, opt) = warmed_up(17);
    // Extreme values must survive by bit pattern, not by decimal printing.
    params[3] = f64::MIN_POSITIVE;
    params[5] = -0.1 + 0.2 - 0.1 + 1e-17;
    let config = json!({"dim": 32, "n_ceb": 4, "note": "toy", "lr": 1e-4});

    let mut rng = ChaCha8Rng::seed_from_u64(77);
    rng.set_stream(5);
    for _ in 0..13 {
        rng.next_u64();
    }

    save_checkpoint(&path, &config, &params, &opt, &rng, 42).unwrap();
    let loaded = load_checkpoint(&path).unwrap();

    assert_eq!(loaded.step, 42);
    assert_eq!(loaded.config, config);
    assert_eq!(loaded.params.len(), params.len());
    for (a, b) in params.iter().zip(loaded.params.iter()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
    let (m0, v0) = opt.moments();
    let (m1, v1) = loaded.optimizer.moments();
    for (a, b) in m0.iter().zip(m1.iter()).chain(v0.iter().zip(v1.iter())) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
    assert_eq!(loaded.optimizer.lr, opt.lr);
    assert_eq!(loaded.optimizer.clip, opt.clip);
    assert_eq!(loaded.optimizer.step_count(), opt.step_count());
}

#[test]
fn restored_rng_continues_the_same_sequence() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rng.ckpt");
    let (params, opt) = warmed_up(4);

    let mut rng = ChaCha8Rng::seed_from_u64(123);
    for _ in 0..7 {
        rng.next_u64();
    }
    save_checkpoint(&path, &json!({}), &params, &opt, &rng, 0).unwrap();
    let future: Vec<u64> = (0..10).map(|_| rng.next_u64()).collect();

    let mut restored = load_checkpoint(&path).unwrap().rng;
    let replayed: Vec<u64> = (0..10).map(|_| restored.next_u64()).collect();
    assert_eq!(future, replayed);
}

#[test]
fn resumed_training_matches_uninterrupted_training() {
    // Interrupt a parameter trajectory with a save/load and confirm it
    // lands bit-for-bit where the uninterrupted run lands.
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("resume.ckpt");
    let grad_for = |k: u64, rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..6).map(|_| (rng.next_u64() % 1000) as f64 / 1000.0 - 0.5 + k as f64 * 0.01).collect()
    };

    let (mut p_ref, mut o_ref) = warmed_up(6);
    let mut rng_ref = ChaCha8Rng::seed_from_u64(9);
    for k in 0..8 {
        let g = grad_for(k, &mut rng_ref);
        o_ref.step(&mut p_ref, &g).unwrap();
    }

    let (mut p, mut o) = warmed_up(6);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for k in 0..3 {
        let g = grad_for(k, &mut rng);
        o.step(&mut p, &g).unwrap();
    }
    save_checkpoint(&path, &json!({}), &p, &o, &rng, 3).unwrap();
    let loaded = load_checkpoint(&path).unwrap();
    let (mut p2, mut o2, mut rng2) = (loaded.params, loaded.optimizer, loaded.rng);
    for k in loaded.step..8 {
        let g = grad_for(k, &mut rng2);
        o2.step(&mut p2, &g).unwrap();
    }
    for (a, b) in p_ref.iter().zip(p2.iter()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

#[test]
fn corrupted_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("good.ckpt");
    let (params, opt) = warmed_up(5);
    let rng = ChaCha8Rng::seed_from_u64(1);
    save_checkpoint(&path, &json!({}), &params, &opt, &rng, 1).unwrap();
    let good = std::fs::read(&path).unwrap();

    // Wrong magic.
    let mut bad = good.clone();
    bad[0] = b'X';
    let p = dir.path().join("magic.ckpt");
    std::fs::write(&p, &bad).unwrap();
    assert!(matches!(
        load_checkpoint(&p),
        Err(DiffusionError::Checkpoint(_))
    ));

    // Unsupported version.
    let mut bad = good.clone();
    bad[4] = 99;
    let p = dir.path().join("version.ckpt");
    std::fs::write(&p, &bad).unwrap();
    assert!(matches!(
        load_checkpoint(&p),
        Err(DiffusionError::Checkpoint(_))
    ));

    // Truncated parameter blob.
    let p = dir.path().join("short.ckpt");
    std::fs::write(&p, &good[..good.len() - 9]).unwrap();
    assert!(load_checkpoint(&p).is_err());

    // Garbage header bytes.
    let mut bad = good.clone();
    let header_start = 12;
    for b in bad.iter_mut().skip(header_start).take(8) {
        *b = 0xFF;
    }
    let p = dir.path().join("header.ckpt");
    std::fs::write(&p, &bad).unwrap();
    assert!(matches!(
        load_checkpoint(&p),
        Err(DiffusionError::Checkpoint(_))
    ));

    assert!(load_checkpoint(&dir.path().join("missing.ckpt")).is_err());
}

#[test]
fn optimizer_length_must_match_params() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mismatch.ckpt");
    let (params, _) = warmed_up(5);
    let opt = Adam::new(9, 1e-3, 1.0);
    let rng = ChaCha8Rng::seed_from_u64(2);
    assert!(matches!(
        save_checkpoint(&path, &json!({}), &params, &opt, &rng, 0),
        Err(DiffusionError::InvalidArgument(_))
    ));
}
