use diffusion_core::{forward_diffuse, make_schedule, DiffusionError, LatentGrid, NoiseSchedule};
use mapping_core::GridMapping;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn standard() -> NoiseSchedule {
    make_schedule(1000, 1e-4, 0.02, 0.0).unwrap()
}

/// A smooth non-trivial clean map.
fn clean_map(n: usize) -> GridMapping {
    GridMapping::from_fn(n, n, |u, v| {
        let x = -1.0 + 2.0 * v as f64 / (n - 1) as f64;
        let y = -1.0 + 2.0 * u as f64 / (n - 1) as f64;
        (x + 0.05 * (3.0 * y).sin(), y - 0.04 * (2.0 * x).cos())
    })
}

#[test]
fn t_zero_is_identity() {
    let sched = standard();
    let m0 = clean_map(8);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let z = LatentGrid::standard_normal(8, 8, &mut rng);
    let m = forward_diffuse(&m0, 0, &z, &sched).unwrap();
    assert_eq!(m.values(), &m0.coords().to_owned());
}

#[test]
fn matches_closed_form_at_every_timestep() {
    let sched = standard();
    let m0 = clean_map(6);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let z = LatentGrid::standard_normal(6, 6, &mut rng);
    for t in [1, 2, 137, 500, 999, 1000] {
        let m = forward_diffuse(&m0, t, &z, &sched).unwrap();
        let sa = sched.alpha_bar(t).sqrt();
        let sn = (1.0 - sched.alpha_bar(t)).sqrt();
        for ((u, v, c), &got) in m.values().indexed_iter() {
            let want = sa * m0.coords()[[u, v, c]] + sn * z.values()[[u, v, c]];
            assert!(
                (got - want).abs() < 1e-12,
                "mismatch at t={t} ({u},{v},{c}): {got} vs {want}"
            );
        }
    }
}

#[test]
fn terminal_state_is_nearly_pure_noise() {
    let sched = standard();
    let m0 = clean_map(6);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let z = LatentGrid::standard_normal(6, 6, &mut rng);
    let m = forward_diffuse(&m0, 1000, &z, &sched).unwrap();
    // sqrt(alpha_bar(1000)) ~ 0.0064, so the signal contribution is tiny.
    for ((u, v, c), &got) in m.values().indexed_iter() {
        assert!((got - z.values()[[u, v, c]]).abs() < 0.02);
    }
}

#[test]
fn sample_moments_match_the_marginal() {
    // m_t | m_0 ~ N(sqrt(ab)*m0, (1-ab)I). Estimate mean and variance of a
    // single cell over many draws and compare against the closed form.
    let sched = standard();
    let t = 500;
    let ab = sched.alpha_bar(t);
    let m0 = GridMapping::from_fn(1, 1, |_, _| (0.37, -0.82));
    let mut rng = ChaCha8Rng::seed_from_u64(99);

    let n = 10_000;
    let mut sum = [0.0f64; 2];
    let mut sum_sq = [0.0f64; 2];
    for _ in 0..n {
        let z = LatentGrid::standard_normal(1, 1, &mut rng);
        let m = forward_diffuse(&m0, t, &z, &sched).unwrap();
        for c in 0..2 {
            let x = m.values()[[0, 0, c]];
            sum[c] += x;
            sum_sq[c] += x * x;
        }
    }
    for c in 0..2 {
        let mean = sum[c] / n as f64;
        let var = sum_sq[c] / n as f64 - mean * mean;
        let want_mean = ab.sqrt() * m0.coords()[[0, 0, c]];
        let want_var = 1.0 - ab;
        let mean_tol = 3.0 * want_var.sqrt() / (n as f64).sqrt();
        assert!(
            (mean - want_mean).abs() < mean_tol,
            "channel {c}: mean {mean} vs {want_mean} (tol {mean_tol})"
        );
        assert!(
            (var / want_var - 1.0).abs() < 0.05,
            "channel {c}: var {var} vs {want_var}"
        );
    }
}

#[test]
fn rejects_bad_inputs() {
    let sched = standard();
    let m0 = clean_map(4);
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let z = LatentGrid::standard_normal(4, 4, &mut rng);
    assert!(matches!(
        forward_diffuse(&m0, 1001, &z, &sched),
        Err(DiffusionError::InvalidArgument(_))
    ));
    let z_wrong = LatentGrid::standard_normal(5, 4, &mut rng);
    assert!(matches!(
        forward_diffuse(&m0, 10, &z_wrong, &sched),
        Err(DiffusionError::ShapeMismatch(_))
    ));
}

proptest! {
    #[test]
    fn signal_and_noise_coefficients_stay_on_the_unit_circle(t in 1usize..=1000) {
        // The two mixing coefficients must satisfy sa^2 + sn^2 = 1, so a
        // unit-variance input stays unit-variance. Probed through the op:
        // diffusing a ones map with zero noise isolates sa, diffusing a
        // zero map with ones noise isolates sn.
        let sched = standard();
        let ones_map = GridMapping::from_fn(3, 3, |_, _| (1.0, 1.0));
        let zero_map = GridMapping::from_fn(3, 3, |_, _| (0.0, 0.0));
        let ones_z = LatentGrid::new(ndarray::Array3::ones((3, 3, 2))).unwrap();
        let sa = forward_diffuse(&ones_map, t, &LatentGrid::zeros(3, 3), &sched).unwrap();
        let sn = forward_diffuse(&zero_map, t, &ones_z, &sched).unwrap();
        for ((u, v, c), &a) in sa.values().indexed_iter() {
            let n = sn.values()[[u, v, c]];
            prop_assert!((a * a + n * n - 1.0).abs() < 1e-9);
        }
    }
}
