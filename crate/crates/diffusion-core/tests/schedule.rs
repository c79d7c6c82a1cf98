use diffusion_core::{make_schedule, DiffusionError};
use proptest::prelude::*;

/// The production schedule: 1000 steps, linear β in [1e-4, 0.02].
fn standard(eta: f64) -> diffusion_core::NoiseSchedule {
    make_schedule(1000, 1e-4, 0.02, eta).unwrap()
}

#[test]
fn linear_beta_matches_reference() {
    let s = standard(0.0);
    assert_eq!(s.beta(1), 0.0001);
    assert!(
        (s.beta(500) - 0.01004004004004004).abs() < 1e-18,
        "beta(500) drifted from reference: {}",
        s.beta(500)
    );
    assert_eq!(s.beta(1000), 0.02);
}

#[test]
fn alpha_bar_matches_reference() {
    let s = standard(0.0);
    assert_eq!(s.alpha_bar(0), 1.0);
    assert!(
        (s.alpha_bar(1) - 0.9999).abs() < 1e-15,
        "alpha_bar(1) drifted: {}",
        s.alpha_bar(1)
    );
    assert!(
        (s.alpha_bar(500) - 0.07858724288177821).abs() < 1e-15,
        "alpha_bar(500) drifted: {}",
        s.alpha_bar(500)
    );
    assert!(
        (s.alpha_bar(1000) - 4.0358297653756754e-05).abs() < 1e-18,
        "alpha_bar(1000) drifted: {}",
        s.alpha_bar(1000)
    );
}

#[test]
fn alpha_bar_is_strictly_decreasing() {
    let s = standard(0.0);
    for t in 1..=1000 {
        assert!(
            s.alpha_bar(t) < s.alpha_bar(t - 1),
            "alpha_bar not strictly decreasing at t={t}"
        );
        assert!(s.alpha_bar(t) > 0.0);
    }
}

#[test]
fn sigma_matches_reference_at_eta_one() {
    let s = standard(1.0);
    assert!(
        (s.sigma(500) - 0.10015665437010986).abs() < 1e-15,
        "sigma(500) drifted: {}",
        s.sigma(500)
    );
}

#[test]
fn eta_zero_kills_all_sigmas() {
    let s = standard(0.0);
    for t in 1..=1000 {
        assert_eq!(s.sigma(t), 0.0);
    }
    assert_eq!(s.sigma_between(1000, 1), 0.0);
}

#[test]
fn single_step_schedule_uses_beta_start() {
    let s = make_schedule(1, 0.5, 0.9, 0.0).unwrap();
    assert_eq!(s.t_max(), 1);
    assert_eq!(s.beta(1), 0.5);
    assert_eq!(s.alpha_bar(1), 0.5);
}

#[test]
fn sigma_between_skipping_steps_exceeds_adjacent() {
    // A coarser hop carries more variance than a fine one ending at the
    // same place.
    let s = standard(1.0);
    assert!(s.sigma_between(500, 400) > s.sigma_between(401, 400));
}

#[test]
fn rejects_invalid_parameters() {
    assert!(matches!(
        make_schedule(0, 1e-4, 0.02, 0.0),
        Err(DiffusionError::InvalidArgument(_))
    ));
    assert!(matches!(
        make_schedule(10, 0.0, 0.02, 0.0),
        Err(DiffusionError::InvalidArgument(_))
    ));
    assert!(matches!(
        make_schedule(10, 0.05, 0.02, 0.0),
        Err(DiffusionError::InvalidArgument(_))
    ));
    assert!(matches!(
        make_schedule(10, 1e-4, 1.0, 0.0),
        Err(DiffusionError::InvalidArgument(_))
    ));
    assert!(matches!(
        make_schedule(10, 1e-4, 0.02, -0.5),
        Err(DiffusionError::InvalidArgument(_))
    ));
    assert!(matches!(
        make_schedule(10, 1e-4, 0.02, f64::NAN),
        Err(DiffusionError::InvalidArgument(_))
    ));
}

#[test]
#[should_panic]
fn beta_at_zero_panics() {
    standard(0.0).beta(0);
}

proptest! {
    #[test]
    fn any_valid_schedule_is_well_formed(
        t_max in 1usize..400,
        b_start in 1e-6f64..0.01,
        spread in 0.0f64..0.5,
        eta in 0.0f64..2.0,
    ) {
        let b_end = (b_start + spread * 0.9).min(0.999);
        let s = make_schedule(t_max, b_start, b_end, eta).unwrap();
        for t in 1..=t_max {
            prop_assert!(s.beta(t) > 0.0 && s.beta(t) < 1.0);
            prop_assert!(s.alpha_bar(t).is_finite());
            prop_assert!(s.alpha_bar(t) > 0.0 && s.alpha_bar(t) < 1.0);
            prop_assert!(s.alpha_bar(t) < s.alpha_bar(t - 1));
            let sig = s.sigma(t);
            prop_assert!(sig.is_finite() && sig >= 0.0);
        }
    }
}
