use std::cell::RefCell;

use diffusion_core::{
    build_refinement, dual_hypothesis_sample, make_schedule, sample, timestep_sequence,
    ConditionBundle, Denoiser, FixedConditions, LatentGrid, NoiseSchedule, Result,
};
use mapping_core::{FeatureGrid, GridMapping};
use ndarray::Array3;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SIZE: usize = 8;
const FDIM: usize = 3;

fn standard(eta: f64) -> NoiseSchedule {
    make_schedule(1000, 1e-4, 0.02, eta).unwrap()
}

fn fixed_conditions() -> FixedConditions {
    FixedConditions {
        image: Array3::zeros((16, 16, 3)),
        f_m: FeatureGrid::zeros(SIZE, SIZE, FDIM),
        f_l: FeatureGrid::zeros(SIZE, SIZE, FDIM),
    }
}

/// A textured feature grid so warps produce observable values.
fn ramp_features() -> FeatureGrid {
    let values = Array3::from_shape_fn((SIZE, SIZE, FDIM), |(u, v, c)| {
        (u as f32 * 0.1 + v as f32 * 0.01 + c as f32).sin()
    });
    FeatureGrid::new(values).unwrap()
}

fn const_map(value: f64) -> GridMapping {
    GridMapping::from_fn(SIZE, SIZE, |_, _| (value, value))
}

/// Always predicts the same clean map, whatever the input.
struct ConstantOracle {
    map: GridMapping,
}

impl Denoiser for ConstantOracle {
    fn latent_size(&self) -> usize {
        SIZE
    }
    fn feature_dim(&self) -> usize {
        FDIM
    }
    fn input_size(&self) -> usize {
        16
    }
    fn encode_document(&self, _image: &Array3<f32>) -> Result<FeatureGrid> {
        Ok(ramp_features())
    }
    fn denoise(&self, _m_t: &LatentGrid, _t: usize, _cond: ConditionBundle) -> Result<GridMapping> {
        Ok(self.map.clone())
    }
}

/// Records what the sampler showed it at every call and replies with a
/// scripted sequence of predictions.
struct TrackingOracle {
    script: Vec<GridMapping>,
    seen: RefCell<Vec<(usize, bool, GridMapping, FeatureGrid)>>,
}

impl Denoiser for TrackingOracle {
    fn latent_size(&self) -> usize {
        SIZE
    }
    fn feature_dim(&self) -> usize {
        FDIM
    }
    fn input_size(&self) -> usize {
        16
    }
    fn encode_document(&self, _image: &Array3<f32>) -> Result<FeatureGrid> {
        Ok(ramp_features())
    }
    fn denoise(&self, _m_t: &LatentGrid, t: usize, cond: ConditionBundle) -> Result<GridMapping> {
        let mut seen = self.seen.borrow_mut();
        let k = seen.len();
        seen.push((t, cond.r.valid, cond.r.m_prev.clone(), cond.r.f_dewarped.clone()));
        Ok(self.script[k].clone())
    }
}

/// Echoes the noisy latent back as the prediction; output depends on the
/// rng path, which makes averaging observable.
struct Passthrough;

impl Denoiser for Passthrough {
    fn latent_size(&self) -> usize {
        SIZE
    }
    fn feature_dim(&self) -> usize {
        FDIM
    }
    fn input_size(&self) -> usize {
        16
    }
    fn encode_document(&self, _image: &Array3<f32>) -> Result<FeatureGrid> {
        Ok(ramp_features())
    }
    fn denoise(&self, m_t: &LatentGrid, _t: usize, _cond: ConditionBundle) -> Result<GridMapping> {
        GridMapping::new(m_t.values().clone()).map_err(Into::into)
    }
}

#[test]
fn strided_timesteps_match_the_reference_pattern() {
    assert_eq!(timestep_sequence(1000, 3), vec![1000, 667, 333]);
    assert_eq!(timestep_sequence(1000, 1), vec![1000]);
    assert_eq!(timestep_sequence(1000, 4), vec![1000, 750, 500, 250]);
    assert_eq!(timestep_sequence(1, 1), vec![1]);
    // More steps than timesteps collapses to the full ladder.
    assert_eq!(timestep_sequence(4, 9), vec![4, 3, 2, 1]);
}

#[test]
fn perfect_oracle_passes_straight_through() {
    let den = ConstantOracle { map: const_map(0.25) };
    let sched = standard(0.0);
    let fixed = fixed_conditions();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let out = sample(&den, &fixed, &sched, 3, &mut rng).unwrap();
    assert_eq!(out.coords(), den.map.coords());
}

#[test]
fn sampling_is_deterministic_in_the_seed() {
    let den = Passthrough;
    let sched = standard(0.0);
    let fixed = fixed_conditions();
    let a = sample(&den, &fixed, &sched, 3, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    let b = sample(&den, &fixed, &sched, 3, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    assert_eq!(a.coords(), b.coords());
    let c = sample(&den, &fixed, &sched, 3, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
    assert_ne!(a.coords(), c.coords());
}

#[test]
fn refinement_condition_follows_the_previous_prediction() {
    // Step k sees the clamped prediction from step k-1 plus the document
    // features warped by it; step 0 sees the all-zero invalid condition.
    let script = vec![const_map(0.4), const_map(2.0), const_map(-0.3)];
    let den = TrackingOracle { script: script.clone(), seen: RefCell::new(Vec::new()) };
    let sched = standard(0.0);
    let fixed = fixed_conditions();
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let out = sample(&den, &fixed, &sched, 3, &mut rng).unwrap();
    assert_eq!(out.coords(), script[2].coords());

    let seen = den.seen.borrow();
    assert_eq!(seen.len(), 3);
    assert_eq!(seen[0].0, 1000);
    assert_eq!(seen[1].0, 667);
    assert_eq!(seen[2].0, 333);

    assert!(!seen[0].1, "first step must carry the invalid condition");
    assert!(seen[0].2.coords().iter().all(|&x| x == 0.0));
    assert!(seen[0].3.values().iter().all(|&x| x == 0.0));

    let f_d = ramp_features();
    for k in 1..3 {
        assert!(seen[k].1, "step {k} must carry a valid condition");
        let want = build_refinement(&script[k - 1], &f_d).unwrap();
        assert_eq!(seen[k].2.coords(), want.m_prev.coords());
        assert_eq!(seen[k].3.values(), want.f_dewarped.values());
    }
    // The 2.0 prediction exceeds the mapping range and must arrive clamped.
    assert!(seen[2].2.coords().iter().all(|&x| x == 1.5));
}

#[test]
fn rejects_zero_steps() {
    let den = Passthrough;
    let sched = standard(0.0);
    let fixed = fixed_conditions();
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    assert!(sample(&den, &fixed, &sched, 0, &mut rng).is_err());
}

#[test]
fn stochastic_sampling_draws_noise_per_step() {
    let den = Passthrough;
    let sched = standard(1.0);
    let fixed = fixed_conditions();
    let det = sample(&den, &fixed, &standard(0.0), 3, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
    let sto = sample(&den, &fixed, &sched, 3, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
    assert_ne!(det.coords(), sto.coords());
}

#[test]
fn dual_hypothesis_with_identical_rngs_reduces_to_one_run() {
    let den = Passthrough;
    let sched = standard(0.0);
    let fixed = fixed_conditions();
    let single = sample(&den, &fixed, &sched, 3, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
    let dual = dual_hypothesis_sample(
        &den,
        &fixed,
        &sched,
        3,
        &mut ChaCha8Rng::seed_from_u64(8),
        &mut ChaCha8Rng::seed_from_u64(8),
    )
    .unwrap();
    assert_eq!(dual.coords(), single.coords());
}

#[test]
fn dual_hypothesis_averages_the_two_runs() {
    let den = Passthrough;
    let sched = standard(0.0);
    let fixed = fixed_conditions();
    let a = sample(&den, &fixed, &sched, 3, &mut ChaCha8Rng::seed_from_u64(10)).unwrap();
    let b = sample(&den, &fixed, &sched, 3, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
    let dual = dual_hypothesis_sample(
        &den,
        &fixed,
        &sched,
        3,
        &mut ChaCha8Rng::seed_from_u64(10),
        &mut ChaCha8Rng::seed_from_u64(11),
    )
    .unwrap();
    for ((u, v, c), &got) in dual.coords().indexed_iter() {
        let want = 0.5 * (a.coords()[[u, v, c]] + b.coords()[[u, v, c]]);
        assert!((got - want).abs() < 1e-15);
    }
    assert_ne!(a.coords(), b.coords());
}

proptest! {
    #[test]
    fn timestep_sequences_are_valid_schedules(t_max in 1usize..2000, steps in 1usize..64) {
        let ts = timestep_sequence(t_max, steps);
        prop_assert!(!ts.is_empty());
        prop_assert!(ts.len() <= steps);
        prop_assert_eq!(ts[0], t_max);
        prop_assert!(ts.iter().all(|&t| (1..=t_max).contains(&t)));
        prop_assert!(ts.windows(2).all(|w| w[0] > w[1]));
    }
}
