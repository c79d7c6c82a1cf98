//! Deterministic strided sampling loop with per-step condition refinement.

use mapping_core::{FeatureGrid, GridMapping};
use rand_chacha::ChaCha8Rng;

use crate::types::{ConditionBundle, Denoiser, FixedConditions, LatentGrid, TimeVariantCondition};
use crate::{ddim_step_between, DiffusionError, NoiseSchedule, Result};

/// Clamp bound on intermediate map predictions. Anything past this is
/// geometric garbage; letting it through poisons the warped feature grid.
pub(crate) const MAP_CLAMP: f64 = 1.5;

/// Descending timesteps for a strided reverse pass: `t_k = T - round(k*T/S)`.
/// Always starts at `T`, never emits 0, and collapses duplicates so short
/// schedules degrade gracefully instead of double-stepping.
pub fn timestep_sequence(t_max: usize, steps: usize) -> Vec<usize> {
    assert!(t_max >= 1 && steps >= 1, "need t_max >= 1 and steps >= 1");
    let mut ts = Vec::with_capacity(steps);
    for k in 0..steps {
        let raw = t_max as f64 - (k as f64 * t_max as f64 / steps as f64).round();
        let t = (raw as usize).max(1);
        if ts.last() != Some(&t) {
            ts.push(t);
        }
    }
    ts
}

/// Builds the time-variant condition from a clean-map estimate: the estimate
/// itself (clamped) plus the document features warped by it.
pub fn build_refinement(x0_hat: &GridMapping, f_d: &FeatureGrid) -> Result<TimeVariantCondition> {
    let clamped = GridMapping::from_fn(x0_hat.height(), x0_hat.width(), |u, v| {
        let (x, y) = x0_hat.at(u, v);
        (x.clamp(-MAP_CLAMP, MAP_CLAMP), y.clamp(-MAP_CLAMP, MAP_CLAMP))
    });
    let f_dewarped = f_d.warp(&clamped);
    Ok(TimeVariantCondition { m_prev: clamped, f_dewarped, valid: true })
}

/// Full reverse pass: start from Gaussian noise, denoise along a strided
/// schedule, refresh the refinement condition after every step. Returns the
/// final clean-map prediction.
pub fn sample<D: Denoiser>(
    den: &D,
    fixed: &FixedConditions,
    sched: &NoiseSchedule,
    steps: usize,
    rng: &mut ChaCha8Rng,
) -> Result<GridMapping> {
    if steps == 0 {
        return Err(DiffusionError::InvalidArgument(
            "sampler needs at least one step".into(),
        ));
    }
    let size = den.latent_size();
    let f_d = den.encode_document(&fixed.image)?;
    let ts = timestep_sequence(sched.t_max(), steps);

    let mut m_t = LatentGrid::standard_normal(size, size, rng);
    let mut r = TimeVariantCondition::invalid(size, f_d.dim());
    let mut x0_hat = None;
    for (k, &t_hi) in ts.iter().enumerate() {
        let cond = ConditionBundle { fixed, r: &r };
        let x0 = den.denoise(&m_t, t_hi, cond)?;
        let t_lo = ts.get(k + 1).copied().unwrap_or(0);
        if t_lo > 0 {
            let sigma = sched.sigma_between(t_hi, t_lo);
            let z = if sigma > 0.0 {
                Some(LatentGrid::standard_normal(size, size, rng))
            } else {
                None
            };
            m_t = ddim_step_between(&m_t, &x0, t_hi, t_lo, sched, z.as_ref())?;
            r = build_refinement(&x0, &f_d)?;
        }
        x0_hat = Some(x0);
    }
    Ok(x0_hat.expect("loop ran at least once"))
}

/// Runs the sampler twice from independent noise draws and averages the two
/// clean-map hypotheses. Identical rng states reduce to a single run.
pub fn dual_hypothesis_sample<D: Denoiser>(
    den: &D,
    fixed: &FixedConditions,
    sched: &NoiseSchedule,
    steps: usize,
    rng_a: &mut ChaCha8Rng,
    rng_b: &mut ChaCha8Rng,
) -> Result<GridMapping> {
    let a = sample(den, fixed, sched, steps, rng_a)?;
    let b = sample(den, fixed, sched, steps, rng_b)?;
    let mean = (&a.coords() + &b.coords()) * 0.5;
    GridMapping::new(mean).map_err(DiffusionError::from)
}
