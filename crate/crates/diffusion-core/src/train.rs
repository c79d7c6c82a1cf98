//! Training step with rollout-generated refinement conditions.
//!
//! The refinement condition fed to the denoiser at timestep `t` is produced
//! the same way inference produces it: by actually running the reverse chain
//! from pure noise down to `t` (without gradients) and refining after each
//! step. Training only on ground-truth-derived conditions leaves the model
//! blind to its own imperfect predictions at test time.

use mapping_core::GridMapping;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::types::{ConditionBundle, FixedConditions, LatentGrid, TimeVariantCondition, TrainableDenoiser};
use crate::{
    build_refinement, ddim_step_between, diffusion_loss, forward_diffuse, loss_gradient, Adam,
    DiffusionError, NoiseSchedule, Result,
};

/// One training sample: the clean latent map plus its fixed conditions.
#[derive(Debug, Clone)]
pub struct TrainItem {
    pub m0: GridMapping,
    pub fixed: FixedConditions,
}

/// Descending sub-schedule from `t_max` to `target` in `steps` hops.
/// Strictly decreasing because the stride is at least one timestep.
fn rollout_schedule(t_max: usize, target: usize, steps: usize) -> Vec<usize> {
    let span = (t_max - target) as f64;
    let mut ts = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        ts.push(t_max - (k as f64 * span / steps as f64).round() as usize);
    }
    debug_assert!(ts.windows(2).all(|w| w[0] > w[1]));
    debug_assert_eq!(*ts.last().unwrap(), target);
    ts
}

/// Runs the reverse chain from noise down to `target`, returning the
/// refinement condition a sampler would hold when denoising at `target`.
fn rollout_condition<D: TrainableDenoiser>(
    den: &D,
    fixed: &FixedConditions,
    sched: &NoiseSchedule,
    target: usize,
    steps: usize,
    rng: &mut ChaCha8Rng,
) -> Result<TimeVariantCondition> {
    let size = den.latent_size();
    let f_d = den.encode_document(&fixed.image)?;
    let ts = rollout_schedule(sched.t_max(), target, steps);

    let mut m_t = LatentGrid::standard_normal(size, size, rng);
    let mut r = TimeVariantCondition::invalid(size, f_d.dim());
    for k in 0..steps {
        let cond = ConditionBundle { fixed, r: &r };
        let x0 = den.denoise(&m_t, ts[k], cond)?;
        let sigma = sched.sigma_between(ts[k], ts[k + 1]);
        let z = if sigma > 0.0 {
            Some(LatentGrid::standard_normal(size, size, rng))
        } else {
            None
        };
        m_t = ddim_step_between(&m_t, &x0, ts[k], ts[k + 1], sched, z.as_ref())?;
        r = build_refinement(&x0, &f_d)?;
    }
    Ok(r)
}

/// One optimizer update over a batch. For each item draws a timestep, builds
/// the refinement condition by rollout (capped at `rollout_steps`), diffuses
/// the ground-truth map to that timestep, and regresses the clean map.
/// Returns the mean loss over the batch.
pub fn tvcr_train_step<D: TrainableDenoiser>(
    batch: &[TrainItem],
    den: &mut D,
    sched: &NoiseSchedule,
    rollout_steps: usize,
    opt: &mut Adam,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(DiffusionError::InvalidArgument("empty training batch".into()));
    }
    let t_max = sched.t_max();
    let weight = 1.0 / batch.len() as f64;

    den.zero_gradients();
    let mut total_loss = 0.0;
    for (idx, item) in batch.iter().enumerate() {
        let t = rng.random_range(1..=t_max);
        let steps = rollout_steps.min(t_max - t);
        let r = if steps == 0 {
            TimeVariantCondition::invalid(den.latent_size(), den.feature_dim())
        } else {
            rollout_condition(&*den, &item.fixed, sched, t, steps, rng)?
        };

        let size = den.latent_size();
        let z = LatentGrid::standard_normal(size, size, rng);
        let m_t = forward_diffuse(&item.m0, t, &z, sched)?;
        let cond = ConditionBundle { fixed: &item.fixed, r: &r };
        let x0_hat = den.forward_train(&m_t, t, cond)?;
        let loss = diffusion_loss(&item.m0, &x0_hat)?;
        if !loss.is_finite() {
            return Err(DiffusionError::Training(format!(
                "non-finite loss {loss} on batch item {idx} at t={t}"
            )));
        }
        total_loss += loss;
        let d_x0 = loss_gradient(&item.m0, &x0_hat, weight)?;
        den.backward(&d_x0)?;
    }

    let (params, grads) = den.params_and_grads();
    opt.step(params, grads)?;
    Ok(total_loss * weight)
}
