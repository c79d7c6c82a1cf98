//! Latent grids, condition bundles, and the denoiser traits.

use mapping_core::{FeatureGrid, GridMapping};
use ndarray::Array3;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{DiffusionError, Result};

/// An unconstrained two-channel grid: the diffused mapping state m_t and
/// standard-normal noise draws both live here. Unlike [`GridMapping`] it
/// carries no expectation that values are meaningful coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentGrid {
    values: Array3<f64>,
}

impl LatentGrid {
    pub fn new(values: Array3<f64>) -> Result<Self> {
        let (h, w, c) = values.dim();
        if h == 0 || w == 0 {
            return Err(DiffusionError::InvalidArgument(
                "latent grid dimensions must be nonzero".into(),
            ));
        }
        if c != 2 {
            return Err(DiffusionError::InvalidArgument(format!(
                "latent grid must have 2 channels, got {c}"
            )));
        }
        Ok(Self { values })
    }

    pub fn zeros(h: usize, w: usize) -> Self {
        Self { values: Array3::zeros((h, w, 2)) }
    }

    /// Draws every element from the standard normal distribution.
    pub fn standard_normal(h: usize, w: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut values = Array3::zeros((h, w, 2));
        for v in values.iter_mut() {
            *v = StandardNormal.sample(rng);
        }
        Self { values }
    }

    pub fn from_mapping(map: &GridMapping) -> Self {
        Self { values: map.coords().to_owned() }
    }

    /// Reinterprets the grid as a mapping; the caller asserts the values
    /// are coordinates (e.g. a final x0 prediction).
    pub fn into_mapping(self) -> GridMapping {
        GridMapping::new(self.values).expect("latent grid shape is a valid mapping shape")
    }

    pub fn height(&self) -> usize {
        self.values.dim().0
    }

    pub fn width(&self) -> usize {
        self.values.dim().1
    }

    pub fn values(&self) -> &Array3<f64> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Array3<f64> {
        &mut self.values
    }
}

/// The refinement condition r_t: the previous step's denoised mapping
/// m_{0|t} and the document features warped by it, f_{0|t}. At the first
/// reverse step there is no previous prediction and both payloads are
/// exactly zero with `valid == false`.
#[derive(Debug, Clone)]
pub struct TimeVariantCondition {
    pub m_prev: GridMapping,
    pub f_dewarped: FeatureGrid,
    pub valid: bool,
}

impl TimeVariantCondition {
    /// The t = T condition: all-zero payloads.
    pub fn invalid(latent_size: usize, feature_dim: usize) -> Self {
        let zeros = Array3::zeros((latent_size, latent_size, 2));
        Self {
            m_prev: GridMapping::new(zeros).expect("zero grid is shape-valid"),
            f_dewarped: FeatureGrid::zeros(latent_size, latent_size, feature_dim),
            valid: false,
        }
    }
}

/// Per-sample conditions that do not change across reverse steps: the
/// resized document image (the trainable document encoder consumes it raw,
/// so gradients can reach that encoder) and the frozen mask encodings.
#[derive(Debug, Clone)]
pub struct FixedConditions {
    /// Network-input-sized image tensor, h x w x channels, values in [0,1].
    pub image: Array3<f32>,
    pub f_m: FeatureGrid,
    pub f_l: FeatureGrid,
}

/// Everything the denoiser sees besides (m_t, t).
#[derive(Debug, Clone, Copy)]
pub struct ConditionBundle<'a> {
    pub fixed: &'a FixedConditions,
    pub r: &'a TimeVariantCondition,
}

/// A denoising network usable for inference: predicts the clean mapping
/// m̂_0 from the noisy latent, the timestep, and the condition bundle.
pub trait Denoiser {
    /// Spatial side length of the latent grid.
    fn latent_size(&self) -> usize;
    /// Channel width of the condition feature grids.
    fn feature_dim(&self) -> usize;
    /// Side length the document image must be resized to.
    fn input_size(&self) -> usize;
    /// Encodes the document image into the f_d feature grid (no gradients;
    /// used to build f_{0|t} during sampling rollouts).
    fn encode_document(&self, image: &Array3<f32>) -> Result<FeatureGrid>;
    /// One forward pass: x0 prediction at timestep t.
    fn denoise(&self, m_t: &LatentGrid, t: usize, cond: ConditionBundle) -> Result<GridMapping>;
}

/// A denoiser that can also learn: a cached forward pass, backpropagation
/// into a flat gradient buffer, and access to the flat parameter buffer.
pub trait TrainableDenoiser: Denoiser {
    /// Forward pass retaining activations for a following [`backward`].
    ///
    /// [`backward`]: TrainableDenoiser::backward
    fn forward_train(
        &mut self,
        m_t: &LatentGrid,
        t: usize,
        cond: ConditionBundle,
    ) -> Result<GridMapping>;
    /// Backpropagates d(loss)/d(x0_hat), accumulating parameter gradients.
    fn backward(&mut self, d_x0: &Array3<f64>) -> Result<()>;
    /// Trainable parameters and their accumulated gradients, same length.
    fn params_and_grads(&mut self) -> (&mut [f64], &[f64]);
    fn parameters(&self) -> &[f64];
    fn zero_gradients(&mut self);
}
