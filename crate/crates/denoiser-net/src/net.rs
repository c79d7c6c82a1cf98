//! The denoising network: one token per latent grid cell, cross-attention
//! over the four condition streams, self-attention fusion, linear head.

use mapping_core::{apply_backward_mapping, DocumentImage, FeatureGrid, GridMapping};
use ndarray::{concatenate, Array2, Array3, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use diffusion_core::{
    ConditionBundle, Denoiser, DiffusionError, FixedConditions, LatentGrid, Result,
    TrainableDenoiser,
};

use crate::blocks::{Ceb, CebCache, Fgb, FgbCache, Head, HeadCache, N_STREAMS};
use crate::config::NetConfig;
use crate::encoder::{ConvEncoder, EncCache, FrozenEncoder};
use crate::layers::Linear;
use crate::math::{positional_embedding, silu, silu_grad, time_features};
use crate::params::ParamStore;

/// Construction seed for the frozen mask encoders. Deliberately independent
/// of the model seed: checkpointed parameters must reload into an
/// identically-behaving network no matter what seed the fresh instance was
/// built with.
const FROZEN_ENCODER_SEED: u64 = 0x6d61_736b_5f65_6e63;

/// Exact trainable parameter count for a configuration, without building
/// the network. Mirrors the allocation order in [`DewarpDenoiser::new`].
pub fn count_parameters(cfg: &NetConfig) -> Result<usize> {
    cfg.validate()?;
    let d = cfg.dim;
    let lin = |i: usize, o: usize| i * o + o;
    let enc = lin(9 * 3, d) + cfg.n_down() * lin(9 * d, d);
    let ceb = 2 * d + lin(d, 3 * d) + N_STREAMS * 3 * lin(d, d) + lin(N_STREAMS * d, d);
    let fgb = 2 * d + 4 * lin(d, d) + 2 * d + lin(d, 4 * d) + lin(4 * d, d);
    let head = 2 * d + lin(d, d) + lin(d, d / 2) + lin(d / 2, 2);
    Ok(lin(2, d)
        + lin(d + 2, d)
        + lin(cfg.time_dim, d)
        + lin(d, d)
        + enc
        + cfg.n_ceb * ceb
        + cfg.n_fgb * fgb
        + head)
}

/// Activations retained by a training forward pass.
struct TrainCtx {
    enc: EncCache,
    ctxs: [Array2<f64>; N_STREAMS],
    m_raw: Array2<f64>,
    r_raw: Array2<f64>,
    t_feats: Array2<f64>,
    time_h1: Array2<f64>,
    time_a1: Array2<f64>,
    tvec: Array2<f64>,
    silu_tvec: Array2<f64>,
    cebs: Vec<CebCache>,
    fgbs: Vec<FgbCache>,
    head: HeadCache,
}

pub struct DewarpDenoiser {
    cfg: NetConfig,
    store: ParamStore,
    m_embed: Linear,
    r_embed: Linear,
    time_l1: Linear,
    time_l2: Linear,
    doc_enc: ConvEncoder,
    cebs: Vec<Ceb>,
    fgbs: Vec<Fgb>,
    head: Head,
    posemb: Array2<f64>,
    frozen_m: FrozenEncoder,
    frozen_l: FrozenEncoder,
    ctx: Option<TrainCtx>,
}

fn flatten_grid(x: &Array3<f64>) -> Array2<f64> {
    let (h, w, c) = x.dim();
    Array2::from_shape_vec((h * w, c), x.iter().copied().collect()).expect("row-major iteration")
}

fn feature_tokens(f: &FeatureGrid) -> Array2<f64> {
    let (h, w, c) = f.values().dim();
    Array2::from_shape_vec((h * w, c), f.values().iter().map(|&v| f64::from(v)).collect())
        .expect("row-major iteration")
}

/// Bilinear resize to `size`x`size` by sampling through the identity
/// mapping at the target resolution.
fn resize_image(img: &DocumentImage, size: usize) -> Result<DocumentImage> {
    Ok(apply_backward_mapping(img, &GridMapping::identity(size, size), 0.0)?)
}

impl DewarpDenoiser {
    pub fn new(cfg: NetConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.dim;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let m_embed = Linear::new(&mut store, "m_embed", 2, d, &mut rng);
        let r_embed = Linear::new(&mut store, "r_embed", d + 2, d, &mut rng);
        let time_l1 = Linear::new(&mut store, "time.l1", cfg.time_dim, d, &mut rng);
        let time_l2 = Linear::new(&mut store, "time.l2", d, d, &mut rng);
        let doc_enc = ConvEncoder::new(&mut store, "doc_enc", 3, d, cfg.n_down(), &mut rng);
        let cebs = (0..cfg.n_ceb)
            .map(|i| Ceb::new(&mut store, &format!("ceb{i}"), d, cfg.n_heads, &mut rng))
            .collect();
        let fgbs = (0..cfg.n_fgb)
            .map(|i| Fgb::new(&mut store, &format!("fgb{i}"), d, cfg.n_heads, &mut rng))
            .collect();
        let head = Head::new(&mut store, "head", d, &mut rng);
        let posemb = positional_embedding(cfg.latent_size, d);
        let mut frozen_rng = ChaCha8Rng::seed_from_u64(FROZEN_ENCODER_SEED);
        let frozen_m = FrozenEncoder::new(1, d, cfg.n_down(), &mut frozen_rng);
        let frozen_l = FrozenEncoder::new(1, d, cfg.n_down(), &mut frozen_rng);
        Ok(DewarpDenoiser {
            cfg,
            store,
            m_embed,
            r_embed,
            time_l1,
            time_l2,
            doc_enc,
            cebs,
            fgbs,
            head,
            posemb,
            frozen_m,
            frozen_l,
            ctx: None,
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.cfg
    }

    /// Read access to the parameter store, for inspecting named slots and
    /// their gradients.
    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    fn check_fixed(&self, fixed: &FixedConditions) -> Result<()> {
        let s = self.cfg.input_size;
        let l = self.cfg.latent_size;
        let d = self.cfg.dim;
        if fixed.image.dim() != (s, s, 3) {
            return Err(DiffusionError::ShapeMismatch(format!(
                "expected {s}x{s}x3 image, got {:?}",
                fixed.image.dim()
            )));
        }
        for (name, f) in [("f_m", &fixed.f_m), ("f_l", &fixed.f_l)] {
            if f.values().dim() != (l, l, d) {
                return Err(DiffusionError::ShapeMismatch(format!(
                    "expected {l}x{l}x{d} {name}, got {:?}",
                    f.values().dim()
                )));
            }
        }
        Ok(())
    }

    fn frozen_features(&self, enc: &FrozenEncoder, mask: &DocumentImage) -> Result<FeatureGrid> {
        if mask.channels() != 1 {
            return Err(DiffusionError::InvalidArgument(format!(
                "mask must have 1 channel, got {}",
                mask.channels()
            )));
        }
        let resized = resize_image(mask, self.cfg.input_size)?;
        let f = enc.forward(resized.pixels().mapv(f64::from));
        Ok(FeatureGrid::new(f.mapv(|v| v as f32))?)
    }

    /// Builds the per-sample fixed conditions: the resized document image
    /// plus the frozen mask encodings.
    pub fn prepare_conditions(
        &self,
        warped: &DocumentImage,
        fg_mask: &DocumentImage,
        textline_mask: &DocumentImage,
    ) -> Result<FixedConditions> {
        if warped.channels() != 3 {
            return Err(DiffusionError::InvalidArgument(format!(
                "document image must have 3 channels, got {}",
                warped.channels()
            )));
        }
        let image = resize_image(warped, self.cfg.input_size)?.into_pixels();
        let f_m = self.frozen_features(&self.frozen_m, fg_mask)?;
        let f_l = self.frozen_features(&self.frozen_l, textline_mask)?;
        Ok(FixedConditions { image, f_m, f_l })
    }

    /// All three static feature grids for one sample: the learned document
    /// encoding and both frozen mask encodings.
    pub fn extract_features(
        &self,
        warped: &DocumentImage,
        fg_mask: &DocumentImage,
        textline_mask: &DocumentImage,
    ) -> Result<(FeatureGrid, FeatureGrid, FeatureGrid)> {
        let fixed = self.prepare_conditions(warped, fg_mask, textline_mask)?;
        let f_d = self.encode_document(&fixed.image)?;
        Ok((f_d, fixed.f_m, fixed.f_l))
    }

    fn run_forward(
        &self,
        m_t: &LatentGrid,
        t: usize,
        cond: ConditionBundle,
        train: bool,
    ) -> Result<(GridMapping, Option<TrainCtx>)> {
        let l = self.cfg.latent_size;
        let d = self.cfg.dim;
        if m_t.height() != l || m_t.width() != l {
            return Err(DiffusionError::ShapeMismatch(format!(
                "expected {l}x{l} latent, got {}x{}",
                m_t.height(),
                m_t.width()
            )));
        }
        self.check_fixed(cond.fixed)?;
        let r = cond.r;
        if r.m_prev.height() != l || r.m_prev.width() != l {
            return Err(DiffusionError::ShapeMismatch(format!(
                "expected {l}x{l} refinement mapping, got {}x{}",
                r.m_prev.height(),
                r.m_prev.width()
            )));
        }
        if r.f_dewarped.values().dim() != (l, l, d) {
            return Err(DiffusionError::ShapeMismatch(format!(
                "expected {l}x{l}x{d} refinement features, got {:?}",
                r.f_dewarped.values().dim()
            )));
        }

        let (f_d, enc_cache) =
            self.doc_enc.forward(&self.store, cond.fixed.image.mapv(f64::from), train);
        let ctx_d = flatten_grid(&f_d) + &self.posemb;
        let ctx_m = feature_tokens(&cond.fixed.f_m) + &self.posemb;
        let ctx_l = feature_tokens(&cond.fixed.f_l) + &self.posemb;

        let m_prev = flatten_grid(&r.m_prev.coords().to_owned());
        let f_dew = feature_tokens(&r.f_dewarped);
        let r_raw = concatenate(Axis(1), &[m_prev.view(), f_dew.view()])
            .expect("token counts agree");
        let ctx_r = self.r_embed.forward(&self.store, &r_raw) + &self.posemb;

        let m_raw = flatten_grid(m_t.values());
        let mut x = self.m_embed.forward(&self.store, &m_raw) + &self.posemb;

        let t_feats = time_features(t, self.cfg.time_dim)
            .into_shape_with_order((1, self.cfg.time_dim))
            .expect("row vector");
        let time_h1 = self.time_l1.forward(&self.store, &t_feats);
        let time_a1 = time_h1.mapv(silu);
        let tvec = self.time_l2.forward(&self.store, &time_a1);
        let silu_tvec = tvec.mapv(silu);

        let ctxs = [ctx_d, ctx_m, ctx_l, ctx_r];
        let mut ceb_caches = Vec::with_capacity(self.cebs.len());
        for ceb in &self.cebs {
            let (y, cache) = ceb.forward(&self.store, &x, &silu_tvec, &ctxs);
            x = y;
            ceb_caches.push(cache);
        }
        let mut fgb_caches = Vec::with_capacity(self.fgbs.len());
        for fgb in &self.fgbs {
            let (y, cache) = fgb.forward(&self.store, &x);
            x = y;
            fgb_caches.push(cache);
        }
        let (y, head_cache) = self.head.forward(&self.store, &x);

        let out = Array3::from_shape_vec((l, l, 2), y.iter().copied().collect())
            .expect("head output is one token per cell");
        let mapping = GridMapping::new(out)?;

        let ctx = train.then(|| TrainCtx {
            enc: enc_cache.expect("training forward caches the encoder"),
            ctxs,
            m_raw,
            r_raw,
            t_feats,
            time_h1,
            time_a1,
            tvec,
            silu_tvec,
            cebs: ceb_caches,
            fgbs: fgb_caches,
            head: head_cache,
        });
        Ok((mapping, ctx))
    }
}

impl Denoiser for DewarpDenoiser {
    fn latent_size(&self) -> usize {
        self.cfg.latent_size
    }

    fn feature_dim(&self) -> usize {
        self.cfg.dim
    }

    fn input_size(&self) -> usize {
        self.cfg.input_size
    }

    fn encode_document(&self, image: &Array3<f32>) -> Result<FeatureGrid> {
        let s = self.cfg.input_size;
        if image.dim() != (s, s, 3) {
            return Err(DiffusionError::ShapeMismatch(format!(
                "expected {s}x{s}x3 image, got {:?}",
                image.dim()
            )));
        }
        let (f, _) = self.doc_enc.forward(&self.store, image.mapv(f64::from), false);
        Ok(FeatureGrid::new(f.mapv(|v| v as f32))?)
    }

    fn denoise(&self, m_t: &LatentGrid, t: usize, cond: ConditionBundle) -> Result<GridMapping> {
        self.run_forward(m_t, t, cond, false).map(|(m, _)| m)
    }
}

impl TrainableDenoiser for DewarpDenoiser {
    fn forward_train(
        &mut self,
        m_t: &LatentGrid,
        t: usize,
        cond: ConditionBundle,
    ) -> Result<GridMapping> {
        let (mapping, ctx) = self.run_forward(m_t, t, cond, true)?;
        self.ctx = ctx;
        Ok(mapping)
    }

    fn backward(&mut self, d_x0: &Array3<f64>) -> Result<()> {
        let ctx = self.ctx.take().ok_or_else(|| {
            DiffusionError::Training("backward called without a cached forward pass".into())
        })?;
        let l = self.cfg.latent_size;
        let d = self.cfg.dim;
        let n = l * l;
        if d_x0.dim() != (l, l, 2) {
            return Err(DiffusionError::ShapeMismatch(format!(
                "expected {l}x{l}x2 output gradient, got {:?}",
                d_x0.dim()
            )));
        }

        let d_y = flatten_grid(d_x0);
        let mut dx = self.head.backward(&mut self.store, &ctx.head, &d_y);
        for (fgb, cache) in self.fgbs.iter().zip(ctx.fgbs.iter()).rev() {
            dx = fgb.backward(&mut self.store, cache, &dx);
        }

        let mut d_ctxs: [Array2<f64>; N_STREAMS] =
            std::array::from_fn(|_| Array2::zeros((n, d)));
        let mut d_silu_tvec: Array2<f64> = Array2::zeros((1, d));
        for (ceb, cache) in self.cebs.iter().zip(ctx.cebs.iter()).rev() {
            let (dxp, dc, dst) =
                ceb.backward(&mut self.store, cache, &ctx.ctxs, &ctx.silu_tvec, &dx);
            dx = dxp;
            for (acc, delta) in d_ctxs.iter_mut().zip(dc) {
                *acc += &delta;
            }
            d_silu_tvec += &dst;
        }

        let d_tvec = &d_silu_tvec * &ctx.tvec.mapv(silu_grad);
        let d_time_a1 = self.time_l2.backward(&mut self.store, &ctx.time_a1, &d_tvec);
        let d_time_h1 = &d_time_a1 * &ctx.time_h1.mapv(silu_grad);
        self.time_l1.backward(&mut self.store, &ctx.t_feats, &d_time_h1);

        self.m_embed.backward(&mut self.store, &ctx.m_raw, &dx);
        let [d_ctx_d, _d_ctx_m, _d_ctx_l, d_ctx_r] = d_ctxs;
        self.r_embed.backward(&mut self.store, &ctx.r_raw, &d_ctx_r);
        let d_f_d = Array3::from_shape_vec((l, l, d), d_ctx_d.iter().copied().collect())
            .expect("row-major iteration");
        self.doc_enc.backward(&mut self.store, &ctx.enc, d_f_d);
        Ok(())
    }

    fn params_and_grads(&mut self) -> (&mut [f64], &[f64]) {
        self.store.params_and_grads()
    }

    fn parameters(&self) -> &[f64] {
        self.store.params()
    }

    fn zero_gradients(&mut self) {
        self.store.zero_grads();
    }
}
