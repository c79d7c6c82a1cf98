//! The three block types: condition embedding (cross-attention over the
//! four condition streams, time-modulated), fusion generation (self-
//! attention plus feed-forward), and the output head.

use ndarray::{concatenate, s, Array1, Array2, Axis};
use rand_chacha::ChaCha8Rng;

use crate::attn::{attention_backward, attention_forward, AttnCache};
use crate::layers::{LayerNorm, Linear, LnCache};
use crate::math::{silu_arr, silu_grad};
use crate::params::ParamStore;

pub const N_STREAMS: usize = 4;

/// Query/key/value projections for one cross-attention stream. Stream
/// outputs share a single post-concatenation projection in the block, so
/// there is no per-stream output matrix.
#[derive(Debug, Clone, Copy)]
pub struct StreamProj {
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
}

impl StreamProj {
    fn new(store: &mut ParamStore, name: &str, dim: usize, rng: &mut ChaCha8Rng) -> Self {
        StreamProj {
            wq: Linear::new(store, &format!("{name}.wq"), dim, dim, rng),
            wk: Linear::new(store, &format!("{name}.wk"), dim, dim, rng),
            wv: Linear::new(store, &format!("{name}.wv"), dim, dim, rng),
        }
    }
}

/// Condition embedding block. The normalized latent tokens are modulated by
/// a scale/shift drawn from the time embedding, queried against all four
/// condition streams in parallel, and the concatenated stream outputs are
/// projected back to model width and gated into the residual path.
#[derive(Debug, Clone)]
pub struct Ceb {
    pub ln: LayerNorm,
    pub mod_lin: Linear,
    pub streams: Vec<StreamProj>,
    pub wo: Linear,
    dim: usize,
    n_heads: usize,
}

#[derive(Debug, Clone)]
pub struct CebCache {
    ln: LnCache,
    xn: Array2<f64>,
    xmod: Array2<f64>,
    gamma: Array1<f64>,
    gate: Array1<f64>,
    streams: Vec<AttnCache>,
    cat: Array2<f64>,
    proj: Array2<f64>,
}

impl Ceb {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, n_heads: usize, rng: &mut ChaCha8Rng) -> Self {
        let ln = LayerNorm::new(store, &format!("{name}.ln"), dim);
        let mod_lin = Linear::new(store, &format!("{name}.mod"), dim, 3 * dim, rng);
        // Zero scale/shift bias keeps the init near plain LN; a positive
        // gate bias keeps the attention branch alive so gradients reach
        // every stream from the first step.
        store.w_mut(mod_lin.b)[2 * dim..].fill(0.5);
        let streams = ["doc", "mask", "line", "refine"]
            .iter()
            .map(|s| StreamProj::new(store, &format!("{name}.{s}"), dim, rng))
            .collect();
        let wo = Linear::new(store, &format!("{name}.wo"), N_STREAMS * dim, dim, rng);
        Ceb { ln, mod_lin, streams, wo, dim, n_heads }
    }

    pub fn forward(
        &self,
        store: &ParamStore,
        x: &Array2<f64>,
        silu_tvec: &Array2<f64>,
        ctxs: &[Array2<f64>; N_STREAMS],
    ) -> (Array2<f64>, CebCache) {
        let d = self.dim;
        let mod_out = self.mod_lin.forward(store, silu_tvec);
        let gamma = mod_out.slice(s![0, 0..d]).to_owned();
        let shift = mod_out.slice(s![0, d..2 * d]).to_owned();
        let gate = mod_out.slice(s![0, 2 * d..3 * d]).to_owned();

        let (xn, ln_cache) = self.ln.forward(store, x);
        let mut xmod = xn.clone();
        for mut row in xmod.rows_mut() {
            for ((v, &g), &b) in row.iter_mut().zip(gamma.iter()).zip(shift.iter()) {
                *v = *v * (1.0 + g) + b;
            }
        }

        let mut outs = Vec::with_capacity(N_STREAMS);
        let mut caches = Vec::with_capacity(N_STREAMS);
        for (proj, ctx) in self.streams.iter().zip(ctxs.iter()) {
            let q = proj.wq.forward(store, &xmod);
            let k = proj.wk.forward(store, ctx);
            let v = proj.wv.forward(store, ctx);
            let (o, ac) = attention_forward(q, k, v, self.n_heads);
            outs.push(o);
            caches.push(ac);
        }
        let views: Vec<_> = outs.iter().map(|o| o.view()).collect();
        let cat = concatenate(Axis(1), &views).expect("stream widths agree");
        let proj_out = self.wo.forward(store, &cat);

        let mut y = x.clone();
        for (mut row, prow) in y.rows_mut().into_iter().zip(proj_out.rows()) {
            for ((v, &p), &g) in row.iter_mut().zip(prow.iter()).zip(gate.iter()) {
                *v += p * g;
            }
        }
        let cache = CebCache {
            ln: ln_cache,
            xn,
            xmod,
            gamma,
            gate,
            streams: caches,
            cat,
            proj: proj_out,
        };
        (y, cache)
    }

    /// Returns (dx, per-stream context gradients, d silu_tvec).
    pub fn backward(
        &self,
        store: &mut ParamStore,
        cache: &CebCache,
        ctxs: &[Array2<f64>; N_STREAMS],
        silu_tvec: &Array2<f64>,
        d_out: &Array2<f64>,
    ) -> (Array2<f64>, [Array2<f64>; N_STREAMS], Array2<f64>) {
        let d = self.dim;
        let mut d_proj = d_out.clone();
        for mut row in d_proj.rows_mut() {
            for (v, &g) in row.iter_mut().zip(cache.gate.iter()) {
                *v *= g;
            }
        }
        let d_gate = (d_out * &cache.proj).sum_axis(Axis(0));

        let d_cat = self.wo.backward(store, &cache.cat, &d_proj);

        let mut d_xmod: Array2<f64> = Array2::zeros(cache.xmod.raw_dim());
        let mut d_ctxs: Vec<Array2<f64>> = Vec::with_capacity(N_STREAMS);
        for (si, (proj, ctx)) in self.streams.iter().zip(ctxs.iter()).enumerate() {
            let d_o = d_cat.slice(s![.., si * d..(si + 1) * d]).to_owned();
            let (dq, dk, dv) = attention_backward(&cache.streams[si], &d_o, self.n_heads);
            d_xmod += &proj.wq.backward(store, &cache.xmod, &dq);
            let mut d_ctx = proj.wk.backward(store, ctx, &dk);
            d_ctx += &proj.wv.backward(store, ctx, &dv);
            d_ctxs.push(d_ctx);
        }

        let d_gamma = (&d_xmod * &cache.xn).sum_axis(Axis(0));
        let d_shift = d_xmod.sum_axis(Axis(0));
        let mut d_xn = d_xmod;
        for mut row in d_xn.rows_mut() {
            for (v, &g) in row.iter_mut().zip(cache.gamma.iter()) {
                *v *= 1.0 + g;
            }
        }

        let mut d_mod = Array2::zeros((1, 3 * d));
        d_mod.slice_mut(s![0, 0..d]).assign(&d_gamma);
        d_mod.slice_mut(s![0, d..2 * d]).assign(&d_shift);
        d_mod.slice_mut(s![0, 2 * d..3 * d]).assign(&d_gate);
        let d_silu_tvec = self.mod_lin.backward(store, silu_tvec, &d_mod);

        let mut dx = self.ln.backward(store, &cache.ln, &d_xn);
        dx += d_out;
        let d_ctxs: [Array2<f64>; N_STREAMS] =
            d_ctxs.try_into().expect("exactly four streams");
        (dx, d_ctxs, d_silu_tvec)
    }
}

/// Fusion generation block: pre-norm self-attention and a pre-norm
/// feed-forward expansion, both residual.
#[derive(Debug, Clone)]
pub struct Fgb {
    pub ln1: LayerNorm,
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
    pub ln2: LayerNorm,
    pub ff1: Linear,
    pub ff2: Linear,
    n_heads: usize,
}

#[derive(Debug, Clone)]
pub struct FgbCache {
    ln1: LnCache,
    xn1: Array2<f64>,
    attn: AttnCache,
    attn_out: Array2<f64>,
    ln2: LnCache,
    xn2: Array2<f64>,
    ff_pre: Array2<f64>,
    ff_act: Array2<f64>,
}

impl Fgb {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, n_heads: usize, rng: &mut ChaCha8Rng) -> Self {
        Fgb {
            ln1: LayerNorm::new(store, &format!("{name}.ln1"), dim),
            wq: Linear::new(store, &format!("{name}.wq"), dim, dim, rng),
            wk: Linear::new(store, &format!("{name}.wk"), dim, dim, rng),
            wv: Linear::new(store, &format!("{name}.wv"), dim, dim, rng),
            wo: Linear::new(store, &format!("{name}.wo"), dim, dim, rng),
            ln2: LayerNorm::new(store, &format!("{name}.ln2"), dim),
            ff1: Linear::new(store, &format!("{name}.ff1"), dim, 4 * dim, rng),
            ff2: Linear::new(store, &format!("{name}.ff2"), 4 * dim, dim, rng),
            n_heads,
        }
    }

    pub fn forward(&self, store: &ParamStore, x: &Array2<f64>) -> (Array2<f64>, FgbCache) {
        let (xn1, ln1_cache) = self.ln1.forward(store, x);
        let q = self.wq.forward(store, &xn1);
        let k = self.wk.forward(store, &xn1);
        let v = self.wv.forward(store, &xn1);
        let (attn_out, attn_cache) = attention_forward(q, k, v, self.n_heads);
        let x_mid = x + &self.wo.forward(store, &attn_out);

        let (xn2, ln2_cache) = self.ln2.forward(store, &x_mid);
        let ff_pre = self.ff1.forward(store, &xn2);
        let ff_act = silu_arr(&ff_pre);
        let y = &x_mid + &self.ff2.forward(store, &ff_act);

        let cache = FgbCache {
            ln1: ln1_cache,
            xn1,
            attn: attn_cache,
            attn_out,
            ln2: ln2_cache,
            xn2,
            ff_pre,
            ff_act,
        };
        (y, cache)
    }

    pub fn backward(&self, store: &mut ParamStore, cache: &FgbCache, d_out: &Array2<f64>) -> Array2<f64> {
        let d_ff_act = self.ff2.backward(store, &cache.ff_act, d_out);
        let d_ff_pre = &d_ff_act * &cache.ff_pre.mapv(silu_grad);
        let d_xn2 = self.ff1.backward(store, &cache.xn2, &d_ff_pre);
        let mut d_x_mid = self.ln2.backward(store, &cache.ln2, &d_xn2);
        d_x_mid += d_out;

        let d_attn_out = self.wo.backward(store, &cache.attn_out, &d_x_mid);
        let (dq, dk, dv) = attention_backward(&cache.attn, &d_attn_out, self.n_heads);
        let mut d_xn1 = self.wq.backward(store, &cache.xn1, &dq);
        d_xn1 += &self.wk.backward(store, &cache.xn1, &dk);
        d_xn1 += &self.wv.backward(store, &cache.xn1, &dv);
        let mut dx = self.ln1.backward(store, &cache.ln1, &d_xn1);
        dx += &d_x_mid;
        dx
    }
}

/// Output head: final norm then three linear layers narrowing to the two
/// coordinate channels.
#[derive(Debug, Clone)]
pub struct Head {
    pub ln: LayerNorm,
    pub l1: Linear,
    pub l2: Linear,
    pub l3: Linear,
}

#[derive(Debug, Clone)]
pub struct HeadCache {
    ln: LnCache,
    xn: Array2<f64>,
    h1: Array2<f64>,
    a1: Array2<f64>,
    h2: Array2<f64>,
    a2: Array2<f64>,
}

impl Head {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, rng: &mut ChaCha8Rng) -> Self {
        Head {
            ln: LayerNorm::new(store, &format!("{name}.ln"), dim),
            l1: Linear::new(store, &format!("{name}.l1"), dim, dim, rng),
            l2: Linear::new(store, &format!("{name}.l2"), dim, dim / 2, rng),
            l3: Linear::new(store, &format!("{name}.l3"), dim / 2, 2, rng),
        }
    }

    pub fn forward(&self, store: &ParamStore, x: &Array2<f64>) -> (Array2<f64>, HeadCache) {
        let (xn, ln_cache) = self.ln.forward(store, x);
        let h1 = self.l1.forward(store, &xn);
        let a1 = silu_arr(&h1);
        let h2 = self.l2.forward(store, &a1);
        let a2 = silu_arr(&h2);
        let y = self.l3.forward(store, &a2);
        (y, HeadCache { ln: ln_cache, xn, h1, a1, h2, a2 })
    }

    pub fn backward(&self, store: &mut ParamStore, cache: &HeadCache, d_y: &Array2<f64>) -> Array2<f64> {
        let d_a2 = self.l3.backward(store, &cache.a2, d_y);
        let d_h2 = &d_a2 * &cache.h2.mapv(silu_grad);
        let d_a1 = self.l2.backward(store, &cache.a1, &d_h2);
        let d_h1 = &d_a1 * &cache.h1.mapv(silu_grad);
        let d_xn = self.l1.backward(store, &cache.xn, &d_h1);
        self.ln.backward(store, &cache.ln, &d_xn)
    }
}
