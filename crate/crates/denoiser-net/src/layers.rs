//! Linear and LayerNorm with explicit backward passes.
//!
//! Layers own only `Slot` handles into the shared [`ParamStore`]; callers
//! keep the forward activations a backward pass needs.

use ndarray::{Array2, Axis};
use rand_chacha::ChaCha8Rng;

use crate::params::{ParamStore, Slot};

#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub w: Slot,
    pub b: Slot,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let w = store.alloc_uniform(&format!("{name}.w"), out_dim * in_dim, in_dim, rng);
        let b = store.alloc(&format!("{name}.b"), out_dim);
        Linear { w, b, in_dim, out_dim }
    }

    /// `y = x W^T + b` over rows of `x` (tokens).
    pub fn forward(&self, store: &ParamStore, x: &Array2<f64>) -> Array2<f64> {
        debug_assert_eq!(x.ncols(), self.in_dim);
        let w = store.mat(self.w, self.out_dim, self.in_dim);
        let mut y = x.dot(&w.t());
        let b = store.w(self.b);
        for mut row in y.rows_mut() {
            for (o, bv) in row.iter_mut().zip(b) {
                *o += bv;
            }
        }
        y
    }

    /// Accumulates weight gradients and returns dx. `x` is the forward input.
    pub fn backward(&self, store: &mut ParamStore, x: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
        let dw = dy.t().dot(x);
        store.add_grad(self.w, dw.as_slice().expect("contiguous"));
        let db = dy.sum_axis(Axis(0));
        store.add_grad(self.b, db.as_slice().expect("contiguous"));
        let w = store.mat(self.w, self.out_dim, self.in_dim);
        dy.dot(&w)
    }
}

const LN_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy)]
pub struct LayerNorm {
    pub gamma: Slot,
    pub beta: Slot,
    pub dim: usize,
}

#[derive(Debug, Clone)]
pub struct LnCache {
    pub xhat: Array2<f64>,
    pub inv_std: Vec<f64>,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        let gamma = store.alloc(&format!("{name}.gamma"), dim);
        store.w_mut(gamma).fill(1.0);
        let beta = store.alloc(&format!("{name}.beta"), dim);
        LayerNorm { gamma, beta, dim }
    }

    pub fn forward(&self, store: &ParamStore, x: &Array2<f64>) -> (Array2<f64>, LnCache) {
        let n = x.nrows();
        let d = self.dim as f64;
        let mut xhat = x.clone();
        let mut inv_std = Vec::with_capacity(n);
        for mut row in xhat.rows_mut() {
            let mu = row.sum() / d;
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / d;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            for v in row.iter_mut() {
                *v = (*v - mu) * inv;
            }
            inv_std.push(inv);
        }
        let gamma = store.w(self.gamma);
        let beta = store.w(self.beta);
        let mut y = xhat.clone();
        for mut row in y.rows_mut() {
            for ((v, &g), &b) in row.iter_mut().zip(gamma).zip(beta) {
                *v = *v * g + b;
            }
        }
        (y, LnCache { xhat, inv_std })
    }

    pub fn backward(&self, store: &mut ParamStore, cache: &LnCache, dy: &Array2<f64>) -> Array2<f64> {
        let d = self.dim as f64;
        let dgamma = (dy * &cache.xhat).sum_axis(Axis(0));
        store.add_grad(self.gamma, dgamma.as_slice().expect("contiguous"));
        let dbeta = dy.sum_axis(Axis(0));
        store.add_grad(self.beta, dbeta.as_slice().expect("contiguous"));

        let gamma = store.w(self.gamma);
        let mut dx = Array2::zeros(dy.raw_dim());
        for ((mut dx_row, dy_row), (xhat_row, &inv)) in dx
            .rows_mut()
            .into_iter()
            .zip(dy.rows())
            .zip(cache.xhat.rows().into_iter().zip(&cache.inv_std))
        {
            let mut sum_dxhat = 0.0;
            let mut sum_dxhat_xhat = 0.0;
            for ((&dyv, &g), &xh) in dy_row.iter().zip(gamma).zip(xhat_row.iter()) {
                let dxhat = dyv * g;
                sum_dxhat += dxhat;
                sum_dxhat_xhat += dxhat * xh;
            }
            for (i, dxv) in dx_row.iter_mut().enumerate() {
                let dxhat = dy_row[i] * gamma[i];
                *dxv = inv / d * (d * dxhat - sum_dxhat - xhat_row[i] * sum_dxhat_xhat);
            }
        }
        dx
    }
}
