//! Multi-head scaled dot-product attention, forward and backward.
//!
//! Projections live outside: callers hand in already-projected q, k, v
//! matrices (rows = tokens, cols = model width split evenly across heads).

use ndarray::{s, Array2};

use crate::math::{softmax_rows, softmax_rows_backward};

#[derive(Debug, Clone)]
pub struct AttnCache {
    pub q: Array2<f64>,
    pub k: Array2<f64>,
    pub v: Array2<f64>,
    /// Softmax output per head, each n_q x n_kv.
    pub attn: Vec<Array2<f64>>,
}

pub fn attention_forward(
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    n_heads: usize,
) -> (Array2<f64>, AttnCache) {
    let (n_q, dim) = q.dim();
    debug_assert_eq!(dim % n_heads, 0);
    debug_assert_eq!(k.dim(), v.dim());
    let d_head = dim / n_heads;
    let scale = 1.0 / (d_head as f64).sqrt();

    let mut out = Array2::zeros((n_q, dim));
    let mut attn = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let cols = s![.., h * d_head..(h + 1) * d_head];
        let qh = q.slice(cols);
        let kh = k.slice(cols);
        let vh = v.slice(cols);
        let mut scores = qh.dot(&kh.t());
        scores *= scale;
        softmax_rows(&mut scores);
        let oh = scores.dot(&vh);
        out.slice_mut(cols).assign(&oh);
        attn.push(scores);
    }
    (out, AttnCache { q, k, v, attn })
}

/// Returns (dq, dk, dv) for the projected inputs.
pub fn attention_backward(
    cache: &AttnCache,
    d_out: &Array2<f64>,
    n_heads: usize,
) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    let (n_q, dim) = cache.q.dim();
    let n_kv = cache.k.nrows();
    let d_head = dim / n_heads;
    let scale = 1.0 / (d_head as f64).sqrt();

    let mut dq = Array2::zeros((n_q, dim));
    let mut dk = Array2::zeros((n_kv, dim));
    let mut dv = Array2::zeros((n_kv, dim));
    for h in 0..n_heads {
        let cols = s![.., h * d_head..(h + 1) * d_head];
        let qh = cache.q.slice(cols);
        let kh = cache.k.slice(cols);
        let vh = cache.v.slice(cols);
        let a = &cache.attn[h];
        let d_oh = d_out.slice(cols);

        dv.slice_mut(cols).assign(&a.t().dot(&d_oh));
        let d_attn = d_oh.dot(&vh.t());
        let mut ds = softmax_rows_backward(a, &d_attn);
        ds *= scale;
        dq.slice_mut(cols).assign(&ds.dot(&kh));
        dk.slice_mut(cols).assign(&ds.t().dot(&qh));
    }
    (dq, dk, dv)
}
