//! Convolutional feature encoders: one trainable (document features) and a
//! frozen random-projection variant (mask features, standing in for the
//! pretrained segmentation backbones at full scale).
//!
//! All convolutions are 3x3 with unit padding; stride-2 stages halve the
//! spatial size until input resolution reaches latent resolution.

use ndarray::{Array2, Array3, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::math::{silu, silu_grad};
use crate::params::{ParamStore, Slot};

/// Unfolds 3x3 patches into rows: output `(oh*ow, 9*c)`.
pub fn im2col(x: &Array3<f64>, stride: usize) -> (Array2<f64>, (usize, usize)) {
    let (h, w, c) = x.dim();
    let oh = (h - 1) / stride + 1;
    let ow = (w - 1) / stride + 1;
    let mut cols = Array2::zeros((oh * ow, 9 * c));
    for i in 0..oh {
        for j in 0..ow {
            let row = i * ow + j;
            for di in 0..3usize {
                let ii = (i * stride + di) as isize - 1;
                if ii < 0 || ii >= h as isize {
                    continue;
                }
                for dj in 0..3usize {
                    let jj = (j * stride + dj) as isize - 1;
                    if jj < 0 || jj >= w as isize {
                        continue;
                    }
                    let base = (di * 3 + dj) * c;
                    for ch in 0..c {
                        cols[[row, base + ch]] = x[[ii as usize, jj as usize, ch]];
                    }
                }
            }
        }
    }
    (cols, (oh, ow))
}

/// Scatter-adds patch-row gradients back onto the input tensor.
fn col2im(dcols: &Array2<f64>, in_dim: (usize, usize, usize), stride: usize) -> Array3<f64> {
    let (h, w, c) = in_dim;
    let oh = (h - 1) / stride + 1;
    let ow = (w - 1) / stride + 1;
    let mut dx = Array3::zeros((h, w, c));
    for i in 0..oh {
        for j in 0..ow {
            let row = i * ow + j;
            for di in 0..3usize {
                let ii = (i * stride + di) as isize - 1;
                if ii < 0 || ii >= h as isize {
                    continue;
                }
                for dj in 0..3usize {
                    let jj = (j * stride + dj) as isize - 1;
                    if jj < 0 || jj >= w as isize {
                        continue;
                    }
                    let base = (di * 3 + dj) * c;
                    for ch in 0..c {
                        dx[[ii as usize, jj as usize, ch]] += dcols[[row, base + ch]];
                    }
                }
            }
        }
    }
    dx
}

/// cols `(n, 9*in)` times weights `(out, 9*in)` plus bias, reshaped to a map.
fn conv_apply(cols: &Array2<f64>, w: ArrayView2<f64>, b: &[f64], ohw: (usize, usize)) -> Array3<f64> {
    let mut y = cols.dot(&w.t());
    for mut row in y.rows_mut() {
        for (o, bv) in row.iter_mut().zip(b) {
            *o += bv;
        }
    }
    let out_ch = w.nrows();
    Array3::from_shape_vec((ohw.0, ohw.1, out_ch), y.into_raw_vec_and_offset().0)
        .expect("row-major conv output")
}

#[derive(Debug, Clone, Copy)]
pub struct Conv2d {
    pub w: Slot,
    pub b: Slot,
    pub in_ch: usize,
    pub out_ch: usize,
    pub stride: usize,
}

impl Conv2d {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        stride: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let w = store.alloc_uniform(&format!("{name}.w"), out_ch * 9 * in_ch, 9 * in_ch, rng);
        let b = store.alloc(&format!("{name}.b"), out_ch);
        Conv2d { w, b, in_ch, out_ch, stride }
    }

    pub fn forward(&self, store: &ParamStore, x: &Array3<f64>) -> (Array3<f64>, Array2<f64>) {
        let (cols, ohw) = im2col(x, self.stride);
        let w = store.mat(self.w, self.out_ch, 9 * self.in_ch);
        let y = conv_apply(&cols, w, store.w(self.b), ohw);
        (y, cols)
    }

    /// `cols` and `in_dim` come from the forward pass. Returns dx.
    pub fn backward(
        &self,
        store: &mut ParamStore,
        cols: &Array2<f64>,
        in_dim: (usize, usize, usize),
        d_out: &Array3<f64>,
    ) -> Array3<f64> {
        let (oh, ow, oc) = d_out.dim();
        let d_flat = Array2::from_shape_vec((oh * ow, oc), d_out.iter().copied().collect())
            .expect("row-major gradient");
        let dw = d_flat.t().dot(cols);
        store.add_grad(self.w, dw.as_slice().expect("contiguous"));
        let db = d_flat.sum_axis(Axis(0));
        store.add_grad(self.b, db.as_slice().expect("contiguous"));
        let w = store.mat(self.w, self.out_ch, 9 * self.in_ch);
        let dcols = d_flat.dot(&w);
        col2im(&dcols, in_dim, self.stride)
    }
}

/// Trainable encoder: one stride-1 stem then `n_down` stride-2 stages, all
/// at model width, SiLU after every convolution.
#[derive(Debug, Clone)]
pub struct ConvEncoder {
    pub convs: Vec<Conv2d>,
}

#[derive(Debug, Clone)]
pub struct EncCache {
    pub in_dims: Vec<(usize, usize, usize)>,
    pub cols: Vec<Array2<f64>>,
    /// Pre-activation output of each convolution.
    pub pre: Vec<Array3<f64>>,
}

impl ConvEncoder {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_ch: usize,
        dim: usize,
        n_down: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let mut convs = vec![Conv2d::new(store, &format!("{name}.conv0"), in_ch, dim, 1, rng)];
        for i in 0..n_down {
            convs.push(Conv2d::new(store, &format!("{name}.conv{}", i + 1), dim, dim, 2, rng));
        }
        ConvEncoder { convs }
    }

    pub fn forward(&self, store: &ParamStore, x: Array3<f64>, train: bool) -> (Array3<f64>, Option<EncCache>) {
        let mut cache = train.then(|| EncCache {
            in_dims: Vec::with_capacity(self.convs.len()),
            cols: Vec::with_capacity(self.convs.len()),
            pre: Vec::with_capacity(self.convs.len()),
        });
        let mut cur = x;
        for conv in &self.convs {
            let in_dim = cur.dim();
            let (pre, cols) = conv.forward(store, &cur);
            cur = pre.mapv(silu);
            if let Some(c) = cache.as_mut() {
                c.in_dims.push(in_dim);
                c.cols.push(cols);
                c.pre.push(pre);
            }
        }
        (cur, cache)
    }

    pub fn backward(&self, store: &mut ParamStore, cache: &EncCache, d_out: Array3<f64>) {
        let mut d = d_out;
        for (l, conv) in self.convs.iter().enumerate().rev() {
            let d_pre = &d * &cache.pre[l].mapv(silu_grad);
            d = conv.backward(store, &cache.cols[l], cache.in_dims[l], &d_pre);
        }
    }
}

/// Frozen random-projection encoder: same topology, weights drawn once from
/// a fixed seed, zero biases (so an all-zero input maps to all-zero
/// features), never part of the trainable parameter set.
#[derive(Debug, Clone)]
pub struct FrozenEncoder {
    convs: Vec<(Array2<f64>, usize)>,
}

impl FrozenEncoder {
    pub fn new(in_ch: usize, dim: usize, n_down: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut convs = Vec::with_capacity(n_down + 1);
        let mut ic = in_ch;
        for l in 0..=n_down {
            let fan_in = 9 * ic;
            let bound = 1.0 / (fan_in as f64).sqrt();
            let w = Array2::from_shape_fn((dim, fan_in), |_| rng.random_range(-bound..bound));
            convs.push((w, if l == 0 { 1 } else { 2 }));
            ic = dim;
        }
        FrozenEncoder { convs }
    }

    pub fn forward(&self, x: Array3<f64>) -> Array3<f64> {
        let mut cur = x;
        for (w, stride) in &self.convs {
            let (cols, ohw) = im2col(&cur, *stride);
            let zero_bias = vec![0.0; w.nrows()];
            cur = conv_apply(&cols, w.view(), &zero_bias, ohw).mapv(silu);
        }
        cur
    }
}
