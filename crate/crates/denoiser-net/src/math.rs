//! Activation functions, softmax, and the fixed embeddings.

use ndarray::{Array1, Array2};

pub fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

/// d(silu)/dx expressed through the input.
pub fn silu_grad(x: f64) -> f64 {
    let s = 1.0 / (1.0 + (-x).exp());
    s * (1.0 + x * (1.0 - s))
}

pub fn silu_arr(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(silu)
}

/// Row-wise softmax, max-subtracted for stability.
pub fn softmax_rows(x: &mut Array2<f64>) {
    for mut row in x.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

/// Backward through a row-wise softmax with output `a`:
/// ds = a * (da - rowsum(da * a)).
pub fn softmax_rows_backward(a: &Array2<f64>, da: &Array2<f64>) -> Array2<f64> {
    let mut ds = da * a;
    for (mut row, arow) in ds.rows_mut().into_iter().zip(a.rows()) {
        let dot: f64 = row.iter().sum();
        for (v, &av) in row.iter_mut().zip(arow.iter()) {
            *v -= dot * av;
        }
    }
    ds
}

/// Sinusoidal timestep features: `time_dim/2` geometric frequencies, sin
/// then cos halves.
pub fn time_features(t: usize, time_dim: usize) -> Array1<f64> {
    let half = time_dim / 2;
    let mut out = Array1::zeros(time_dim);
    for i in 0..half {
        let freq = (-(i as f64) * (10_000.0f64).ln() / half as f64).exp();
        let arg = t as f64 * freq;
        out[i] = arg.sin();
        out[half + i] = arg.cos();
    }
    out
}

/// Fixed 2D sin-cos positional embedding for an `l x l` token grid, one
/// quadrant of channels per (axis, phase) pair.
pub fn positional_embedding(l: usize, dim: usize) -> Array2<f64> {
    assert_eq!(dim % 4, 0, "positional embedding needs dim divisible by 4");
    let quarter = dim / 4;
    let mut out = Array2::zeros((l * l, dim));
    for u in 0..l {
        for v in 0..l {
            let row = u * l + v;
            for i in 0..quarter {
                let freq = (-(i as f64) * (10_000.0f64).ln() / quarter as f64).exp();
                out[[row, i]] = (v as f64 * freq).sin();
                out[[row, quarter + i]] = (v as f64 * freq).cos();
                out[[row, 2 * quarter + i]] = (u as f64 * freq).sin();
                out[[row, 3 * quarter + i]] = (u as f64 * freq).cos();
            }
        }
    }
    out
}
