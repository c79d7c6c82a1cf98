//! Flat parameter and gradient storage.
//!
//! Every trainable tensor is a named slice of one contiguous buffer, which
//! is what the optimizer and the checkpoint format consume; layers hold
//! only `Slot` handles. Gradients live in a parallel buffer of the same
//! layout and are accumulated across a batch.

use ndarray::{ArrayView2, ArrayViewMut2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Handle to one named tensor inside the store.
#[derive(Debug, Clone, Copy)]
pub struct Slot {
    offset: usize,
    len: usize,
}

impl Slot {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

#[derive(Debug, Clone)]
pub struct ParamStore {
    w: Vec<f64>,
    g: Vec<f64>,
    names: Vec<(String, Slot)>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore { w: Vec::new(), g: Vec::new(), names: Vec::new() }
    }

    /// Reserves a zero-initialized tensor.
    pub fn alloc(&mut self, name: &str, len: usize) -> Slot {
        let slot = Slot { offset: self.w.len(), len };
        self.w.resize(self.w.len() + len, 0.0);
        self.g.resize(self.w.len(), 0.0);
        self.names.push((name.to_string(), slot));
        slot
    }

    /// Reserves a tensor initialized uniformly in ±1/sqrt(fan_in).
    pub fn alloc_uniform(&mut self, name: &str, len: usize, fan_in: usize, rng: &mut ChaCha8Rng) -> Slot {
        let slot = self.alloc(name, len);
        let bound = 1.0 / (fan_in as f64).sqrt();
        for x in self.w_mut(slot) {
            *x = rng.random_range(-bound..bound);
        }
        slot
    }

    pub fn w(&self, s: Slot) -> &[f64] {
        &self.w[s.offset..s.offset + s.len]
    }

    pub fn w_mut(&mut self, s: Slot) -> &mut [f64] {
        &mut self.w[s.offset..s.offset + s.len]
    }

    /// Parameter tensor viewed as a `rows x cols` matrix.
    pub fn mat(&self, s: Slot, rows: usize, cols: usize) -> ArrayView2<'_, f64> {
        debug_assert_eq!(rows * cols, s.len);
        ArrayView2::from_shape((rows, cols), self.w(s)).expect("slot length matches shape")
    }

    /// Accumulates `delta` into the gradient of `s`.
    pub fn add_grad(&mut self, s: Slot, delta: &[f64]) {
        debug_assert_eq!(delta.len(), s.len);
        for (g, d) in self.g[s.offset..s.offset + s.len].iter_mut().zip(delta) {
            *g += d;
        }
    }

    /// Gradient tensor of `s` as a mutable `rows x cols` matrix.
    pub fn grad_mat_mut(&mut self, s: Slot, rows: usize, cols: usize) -> ArrayViewMut2<'_, f64> {
        debug_assert_eq!(rows * cols, s.len);
        ArrayViewMut2::from_shape((rows, cols), &mut self.g[s.offset..s.offset + s.len])
            .expect("slot length matches shape")
    }

    pub fn grad(&self, s: Slot) -> &[f64] {
        &self.g[s.offset..s.offset + s.len]
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn params(&self) -> &[f64] {
        &self.w
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.w
    }

    /// Parameter and gradient buffers together (optimizer interface).
    pub fn params_and_grads(&mut self) -> (&mut [f64], &[f64]) {
        (&mut self.w, &self.g)
    }

    pub fn grads(&self) -> &[f64] {
        &self.g
    }

    pub fn zero_grads(&mut self) {
        self.g.fill(0.0);
    }

    /// All named tensors in allocation order.
    pub fn slots(&self) -> &[(String, Slot)] {
        &self.names
    }
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}
