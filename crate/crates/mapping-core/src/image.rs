use ndarray::{Array3, ArrayView3};

use crate::{MappingError, Result};

/// A raster image with intensities in `[0, 1]`, shape `h x w x channels`.
/// Channels are 1 (gray) or 3 (RGB).
#[derive(Debug, Clone, PartialEq)]
pub struct DocumentImage {
    pixels: Array3<f32>,
}

impl DocumentImage {
    /// Validates dimensions, channel count, and the `[0, 1]` range.
    /// Values within 1e-4 outside the range (interpolation slop) are
    /// clamped; anything further out or non-finite is rejected.
    pub fn new(mut pixels: Array3<f32>) -> Result<Self> {
        let (h, w, c) = pixels.dim();
        if h == 0 || w == 0 {
            return Err(MappingError::InvalidArgument(
                "image dimensions must be nonzero".into(),
            ));
        }
        if c != 1 && c != 3 {
            return Err(MappingError::InvalidArgument(format!(
                "image must have 1 or 3 channels, got {c}"
            )));
        }
        const SLOP: f32 = 1e-4;
        for v in pixels.iter_mut() {
            if !v.is_finite() || *v < -SLOP || *v > 1.0 + SLOP {
                return Err(MappingError::InvalidArgument(format!(
                    "pixel value {v} outside [0, 1]"
                )));
            }
            *v = v.clamp(0.0, 1.0);
        }
        Ok(Self { pixels })
    }

    /// A uniform image of the given intensity.
    pub fn constant(height: usize, width: usize, channels: usize, value: f32) -> Self {
        Self::new(Array3::from_elem((height, width, channels), value))
            .expect("constant image parameters must be valid")
    }

    /// Builds an image by evaluating `f(row, col, channel)`; values are
    /// clamped into `[0, 1]`.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Self {
        let pixels =
            Array3::from_shape_fn((height, width, channels), |(u, v, c)| f(u, v, c).clamp(0.0, 1.0));
        Self::new(pixels).expect("from_fn output is clamped into range")
    }

    pub fn height(&self) -> usize {
        self.pixels.dim().0
    }

    pub fn width(&self) -> usize {
        self.pixels.dim().1
    }

    pub fn channels(&self) -> usize {
        self.pixels.dim().2
    }

    pub fn pixels(&self) -> ArrayView3<'_, f32> {
        self.pixels.view()
    }

    pub fn pixels_mut(&mut self) -> &mut Array3<f32> {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Array3<f32> {
        self.pixels
    }

    /// Single-channel luma view of the image (BT.601 weights for RGB;
    /// gray images pass through).
    pub fn to_gray(&self) -> DocumentImage {
        if self.channels() == 1 {
            return self.clone();
        }
        let (h, w, _) = self.pixels.dim();
        let pixels = Array3::from_shape_fn((h, w, 1), |(u, v, _)| {
            0.299 * self.pixels[[u, v, 0]]
                + 0.587 * self.pixels[[u, v, 1]]
                + 0.114 * self.pixels[[u, v, 2]]
        });
        DocumentImage::new(pixels).expect("luma of valid image is valid")
    }
}

/// Peak signal-to-noise ratio in dB between two same-shaped images,
/// excluding a border band of `exclude_border` pixels on every side.
/// Identical images give +inf.
pub fn psnr(a: &DocumentImage, b: &DocumentImage, exclude_border: usize) -> f64 {
    assert_eq!(a.pixels.dim(), b.pixels.dim(), "psnr shape mismatch");
    let (h, w, c) = a.pixels.dim();
    assert!(
        h > 2 * exclude_border && w > 2 * exclude_border,
        "border exclusion swallows the whole image"
    );
    let mut sum = 0.0f64;
    let mut n = 0usize;
    for u in exclude_border..h - exclude_border {
        for v in exclude_border..w - exclude_border {
            for ch in 0..c {
                let d = a.pixels[[u, v, ch]] as f64 - b.pixels[[u, v, ch]] as f64;
                sum += d * d;
                n += 1;
            }
        }
    }
    let mse = sum / n as f64;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}
