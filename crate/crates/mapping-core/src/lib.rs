//! Backward-mapping warping geometry.
//!
//! A dewarping system is built around *backward mappings*: for every output
//! pixel, a mapping stores the normalized coordinate in the source (warped)
//! image to sample from. This crate owns that representation plus the
//! operations everything else composes: bilinear application of a mapping to
//! an image or feature grid, resolution changes of mappings, numerical
//! inversion of smooth forward fields, mapping composition, and the binary
//! mapping file format.
//!
//! Coordinate convention (used across the workspace): coordinates are
//! normalized to `[-1, 1]`, corner-aligned. `(-1, -1)` is the *center* of the
//! top-left source pixel, `(+1, +1)` the center of the bottom-right one.
//! Channel order is `(x, y)`: `x` advances along columns, `y` along rows.

mod image;
mod mapping;
mod resample;

pub mod dvdm;

pub use image::{psnr, DocumentImage};
pub use mapping::{
    apply_backward_mapping, compose_mappings, invert_mapping, warp_grid, warp_grid_clamped,
    FeatureGrid, GridMapping,
};
pub use resample::{downsample_mapping, upsample_mapping};

/// Errors produced by geometry operations and the mapping file format.
#[derive(Debug, thiserror::Error)]
pub enum MappingError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// Fixed-point inversion did not reach the requested tolerance.
    #[error(
        "inversion did not converge in {iters} iterations: residual {residual:.3e} > tol {tol:.3e}"
    )]
    Convergence {
        iters: usize,
        residual: f64,
        tol: f64,
    },
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, MappingError>;
