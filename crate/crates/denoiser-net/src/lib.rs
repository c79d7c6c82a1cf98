//! Conditional denoising network over latent coordinate grids.
//!
//! One token per latent grid cell. Each condition embedding block modulates
//! the tokens with the timestep embedding and cross-attends in parallel over
//! four context streams: learned document features, two frozen mask
//! encodings, and the previous step's refinement (its denoised mapping plus
//! the document features warped by it). Fusion blocks then self-attend, and
//! a small head regresses the two coordinate channels. Everything runs on a
//! flat parameter/gradient store so the optimizer and checkpointing in
//! `diffusion-core` see one contiguous buffer.

mod attn;
mod blocks;
mod config;
mod encoder;
mod layers;
mod math;
mod net;
mod params;

pub use config::NetConfig;
pub use net::{count_parameters, DewarpDenoiser};
pub use params::{ParamStore, Slot};
