//! Engine for a lossy image codec built from selective state-space scans.
//!
//! The crate is `no_std` (it needs `alloc`) and does no IO. Every
//! transcendental function goes through [`libm`] and every reduction runs in
//! a fixed order, so encoder and decoder reproduce the same floating-point
//! values bit for bit on any platform. File formats, image IO and the
//! command line live in the `ssmcodec` crate.
//!
//! Layout of the pipeline:
//!
//! * [`nn`]: tensor primitives (convolutions, layer norm, activations).
//! * [`ssm`]: zero-order-hold discretization, sequential and parallel
//!   selective scans, the S6 token mixer and the scan backward pass.
//! * [`scan2d`]: four-direction unfold / scan / fold / merge.
//! * [`vss`]: gated VSS layers and blocks.
//! * [`transforms`]: analysis, synthesis, hyper transforms and the
//!   channel-wise autoregressive slice networks.
//! * [`entropy`]: quantization, Gaussian and factorized priors, rate terms.
//! * [`range_coder`]: 32-bit range coder over 16-bit CDF tables.
//! * [`codec`]: padding and end-to-end encode / decode of latents.
//! * [`metrics`]: PSNR, BD-rate and latent diagnostics.
//! * [`cost`]: analytic multiply-accumulate counts per pipeline stage.
#![no_std]

extern crate alloc;

pub mod codec;
pub mod cost;
pub mod entropy;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod range_coder;
pub mod real;
pub mod rng;
pub mod scan2d;
pub mod ssm;
pub mod tensor;
pub mod transforms;
pub mod vss;
pub mod weights;

pub use error::{Error, Result};
pub use real::Real;
pub use tensor::Tensor;
