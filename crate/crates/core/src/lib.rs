//! A desk-scale transformer that unifies autoregressive text modeling and
//! absorbing discrete diffusion over image tokens in one vocabulary.
//!
//! Module map:
//! - [`diffusion`]: categorical diffusion algebra (transition matrices,
//!   marginals, posteriors, schedules, ELBO verification by enumeration)
//! - [`tokenizer`]: deterministic toy text / palette-image tokenizers over a
//!   unified vocabulary
//! - [`sequence`]: unified prompt layouts and omni-attention masks
//! - [`model`]: a minimal decoder transformer with QK-Norm attention and
//!   hand-written backward pass
//! - [`train`]: NTP + MTP losses, training-time masking, condition dropout,
//!   gradient checking and the optimization loop
//! - [`sampler`]: iterative confidence-based denoising with classifier-free
//!   guidance, autoregressive text decoding, inpainting / extrapolation inits
//! - [`harness`]: CLI, config, datasets, checkpoints, pixmap output

pub mod diffusion;
pub mod error;
pub mod harness;
pub mod model;
pub mod sampler;
pub mod sequence;
pub mod tokenizer;
pub mod train;

pub use error::{Error, Result};
