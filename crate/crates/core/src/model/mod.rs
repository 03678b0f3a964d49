//! Minimal decoder transformer over the unified vocabulary: learned absolute
//! positions, pre-norm blocks, QK-Norm attention driven by an external
//! visibility mask, untied output head. Forward and backward are written by
//! hand in f64 so gradients can be checked against finite differences.

mod config;
mod forward;
mod params;

pub use config::ModelConfig;
pub use forward::{
    backward, forward_cached, forward_logits, qk_norm_attention, ForwardCache,
};
pub use params::{init_params, LayerParams, ModelParams};
