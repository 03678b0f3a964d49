//! Categorical diffusion algebra over a codebook of size `K` plus one
//! absorbing `[MASK]` state at index `K`.

mod elbo;
mod schedule;
mod transition;

pub use elbo::{num_states, perfect_model, verify_elbo, ElboReport, ReverseModel, TableModel};
pub use schedule::{gamma, GammaKind, NoiseSchedule};
pub use transition::{
    build_absorbing, build_first_order, build_uniform, compose_step, corrupt, cumulative,
    marginal, posterior, step_matrix, CategoricalDist, TransitionMatrix, TransitionMode,
};
