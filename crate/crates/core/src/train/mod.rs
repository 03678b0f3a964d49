//! Training: the next-token and mask-token objectives, training-time
//! masking, condition dropout for classifier-free guidance, finite-difference
//! gradient verification and the optimization loop.

mod driver;
mod gradcheck;
mod loss;
mod masking;
mod optim;

pub use driver::{train_loop, train_step, ExampleKind, Phase, TrainExample, TrainOutcome};
pub use gradcheck::grad_check;
pub use loss::{batch_loss_and_grads, combined_loss, mtp_loss, ntp_loss, LossReport};
pub use masking::{apply_training_mask, cfg_dropout};
pub use optim::{OptKind, Optimizer};

use crate::diffusion::GammaKind;

/// Hyper-parameters of the combined objective and the optimization loop.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    /// Weight of the next-token loss in `total = mtp + alpha_ntp * ntp`.
    pub alpha_ntp: f64,
    /// Probability of replacing the text condition with null text.
    pub cfg_drop_prob: f64,
    pub lr: f64,
    pub steps: usize,
    pub batch: usize,
    pub seed: u64,
    pub optimizer: OptKind,
    /// Use the full-vocabulary softmax for masked-image targets instead of
    /// restricting the normalizer to the image-id range.
    pub mtp_full_vocab: bool,
    pub gamma_kind: GammaKind,
    /// Ordered curriculum phases; empty means one phase over everything.
    pub curriculum: Vec<Phase>,
}

impl TrainConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if self.alpha_ntp < 0.0 {
            return Err(crate::Error::Config("alpha_ntp must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.cfg_drop_prob) {
            return Err(crate::Error::Config("cfg_drop_prob must be in [0,1)".into()));
        }
        if self.batch == 0 {
            return Err(crate::Error::Config("batch must be positive".into()));
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha_ntp: 1.0,
            cfg_drop_prob: 0.1,
            lr: 1e-3,
            steps: 1000,
            batch: 8,
            seed: 0,
            optimizer: OptKind::Adam,
            mtp_full_vocab: false,
            gamma_kind: GammaKind::Cosine,
            curriculum: Vec::new(),
        }
    }
}
