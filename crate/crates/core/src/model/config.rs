use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    pub depth: usize,
    pub width: usize,
    pub heads: usize,
    pub vocab_total: usize,
    pub max_len: usize,
    /// Explicit diffusion-timestep input. The masking level is already
    /// implicit in the number of `[MASK]` tokens, so this stays off; turning
    /// it on is rejected until the ablation exists.
    pub time_conditioning: bool,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.width == 0 || self.heads == 0 {
            return Err(Error::Config("depth/width/heads must be positive".into()));
        }
        if self.width % self.heads != 0 {
            return Err(Error::Config(format!(
                "width {} not divisible by heads {}",
                self.width, self.heads
            )));
        }
        if self.vocab_total == 0 || self.max_len == 0 {
            return Err(Error::Config("vocab_total and max_len must be positive".into()));
        }
        if self.time_conditioning {
            return Err(Error::Config(
                "time_conditioning is not supported; mask count is the only conditioning".into(),
            ));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.width / self.heads
    }

    pub fn hidden(&self) -> usize {
        4 * self.width
    }
}
