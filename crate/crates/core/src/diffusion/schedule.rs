use crate::error::{Error, Result};

/// Mask scheduling function family. `gamma` maps a progress ratio in [0,1]
/// to the fraction of tokens that remain masked: gamma(0)=1, gamma(1)=0,
/// monotonically non-increasing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GammaKind {
    Cosine,
    Linear,
}

impl GammaKind {
    pub fn name(self) -> &'static str {
        match self {
            GammaKind::Cosine => "cosine",
            GammaKind::Linear => "linear",
        }
    }
}

impl std::str::FromStr for GammaKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(GammaKind::Cosine),
            "linear" => Ok(GammaKind::Linear),
            other => Err(Error::InvalidArgument(format!(
                "unknown gamma kind '{other}' (expected cosine|linear)"
            ))),
        }
    }
}

/// Evaluate the mask scheduling function at ratio `r`.
pub fn gamma(kind: GammaKind, r: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::InvalidArgument(format!(
            "gamma ratio must be in [0,1], got {r}"
        )));
    }
    Ok(match kind {
        // cos(pi/2) in f64 is ~6e-17, not 0; the endpoint must be exact so
        // that ceil(gamma(1) * M) unmasks everything on the last step
        GammaKind::Cosine if r == 1.0 => 0.0,
        GammaKind::Cosine => (std::f64::consts::FRAC_PI_2 * r).cos(),
        GammaKind::Linear => 1.0 - r,
    })
}

/// Per-step corruption probabilities for a `T`-step chain: `alpha[t]` is the
/// probability of a token being absorbed into `[MASK]` at step `t+1`,
/// `beta[t]` the probability of a uniform-diffusion move.
#[derive(Debug, Clone)]
pub struct NoiseSchedule {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma_kind: GammaKind,
}

impl NoiseSchedule {
    pub fn new(alpha: Vec<f64>, beta: Vec<f64>, gamma_kind: GammaKind) -> Result<Self> {
        if alpha.is_empty() {
            return Err(Error::InvalidArgument("schedule must have T >= 1".into()));
        }
        if alpha.len() != beta.len() {
            return Err(Error::InvalidArgument(format!(
                "alpha/beta length mismatch: {} vs {}",
                alpha.len(),
                beta.len()
            )));
        }
        for (t, (&a, &b)) in alpha.iter().zip(&beta).enumerate() {
            if !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&b) {
                return Err(Error::InvalidArgument(format!(
                    "alpha/beta out of [0,1] at step {}: {a}, {b}",
                    t + 1
                )));
            }
            if a + b > 1.0 + 1e-12 {
                return Err(Error::InvalidArgument(format!(
                    "alpha_t + beta_t > 1 at step {}: {a} + {b}",
                    t + 1
                )));
            }
        }
        Ok(Self {
            alpha,
            beta,
            gamma_kind,
        })
    }

    /// Absorbing-only schedule (beta_t = 0 everywhere), the path used by
    /// training-time corruption.
    pub fn absorbing_only(alpha: Vec<f64>, gamma_kind: GammaKind) -> Result<Self> {
        let beta = vec![0.0; alpha.len()];
        Self::new(alpha, beta, gamma_kind)
    }

    pub fn steps(&self) -> usize {
        self.alpha.len()
    }

    /// Cumulative probability that a non-mask token has been absorbed by
    /// step `t` (1-based): 1 - prod_{s<=t} (1 - alpha_s). The uniform
    /// component never creates or destroys mask states, so this holds for
    /// the composed chain as well.
    pub fn cumulative_mask_prob(&self, t: usize) -> Result<f64> {
        if t == 0 || t > self.steps() {
            return Err(Error::InvalidArgument(format!(
                "step {t} out of range 1..={}",
                self.steps()
            )));
        }
        let keep: f64 = self.alpha[..t].iter().map(|a| 1.0 - a).product();
        Ok(1.0 - keep)
    }
}
