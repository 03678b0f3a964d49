use std::path::Path;

use crate::diffusion::GammaKind;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::tokenizer::{Vocabulary, SPECIAL_NAMES};
use crate::train::{OptKind, TrainConfig};

/// Everything one run needs: model shape, vocabulary / grid geometry,
/// training hyper-parameters and sampler defaults. Stored as line-oriented
/// `key = value` text with `#` comments.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub depth: usize,
    pub width: usize,
    pub heads: usize,
    pub max_len: usize,
    /// Image codebook size K.
    pub image_size: usize,
    pub grid_h: usize,
    pub grid_w: usize,
    pub alpha_ntp: f64,
    pub cfg_drop_prob: f64,
    pub lr: f64,
    pub steps: usize,
    pub batch: usize,
    pub seed: u64,
    pub optimizer: OptKind,
    pub mtp_full_vocab: bool,
    pub gamma: GammaKind,
    pub sample_steps: usize,
    pub guidance: f64,
    pub temperature: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            depth: 2,
            width: 64,
            heads: 4,
            max_len: 64,
            image_size: 16,
            grid_h: 4,
            grid_w: 4,
            alpha_ntp: 1.0,
            cfg_drop_prob: 0.1,
            lr: 1e-3,
            steps: 1000,
            batch: 8,
            seed: 0,
            optimizer: OptKind::Adam,
            mtp_full_vocab: false,
            gamma: GammaKind::Cosine,
            sample_steps: 8,
            guidance: 0.0,
            temperature: 1.0,
        }
    }
}

impl RunConfig {
    /// Image tokens per grid.
    pub fn m(&self) -> usize {
        self.grid_h * self.grid_w
    }

    /// Bits needed to index the palette (grid cells are hex digits on disk).
    pub fn palette_bits(&self) -> u32 {
        (usize::BITS - (self.image_size - 1).leading_zeros()).max(1)
    }

    pub fn vocabulary(&self) -> Result<Vocabulary> {
        Vocabulary::default_with_image_size(self.image_size)
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            depth: self.depth,
            width: self.width,
            heads: self.heads,
            vocab_total: 64 + SPECIAL_NAMES.len() + self.image_size,
            max_len: self.max_len,
            time_conditioning: false,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            alpha_ntp: self.alpha_ntp,
            cfg_drop_prob: self.cfg_drop_prob,
            lr: self.lr,
            steps: self.steps,
            batch: self.batch,
            seed: self.seed,
            optimizer: self.optimizer,
            mtp_full_vocab: self.mtp_full_vocab,
            gamma_kind: self.gamma,
            curriculum: Vec::new(),
        }
    }

    /// Cross-module consistency checks, each with a named diagnostic.
    pub fn validate(&self) -> Result<()> {
        self.model_config().validate()?;
        self.train_config().validate()?;
        if self.grid_h == 0 || self.grid_w == 0 {
            return Err(Error::Config("grid_h/grid_w must be positive".into()));
        }
        if self.image_size < 2 || self.image_size > 16 {
            return Err(Error::Config(format!(
                "image_size {} outside 2..=16 (grid cells are stored as hex digits)",
                self.image_size
            )));
        }
        // shortest full layout is null-text t2i: task + [SOT][EOT][SOI] + M + [EOI]
        let min_len = self.m() + 5;
        if self.max_len < min_len {
            return Err(Error::Config(format!(
                "max_len {} shorter than the minimal {}-token image layout",
                self.max_len, min_len
            )));
        }
        if self.sample_steps == 0 {
            return Err(Error::Config("sample_steps must be >= 1".into()));
        }
        if self.guidance < 0.0 {
            return Err(Error::Config("guidance must be >= 0".into()));
        }
        if self.temperature <= 0.0 {
            return Err(Error::Config("temperature must be > 0".into()));
        }
        Ok(())
    }

    /// Serialize as `key = value` lines in a fixed order.
    pub fn to_text(&self) -> String {
        let b = |v: bool| if v { "true" } else { "false" };
        format!(
            "depth = {}\nwidth = {}\nheads = {}\nmax_len = {}\n\
             image_size = {}\ngrid_h = {}\ngrid_w = {}\n\
             alpha_ntp = {}\ncfg_drop_prob = {}\nlr = {}\nsteps = {}\nbatch = {}\nseed = {}\n\
             optimizer = {}\nmtp_full_vocab = {}\ngamma = {}\n\
             sample_steps = {}\nguidance = {}\ntemperature = {}\n",
            self.depth,
            self.width,
            self.heads,
            self.max_len,
            self.image_size,
            self.grid_h,
            self.grid_w,
            self.alpha_ntp,
            self.cfg_drop_prob,
            self.lr,
            self.steps,
            self.batch,
            self.seed,
            match self.optimizer {
                OptKind::Sgd => "sgd",
                OptKind::Adam => "adam",
            },
            b(self.mtp_full_vocab),
            self.gamma.name(),
            self.sample_steps,
            self.guidance,
            self.temperature,
        )
    }

    /// Parse `key = value` text; unknown or repeated keys are errors, keys
    /// not mentioned keep their defaults. Validates before returning.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = std::collections::BTreeSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!("line {}: duplicate key '{key}'", lineno + 1)));
            }
            let bad = |what: &str| {
                Error::Config(format!("line {}: bad {what} value '{value}'", lineno + 1))
            };
            match key {
                "depth" => cfg.depth = value.parse().map_err(|_| bad("usize"))?,
                "width" => cfg.width = value.parse().map_err(|_| bad("usize"))?,
                "heads" => cfg.heads = value.parse().map_err(|_| bad("usize"))?,
                "max_len" => cfg.max_len = value.parse().map_err(|_| bad("usize"))?,
                "image_size" => cfg.image_size = value.parse().map_err(|_| bad("usize"))?,
                "grid_h" => cfg.grid_h = value.parse().map_err(|_| bad("usize"))?,
                "grid_w" => cfg.grid_w = value.parse().map_err(|_| bad("usize"))?,
                "alpha_ntp" => cfg.alpha_ntp = value.parse().map_err(|_| bad("float"))?,
                "cfg_drop_prob" => cfg.cfg_drop_prob = value.parse().map_err(|_| bad("float"))?,
                "lr" => cfg.lr = value.parse().map_err(|_| bad("float"))?,
                "steps" => cfg.steps = value.parse().map_err(|_| bad("usize"))?,
                "batch" => cfg.batch = value.parse().map_err(|_| bad("usize"))?,
                "seed" => cfg.seed = value.parse().map_err(|_| bad("u64"))?,
                "optimizer" => cfg.optimizer = value.parse()?,
                "mtp_full_vocab" => {
                    cfg.mtp_full_vocab = value.parse().map_err(|_| bad("bool"))?
                }
                "gamma" => cfg.gamma = value.parse()?,
                "sample_steps" => cfg.sample_steps = value.parse().map_err(|_| bad("usize"))?,
                "guidance" => cfg.guidance = value.parse().map_err(|_| bad("float"))?,
                "temperature" => cfg.temperature = value.parse().map_err(|_| bad("float"))?,
                other => {
                    return Err(Error::Config(format!(
                        "line {}: unknown key '{other}'",
                        lineno + 1
                    )))
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_text(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.width = 48;
        cfg.gamma = GammaKind::Linear;
        cfg.optimizer = OptKind::Sgd;
        cfg.guidance = 2.5;
        let back = RunConfig::from_text(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_text_keeps_defaults() {
        let cfg = RunConfig::from_text("# comment\nwidth = 32 # inline\n\nsteps=5\n").unwrap();
        assert_eq!(cfg.width, 32);
        assert_eq!(cfg.steps, 5);
        assert_eq!(cfg.depth, RunConfig::default().depth);
    }

    #[test]
    fn parse_errors_are_named() {
        assert!(matches!(
            RunConfig::from_text("width 32"),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            RunConfig::from_text("no_such_key = 1"),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            RunConfig::from_text("width = 32\nwidth = 16"),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            RunConfig::from_text("width = many"),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn cross_module_validation() {
        // width not divisible by heads
        assert!(RunConfig::from_text("width = 30").is_err());
        // grid no longer fits in max_len
        assert!(RunConfig::from_text("grid_h = 8\ngrid_w = 8\nmax_len = 32").is_err());
        // codebook too large for the hex cell encoding
        assert!(RunConfig::from_text("image_size = 17").is_err());
        assert!(RunConfig::from_text("temperature = 0").is_err());
    }

    #[test]
    fn palette_bits_covers_codebook() {
        for k in 2..=16usize {
            let cfg = RunConfig {
                image_size: k,
                ..RunConfig::default()
            };
            let bits = cfg.palette_bits();
            assert!(1usize << bits >= k, "k={k} bits={bits}");
            assert!(bits <= 4);
        }
    }
}
