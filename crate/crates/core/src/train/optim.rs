use crate::error::{Error, Result};
use crate::model::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptKind {
    Sgd,
    Adam,
}

impl std::str::FromStr for OptKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptKind::Sgd),
            "adam" => Ok(OptKind::Adam),
            other => Err(Error::InvalidArgument(format!(
                "unknown optimizer '{other}' (expected sgd|adam)"
            ))),
        }
    }
}

/// Flat-vector optimizer over the canonical parameter order. The moment
/// buffers and step counter are public so checkpoints can restore them and
/// resume bitwise-identically.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    pub kind: OptKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Completed steps (Adam bias correction uses t after increment).
    pub t: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Optimizer {
    pub fn new(kind: OptKind, lr: f64, num_params: usize) -> Self {
        Self {
            kind,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
        }
    }

    /// One update in place; `grads` must align with `params.flat()`.
    pub fn step(&mut self, params: &mut ModelParams, grads: &[f64]) -> Result<()> {
        let mut flat = params.flat();
        if flat.len() != grads.len() || flat.len() != self.m.len() {
            return Err(Error::InvalidArgument(format!(
                "optimizer size mismatch: {} params, {} grads, {} state",
                flat.len(),
                grads.len(),
                self.m.len()
            )));
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged("non-finite gradient".into()));
        }
        self.t += 1;
        match self.kind {
            OptKind::Sgd => {
                for (p, &g) in flat.iter_mut().zip(grads) {
                    *p -= self.lr * g;
                }
            }
            OptKind::Adam => {
                let bc1 = 1.0 - self.beta1.powi(self.t as i32);
                let bc2 = 1.0 - self.beta2.powi(self.t as i32);
                for i in 0..flat.len() {
                    let g = grads[i];
                    self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
                    self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
                    let mh = self.m[i] / bc1;
                    let vh = self.v[i] / bc2;
                    flat[i] -= self.lr * mh / (vh.sqrt() + self.eps);
                }
            }
        }
        params.set_flat(&flat);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_params, ModelConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_params() -> ModelParams {
        let cfg = ModelConfig {
            depth: 1,
            width: 8,
            heads: 2,
            vocab_total: 12,
            max_len: 6,
            time_conditioning: false,
        };
        init_params(&cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap()
    }

    #[test]
    fn sgd_matches_hand_update() {
        let mut p = small_params();
        let before = p.flat();
        let grads: Vec<f64> = (0..before.len()).map(|i| (i % 7) as f64 * 0.1).collect();
        let mut opt = Optimizer::new(OptKind::Sgd, 0.5, before.len());
        opt.step(&mut p, &grads).unwrap();
        let after = p.flat();
        for i in 0..before.len() {
            assert!((after[i] - (before[i] - 0.5 * grads[i])).abs() < 1e-15);
        }
    }

    #[test]
    fn adam_first_step_is_signed_lr() {
        // with zero state, step 1 moves each coordinate by lr * sign(g)
        // up to the eps correction
        let mut p = small_params();
        let before = p.flat();
        let grads: Vec<f64> = before.iter().map(|&x| if x >= 0.0 { 2.0 } else { -3.0 }).collect();
        let mut opt = Optimizer::new(OptKind::Adam, 1e-2, before.len());
        opt.step(&mut p, &grads).unwrap();
        let after = p.flat();
        for i in 0..before.len() {
            let want = before[i] - 1e-2 * grads[i].signum();
            assert!((after[i] - want).abs() < 1e-6, "coord {i}");
        }
    }

    #[test]
    fn adam_descends_on_quadratic() {
        // minimize f(x) = sum x_i^2 over the parameter vector
        let mut p = small_params();
        let mut opt = Optimizer::new(OptKind::Adam, 0.05, p.num_params());
        let f = |p: &ModelParams| p.flat().iter().map(|x| x * x).sum::<f64>();
        let start = f(&p);
        for _ in 0..200 {
            let grads: Vec<f64> = p.flat().iter().map(|x| 2.0 * x).collect();
            opt.step(&mut p, &grads).unwrap();
        }
        assert!(f(&p) < 0.05 * start, "{} -> {}", start, f(&p));
    }

    #[test]
    fn state_restore_resumes_identically() {
        let mut a = small_params();
        let grads: Vec<f64> =
            (0..a.num_params()).map(|i| ((i * 31) % 11) as f64 * 0.01 - 0.05).collect();
        let mut opt_a = Optimizer::new(OptKind::Adam, 1e-3, a.num_params());
        for _ in 0..5 {
            opt_a.step(&mut a, &grads).unwrap();
        }
        // snapshot params + optimizer state mid-run, then continue both copies
        let mut b = a.clone();
        let mut opt_b = opt_a.clone();
        for _ in 0..5 {
            opt_a.step(&mut a, &grads).unwrap();
            opt_b.step(&mut b, &grads).unwrap();
        }
        assert_eq!(a, b, "resumed run diverged from original");
        assert_eq!(opt_a, opt_b);
    }

    #[test]
    fn non_finite_gradient_is_divergence() {
        let mut p = small_params();
        let mut grads = vec![0.0; p.num_params()];
        grads[3] = f64::NAN;
        let mut opt = Optimizer::new(OptKind::Adam, 1e-3, p.num_params());
        match opt.step(&mut p, &grads) {
            Err(Error::Diverged(_)) => {}
            other => panic!("expected divergence error, got {other:?}"),
        }
    }
}
