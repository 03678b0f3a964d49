use ndarray::Array2;
use rand::Rng;

use crate::error::{Error, Result};

use super::schedule::NoiseSchedule;

/// How a transition matrix was constructed. `FirstOrder` rows are allowed
/// to be sub-stochastic (non-mask rows sum to 1 - beta_t/(K+1)); everything
/// else must be exactly row-stochastic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransitionMode {
    Absorbing,
    Uniform,
    Composed,
    FirstOrder,
}

/// Row-stochastic (K+1)x(K+1) categorical transition over codebook states
/// 0..K plus the absorbing `[MASK]` state at index K.
#[derive(Debug, Clone)]
pub struct TransitionMatrix {
    k: usize,
    mode: TransitionMode,
    entries: Array2<f64>,
}

impl TransitionMatrix {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn mode(&self) -> TransitionMode {
        self.mode
    }

    /// Index of the absorbing mask state.
    pub fn mask_index(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.k + 1
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.entries[[from, to]]
    }
}

/// A normalized distribution over the K+1 states.
#[derive(Debug, Clone)]
pub struct CategoricalDist {
    probs: Vec<f64>,
}

impl CategoricalDist {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.iter().any(|&p| p < 0.0 || !p.is_finite()) {
            return Err(Error::InvalidArgument(
                "distribution entries must be finite and >= 0".into(),
            ));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidArgument(format!(
                "distribution must sum to 1 within 1e-10, got {sum}"
            )));
        }
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Draw a state index using the inverse-CDF method.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (i, &p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        self.probs.len() - 1
    }
}

fn check_prob(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!(
            "{name} must be in [0,1], got {p}"
        )));
    }
    Ok(())
}

/// Absorbing transition: each non-mask state keeps its identity with
/// probability 1-alpha_t and moves to `[MASK]` with probability alpha_t.
pub fn build_absorbing(alpha_t: f64, k: usize) -> Result<TransitionMatrix> {
    check_prob("alpha_t", alpha_t)?;
    if k == 0 {
        return Err(Error::InvalidArgument("codebook size k must be >= 1".into()));
    }
    let n = k + 1;
    let mut m = Array2::zeros((n, n));
    for i in 0..k {
        m[[i, i]] = 1.0 - alpha_t;
        m[[i, k]] = alpha_t;
    }
    m[[k, k]] = 1.0;
    Ok(TransitionMatrix {
        k,
        mode: TransitionMode::Absorbing,
        entries: m,
    })
}

/// Uniform-diffusion transition. With `first_order=false` each non-mask row is
/// (1-beta_t) on the identity plus beta_t spread uniformly over the K
/// non-mask states, so rows sum to 1 exactly. With `first_order=true` the
/// spread divisor is K+1 and non-mask rows sum to 1 - beta_t/(K+1); that
/// variant exists only for entrywise cross-checks.
pub fn build_uniform(beta_t: f64, k: usize, first_order: bool) -> Result<TransitionMatrix> {
    check_prob("beta_t", beta_t)?;
    if k == 0 {
        return Err(Error::InvalidArgument("codebook size k must be >= 1".into()));
    }
    let n = k + 1;
    let divisor = if first_order { (k + 1) as f64 } else { k as f64 };
    let spread = beta_t / divisor;
    let mut m = Array2::zeros((n, n));
    for i in 0..k {
        for j in 0..k {
            m[[i, j]] = spread + if i == j { 1.0 - beta_t } else { 0.0 };
        }
    }
    m[[k, k]] = 1.0;
    Ok(TransitionMatrix {
        k,
        mode: if first_order {
            TransitionMode::FirstOrder
        } else {
            TransitionMode::Uniform
        },
        entries: m,
    })
}

/// The explicit matrix with entries omega_t + nu_t on the diagonal, nu_t off
/// the diagonal, alpha_t in the mask column and an absorbing mask row, where
/// omega_t = 1 - alpha_t - beta_t and nu_t = beta_t/(K+1). Non-mask rows sum
/// to 1 - beta_t/(K+1), so this is for cross-checking only, never sampling.
pub fn build_first_order(alpha_t: f64, beta_t: f64, k: usize) -> Result<TransitionMatrix> {
    check_prob("alpha_t", alpha_t)?;
    check_prob("beta_t", beta_t)?;
    if alpha_t + beta_t > 1.0 + 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "alpha_t + beta_t must be <= 1, got {alpha_t} + {beta_t}"
        )));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("codebook size k must be >= 1".into()));
    }
    let n = k + 1;
    let omega = 1.0 - alpha_t - beta_t;
    let nu = beta_t / (k as f64 + 1.0);
    let mut m = Array2::zeros((n, n));
    for i in 0..k {
        for j in 0..k {
            m[[i, j]] = nu + if i == j { omega } else { 0.0 };
        }
        m[[i, k]] = alpha_t;
    }
    m[[k, k]] = 1.0;
    Ok(TransitionMatrix {
        k,
        mode: TransitionMode::FirstOrder,
        entries: m,
    })
}

/// One diffusion step Q_t = Q_t^a Q_t^u (absorbing first, then uniform).
pub fn compose_step(qa: &TransitionMatrix, qu: &TransitionMatrix) -> Result<TransitionMatrix> {
    if qa.k != qu.k {
        return Err(Error::InvalidArgument(format!(
            "codebook size mismatch: {} vs {}",
            qa.k, qu.k
        )));
    }
    let entries = qa.entries.dot(&qu.entries);
    Ok(TransitionMatrix {
        k: qa.k,
        mode: TransitionMode::Composed,
        entries,
    })
}

/// Per-step transition for step `t` (1-based) of a schedule. `first_order`
/// selects the first-order matrix instead of the composed product.
pub fn step_matrix(
    schedule: &NoiseSchedule,
    t: usize,
    k: usize,
    first_order: bool,
) -> Result<TransitionMatrix> {
    if t == 0 || t > schedule.steps() {
        return Err(Error::InvalidArgument(format!(
            "step {t} out of range 1..={}",
            schedule.steps()
        )));
    }
    let (a, b) = (schedule.alpha[t - 1], schedule.beta[t - 1]);
    if first_order {
        build_first_order(a, b, k)
    } else {
        compose_step(&build_absorbing(a, k)?, &build_uniform(b, k, false)?)
    }
}

/// Cumulative transition Qbar_t = Q_1 Q_2 ... Q_t.
pub fn cumulative(
    schedule: &NoiseSchedule,
    t: usize,
    k: usize,
    first_order: bool,
) -> Result<TransitionMatrix> {
    if t == 0 || t > schedule.steps() {
        return Err(Error::InvalidArgument(format!(
            "step {t} out of range 1..={}",
            schedule.steps()
        )));
    }
    let mut acc = step_matrix(schedule, 1, k, first_order)?;
    for s in 2..=t {
        let q = step_matrix(schedule, s, k, first_order)?;
        acc = TransitionMatrix {
            k,
            mode: if first_order {
                TransitionMode::FirstOrder
            } else {
                TransitionMode::Composed
            },
            entries: acc.entries.dot(&q.entries),
        };
    }
    Ok(acc)
}

/// q(x_t | x_0): row `x0` of a cumulative matrix as a distribution.
pub fn marginal(x0: usize, qbar: &TransitionMatrix) -> Result<CategoricalDist> {
    if x0 > qbar.k {
        return Err(Error::InvalidArgument(format!(
            "state {x0} out of range 0..={}",
            qbar.k
        )));
    }
    CategoricalDist::new(qbar.entries.row(x0).to_vec())
}

/// q(x_{t-1} | x_t, x_0) by the elementwise-product formula, normalized.
/// t=1 degenerates to a point mass at x_0 (Qbar_0 is the identity).
/// An unreachable (x_t, x_0) pair, i.e. q(x_t|x_0) = 0, is a domain error.
pub fn posterior(
    xt: usize,
    x0: usize,
    schedule: &NoiseSchedule,
    t: usize,
    k: usize,
) -> Result<CategoricalDist> {
    if t == 0 || t > schedule.steps() {
        return Err(Error::InvalidArgument(format!(
            "step {t} out of range 1..={}",
            schedule.steps()
        )));
    }
    if xt > k || x0 > k {
        return Err(Error::InvalidArgument(format!(
            "states ({xt}, {x0}) out of range 0..={k}"
        )));
    }
    let qt = step_matrix(schedule, t, k, false)?;
    let qbar_t = cumulative(schedule, t, k, false)?;
    let denom = qbar_t.get(x0, xt);
    if denom <= 0.0 {
        return Err(Error::Domain(format!(
            "unreachable pair: q(x_t={xt} | x_0={x0}) = 0 at step {t}"
        )));
    }
    let n = k + 1;
    let mut probs = vec![0.0; n];
    for prev in 0..n {
        // q(x_t | x_{t-1}=prev) * q(x_{t-1}=prev | x_0)
        let prior = if t == 1 {
            if prev == x0 {
                1.0
            } else {
                0.0
            }
        } else {
            cumulative(schedule, t - 1, k, false)?.get(x0, prev)
        };
        probs[prev] = qt.get(prev, xt) * prior / denom;
    }
    // guard against accumulated rounding before the 1e-10 sum check
    let sum: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= sum;
    }
    CategoricalDist::new(probs)
}

/// Training-time corruption (absorbing-only path): each token independently
/// becomes the mask state `k` with the cumulative mask probability at step
/// `t`. Input tokens are codebook state indices < k; output uses `k` as the
/// mask marker.
pub fn corrupt<R: Rng>(
    tokens: &[u32],
    schedule: &NoiseSchedule,
    t: usize,
    k: usize,
    rng: &mut R,
) -> Result<Vec<u32>> {
    let p = schedule.cumulative_mask_prob(t)?;
    let mut out = Vec::with_capacity(tokens.len());
    for &tok in tokens {
        if (tok as usize) >= k {
            return Err(Error::InvalidArgument(format!(
                "token {tok} outside codebook range 0..{k}"
            )));
        }
        let u: f64 = rng.gen();
        out.push(if u < p { k as u32 } else { tok });
    }
    Ok(out)
}
