//! Numeric verification of the likelihood / ELBO / simplified-bound chain by
//! exhaustive enumeration over small categorical chains.
//!
//! The forward chain corrupts a length-`seq_len` sequence of codebook states
//! position-independently with the composed per-step transition. The reverse
//! process is parameterized as
//! `p(x_{t-1} | x_t) = sum_{x0} q(x_{t-1} | x_t, x0) p(x0 | x_t)`
//! with the generative prior fixed to the aggregate forward marginal at T.

use ndarray::Array2;

use crate::error::{Error, Result};

use super::schedule::NoiseSchedule;
use super::transition::step_matrix;

/// An arbitrary reverse model: a distribution over joint x_0 sequence states
/// for each joint x_t sequence state. States are base-(k+1) encodings of the
/// per-position symbols, least-significant position first.
pub trait ReverseModel {
    fn predict(&self, xt: usize) -> Vec<f64>;
}

/// Dense table-backed reverse model, the form used by tests and the CLI.
#[derive(Debug, Clone)]
pub struct TableModel {
    pub table: Vec<Vec<f64>>,
}

impl ReverseModel for TableModel {
    fn predict(&self, xt: usize) -> Vec<f64> {
        self.table[xt].clone()
    }
}

/// All three quantities of the bound chain plus the constants of the
/// simplified bound. `c` is the aggregate constant of the final bound and
/// `c1`/`c2` its two intermediate pieces (their sum must equal `c`).
#[derive(Debug, Clone)]
pub struct ElboReport {
    pub exact_loglik: f64,
    pub elbo: f64,
    pub simplified_bound: f64,
    pub c: f64,
    pub c1: f64,
    pub c2: f64,
}

impl ElboReport {
    /// exact >= elbo >= simplified, each gap allowed `tol` slack.
    pub fn inequalities_hold(&self, tol: f64) -> bool {
        self.exact_loglik >= self.elbo - tol && self.elbo >= self.simplified_bound - tol
    }
}

pub fn num_states(k: usize, seq_len: usize) -> usize {
    (k + 1).pow(seq_len as u32)
}

fn digits(state: usize, base: usize, len: usize) -> Vec<usize> {
    let mut s = state;
    (0..len)
        .map(|_| {
            let d = s % base;
            s /= base;
            d
        })
        .collect()
}

fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

fn kl(q: &[f64], p: &[f64]) -> f64 {
    q.iter()
        .zip(p)
        .map(|(&qi, &pi)| if qi == 0.0 { 0.0 } else { qi * (qi / pi).ln() })
        .sum()
}

/// Lift a single-token (k+1)x(k+1) matrix to the joint sequence state space.
fn lift(m: &Array2<f64>, base: usize, len: usize) -> Array2<f64> {
    let s = base.pow(len as u32);
    let mut out = Array2::zeros((s, s));
    for a in 0..s {
        let da = digits(a, base, len);
        for b in 0..s {
            let db = digits(b, base, len);
            let mut p = 1.0;
            for i in 0..len {
                p *= m[[da[i], db[i]]];
                if p == 0.0 {
                    break;
                }
            }
            out[[a, b]] = p;
        }
    }
    out
}

/// A perfect reverse model: the true data posterior q(x_0 | x_T-marginal
/// mixture). For T=1 this makes every KL term vanish and the chain collapse.
pub fn perfect_model(
    schedule: &NoiseSchedule,
    seq_len: usize,
    k: usize,
    data_dist: &[f64],
) -> Result<TableModel> {
    let base = k + 1;
    let s = num_states(k, seq_len);
    // q(x0 | x1) under the one-step forward kernel
    let q1 = lift(
        step_matrix(schedule, 1, k, false)?.entries(),
        base,
        seq_len,
    );
    let mut table = vec![vec![0.0; s]; s];
    for xt in 0..s {
        let mut row: Vec<f64> = (0..s).map(|x0| data_dist[x0] * q1[[x0, xt]]).collect();
        let z: f64 = row.iter().sum();
        if z > 0.0 {
            for r in &mut row {
                *r /= z;
            }
        } else {
            row = vec![1.0 / s as f64; s];
        }
        table[xt] = row;
    }
    Ok(TableModel { table })
}

/// Compute exact log-likelihood, ELBO and simplified bound by enumeration.
///
/// `data_dist` is the data distribution q(x_0) over joint sequence states;
/// it must be supported on mask-free states. The model's per-state output is
/// internally restricted to x_0 states reachable under q(x_t | x_0) at the
/// step in question and renormalized, so the reverse kernel stays stochastic.
pub fn verify_elbo(
    schedule: &NoiseSchedule,
    seq_len: usize,
    k: usize,
    data_dist: &[f64],
    model: &dyn ReverseModel,
) -> Result<ElboReport> {
    let base = k + 1;
    if seq_len == 0 {
        return Err(Error::InvalidArgument("seq_len must be >= 1".into()));
    }
    let s = num_states(k, seq_len);
    let big_t = schedule.steps();
    if s.saturating_mul(big_t) > 1_000_000 {
        return Err(Error::Capacity(format!(
            "state space too large for enumeration: {s} states x {big_t} steps"
        )));
    }
    if data_dist.len() != s {
        return Err(Error::InvalidArgument(format!(
            "data distribution has {} entries, expected {s}",
            data_dist.len()
        )));
    }
    let total: f64 = data_dist.iter().sum();
    if (total - 1.0).abs() > 1e-10 || data_dist.iter().any(|&p| p < 0.0) {
        return Err(Error::InvalidArgument(
            "data distribution must be a probability vector".into(),
        ));
    }
    for x0 in 0..s {
        if data_dist[x0] > 0.0 && digits(x0, base, seq_len).iter().any(|&d| d == k) {
            return Err(Error::InvalidArgument(
                "data distribution puts mass on mask-containing states".into(),
            ));
        }
    }

    // per-step and cumulative joint transition matrices; qbar[0] = identity
    let mut steps = Vec::with_capacity(big_t + 1);
    steps.push(Array2::eye(s)); // unused slot so steps[t] is step t
    for t in 1..=big_t {
        steps.push(lift(
            step_matrix(schedule, t, k, false)?.entries(),
            base,
            seq_len,
        ));
    }
    let mut qbar = Vec::with_capacity(big_t + 1);
    qbar.push(Array2::eye(s));
    for t in 1..=big_t {
        let prev: &Array2<f64> = &qbar[t - 1];
        qbar.push(prev.dot(&steps[t]));
    }

    // forward marginals q_t over joint states
    let mut marg = Vec::with_capacity(big_t + 1);
    marg.push(data_dist.to_vec());
    for t in 1..=big_t {
        let mut v = vec![0.0; s];
        for a in 0..s {
            let pa = marg[t - 1][a];
            if pa == 0.0 {
                continue;
            }
            for b in 0..s {
                v[b] += pa * steps[t][[a, b]];
            }
        }
        marg.push(v);
    }

    // projected model p~_t(x0 | xt): model output restricted to states with
    // q(x_t | x_0) > 0 at step t, renormalized
    let project = |t: usize, xt: usize| -> Vec<f64> {
        let mut row = model.predict(xt);
        assert_eq!(row.len(), s, "model row has wrong length");
        for (x0, r) in row.iter_mut().enumerate() {
            if qbar[t][[x0, xt]] <= 0.0 {
                *r = 0.0;
            }
        }
        let z: f64 = row.iter().sum();
        if z > 0.0 {
            for r in &mut row {
                *r /= z;
            }
        } else {
            row = vec![1.0 / s as f64; s];
        }
        row
    };

    // q(x_{t-1} | x_t, x_0) over previous joint states
    let chain_posterior = |t: usize, xt: usize, x0: usize| -> Option<Vec<f64>> {
        let denom = qbar[t][[x0, xt]];
        if denom <= 0.0 {
            return None;
        }
        let row: Vec<f64> = (0..s)
            .map(|prev| steps[t][[prev, xt]] * qbar[t - 1][[x0, prev]] / denom)
            .collect();
        Some(row)
    };

    // reverse kernels R_t[xt][x_{t-1}] via the mixture parameterization
    let mut reverse = Vec::with_capacity(big_t + 1);
    reverse.push(Array2::zeros((s, s))); // slot 0 unused
    for t in 1..=big_t {
        let mut r: Array2<f64> = Array2::zeros((s, s));
        for xt in 0..s {
            let p_model = project(t, xt);
            for x0 in 0..s {
                if p_model[x0] == 0.0 {
                    continue;
                }
                if let Some(post) = chain_posterior(t, xt, x0) {
                    for prev in 0..s {
                        r[[xt, prev]] += p_model[x0] * post[prev];
                    }
                }
            }
        }
        reverse.push(r);
    }

    // exact log-likelihood: run the reverse chain from p(x_T) = q(x_T)
    let mut v = marg[big_t].clone();
    for t in (1..=big_t).rev() {
        let mut next = vec![0.0; s];
        for xt in 0..s {
            if v[xt] == 0.0 {
                continue;
            }
            for prev in 0..s {
                next[prev] += v[xt] * reverse[t][[xt, prev]];
            }
        }
        v = next;
    }
    let mut exact_loglik = 0.0;
    for x0 in 0..s {
        if data_dist[x0] > 0.0 {
            if v[x0] <= 0.0 {
                exact_loglik = f64::NEG_INFINITY;
                break;
            }
            exact_loglik += data_dist[x0] * v[x0].ln();
        }
    }

    // ELBO with KL terms, prior fixed to q(x_T)
    let prior = &marg[big_t];
    let mut elbo = 0.0;
    for x0 in 0..s {
        let w0 = data_dist[x0];
        if w0 == 0.0 {
            continue;
        }
        let q_xt_given_x0 = |t: usize, xt: usize| qbar[t][[x0, xt]];
        // L_T
        let q_t_row: Vec<f64> = (0..s).map(|xt| q_xt_given_x0(big_t, xt)).collect();
        let mut per_x0 = -kl(&q_t_row, prior);
        // L_0: expected log p(x_0 | x_1) under q(x_1 | x_0)
        for x1 in 0..s {
            let w = q_xt_given_x0(1, x1);
            if w > 0.0 {
                per_x0 += w * reverse[1][[x1, x0]].ln();
            }
        }
        // KL terms for t = 2..T
        for t in 2..=big_t {
            for xt in 0..s {
                let w = q_xt_given_x0(t, xt);
                if w == 0.0 {
                    continue;
                }
                let post = chain_posterior(t, xt, x0).expect("reachable by construction");
                let model_row: Vec<f64> = (0..s).map(|prev| reverse[t][[xt, prev]]).collect();
                per_x0 -= w * kl(&post, &model_row);
            }
        }
        elbo += w0 * per_x0;
    }

    // simplified bound: sum_t E[log p~(x0|xt)] + C
    let mut recon = 0.0;
    for t in 1..=big_t {
        for xt in 0..s {
            let p_model = project(t, xt);
            for x0 in 0..s {
                let w = data_dist[x0] * qbar[t][[x0, xt]];
                if w > 0.0 {
                    recon += w * p_model[x0].ln();
                }
            }
        }
    }
    // C = E[log q(x0) - sum_t log q(x0 | xt)] with q(x0|xt) the data posterior
    let mut c = 0.0;
    for x0 in 0..s {
        c += xlogy(data_dist[x0], data_dist[x0]);
    }
    for t in 1..=big_t {
        for xt in 0..s {
            if marg[t][xt] == 0.0 {
                continue;
            }
            for x0 in 0..s {
                let w = data_dist[x0] * qbar[t][[x0, xt]];
                if w > 0.0 {
                    let q_x0_given_xt = w / marg[t][xt];
                    c -= w * q_x0_given_xt.ln();
                }
            }
        }
    }
    let simplified_bound = recon + c;

    // C1 and C2 per their intermediate definitions
    let mut c1 = 0.0;
    for t in 1..=big_t {
        for a in 0..s {
            let pa = marg[t - 1][a];
            if pa == 0.0 {
                continue;
            }
            for b in 0..s {
                let p = steps[t][[a, b]];
                if p > 0.0 {
                    c1 -= pa * p * p.ln();
                }
            }
        }
    }
    for xt in 0..s {
        c1 += xlogy(marg[big_t][xt], marg[big_t][xt]);
    }
    let mut c2 = 0.0;
    for t in 1..=big_t {
        for a in 0..s {
            let pa = marg[t - 1][a];
            if pa == 0.0 {
                continue;
            }
            for b in 0..s {
                let joint = pa * steps[t][[a, b]];
                if joint == 0.0 {
                    continue;
                }
                // first piece: E[log q(x_{t-1} | x_t)]
                let q_prev_given_t = joint / marg[t][b];
                c2 += joint * q_prev_given_t.ln();
                // second piece: - E_{q(x~0 | x_{t-1}=a)}[log q(x~0 | x_t=b)]
                for x0 in 0..s {
                    let q_x0_prev = data_dist[x0] * qbar[t - 1][[x0, a]] / pa;
                    if q_x0_prev > 0.0 {
                        let q_x0_t = data_dist[x0] * qbar[t][[x0, b]] / marg[t][b];
                        c2 -= joint * q_x0_prev * q_x0_t.ln();
                    }
                }
            }
        }
    }

    Ok(ElboReport {
        exact_loglik,
        elbo,
        simplified_bound,
        c,
        c1,
        c2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::GammaKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_schedule(rng: &mut ChaCha8Rng, t: usize) -> NoiseSchedule {
        let alpha: Vec<f64> = (0..t).map(|_| 0.1 + rng.gen::<f64>() * 0.5).collect();
        let beta: Vec<f64> = alpha
            .iter()
            .map(|a| (1.0 - a) * rng.gen::<f64>() * 0.5)
            .collect();
        NoiseSchedule::new(alpha, beta, GammaKind::Cosine).unwrap()
    }

    fn random_data_dist(rng: &mut ChaCha8Rng, k: usize, seq_len: usize) -> Vec<f64> {
        let base = k + 1;
        let s = num_states(k, seq_len);
        let mut d = vec![0.0; s];
        for (x0, entry) in d.iter_mut().enumerate() {
            let has_mask = super::digits(x0, base, seq_len).iter().any(|&v| v == k);
            if !has_mask {
                *entry = 0.05 + rng.gen::<f64>();
            }
        }
        let z: f64 = d.iter().sum();
        d.iter_mut().for_each(|p| *p /= z);
        d
    }

    fn random_model(rng: &mut ChaCha8Rng, s: usize) -> TableModel {
        let table = (0..s)
            .map(|_| {
                let mut row: Vec<f64> = (0..s).map(|_| 0.05 + rng.gen::<f64>()).collect();
                let z: f64 = row.iter().sum();
                row.iter_mut().for_each(|p| *p /= z);
                row
            })
            .collect();
        TableModel { table }
    }

    #[test]
    fn perfect_model_t1_collapses_gap() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let k = 2;
        let schedule = random_schedule(&mut rng, 1);
        let data = random_data_dist(&mut rng, k, 1);
        let model = perfect_model(&schedule, 1, k, &data).unwrap();
        let rep = verify_elbo(&schedule, 1, k, &data, &model).unwrap();
        assert!(
            (rep.exact_loglik - rep.elbo).abs() < 1e-9,
            "gap {}",
            rep.exact_loglik - rep.elbo
        );
        assert!(rep.inequalities_hold(1e-9));
    }

    #[test]
    fn random_model_inequality_chain() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let k = 2;
        let schedule = random_schedule(&mut rng, 3);
        let data = random_data_dist(&mut rng, k, 1);
        let model = random_model(&mut rng, num_states(k, 1));
        let rep = verify_elbo(&schedule, 1, k, &data, &model).unwrap();
        assert!(
            rep.inequalities_hold(1e-9),
            "exact={} elbo={} simplified={}",
            rep.exact_loglik,
            rep.elbo,
            rep.simplified_bound
        );
        assert!((rep.c1 + rep.c2 - rep.c).abs() < 1e-9, "C1+C2 != C");
    }

    #[test]
    fn inequality_holds_over_twenty_trials_seq_len_2() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let k = 2;
        for trial in 0..20 {
            let schedule = random_schedule(&mut rng, 2);
            let data = random_data_dist(&mut rng, k, 2);
            let model = random_model(&mut rng, num_states(k, 2));
            let rep = verify_elbo(&schedule, 2, k, &data, &model).unwrap();
            assert!(
                rep.inequalities_hold(1e-9),
                "trial {trial}: exact={} elbo={} simplified={}",
                rep.exact_loglik,
                rep.elbo,
                rep.simplified_bound
            );
        }
    }

    #[test]
    fn capacity_guard() {
        let schedule =
            NoiseSchedule::new(vec![0.3; 5], vec![0.0; 5], GammaKind::Cosine).unwrap();
        let err = verify_elbo(&schedule, 12, 8, &[], &TableModel { table: vec![] });
        match err {
            Err(crate::Error::Capacity(_)) => {}
            other => panic!("expected capacity error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_mass_on_mask_states() {
        let schedule = NoiseSchedule::new(vec![0.3], vec![0.0], GammaKind::Cosine).unwrap();
        let mut data = vec![0.0; 3];
        data[2] = 1.0; // the mask state
        let model = TableModel {
            table: vec![vec![1.0 / 3.0; 3]; 3],
        };
        assert!(verify_elbo(&schedule, 1, 2, &data, &model).is_err());
    }
}
