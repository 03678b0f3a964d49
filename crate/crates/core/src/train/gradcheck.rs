use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::Result;
use crate::model::{backward, forward_cached, ModelConfig, ModelParams};
use crate::sequence::{build_omni_mask, UnifiedSequence};
use crate::tokenizer::Vocabulary;

use super::loss::batch_loss_and_grads;

/// One checked coordinate: analytic vs central-difference gradient.
#[derive(Debug, Clone)]
pub struct CoordCheck {
    pub name: String,
    pub flat_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

/// Outcome of a finite-difference sweep over random parameter coordinates.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_err: f64,
    pub worst: Option<CoordCheck>,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err <= tol
    }
}

fn loss_of(
    params: &ModelParams,
    cfg: &ModelConfig,
    seqs: &[UnifiedSequence],
    alpha_ntp: f64,
    vocab: &Vocabulary,
    full_vocab: bool,
) -> Result<f64> {
    let mut logits = Vec::with_capacity(seqs.len());
    for seq in seqs {
        let mask = build_omni_mask(seq);
        let (lg, _) = forward_cached(params, cfg, &seq.ids, &mask)?;
        logits.push(lg);
    }
    let (report, _) = batch_loss_and_grads(&logits, seqs, alpha_ntp, vocab, full_vocab)?;
    Ok(report.total)
}

/// Compare the analytic gradient of the combined loss with central
/// differences (`eps = 1e-4`) at `num_coords` random flat coordinates.
/// Relative error uses `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn grad_check<R: Rng>(
    params: &ModelParams,
    cfg: &ModelConfig,
    seqs: &[UnifiedSequence],
    alpha_ntp: f64,
    vocab: &Vocabulary,
    full_vocab: bool,
    num_coords: usize,
    rng: &mut R,
) -> Result<GradCheckReport> {
    // analytic gradient accumulated over the batch
    let mut grads = params.zeros_like();
    let mut logits = Vec::with_capacity(seqs.len());
    let mut caches = Vec::with_capacity(seqs.len());
    let mut masks = Vec::with_capacity(seqs.len());
    for seq in seqs {
        let mask = build_omni_mask(seq);
        let (lg, cache) = forward_cached(params, cfg, &seq.ids, &mask)?;
        logits.push(lg);
        caches.push(cache);
        masks.push(mask);
    }
    let (_, dlogits) = batch_loss_and_grads(&logits, seqs, alpha_ntp, vocab, full_vocab)?;
    for i in 0..seqs.len() {
        backward(params, cfg, &caches[i], &masks[i], &dlogits[i], &mut grads);
    }
    let analytic = grads.flat();

    // coordinate names for diagnostics
    let mut names = Vec::with_capacity(analytic.len());
    for (name, t) in params.visit() {
        for i in 0..t.len() {
            names.push((name.clone(), i));
        }
    }

    let mut coords: Vec<usize> = (0..analytic.len()).collect();
    coords.shuffle(rng);
    coords.truncate(num_coords);

    let eps = 1e-4;
    let mut flat = params.flat();
    let mut probe = params.clone();
    let mut max_rel = 0.0;
    let mut worst = None;
    for &c in &coords {
        let orig = flat[c];
        flat[c] = orig + eps;
        probe.set_flat(&flat);
        let up = loss_of(&probe, cfg, seqs, alpha_ntp, vocab, full_vocab)?;
        flat[c] = orig - eps;
        probe.set_flat(&flat);
        let down = loss_of(&probe, cfg, seqs, alpha_ntp, vocab, full_vocab)?;
        flat[c] = orig;
        let numeric = (up - down) / (2.0 * eps);
        let a = analytic[c];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        if rel > max_rel {
            max_rel = rel;
            let (ref tensor, offset) = names[c];
            worst = Some(CoordCheck {
                name: format!("{tensor}[{offset}]"),
                flat_index: c,
                analytic: a,
                numeric,
                rel_err: rel,
            });
        }
    }
    Ok(GradCheckReport {
        checked: coords.len(),
        max_rel_err: max_rel,
        worst,
    })
}
