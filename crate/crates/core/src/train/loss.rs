use ndarray::Array2;

use crate::error::{Error, Result};
use crate::sequence::{Role, UnifiedSequence};
use crate::tokenizer::Vocabulary;

/// Scalar losses plus the supervised-position counts behind them.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub ntp: f64,
    pub mtp: f64,
    pub total: f64,
    pub text_count: usize,
    pub image_count: usize,
}

fn log_softmax_at(row: &[f64], target: usize) -> f64 {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = row.iter().map(|&v| (v - max).exp()).sum();
    row[target] - max - z.ln()
}

/// Supervised text targets: positions with the loss flag whose role is
/// text-like (text or special, e.g. a closing `[EOT]`). The prediction for
/// position `p` comes from the logits at `p - 1` (teacher forcing).
fn ntp_targets(seq: &UnifiedSequence) -> Vec<usize> {
    (0..seq.len())
        .filter(|&p| seq.loss_mask[p] && matches!(seq.roles[p], Role::Text | Role::Special))
        .collect()
}

/// Supervised image targets: masked image positions, predicted in place.
fn mtp_targets(seq: &UnifiedSequence, vocab: &Vocabulary) -> Vec<usize> {
    (0..seq.len())
        .filter(|&p| {
            seq.loss_mask[p] && seq.roles[p] == Role::Image && seq.ids[p] == vocab.mask_id()
        })
        .collect()
}

/// Sum of negative log-likelihoods over supervised text positions plus the
/// count; zero supervised positions yields (0, 0).
pub fn ntp_loss_parts(logits: &Array2<f64>, seq: &UnifiedSequence) -> Result<(f64, usize)> {
    let mut sum = 0.0;
    let targets = ntp_targets(seq);
    for &p in &targets {
        if p == 0 {
            return Err(Error::InvalidArgument(
                "supervised text target at position 0 has no predecessor".into(),
            ));
        }
        let row: Vec<f64> = logits.row(p - 1).to_vec();
        sum -= log_softmax_at(&row, seq.ids[p] as usize);
    }
    Ok((sum, targets.len()))
}

/// Mean NTP loss for a single sequence.
pub fn ntp_loss(logits: &Array2<f64>, seq: &UnifiedSequence) -> Result<f64> {
    let (sum, count) = ntp_loss_parts(logits, seq)?;
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}

/// Sum of negative log-likelihoods of the original tokens at masked image
/// positions. By default the softmax normalizer is restricted to the
/// image-id range (masked positions can only hold image tokens);
/// `full_vocab` switches to the full-vocabulary softmax for ablation.
pub fn mtp_loss_parts(
    logits: &Array2<f64>,
    seq: &UnifiedSequence,
    vocab: &Vocabulary,
    full_vocab: bool,
) -> Result<(f64, usize)> {
    let base = vocab.image_base();
    let k = vocab.image_size();
    let mut sum = 0.0;
    let targets = mtp_targets(seq, vocab);
    for &p in &targets {
        let target = seq.targets[p];
        if !vocab.is_image(target) {
            return Err(Error::InvalidArgument(format!(
                "masked position {p} has non-image target {target}"
            )));
        }
        let row = logits.row(p);
        if full_vocab {
            let row: Vec<f64> = row.to_vec();
            sum -= log_softmax_at(&row, target as usize);
        } else {
            let row: Vec<f64> = row.iter().skip(base).take(k).cloned().collect();
            sum -= log_softmax_at(&row, target as usize - base);
        }
    }
    Ok((sum, targets.len()))
}

/// Mean MTP loss for a single sequence.
pub fn mtp_loss(
    logits: &Array2<f64>,
    seq: &UnifiedSequence,
    vocab: &Vocabulary,
    full_vocab: bool,
) -> Result<f64> {
    let (sum, count) = mtp_loss_parts(logits, seq, vocab, full_vocab)?;
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}

/// Combined loss for one sequence: `total = mtp + alpha * ntp`, both parts
/// mean-reduced over their own supervised positions.
pub fn combined_loss(
    logits: &Array2<f64>,
    seq: &UnifiedSequence,
    alpha_ntp: f64,
    vocab: &Vocabulary,
    full_vocab: bool,
) -> Result<LossReport> {
    let (ntp_sum, text_count) = ntp_loss_parts(logits, seq)?;
    let (mtp_sum, image_count) = mtp_loss_parts(logits, seq, vocab, full_vocab)?;
    let ntp = if text_count == 0 { 0.0 } else { ntp_sum / text_count as f64 };
    let mtp = if image_count == 0 { 0.0 } else { mtp_sum / image_count as f64 };
    Ok(LossReport {
        ntp,
        mtp,
        total: mtp + alpha_ntp * ntp,
        text_count,
        image_count,
    })
}

fn softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = row.iter().map(|&v| (v - max).exp()).collect();
    let z: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= z);
    out
}

/// Batch-level loss with matching logit gradients. Both losses are
/// mean-reduced over the batch-wide supervised counts; the returned
/// per-sequence gradients use exactly those normalizers so the analytic
/// gradient matches the reported `total`.
pub fn batch_loss_and_grads(
    logits: &[Array2<f64>],
    seqs: &[UnifiedSequence],
    alpha_ntp: f64,
    vocab: &Vocabulary,
    full_vocab: bool,
) -> Result<(LossReport, Vec<Array2<f64>>)> {
    assert_eq!(logits.len(), seqs.len());
    let mut ntp_sum = 0.0;
    let mut mtp_sum = 0.0;
    let mut text_count = 0usize;
    let mut image_count = 0usize;
    for (lg, seq) in logits.iter().zip(seqs) {
        let (ns, nc) = ntp_loss_parts(lg, seq)?;
        let (ms, mc) = mtp_loss_parts(lg, seq, vocab, full_vocab)?;
        ntp_sum += ns;
        mtp_sum += ms;
        text_count += nc;
        image_count += mc;
    }
    let ntp = if text_count == 0 { 0.0 } else { ntp_sum / text_count as f64 };
    let mtp = if image_count == 0 { 0.0 } else { mtp_sum / image_count as f64 };
    let report = LossReport {
        ntp,
        mtp,
        total: mtp + alpha_ntp * ntp,
        text_count,
        image_count,
    };

    let ntp_scale = if text_count == 0 { 0.0 } else { alpha_ntp / text_count as f64 };
    let mtp_scale = if image_count == 0 { 0.0 } else { 1.0 / image_count as f64 };
    let base = vocab.image_base();
    let k = vocab.image_size();
    let mut grads = Vec::with_capacity(logits.len());
    for (lg, seq) in logits.iter().zip(seqs) {
        let mut d = Array2::zeros(lg.dim());
        for &p in &ntp_targets(seq) {
            let probs = softmax(&lg.row(p - 1).to_vec());
            for (c, &pr) in probs.iter().enumerate() {
                d[[p - 1, c]] += ntp_scale * pr;
            }
            d[[p - 1, seq.ids[p] as usize]] -= ntp_scale;
        }
        for &p in &mtp_targets(seq, vocab) {
            let target = seq.targets[p] as usize;
            if full_vocab {
                let probs = softmax(&lg.row(p).to_vec());
                for (c, &pr) in probs.iter().enumerate() {
                    d[[p, c]] += mtp_scale * pr;
                }
                d[[p, target]] -= mtp_scale;
            } else {
                let row: Vec<f64> = lg.row(p).iter().skip(base).take(k).cloned().collect();
                let probs = softmax(&row);
                for (c, &pr) in probs.iter().enumerate() {
                    d[[p, base + c]] += mtp_scale * pr;
                }
                d[[p, target]] -= mtp_scale;
            }
        }
        grads.push(d);
    }
    Ok((report, grads))
}
