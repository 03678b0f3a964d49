use rand::Rng;

use crate::diffusion::{gamma, GammaKind};
use crate::error::{Error, Result};
use crate::sequence::{build_t2i_sequence, Role, UnifiedSequence};
use crate::tokenizer::{Special, Vocabulary};

/// Corrupt every image span of a clean sequence for one training step.
///
/// A masking level `r` is drawn from `(0, 1]`, the mask count is
/// `max(1, ceil(gamma(r) * span_len))`, and that many positions are chosen
/// uniformly without replacement. Masked positions get `[MASK]` in `ids`,
/// keep their original token in `targets`, and are flagged for the loss.
pub fn apply_training_mask<R: Rng>(
    seq: &UnifiedSequence,
    rng: &mut R,
    gamma_kind: GammaKind,
    vocab: &Vocabulary,
) -> Result<UnifiedSequence> {
    let mut out = seq.clone();
    for span in seq.image_spans() {
        for p in span.start..span.end() {
            if seq.ids[p] == vocab.mask_id() {
                return Err(Error::InvalidArgument(format!(
                    "image position {p} already masked; training masks need a clean sequence"
                )));
            }
        }
        // 1 - U[0,1) lands in (0, 1] so the fully-masked endpoint is reachable
        let r = 1.0 - rng.gen::<f64>();
        let level = gamma(gamma_kind, r)?;
        let n = ((level * span.len as f64).ceil() as usize).clamp(1, span.len);
        let picks = rand::seq::index::sample(rng, span.len, n);
        for off in picks.iter() {
            let p = span.start + off;
            out.ids[p] = vocab.mask_id();
            out.loss_mask[p] = true;
            // targets already hold the original token
        }
    }
    Ok(out)
}

/// Classifier-free-guidance condition dropout: rebuild a text-to-image
/// sequence with null (empty) text, preserving the image span, its masks and
/// its recorded targets. Only t2i sequences have a droppable condition.
pub fn cfg_dropout(seq: &UnifiedSequence, vocab: &Vocabulary) -> Result<UnifiedSequence> {
    if seq.ids.first() != Some(&vocab.special_id(Special::T2i)) {
        return Err(Error::InvalidArgument(
            "condition dropout applies only to text-to-image sequences".into(),
        ));
    }
    let spans = seq.image_spans();
    if spans.len() != 1 {
        return Err(Error::InvalidArgument(format!(
            "expected one image span, found {}",
            spans.len()
        )));
    }
    let span = spans[0];
    let image: Vec<u32> = seq.ids[span.start..span.end()].to_vec();
    let mut out = build_t2i_sequence(&[], &image, vocab, span.len)?;
    // the image span moved left by the dropped text length
    let new_span = out.image_spans()[0];
    for off in 0..span.len {
        out.targets[new_span.start + off] = seq.targets[span.start + off];
    }
    debug_assert!(out.roles.iter().all(|&r| r != Role::Text));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn vocab() -> Vocabulary {
        Vocabulary::default_with_image_size(16).unwrap()
    }

    fn image_ids(v: &Vocabulary, m: usize) -> Vec<u32> {
        (0..m as u32).map(|i| v.image_id(i % 16).unwrap()).collect()
    }

    #[test]
    fn mask_count_bounds_and_targets() {
        let v = vocab();
        let text = v.encode_text("cat").unwrap();
        let clean = build_t2i_sequence(&text, &image_ids(&v, 16), &v, 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let m = apply_training_mask(&clean, &mut rng, GammaKind::Cosine, &v).unwrap();
            let span = m.image_spans()[0];
            let masked: Vec<usize> = (span.start..span.end())
                .filter(|&p| m.ids[p] == v.mask_id())
                .collect();
            assert!((1..=16).contains(&masked.len()));
            for p in span.start..span.end() {
                assert_eq!(m.loss_mask[p], m.ids[p] == v.mask_id());
                assert_eq!(m.targets[p], clean.ids[p], "original preserved");
            }
            m.validate(&v).unwrap();
        }
    }

    #[test]
    fn masking_level_distribution_tracks_gamma() {
        // E[ceil(gamma(r) * 16)] under cosine gamma, r ~ U(0,1]:
        // integral of cos(pi r / 2) is 2/pi ~ 0.6366, so the mean masked
        // fraction should sit near that (ceil biases it slightly up).
        let v = vocab();
        let clean = build_t2i_sequence(&[], &image_ids(&v, 16), &v, 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let trials = 4000;
        let mut total = 0usize;
        for _ in 0..trials {
            let m = apply_training_mask(&clean, &mut rng, GammaKind::Cosine, &v).unwrap();
            total += m.loss_mask.iter().filter(|&&b| b).count();
        }
        let frac = total as f64 / (trials as f64 * 16.0);
        assert!(
            (frac - 2.0 / std::f64::consts::PI).abs() < 0.04,
            "mean masked fraction {frac}"
        );
    }

    #[test]
    fn rejects_already_masked_input() {
        let v = vocab();
        let mut img = image_ids(&v, 16);
        img[0] = v.mask_id();
        let seq = build_t2i_sequence(&[], &img, &v, 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        assert!(apply_training_mask(&seq, &mut rng, GammaKind::Cosine, &v).is_err());
    }

    #[test]
    fn deterministic_under_seed() {
        let v = vocab();
        let clean = build_t2i_sequence(&[], &image_ids(&v, 16), &v, 16).unwrap();
        let a = apply_training_mask(
            &clean,
            &mut ChaCha8Rng::seed_from_u64(14),
            GammaKind::Cosine,
            &v,
        )
        .unwrap();
        let b = apply_training_mask(
            &clean,
            &mut ChaCha8Rng::seed_from_u64(14),
            GammaKind::Cosine,
            &v,
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dropout_preserves_image_and_masks() {
        let v = vocab();
        let text = v.encode_text("blue dog").unwrap();
        let clean = build_t2i_sequence(&text, &image_ids(&v, 16), &v, 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let masked = apply_training_mask(&clean, &mut rng, GammaKind::Cosine, &v).unwrap();
        let dropped = cfg_dropout(&masked, &v).unwrap();
        let old = masked.image_spans()[0];
        let new = dropped.image_spans()[0];
        assert_eq!(old.len, new.len);
        assert!(dropped.text_spans().is_empty());
        for off in 0..old.len {
            assert_eq!(dropped.ids[new.start + off], masked.ids[old.start + off]);
            assert_eq!(dropped.targets[new.start + off], masked.targets[old.start + off]);
            assert_eq!(
                dropped.loss_mask[new.start + off],
                masked.loss_mask[old.start + off]
            );
        }
        dropped.validate(&v).unwrap();
    }

    #[test]
    fn dropout_rejects_non_t2i() {
        let v = vocab();
        let seq = crate::sequence::build_mmu_sequence(
            &image_ids(&v, 4),
            &[],
            &v.encode_text("a").unwrap(),
            &v,
            4,
        )
        .unwrap();
        assert!(cfg_dropout(&seq, &v).is_err());
    }
}
