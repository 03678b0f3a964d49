//! Unified prompt sequences and the omni-attention visibility mask.
//!
//! Layouts:
//! - t2i:   `[T2I][SOT] text [EOT][SOI] image [EOI]`
//! - mmu:   `[MMU][SOI] image [EOI][SOT] question answer [EOT]`
//! - mixed: one task token, then alternating delimited text / image chunks
//!
//! The attention rule set: every position sees all of every earlier segment,
//! text-like spans are causal within themselves, image spans are full, no
//! position sees a later segment, and pad positions see only themselves.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::tokenizer::{Special, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Task,
    Text,
    Image,
    Special,
    Pad,
}

impl Role {
    pub fn letter(self) -> char {
        match self {
            Role::Task => 'k',
            Role::Text => 't',
            Role::Image => 'i',
            Role::Special => 's',
            Role::Pad => 'p',
        }
    }
}

/// A maximal run of positions sharing one role.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub role: Role,
    pub start: usize,
    pub len: usize,
}

impl Segment {
    pub fn end(&self) -> usize {
        self.start + self.len
    }
}

/// Token ids plus per-position roles, supervision flags and the original
/// tokens at masked positions; the single input/output currency.
#[derive(Debug, Clone, PartialEq)]
pub struct UnifiedSequence {
    pub ids: Vec<u32>,
    pub roles: Vec<Role>,
    pub loss_mask: Vec<bool>,
    /// Original token per position; differs from `ids` only where a
    /// training mask replaced an image token.
    pub targets: Vec<u32>,
}

impl UnifiedSequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Maximal role runs, partitioning `[0, len)`.
    pub fn segments(&self) -> Vec<Segment> {
        let mut out = Vec::new();
        let mut start = 0;
        for i in 1..=self.roles.len() {
            if i == self.roles.len() || self.roles[i] != self.roles[start] {
                out.push(Segment {
                    role: self.roles[start],
                    start,
                    len: i - start,
                });
                start = i;
            }
        }
        out
    }

    /// Per-position index into `segments()`.
    pub fn segment_index(&self) -> Vec<usize> {
        let mut out = vec![0; self.len()];
        for (si, seg) in self.segments().iter().enumerate() {
            for p in seg.start..seg.end() {
                out[p] = si;
            }
        }
        out
    }

    /// Spans of image segments in order.
    pub fn image_spans(&self) -> Vec<Segment> {
        self.segments()
            .into_iter()
            .filter(|s| s.role == Role::Image)
            .collect()
    }

    /// Spans of text segments in order.
    pub fn text_spans(&self) -> Vec<Segment> {
        self.segments()
            .into_iter()
            .filter(|s| s.role == Role::Text)
            .collect()
    }

    /// Check role/id-range consistency and supervision invariants.
    pub fn validate(&self, vocab: &Vocabulary) -> Result<()> {
        let n = self.len();
        if self.roles.len() != n || self.loss_mask.len() != n || self.targets.len() != n {
            return Err(Error::InvalidArgument(
                "sequence field lengths disagree".into(),
            ));
        }
        for p in 0..n {
            let id = self.ids[p];
            let ok = match self.roles[p] {
                Role::Text => vocab.is_text(id),
                Role::Image => vocab.is_image(id) || id == vocab.mask_id(),
                Role::Task | Role::Special => vocab.is_special(id),
                Role::Pad => id == vocab.pad_id(),
            };
            if !ok {
                return Err(Error::InvalidArgument(format!(
                    "id {id} at position {p} inconsistent with role {:?}",
                    self.roles[p]
                )));
            }
            if self.loss_mask[p] && matches!(self.roles[p], Role::Pad | Role::Task) {
                return Err(Error::InvalidArgument(format!(
                    "supervised pad/task position {p}"
                )));
            }
        }
        Ok(())
    }

    /// Extend with `[PAD]` up to `target_len`.
    pub fn pad_to(&mut self, target_len: usize, vocab: &Vocabulary) -> Result<()> {
        if target_len < self.len() {
            return Err(Error::InvalidArgument(format!(
                "cannot pad length {} down to {target_len}",
                self.len()
            )));
        }
        while self.len() < target_len {
            self.ids.push(vocab.pad_id());
            self.roles.push(Role::Pad);
            self.loss_mask.push(false);
            self.targets.push(vocab.pad_id());
        }
        Ok(())
    }
}

fn push(seq: &mut UnifiedSequence, id: u32, role: Role, supervised: bool) {
    seq.ids.push(id);
    seq.roles.push(role);
    seq.loss_mask.push(supervised);
    seq.targets.push(id);
}

fn empty() -> UnifiedSequence {
    UnifiedSequence {
        ids: Vec::new(),
        roles: Vec::new(),
        loss_mask: Vec::new(),
        targets: Vec::new(),
    }
}

fn check_text_ids(text_ids: &[u32], vocab: &Vocabulary) -> Result<()> {
    for &id in text_ids {
        if !vocab.is_text(id) {
            return Err(Error::InvalidArgument(format!(
                "non-text id {id} in text span"
            )));
        }
    }
    Ok(())
}

/// Text-to-image layout. `image_tokens` are unified ids: image-range ids or
/// `[MASK]`; supervision lands exactly on the masked image positions.
/// Passing empty `text_ids` yields the CFG null-text sequence.
pub fn build_t2i_sequence(
    text_ids: &[u32],
    image_tokens: &[u32],
    vocab: &Vocabulary,
    expected_m: usize,
) -> Result<UnifiedSequence> {
    if image_tokens.len() != expected_m {
        return Err(Error::InvalidArgument(format!(
            "image segment has {} tokens, expected {expected_m}",
            image_tokens.len()
        )));
    }
    check_text_ids(text_ids, vocab)?;
    let mut seq = empty();
    push(&mut seq, vocab.special_id(Special::T2i), Role::Task, false);
    push(&mut seq, vocab.special_id(Special::Sot), Role::Special, false);
    for &id in text_ids {
        push(&mut seq, id, Role::Text, false);
    }
    push(&mut seq, vocab.special_id(Special::Eot), Role::Special, false);
    push(&mut seq, vocab.special_id(Special::Soi), Role::Special, false);
    for &id in image_tokens {
        if !(vocab.is_image(id) || id == vocab.mask_id()) {
            return Err(Error::InvalidArgument(format!(
                "id {id} is neither an image token nor [MASK]"
            )));
        }
        push(&mut seq, id, Role::Image, id == vocab.mask_id());
    }
    push(&mut seq, vocab.special_id(Special::Eoi), Role::Special, false);
    Ok(seq)
}

/// Multimodal-understanding layout; supervision covers the answer tokens and
/// the closing `[EOT]`. The image segment must be mask-free.
pub fn build_mmu_sequence(
    image_tokens: &[u32],
    question_ids: &[u32],
    answer_ids: &[u32],
    vocab: &Vocabulary,
    expected_m: usize,
) -> Result<UnifiedSequence> {
    if image_tokens.len() != expected_m {
        return Err(Error::InvalidArgument(format!(
            "image segment has {} tokens, expected {expected_m}",
            image_tokens.len()
        )));
    }
    check_text_ids(question_ids, vocab)?;
    check_text_ids(answer_ids, vocab)?;
    let mut seq = empty();
    push(&mut seq, vocab.special_id(Special::Mmu), Role::Task, false);
    push(&mut seq, vocab.special_id(Special::Soi), Role::Special, false);
    for &id in image_tokens {
        if id == vocab.mask_id() {
            return Err(Error::InvalidArgument(
                "mmu image segment must not contain [MASK]".into(),
            ));
        }
        if !vocab.is_image(id) {
            return Err(Error::InvalidArgument(format!(
                "id {id} is not an image token"
            )));
        }
        push(&mut seq, id, Role::Image, false);
    }
    push(&mut seq, vocab.special_id(Special::Eoi), Role::Special, false);
    push(&mut seq, vocab.special_id(Special::Sot), Role::Special, false);
    for &id in question_ids {
        push(&mut seq, id, Role::Text, false);
    }
    for &id in answer_ids {
        push(&mut seq, id, Role::Text, true);
    }
    push(&mut seq, vocab.special_id(Special::Eot), Role::Special, true);
    Ok(seq)
}

/// One chunk of a mixed-modality sequence.
#[derive(Debug, Clone, PartialEq)]
pub enum Chunk {
    Text(Vec<u32>),
    Image(Vec<u32>),
}

/// Interleaved layout: a single `[MMU]` task token, then each chunk wrapped
/// in its delimiters. Text chunks are NTP-supervised (tokens plus closing
/// `[EOT]`); image chunks are MTP-supervised on their masked positions.
pub fn build_mixed_sequence(
    chunks: &[Chunk],
    vocab: &Vocabulary,
    expected_m: usize,
) -> Result<UnifiedSequence> {
    if chunks.is_empty() {
        return Err(Error::InvalidArgument("mixed sequence needs >= 1 chunk".into()));
    }
    let mut seq = empty();
    push(&mut seq, vocab.special_id(Special::Mmu), Role::Task, false);
    for chunk in chunks {
        match chunk {
            Chunk::Text(ids) => {
                check_text_ids(ids, vocab)?;
                push(&mut seq, vocab.special_id(Special::Sot), Role::Special, false);
                for &id in ids {
                    push(&mut seq, id, Role::Text, true);
                }
                push(&mut seq, vocab.special_id(Special::Eot), Role::Special, true);
            }
            Chunk::Image(tokens) => {
                if tokens.len() != expected_m {
                    return Err(Error::InvalidArgument(format!(
                        "image chunk has {} tokens, expected {expected_m}",
                        tokens.len()
                    )));
                }
                push(&mut seq, vocab.special_id(Special::Soi), Role::Special, false);
                for &id in tokens {
                    if !(vocab.is_image(id) || id == vocab.mask_id()) {
                        return Err(Error::InvalidArgument(format!(
                            "id {id} is neither an image token nor [MASK]"
                        )));
                    }
                    push(&mut seq, id, Role::Image, id == vocab.mask_id());
                }
                push(&mut seq, vocab.special_id(Special::Eoi), Role::Special, false);
            }
        }
    }
    Ok(seq)
}

/// Boolean visibility matrix; row = query position, column = key position.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMask {
    pub allow: Array2<bool>,
}

impl AttentionMask {
    pub fn len(&self) -> usize {
        self.allow.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.allow.nrows() == 0
    }

    pub fn allowed(&self, i: usize, j: usize) -> bool {
        self.allow[[i, j]]
    }

    /// Textual 0/1 grid, one row per line.
    pub fn to_grid_string(&self) -> String {
        let mut s = String::new();
        for i in 0..self.len() {
            for j in 0..self.len() {
                s.push(if self.allow[[i, j]] { '1' } else { '0' });
            }
            s.push('\n');
        }
        s
    }
}

/// Build the omni-attention mask for a sequence.
pub fn build_omni_mask(seq: &UnifiedSequence) -> AttentionMask {
    build_omni_mask_opts(seq, false)
}

/// `within_image_causal` turns image spans causal for the AR-vs-diffusion
/// ablation; off by default.
pub fn build_omni_mask_opts(seq: &UnifiedSequence, within_image_causal: bool) -> AttentionMask {
    let n = seq.len();
    let segs = seq.segments();
    let seg_of = seq.segment_index();
    let mut allow = Array2::from_elem((n, n), false);
    for i in 0..n {
        for j in 0..n {
            let (si, sj) = (seg_of[i], seg_of[j]);
            let v = if seq.roles[i] == Role::Pad || seq.roles[j] == Role::Pad {
                i == j
            } else if sj < si {
                true
            } else if sj == si {
                if segs[si].role == Role::Image && !within_image_causal {
                    true
                } else {
                    j <= i
                }
            } else {
                false
            };
            allow[[i, j]] = v;
        }
    }
    AttentionMask { allow }
}

/// Strict causal mask (j <= i) for reference and text-only checks.
pub fn causal_mask(n: usize) -> AttentionMask {
    let mut allow = Array2::from_elem((n, n), false);
    for i in 0..n {
        for j in 0..=i {
            allow[[i, j]] = true;
        }
    }
    AttentionMask { allow }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::Vocabulary;
    use proptest::prelude::*;

    fn vocab() -> Vocabulary {
        Vocabulary::default_with_image_size(16).unwrap()
    }

    fn image_ids(v: &Vocabulary, m: usize) -> Vec<u32> {
        (0..m as u32).map(|i| v.image_id(i % 16).unwrap()).collect()
    }

    #[test]
    fn t2i_layout_and_null_text() {
        let v = vocab();
        let m = 16;
        let masks = vec![v.mask_id(); m];
        let s = build_t2i_sequence(&[], &masks, &v, m).unwrap();
        assert_eq!(s.len(), m + 5);
        assert_eq!(s.ids[0], v.special_id(Special::T2i));
        assert_eq!(s.ids[1], v.special_id(Special::Sot));
        assert_eq!(s.ids[2], v.special_id(Special::Eot));
        assert_eq!(s.ids[3], v.special_id(Special::Soi));
        assert_eq!(*s.ids.last().unwrap(), v.special_id(Special::Eoi));
        assert_eq!(s.loss_mask.iter().filter(|&&b| b).count(), m);
        s.validate(&v).unwrap();

        let text = v.encode_text("abc").unwrap();
        let s = build_t2i_sequence(&text, &image_ids(&v, m), &v, m).unwrap();
        assert_eq!(s.len(), 3 + 16 + 5);
        assert!(s.loss_mask.iter().all(|&b| !b)); // no masks, no supervision
        s.validate(&v).unwrap();

        assert!(build_t2i_sequence(&text, &image_ids(&v, 15), &v, m).is_err());
    }

    #[test]
    fn t2i_segment_round_trip() {
        let v = vocab();
        let text = v.encode_text("red cat").unwrap();
        let img = image_ids(&v, 16);
        let s = build_t2i_sequence(&text, &img, &v, 16).unwrap();
        let texts = s.text_spans();
        let images = s.image_spans();
        assert_eq!(texts.len(), 1);
        assert_eq!(images.len(), 1);
        assert_eq!(&s.ids[texts[0].start..texts[0].end()], &text[..]);
        assert_eq!(&s.ids[images[0].start..images[0].end()], &img[..]);
    }

    #[test]
    fn mmu_layout_and_supervision() {
        let v = vocab();
        let img = image_ids(&v, 16);
        let s = build_mmu_sequence(&img, &[], &[], &v, 16).unwrap();
        // only the closing [EOT] is supervised
        assert_eq!(s.loss_mask.iter().filter(|&&b| b).count(), 1);
        assert!(s.loss_mask[s.len() - 1]);
        s.validate(&v).unwrap();

        let q = v.encode_text("abcd").unwrap();
        let a = v.encode_text("efghij").unwrap();
        let s = build_mmu_sequence(&img, &q, &a, &v, 16).unwrap();
        assert_eq!(s.loss_mask.iter().filter(|&&b| b).count(), 7);
        s.validate(&v).unwrap();

        let mut masked = img.clone();
        masked[3] = v.mask_id();
        assert!(build_mmu_sequence(&masked, &q, &a, &v, 16).is_err());
    }

    #[test]
    fn mixed_layouts() {
        let v = vocab();
        let t1 = v.encode_text("ab").unwrap();
        let s = build_mixed_sequence(&[Chunk::Text(t1.clone())], &v, 4).unwrap();
        // [MMU][SOT] a b [EOT]
        assert_eq!(s.len(), 5);
        assert!(s.text_spans().len() == 1 && s.image_spans().is_empty());

        let img = image_ids(&v, 4);
        let s = build_mixed_sequence(
            &[
                Chunk::Text(t1.clone()),
                Chunk::Image(img.clone()),
                Chunk::Text(t1.clone()),
                Chunk::Image(img.clone()),
            ],
            &v,
            4,
        )
        .unwrap();
        assert_eq!(s.text_spans().len(), 2);
        assert_eq!(s.image_spans().len(), 2);
        s.validate(&v).unwrap();
        // extraction round-trip
        for span in s.image_spans() {
            assert_eq!(&s.ids[span.start..span.end()], &img[..]);
        }
        for span in s.text_spans() {
            assert_eq!(&s.ids[span.start..span.end()], &t1[..]);
        }
    }

    #[test]
    fn text_only_mask_is_strict_causal() {
        let v = vocab();
        let t = v.encode_text("hello world").unwrap();
        let s = build_mixed_sequence(&[Chunk::Text(t)], &v, 4).unwrap();
        let mask = build_omni_mask(&s);
        assert_eq!(mask, causal_mask(s.len()));
    }

    #[test]
    fn t2i_mask_image_rows_full() {
        let v = vocab();
        let text = v.encode_text("abc").unwrap();
        let s = build_t2i_sequence(&text, &vec![v.mask_id(); 4], &v, 4).unwrap();
        let mask = build_omni_mask(&s);
        let img = s.image_spans()[0];
        for i in img.start..img.end() {
            // all text-prefix columns and all image columns visible
            for j in 0..img.end() {
                assert!(mask.allowed(i, j), "image row {i} cannot see {j}");
            }
            // trailing [EOI] not visible
            assert!(!mask.allowed(i, s.len() - 1));
        }
    }

    #[test]
    fn mmu_mask_text_sees_whole_image() {
        let v = vocab();
        let q = v.encode_text("ab").unwrap();
        let a = v.encode_text("cd").unwrap();
        let s = build_mmu_sequence(&image_ids(&v, 4), &q, &a, &v, 4).unwrap();
        let mask = build_omni_mask(&s);
        let img = s.image_spans()[0];
        let txt = s.text_spans()[0];
        for i in txt.start..txt.end() {
            for j in img.start..img.end() {
                assert!(mask.allowed(i, j));
            }
            for j in txt.start..txt.end() {
                assert_eq!(mask.allowed(i, j), j <= i, "within-text causality");
            }
        }
    }

    #[test]
    fn within_image_causal_option() {
        let v = vocab();
        let s = build_t2i_sequence(&[], &vec![v.mask_id(); 4], &v, 4).unwrap();
        let mask = build_omni_mask_opts(&s, true);
        let img = s.image_spans()[0];
        for i in img.start..img.end() {
            for j in img.start..img.end() {
                assert_eq!(mask.allowed(i, j), j <= i);
            }
        }
    }

    #[test]
    fn pad_positions_isolated() {
        let v = vocab();
        let mut s = build_t2i_sequence(&[], &vec![v.mask_id(); 4], &v, 4).unwrap();
        let n0 = s.len();
        s.pad_to(n0 + 3, &v).unwrap();
        let mask = build_omni_mask(&s);
        for p in n0..s.len() {
            for j in 0..s.len() {
                assert_eq!(mask.allowed(p, j), p == j);
                assert_eq!(mask.allowed(j, p), p == j);
            }
        }
    }

    fn arb_chunks() -> impl Strategy<Value = Vec<Chunk>> {
        proptest::collection::vec(
            prop_oneof![
                proptest::collection::vec(0u32..64, 0..6).prop_map(Chunk::Text),
                proptest::collection::vec(72u32..88, 4).prop_map(Chunk::Image),
            ],
            1..5,
        )
    }

    proptest! {
        #[test]
        fn no_forward_leakage_and_image_symmetry(chunks in arb_chunks()) {
            let v = vocab();
            let s = build_mixed_sequence(&chunks, &v, 4).unwrap();
            let mask = build_omni_mask(&s);
            let segs = s.segments();
            let seg_of = s.segment_index();
            for i in 0..s.len() {
                prop_assert!(mask.allowed(i, i));
                for j in 0..s.len() {
                    if segs[seg_of[j]].start > segs[seg_of[i]].end() - 1 {
                        prop_assert!(!mask.allowed(i, j), "forward leak {i}->{j}");
                    }
                    if seg_of[i] == seg_of[j] && segs[seg_of[i]].role == Role::Image {
                        prop_assert_eq!(mask.allowed(i, j), mask.allowed(j, i));
                    }
                }
            }
            // deterministic rebuild
            prop_assert_eq!(build_omni_mask(&s), mask);
        }
    }
}
