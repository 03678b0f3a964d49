use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{backward, forward_cached, ModelConfig, ModelParams};
use crate::sequence::{
    build_mmu_sequence, build_mixed_sequence, build_omni_mask, build_t2i_sequence, Chunk,
    UnifiedSequence,
};
use crate::tokenizer::Vocabulary;

use super::loss::{batch_loss_and_grads, LossReport};
use super::masking::{apply_training_mask, cfg_dropout};
use super::optim::Optimizer;
use super::TrainConfig;

/// One raw training example; token ids are unified ids, image segments are
/// stored clean (masking happens per step).
#[derive(Debug, Clone, PartialEq)]
pub enum TrainExample {
    T2i {
        text: Vec<u32>,
        image: Vec<u32>,
    },
    Mmu {
        image: Vec<u32>,
        question: Vec<u32>,
        answer: Vec<u32>,
    },
    Mixed {
        chunks: Vec<Chunk>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExampleKind {
    T2i,
    Mmu,
    Mixed,
}

impl TrainExample {
    pub fn kind(&self) -> ExampleKind {
        match self {
            TrainExample::T2i { .. } => ExampleKind::T2i,
            TrainExample::Mmu { .. } => ExampleKind::Mmu,
            TrainExample::Mixed { .. } => ExampleKind::Mixed,
        }
    }
}

impl std::str::FromStr for ExampleKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "t2i" => Ok(ExampleKind::T2i),
            "mmu" => Ok(ExampleKind::Mmu),
            "mixed" => Ok(ExampleKind::Mixed),
            other => Err(Error::InvalidArgument(format!(
                "unknown example kind '{other}' (expected t2i|mmu|mixed)"
            ))),
        }
    }
}

/// A curriculum phase: how many steps, drawing from which example kinds.
#[derive(Debug, Clone, PartialEq)]
pub struct Phase {
    pub name: String,
    pub steps: usize,
    pub kinds: Vec<ExampleKind>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub steps_run: usize,
    pub final_loss: f64,
    pub history: Vec<(usize, LossReport)>,
}

/// Turn a raw example into this step's supervised sequence: mask image
/// spans, and for t2i occasionally drop the text condition.
fn prepare_example<R: Rng>(
    ex: &TrainExample,
    tcfg: &TrainConfig,
    vocab: &Vocabulary,
    rng: &mut R,
) -> Result<UnifiedSequence> {
    match ex {
        TrainExample::T2i { text, image } => {
            let clean = build_t2i_sequence(text, image, vocab, image.len())?;
            let masked = apply_training_mask(&clean, rng, tcfg.gamma_kind, vocab)?;
            if !text.is_empty() && rng.gen::<f64>() < tcfg.cfg_drop_prob {
                cfg_dropout(&masked, vocab)
            } else {
                Ok(masked)
            }
        }
        TrainExample::Mmu {
            image,
            question,
            answer,
        } => build_mmu_sequence(image, question, answer, vocab, image.len()),
        TrainExample::Mixed { chunks } => {
            let m = chunks
                .iter()
                .find_map(|c| match c {
                    Chunk::Image(t) => Some(t.len()),
                    Chunk::Text(_) => None,
                })
                .unwrap_or(0);
            let clean = build_mixed_sequence(chunks, vocab, m)?;
            apply_training_mask(&clean, rng, tcfg.gamma_kind, vocab)
        }
    }
}

/// One optimization step over a batch of raw examples. Sequences are padded
/// to a common length, losses are mean-reduced over batch-wide supervised
/// counts, and the combined gradient is applied through the optimizer.
pub fn train_step<R: Rng>(
    params: &mut ModelParams,
    cfg: &ModelConfig,
    tcfg: &TrainConfig,
    batch: &[&TrainExample],
    vocab: &Vocabulary,
    opt: &mut Optimizer,
    rng: &mut R,
) -> Result<LossReport> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty training batch".into()));
    }
    let mut seqs = Vec::with_capacity(batch.len());
    for ex in batch {
        seqs.push(prepare_example(ex, tcfg, vocab, rng)?);
    }
    let target_len = seqs.iter().map(|s| s.len()).max().unwrap();
    for s in &mut seqs {
        s.pad_to(target_len, vocab)?;
    }
    let mut logits = Vec::with_capacity(seqs.len());
    let mut caches = Vec::with_capacity(seqs.len());
    let mut masks = Vec::with_capacity(seqs.len());
    for s in &seqs {
        let mask = build_omni_mask(s);
        let (lg, cache) = forward_cached(params, cfg, &s.ids, &mask)?;
        logits.push(lg);
        caches.push(cache);
        masks.push(mask);
    }
    let (report, dlogits) =
        batch_loss_and_grads(&logits, &seqs, tcfg.alpha_ntp, vocab, tcfg.mtp_full_vocab)?;
    if !report.total.is_finite() {
        return Err(Error::Diverged(format!(
            "non-finite loss at optimizer step {}",
            opt.t + 1
        )));
    }
    let mut grads = params.zeros_like();
    for i in 0..seqs.len() {
        backward(params, cfg, &caches[i], &masks[i], &dlogits[i], &mut grads);
    }
    opt.step(params, &grads.flat())?;
    Ok(report)
}

/// Run the full loop: one implicit phase over all kinds, or the configured
/// curriculum. Stops early once the total loss drops to `stop_loss`.
/// `on_step` observes every step (1-based global index) for logging.
pub fn train_loop(
    params: &mut ModelParams,
    cfg: &ModelConfig,
    tcfg: &TrainConfig,
    dataset: &[TrainExample],
    vocab: &Vocabulary,
    opt: &mut Optimizer,
    rng: &mut ChaCha8Rng,
    stop_loss: Option<f64>,
    mut on_step: impl FnMut(usize, &LossReport),
) -> Result<TrainOutcome> {
    tcfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("empty training dataset".into()));
    }
    let phases: Vec<Phase> = if tcfg.curriculum.is_empty() {
        vec![Phase {
            name: "all".into(),
            steps: tcfg.steps,
            kinds: vec![ExampleKind::T2i, ExampleKind::Mmu, ExampleKind::Mixed],
        }]
    } else {
        tcfg.curriculum.clone()
    };

    let mut history = Vec::new();
    let mut step = 0usize;
    let mut last = f64::INFINITY;
    'phases: for phase in &phases {
        let pool: Vec<&TrainExample> = dataset
            .iter()
            .filter(|e| phase.kinds.contains(&e.kind()))
            .collect();
        if pool.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "phase '{}' matches no examples",
                phase.name
            )));
        }
        for _ in 0..phase.steps {
            let batch: Vec<&TrainExample> = (0..tcfg.batch)
                .map(|_| pool[rng.gen_range(0..pool.len())])
                .collect();
            let report = train_step(params, cfg, tcfg, &batch, vocab, opt, rng)?;
            step += 1;
            last = report.total;
            on_step(step, &report);
            history.push((step, report));
            if let Some(target) = stop_loss {
                if last <= target {
                    break 'phases;
                }
            }
        }
    }
    Ok(TrainOutcome {
        steps_run: step,
        final_loss: last,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_params;
    use crate::train::OptKind;
    use rand::SeedableRng;

    fn setup() -> (ModelParams, ModelConfig, Vocabulary) {
        let v = Vocabulary::default_with_image_size(16).unwrap();
        let cfg = ModelConfig {
            depth: 2,
            width: 32,
            heads: 4,
            vocab_total: v.total(),
            max_len: 64,
            time_conditioning: false,
        };
        let p = init_params(&cfg, &mut ChaCha8Rng::seed_from_u64(31)).unwrap();
        (p, cfg, v)
    }

    fn tiny_dataset(v: &Vocabulary) -> Vec<TrainExample> {
        let img: Vec<u32> = (0..16u32).map(|i| v.image_id(i).unwrap()).collect();
        vec![
            TrainExample::T2i {
                text: v.encode_text("stripes").unwrap(),
                image: img.clone(),
            },
            TrainExample::Mmu {
                image: img.clone(),
                question: v.encode_text("what").unwrap(),
                answer: v.encode_text("stripes").unwrap(),
            },
            TrainExample::Mixed {
                chunks: vec![
                    Chunk::Text(v.encode_text("see").unwrap()),
                    Chunk::Image(img),
                ],
            },
        ]
    }

    #[test]
    fn short_run_reduces_loss_and_is_deterministic() {
        let (p0, cfg, v) = setup();
        let data = tiny_dataset(&v);
        let tcfg = TrainConfig {
            steps: 40,
            batch: 4,
            lr: 3e-3,
            ..TrainConfig::default()
        };
        let run = |seed: u64| {
            let mut p = p0.clone();
            let mut opt = Optimizer::new(OptKind::Adam, tcfg.lr, p.num_params());
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let out = train_loop(
                &mut p, &cfg, &tcfg, &data, &v, &mut opt, &mut rng, None, |_, _| {},
            )
            .unwrap();
            (p, out)
        };
        let (pa, oa) = run(7);
        let (pb, ob) = run(7);
        assert_eq!(pa, pb, "same seed must give bitwise-identical params");
        assert_eq!(oa.steps_run, 40);
        let first: f64 = oa.history[..5].iter().map(|(_, r)| r.total).sum::<f64>() / 5.0;
        let last: f64 = oa.history[35..].iter().map(|(_, r)| r.total).sum::<f64>() / 5.0;
        assert!(last < first, "loss did not trend down: {first} -> {last}");
        assert_eq!(ob.final_loss, oa.final_loss);
    }

    #[test]
    fn stop_loss_halts_early() {
        let (mut p, cfg, v) = setup();
        let data = tiny_dataset(&v);
        let tcfg = TrainConfig {
            steps: 500,
            batch: 2,
            ..TrainConfig::default()
        };
        let mut opt = Optimizer::new(OptKind::Adam, tcfg.lr, p.num_params());
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        // initial loss is around ln(88); a generous target stops immediately
        let out = train_loop(
            &mut p, &cfg, &tcfg, &data, &v, &mut opt, &mut rng, Some(100.0), |_, _| {},
        )
        .unwrap();
        assert_eq!(out.steps_run, 1);
    }

    #[test]
    fn curriculum_phases_filter_kinds() {
        let (mut p, cfg, v) = setup();
        let data = tiny_dataset(&v);
        let tcfg = TrainConfig {
            batch: 2,
            curriculum: vec![
                Phase {
                    name: "images".into(),
                    steps: 3,
                    kinds: vec![ExampleKind::T2i],
                },
                Phase {
                    name: "everything".into(),
                    steps: 3,
                    kinds: vec![ExampleKind::T2i, ExampleKind::Mmu, ExampleKind::Mixed],
                },
            ],
            ..TrainConfig::default()
        };
        let mut opt = Optimizer::new(OptKind::Adam, tcfg.lr, p.num_params());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut seen = Vec::new();
        let out = train_loop(
            &mut p,
            &cfg,
            &tcfg,
            &data,
            &v,
            &mut opt,
            &mut rng,
            None,
            |s, r| seen.push((s, r.text_count)),
        )
        .unwrap();
        assert_eq!(out.steps_run, 6);
        // t2i-only steps supervise no text positions (dropout aside)
        for (s, text_count) in &seen[..3] {
            assert_eq!(*text_count, 0, "step {s} supervised text in image phase");
        }
    }

    #[test]
    fn phase_with_no_matching_examples_errors() {
        let (mut p, cfg, v) = setup();
        let img: Vec<u32> = (0..16u32).map(|i| v.image_id(i).unwrap()).collect();
        let data = vec![TrainExample::T2i {
            text: vec![],
            image: img,
        }];
        let tcfg = TrainConfig {
            curriculum: vec![Phase {
                name: "mmu-only".into(),
                steps: 1,
                kinds: vec![ExampleKind::Mmu],
            }],
            ..TrainConfig::default()
        };
        let mut opt = Optimizer::new(OptKind::Adam, tcfg.lr, p.num_params());
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        assert!(train_loop(
            &mut p, &cfg, &tcfg, &data, &v, &mut opt, &mut rng, None, |_, _| {}
        )
        .is_err());
    }
}
