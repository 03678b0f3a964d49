use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diffusion::{
    build_absorbing, build_first_order, build_uniform, compose_step, cumulative, marginal,
    perfect_model, posterior, step_matrix, verify_elbo, GammaKind, NoiseSchedule, TableModel,
};
use crate::error::{Error, Result};
use crate::model::{init_params, ModelConfig, ModelParams};
use crate::sampler::{
    make_extrapolate_init, make_inpaint_init, sample_image, sample_text, Direction, SampleOpts,
};
use crate::sequence::{
    build_mixed_sequence, build_mmu_sequence, build_omni_mask, build_t2i_sequence, Chunk,
    UnifiedSequence,
};
use crate::tokenizer::{ToyImage, Vocabulary};
use crate::train::{
    apply_training_mask, grad_check, train_loop, Optimizer, TrainExample,
};

use super::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use super::config::RunConfig;
use super::dataset::{gen_synthetic_dataset, read_dataset, write_dataset};
use super::pixmap::emit_image;

#[derive(Parser)]
#[command(
    name = "unimask",
    about = "One transformer for autoregressive text and mask-diffusion image tokens",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check the corruption-chain algebra and bound chain against
    /// enumeration oracles and print the report table.
    VerifyDiffusion {
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Generate a synthetic dataset file.
    GenData {
        #[arg(long)]
        generator: String,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train on a dataset file and write a checkpoint.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Continue from a checkpoint (mutually exclusive with --config).
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Override the configured number of steps to run.
        #[arg(long)]
        steps: Option<usize>,
        /// Stop as soon as the total loss reaches this value.
        #[arg(long)]
        stop_loss: Option<f64>,
        /// Write per-step metrics here instead of stdout.
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Generate an image grid from a text prompt.
    SampleT2i {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        prompt: String,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        guidance: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Write the grid as a portable pixmap here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print per-step masked counts and confidences to stderr.
        #[arg(long, default_value_t = false)]
        trace: bool,
    },
    /// Answer a question about an image grid.
    SampleMmu {
        #[arg(long)]
        ckpt: PathBuf,
        /// Grid cells as hex digits, raster order.
        #[arg(long)]
        image: String,
        #[arg(long)]
        question: String,
        #[arg(long, default_value_t = 32)]
        max_new: usize,
    },
    /// Regenerate the flagged cells of an image grid.
    Inpaint {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        image: String,
        /// One '0'/'1' per cell; '1' marks cells to regenerate.
        #[arg(long)]
        region: String,
        #[arg(long, default_value = "")]
        prompt: String,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Grow an image grid by masked rows/columns and fill them in.
    Extrapolate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        image: String,
        #[arg(long)]
        direction: String,
        #[arg(long)]
        amount: usize,
        #[arg(long, default_value = "")]
        prompt: String,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare analytic gradients against central differences.
    GradCheck {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        coords: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the attention visibility grid for a layout.
    DumpMask {
        /// One of t2i | mmu | mixed | text.
        #[arg(long)]
        layout: String,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

/// Parse and execute one invocation; returns the process exit code.
/// Usage errors exit 2, runtime failures exit 1 with a single
/// `error: <kind>: <message>` line on stderr.
pub fn run_command(args: &[String]) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.cmd) {
        Ok(code) => code,
        Err(e) => {
            let msg = e.to_string().replace('\n', "; ");
            eprintln!("error: {}: {}", e.kind(), msg);
            1
        }
    }
}

fn dispatch(cmd: Cmd) -> Result<i32> {
    match cmd {
        Cmd::VerifyDiffusion { trials, seed } => cmd_verify_diffusion(trials, seed),
        Cmd::GenData {
            generator,
            count,
            seed,
            out,
            config,
        } => cmd_gen_data(&generator, count, seed, &out, config.as_deref()),
        Cmd::Train {
            config,
            data,
            out,
            resume,
            steps,
            stop_loss,
            metrics,
        } => cmd_train(
            config.as_deref(),
            &data,
            &out,
            resume.as_deref(),
            steps,
            stop_loss,
            metrics.as_deref(),
        ),
        Cmd::SampleT2i {
            ckpt,
            prompt,
            steps,
            guidance,
            seed,
            out,
            trace,
        } => cmd_sample_t2i(&ckpt, &prompt, steps, guidance, seed, out.as_deref(), trace),
        Cmd::SampleMmu {
            ckpt,
            image,
            question,
            max_new,
        } => cmd_sample_mmu(&ckpt, &image, &question, max_new),
        Cmd::Inpaint {
            ckpt,
            image,
            region,
            prompt,
            steps,
            seed,
            out,
        } => cmd_inpaint(&ckpt, &image, &region, &prompt, steps, seed, out.as_deref()),
        Cmd::Extrapolate {
            ckpt,
            image,
            direction,
            amount,
            prompt,
            steps,
            seed,
            out,
        } => cmd_extrapolate(
            &ckpt, &image, &direction, amount, &prompt, steps, seed, out.as_deref(),
        ),
        Cmd::GradCheck {
            config,
            coords,
            seed,
        } => cmd_grad_check(config.as_deref(), coords, seed),
        Cmd::DumpMask { layout, config } => cmd_dump_mask(&layout, config.as_deref()),
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    let cfg = match path {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Hex digit string -> unified image ids.
fn parse_grid_arg(s: &str, expected: usize, vocab: &Vocabulary) -> Result<Vec<u32>> {
    if s.len() != expected {
        return Err(Error::InvalidArgument(format!(
            "grid argument has {} digits, expected {expected}",
            s.len()
        )));
    }
    s.chars()
        .map(|c| {
            let v = c
                .to_digit(16)
                .ok_or_else(|| Error::InvalidArgument(format!("bad grid digit {c:?}")))?;
            vocab.image_id(v)
        })
        .collect()
}

/// Unified image ids -> hex digit string.
fn grid_to_hex(ids: &[u32], vocab: &Vocabulary) -> Result<String> {
    ids.iter()
        .map(|&id| {
            let v = vocab.image_value(id)?;
            char::from_digit(v, 16)
                .ok_or_else(|| Error::InvalidArgument(format!("cell value {v} beyond hex")))
        })
        .collect()
}

fn write_grid_pixmap(
    ids: &[u32],
    h: usize,
    w: usize,
    cfg: &RunConfig,
    vocab: &Vocabulary,
    path: &Path,
) -> Result<()> {
    let grid: Vec<u32> = ids.iter().map(|&id| vocab.image_value(id)).collect::<Result<_>>()?;
    let img = ToyImage::new(h, w, cfg.palette_bits(), grid)?;
    emit_image(&img, path, 16)
}

// ---------------------------------------------------------------------------
// verify-diffusion

/// Independent path enumeration of the t-step marginal (the oracle the
/// closed-form cumulative product is checked against).
fn enumerate_marginal(schedule: &NoiseSchedule, t: usize, k: usize, x0: usize) -> Vec<f64> {
    let n = k + 1;
    let mut dist = vec![0.0; n];
    dist[x0] = 1.0;
    for s in 1..=t {
        let q = step_matrix(schedule, s, k, false).unwrap();
        let mut next = vec![0.0; n];
        for from in 0..n {
            if dist[from] == 0.0 {
                continue;
            }
            for to in 0..n {
                next[to] += dist[from] * q.get(from, to);
            }
        }
        dist = next;
    }
    dist
}

fn random_schedule<R: Rng>(rng: &mut R, steps: usize) -> NoiseSchedule {
    let alpha: Vec<f64> = (0..steps).map(|_| rng.gen::<f64>() * 0.6).collect();
    let beta: Vec<f64> = alpha.iter().map(|a| rng.gen::<f64>() * (1.0 - a)).collect();
    NoiseSchedule::new(alpha, beta, GammaKind::Cosine).unwrap()
}

fn cmd_verify_diffusion(trials: usize, seed: u64) -> Result<i32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ok = true;
    let mut report = |name: &str, pass: bool, detail: String| {
        ok &= pass;
        println!("{name}: {detail} ... {}", if pass { "PASS" } else { "FAIL" });
    };

    // cumulative marginals vs. step-by-step propagation
    let mut max_dev: f64 = 0.0;
    for _ in 0..trials {
        let k = rng.gen_range(2..=4usize);
        let t = rng.gen_range(2..=5usize);
        let sched = random_schedule(&mut rng, t);
        let qbar = cumulative(&sched, t, k, false)?;
        for x0 in 0..=k {
            let want = enumerate_marginal(&sched, t, k, x0);
            let got = marginal(x0, &qbar)?;
            for j in 0..=k {
                max_dev = max_dev.max((got.probs()[j] - want[j]).abs());
            }
        }
    }
    report(
        "marginal-vs-enumeration",
        max_dev < 1e-12,
        format!("max deviation {max_dev:.3e}"),
    );

    // posterior Bayes identity against independently composed matrices
    let mut max_bayes: f64 = 0.0;
    for _ in 0..trials {
        let k = rng.gen_range(2..=3usize);
        let t = rng.gen_range(2..=4usize);
        let sched = random_schedule(&mut rng, t);
        let qt = compose_step(
            &build_absorbing(sched.alpha[t - 1], k)?,
            &build_uniform(sched.beta[t - 1], k, false)?,
        )?;
        let qbar_t = cumulative(&sched, t, k, false)?;
        let qbar_prev = cumulative(&sched, t - 1, k, false)?;
        for x0 in 0..k {
            for xt in 0..=k {
                if qbar_t.get(x0, xt) <= 0.0 {
                    continue;
                }
                let post = posterior(xt, x0, &sched, t, k)?;
                for prev in 0..=k {
                    let lhs = post.probs()[prev] * qbar_t.get(x0, xt);
                    let rhs = qt.get(prev, xt) * qbar_prev.get(x0, prev);
                    max_bayes = max_bayes.max((lhs - rhs).abs());
                }
            }
        }
    }
    report(
        "posterior-bayes-identity",
        max_bayes < 1e-10,
        format!("max deviation {max_bayes:.3e}"),
    );

    // composed product vs. the first-order single-matrix form
    let mut max_gap_excess = f64::NEG_INFINITY;
    let mut max_deficit_err: f64 = 0.0;
    for _ in 0..trials {
        let k = rng.gen_range(2..=4usize);
        let a = rng.gen::<f64>() * 0.5;
        let b = rng.gen::<f64>() * 0.4;
        // the alpha*beta agreement bound is against the sub-stochastic
        // (K+1)-divisor uniform factor; the row-stochastic variant differs
        // off-diagonal by b/(K(K+1)) even at a=0
        let composed = compose_step(&build_absorbing(a, k)?, &build_uniform(b, k, true)?)?;
        let first_order = build_first_order(a, b, k)?;
        let mut gap: f64 = 0.0;
        for i in 0..=k {
            for j in 0..=k {
                gap = gap.max((composed.get(i, j) - first_order.get(i, j)).abs());
            }
            if i < k {
                let row_sum: f64 = first_order.entries().row(i).sum();
                let deficit = 1.0 - row_sum;
                max_deficit_err = max_deficit_err.max((deficit - b / (k as f64 + 1.0)).abs());
            }
        }
        max_gap_excess = max_gap_excess.max(gap - a * b);
    }
    report(
        "single-matrix-first-order-gap",
        max_gap_excess <= 1e-12 && max_deficit_err < 1e-12,
        format!("gap excess {max_gap_excess:.3e}, row deficit err {max_deficit_err:.3e}"),
    );

    // likelihood >= bound >= simplified bound, by exhaustive enumeration
    println!("bound chain (k=2):");
    println!("trial\tT\tlen\texact\t\tbound\t\tsimplified\tconst\tok");
    let k = 2;
    let mut chain_ok = true;
    for trial in 0..trials {
        let t = rng.gen_range(1..=3usize);
        let seq_len = rng.gen_range(1..=2usize);
        let sched = random_schedule(&mut rng, t);
        let s = (k + 1usize).pow(seq_len as u32);
        // random data distribution over mask-free states
        let mut data = vec![0.0; s];
        let mut total = 0.0;
        for (state, d) in data.iter_mut().enumerate() {
            let mut digitsleft = state;
            let mut mask_free = true;
            for _ in 0..seq_len {
                if digitsleft % (k + 1) == k {
                    mask_free = false;
                }
                digitsleft /= k + 1;
            }
            if mask_free {
                *d = rng.gen::<f64>() + 1e-3;
                total += *d;
            }
        }
        for d in &mut data {
            *d /= total;
        }
        let model = if trial % 4 == 0 {
            perfect_model(&sched, seq_len, k, &data)?
        } else {
            let table: Vec<Vec<f64>> = (0..s)
                .map(|_| {
                    let mut row: Vec<f64> = (0..s).map(|_| rng.gen::<f64>() + 1e-3).collect();
                    let z: f64 = row.iter().sum();
                    row.iter_mut().for_each(|x| *x /= z);
                    row
                })
                .collect();
            TableModel { table }
        };
        let rep = verify_elbo(&sched, seq_len, k, &data, &model)?;
        let holds = rep.inequalities_hold(1e-9)
            && (rep.c1 + rep.c2 - rep.c).abs() < 1e-9;
        chain_ok &= holds;
        println!(
            "{trial}\t{t}\t{seq_len}\t{:+.6}\t{:+.6}\t{:+.6}\t{:+.4}\t{}",
            rep.exact_loglik,
            rep.elbo,
            rep.simplified_bound,
            rep.c,
            if holds { "yes" } else { "NO" }
        );
    }
    report("bound-chain", chain_ok, format!("{trials} enumerated trials"));

    Ok(if ok { 0 } else { 1 })
}

// ---------------------------------------------------------------------------
// data / training

fn cmd_gen_data(
    generator: &str,
    count: usize,
    seed: u64,
    out: &Path,
    config: Option<&Path>,
) -> Result<i32> {
    let cfg = load_config(config)?;
    let records = gen_synthetic_dataset(generator, count, seed, &cfg)?;
    write_dataset(out, &records)?;
    println!("wrote {} records to {}", records.len(), out.display());
    Ok(0)
}

fn cmd_train(
    config: Option<&Path>,
    data: &Path,
    out: &Path,
    resume: Option<&Path>,
    steps: Option<usize>,
    stop_loss: Option<f64>,
    metrics: Option<&Path>,
) -> Result<i32> {
    if config.is_some() && resume.is_some() {
        return Err(Error::Config(
            "--config and --resume are mutually exclusive; the checkpoint embeds its config"
                .into(),
        ));
    }
    let (mut rcfg, mut params, mut opt, mut rng, start_step) = match resume {
        Some(p) => {
            let ck = load_checkpoint(p)?;
            let rng = ck.restore_rng();
            (ck.config, ck.params, ck.opt, rng, ck.step)
        }
        None => {
            let rcfg = load_config(config)?;
            let mut rng = ChaCha8Rng::seed_from_u64(rcfg.seed);
            let params = init_params(&rcfg.model_config(), &mut rng)?;
            let opt = Optimizer::new(rcfg.optimizer, rcfg.lr, params.num_params());
            (rcfg, params, opt, rng, 0)
        }
    };
    if let Some(s) = steps {
        rcfg.steps = s;
    }
    let vocab = rcfg.vocabulary()?;
    let records = read_dataset(data)?;
    if records.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "dataset {} is empty",
            data.display()
        )));
    }
    let mut examples: Vec<TrainExample> = Vec::with_capacity(records.len());
    for r in &records {
        r.validate(&rcfg, &vocab)?;
        examples.push(r.to_example(&vocab)?);
    }
    let mcfg = rcfg.model_config();
    let tcfg = rcfg.train_config();
    let mut metrics_text = String::new();
    let outcome = train_loop(
        &mut params,
        &mcfg,
        &tcfg,
        &examples,
        &vocab,
        &mut opt,
        &mut rng,
        stop_loss,
        |s, r| {
            metrics_text.push_str(&format!(
                "{}\t{:.6}\t{:.6}\t{:.6}\n",
                start_step as usize + s,
                r.ntp,
                r.mtp,
                r.total
            ));
        },
    )?;
    match metrics {
        Some(p) => std::fs::write(p, &metrics_text)?,
        None => print!("{metrics_text}"),
    }
    let (rng_seed, rng_word_pos) = Checkpoint::rng_state(&rng);
    save_checkpoint(
        out,
        &Checkpoint {
            config: rcfg,
            params,
            opt,
            step: start_step + outcome.steps_run as u64,
            rng_seed,
            rng_word_pos,
        },
    )?;
    println!(
        "trained {} steps (total {}), final loss {:.6}, checkpoint {}",
        outcome.steps_run,
        start_step as usize + outcome.steps_run,
        outcome.final_loss,
        out.display()
    );
    Ok(0)
}

// ---------------------------------------------------------------------------
// sampling

struct LoadedModel {
    cfg: RunConfig,
    vocab: Vocabulary,
    mcfg: ModelConfig,
    params: ModelParams,
}

fn load_model(path: &Path) -> Result<LoadedModel> {
    let ck = load_checkpoint(path)?;
    let vocab = ck.config.vocabulary()?;
    let mcfg = ck.config.model_config();
    Ok(LoadedModel {
        cfg: ck.config,
        vocab,
        mcfg,
        params: ck.params,
    })
}

fn sample_opts(m: &LoadedModel, steps: Option<usize>, guidance: Option<f64>, trace: bool) -> SampleOpts {
    SampleOpts {
        steps: steps.unwrap_or(m.cfg.sample_steps),
        guidance: guidance.unwrap_or(m.cfg.guidance),
        temperature: m.cfg.temperature,
        anneal: false,
        gamma_kind: m.cfg.gamma,
        trace,
    }
}

fn cmd_sample_t2i(
    ckpt: &Path,
    prompt: &str,
    steps: Option<usize>,
    guidance: Option<f64>,
    seed: Option<u64>,
    out: Option<&Path>,
    trace: bool,
) -> Result<i32> {
    let m = load_model(ckpt)?;
    let text = m.vocab.encode_text(prompt)?;
    let opts = sample_opts(&m, steps, guidance, trace);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(m.cfg.seed));
    let run = sample_image(
        &m.params, &m.mcfg, &m.vocab, &text, m.cfg.m(), None, &opts, &mut rng,
    )?;
    for line in &run.trace {
        eprintln!("{line}");
    }
    println!("{}", grid_to_hex(&run.tokens, &m.vocab)?);
    if let Some(p) = out {
        write_grid_pixmap(&run.tokens, m.cfg.grid_h, m.cfg.grid_w, &m.cfg, &m.vocab, p)?;
    }
    Ok(0)
}

fn cmd_sample_mmu(ckpt: &Path, image: &str, question: &str, max_new: usize) -> Result<i32> {
    let m = load_model(ckpt)?;
    let image_ids = parse_grid_arg(image, m.cfg.m(), &m.vocab)?;
    let question_ids = m.vocab.encode_text(question)?;
    // greedy decoding; the rng is unused but fixed for signature symmetry
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let answer = sample_text(
        &m.params,
        &m.mcfg,
        &m.vocab,
        &image_ids,
        &question_ids,
        max_new,
        None,
        &mut rng,
    )?;
    println!("{}", m.vocab.decode_text(&answer)?);
    Ok(0)
}

fn cmd_inpaint(
    ckpt: &Path,
    image: &str,
    region: &str,
    prompt: &str,
    steps: Option<usize>,
    seed: Option<u64>,
    out: Option<&Path>,
) -> Result<i32> {
    let m = load_model(ckpt)?;
    let image_ids = parse_grid_arg(image, m.cfg.m(), &m.vocab)?;
    if region.len() != image_ids.len() {
        return Err(Error::InvalidArgument(format!(
            "region has {} flags, grid has {} cells",
            region.len(),
            image_ids.len()
        )));
    }
    let region: Vec<bool> = region
        .chars()
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            other => Err(Error::InvalidArgument(format!(
                "region flags must be 0/1, got {other:?}"
            ))),
        })
        .collect::<Result<_>>()?;
    let init = make_inpaint_init(&image_ids, &region, &m.vocab)?;
    let text = m.vocab.encode_text(prompt)?;
    let opts = sample_opts(&m, steps, None, false);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(m.cfg.seed));
    let run = sample_image(
        &m.params,
        &m.mcfg,
        &m.vocab,
        &text,
        m.cfg.m(),
        Some(init),
        &opts,
        &mut rng,
    )?;
    println!("{}", grid_to_hex(&run.tokens, &m.vocab)?);
    if let Some(p) = out {
        write_grid_pixmap(&run.tokens, m.cfg.grid_h, m.cfg.grid_w, &m.cfg, &m.vocab, p)?;
    }
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn cmd_extrapolate(
    ckpt: &Path,
    image: &str,
    direction: &str,
    amount: usize,
    prompt: &str,
    steps: Option<usize>,
    seed: Option<u64>,
    out: Option<&Path>,
) -> Result<i32> {
    let m = load_model(ckpt)?;
    let image_ids = parse_grid_arg(image, m.cfg.m(), &m.vocab)?;
    let direction: Direction = direction.parse()?;
    let (init, nh, nw) = make_extrapolate_init(
        &image_ids,
        m.cfg.grid_h,
        m.cfg.grid_w,
        direction,
        amount,
        &m.vocab,
    )?;
    let text = m.vocab.encode_text(prompt)?;
    let opts = sample_opts(&m, steps, None, false);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(m.cfg.seed));
    let num = init.len();
    let run = sample_image(
        &m.params, &m.mcfg, &m.vocab, &text, num, Some(init), &opts, &mut rng,
    )?;
    println!("{nh} {nw}");
    println!("{}", grid_to_hex(&run.tokens, &m.vocab)?);
    if let Some(p) = out {
        write_grid_pixmap(&run.tokens, nh, nw, &m.cfg, &m.vocab, p)?;
    }
    Ok(0)
}

// ---------------------------------------------------------------------------
// diagnostics

fn cmd_grad_check(config: Option<&Path>, coords: usize, seed: u64) -> Result<i32> {
    let cfg = match config {
        Some(p) => RunConfig::from_file(p)?,
        // small default shape keeps the central-difference sweep fast
        None => RunConfig {
            width: 32,
            ..RunConfig::default()
        },
    };
    cfg.validate()?;
    let vocab = cfg.vocabulary()?;
    let mcfg = cfg.model_config();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = init_params(&mcfg, &mut rng)?;
    let tcfg = cfg.train_config();

    // one masked t2i sequence and one answer sequence exercise both losses
    let mut seqs: Vec<UnifiedSequence> = Vec::new();
    for rec in gen_synthetic_dataset("shapes", 2, seed, &cfg)? {
        match rec.to_example(&vocab)? {
            TrainExample::T2i { text, image } => {
                let clean = build_t2i_sequence(&text, &image, &vocab, image.len())?;
                seqs.push(apply_training_mask(&clean, &mut rng, cfg.gamma, &vocab)?);
            }
            TrainExample::Mmu {
                image,
                question,
                answer,
            } => seqs.push(build_mmu_sequence(
                &image,
                &question,
                &answer,
                &vocab,
                image.len(),
            )?),
            TrainExample::Mixed { chunks } => {
                let clean = build_mixed_sequence(&chunks, &vocab, cfg.m())?;
                seqs.push(apply_training_mask(&clean, &mut rng, cfg.gamma, &vocab)?);
            }
        }
    }
    let report = grad_check(
        &params,
        &mcfg,
        &seqs,
        tcfg.alpha_ntp,
        &vocab,
        tcfg.mtp_full_vocab,
        coords,
        &mut rng,
    )?;
    let pass = report.passes(1e-4);
    println!(
        "checked {} coordinates, max relative error {:.3e}{} ... {}",
        report.checked,
        report.max_rel_err,
        report
            .worst
            .as_ref()
            .map(|w| format!(" (worst at {})", w.name))
            .unwrap_or_default(),
        if pass { "PASS" } else { "FAIL" }
    );
    Ok(if pass { 0 } else { 1 })
}

fn cmd_dump_mask(layout: &str, config: Option<&Path>) -> Result<i32> {
    let cfg = load_config(config)?;
    let vocab = cfg.vocabulary()?;
    let m = cfg.m();
    let image: Vec<u32> = (0..m as u32)
        .map(|i| vocab.image_id(i % cfg.image_size as u32))
        .collect::<Result<_>>()?;
    let seq = match layout {
        "t2i" => build_t2i_sequence(
            &vocab.encode_text("red dot")?,
            &vec![vocab.mask_id(); m],
            &vocab,
            m,
        )?,
        "mmu" => build_mmu_sequence(
            &image,
            &vocab.encode_text("color")?,
            &vocab.encode_text("red")?,
            &vocab,
            m,
        )?,
        "mixed" => build_mixed_sequence(
            &[
                Chunk::Text(vocab.encode_text("pair")?),
                Chunk::Image(image),
                Chunk::Text(vocab.encode_text("done")?),
            ],
            &vocab,
            m,
        )?,
        "text" => build_mixed_sequence(
            &[Chunk::Text(vocab.encode_text("plain text only")?)],
            &vocab,
            m,
        )?,
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown layout '{other}' (expected t2i|mmu|mixed|text)"
            )))
        }
    };
    let roles: String = seq.roles.iter().map(|r| r.letter()).collect();
    println!("roles: {roles}");
    print!("{}", build_omni_mask(&seq).to_grid_string());
    Ok(0)
}
