use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::sequence::AttentionMask;

use super::config::ModelConfig;
use super::params::{LayerParams, ModelParams};

const LN_EPS: f64 = 1e-5;
const NORM_EPS: f64 = 1e-12;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_prime(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

#[derive(Debug, Clone)]
struct LnCache {
    xhat: Array2<f64>,
    rstd: Array1<f64>,
}

fn layer_norm(x: &Array2<f64>, g: &Array1<f64>, b: &Array1<f64>) -> (Array2<f64>, LnCache) {
    let (l, d) = x.dim();
    let mut xhat = Array2::zeros((l, d));
    let mut rstd = Array1::zeros(l);
    let mut out = Array2::zeros((l, d));
    for i in 0..l {
        let row = x.row(i);
        let mean = row.sum() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let r = 1.0 / (var + LN_EPS).sqrt();
        rstd[i] = r;
        for j in 0..d {
            let xh = (x[[i, j]] - mean) * r;
            xhat[[i, j]] = xh;
            out[[i, j]] = g[j] * xh + b[j];
        }
    }
    (out, LnCache { xhat, rstd })
}

fn layer_norm_backward(
    dy: &Array2<f64>,
    cache: &LnCache,
    g: &Array1<f64>,
    dg: &mut Array1<f64>,
    db: &mut Array1<f64>,
) -> Array2<f64> {
    let (l, d) = dy.dim();
    let mut dx = Array2::zeros((l, d));
    for i in 0..l {
        let mut sum_dxhat = 0.0;
        let mut sum_dxhat_xhat = 0.0;
        for j in 0..d {
            let dyij = dy[[i, j]];
            dg[j] += dyij * cache.xhat[[i, j]];
            db[j] += dyij;
            let dxh = dyij * g[j];
            sum_dxhat += dxh;
            sum_dxhat_xhat += dxh * cache.xhat[[i, j]];
        }
        let m1 = sum_dxhat / d as f64;
        let m2 = sum_dxhat_xhat / d as f64;
        for j in 0..d {
            let dxh = dy[[i, j]] * g[j];
            dx[[i, j]] = cache.rstd[i] * (dxh - m1 - cache.xhat[[i, j]] * m2);
        }
    }
    dx
}

#[derive(Debug, Clone)]
struct HeadCache {
    q_hat: Array2<f64>,
    k_hat: Array2<f64>,
    nq: Array1<f64>,
    nk: Array1<f64>,
    /// Raw normalized dot products, zero where disallowed.
    dots: Array2<f64>,
    /// Softmax weights, zero where disallowed.
    weights: Array2<f64>,
}

fn normalize_rows(x: ArrayView2<f64>) -> (Array2<f64>, Array1<f64>) {
    let (l, d) = x.dim();
    let mut out = Array2::zeros((l, d));
    let mut norms = Array1::zeros(l);
    for i in 0..l {
        let n = (x.row(i).iter().map(|v| v * v).sum::<f64>() + NORM_EPS).sqrt();
        norms[i] = n;
        for j in 0..d {
            out[[i, j]] = x[[i, j]] / n;
        }
    }
    (out, norms)
}

fn attention_head(
    q: ArrayView2<f64>,
    k: ArrayView2<f64>,
    v: ArrayView2<f64>,
    gain_q: f64,
    gain_k: f64,
    mask: &AttentionMask,
) -> (Array2<f64>, HeadCache) {
    let (l, dh) = q.dim();
    let (q_hat, nq) = normalize_rows(q);
    let (k_hat, nk) = normalize_rows(k);
    let scale = gain_q * gain_k;
    let mut dots = Array2::zeros((l, l));
    let mut weights = Array2::zeros((l, l));
    let mut out = Array2::zeros((l, dh));
    for i in 0..l {
        let mut max_s = f64::NEG_INFINITY;
        for j in 0..l {
            if mask.allowed(i, j) {
                let dot: f64 = (0..dh).map(|c| q_hat[[i, c]] * k_hat[[j, c]]).sum();
                dots[[i, j]] = dot;
                max_s = max_s.max(scale * dot);
            }
        }
        if max_s == f64::NEG_INFINITY {
            continue; // row with no allowed keys outputs zeros
        }
        let mut z = 0.0;
        for j in 0..l {
            if mask.allowed(i, j) {
                let w = (scale * dots[[i, j]] - max_s).exp();
                weights[[i, j]] = w;
                z += w;
            }
        }
        for j in 0..l {
            if mask.allowed(i, j) {
                let w = weights[[i, j]] / z;
                weights[[i, j]] = w;
                for c in 0..dh {
                    out[[i, c]] += w * v[[j, c]];
                }
            }
        }
    }
    (
        out,
        HeadCache {
            q_hat,
            k_hat,
            nq,
            nk,
            dots,
            weights,
        },
    )
}

/// Single-head QK-Norm attention: queries and keys are L2-normalized per
/// position and scaled by their head gains before the dot product; rows with
/// no allowed keys output zeros.
pub fn qk_norm_attention(
    q: &Array2<f64>,
    k: &Array2<f64>,
    v: &Array2<f64>,
    gain_q: f64,
    gain_k: f64,
    mask: &AttentionMask,
) -> Result<Array2<f64>> {
    if q.dim() != k.dim() || q.dim() != v.dim() {
        return Err(Error::InvalidArgument(format!(
            "q/k/v shapes disagree: {:?} {:?} {:?}",
            q.dim(),
            k.dim(),
            v.dim()
        )));
    }
    if mask.len() != q.nrows() {
        return Err(Error::InvalidArgument(format!(
            "mask is {}x{} but sequence length is {}",
            mask.len(),
            mask.len(),
            q.nrows()
        )));
    }
    Ok(attention_head(q.view(), k.view(), v.view(), gain_q, gain_k, mask).0)
}

#[derive(Debug, Clone)]
struct LayerCache {
    ln1: LnCache,
    h1: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    heads: Vec<HeadCache>,
    concat: Array2<f64>,
    ln2: LnCache,
    h2: Array2<f64>,
    m1: Array2<f64>,
    a1: Array2<f64>,
}

/// All intermediate activations needed by `backward`.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    ids: Vec<u32>,
    layers: Vec<LayerCache>,
    lnf: LnCache,
    y: Array2<f64>,
}

fn check_inputs(params: &ModelParams, cfg: &ModelConfig, ids: &[u32], mask: &AttentionMask) -> Result<()> {
    if ids.len() > cfg.max_len {
        return Err(Error::Capacity(format!(
            "sequence length {} exceeds max_len {}",
            ids.len(),
            cfg.max_len
        )));
    }
    if ids.is_empty() {
        return Err(Error::InvalidArgument("empty sequence".into()));
    }
    if let Some(&bad) = ids.iter().find(|&&i| (i as usize) >= cfg.vocab_total) {
        return Err(Error::InvalidArgument(format!(
            "token id {bad} outside vocabulary of {}",
            cfg.vocab_total
        )));
    }
    if mask.len() != ids.len() {
        return Err(Error::InvalidArgument(format!(
            "mask size {} vs sequence length {}",
            mask.len(),
            ids.len()
        )));
    }
    debug_assert_eq!(params.tok_emb.nrows(), cfg.vocab_total);
    Ok(())
}

fn layer_forward(
    l: &LayerParams,
    cfg: &ModelConfig,
    x: &Array2<f64>,
    mask: &AttentionMask,
) -> (Array2<f64>, LayerCache) {
    let dh = cfg.head_dim();
    let (h1, ln1) = layer_norm(x, &l.ln1_g, &l.ln1_b);
    let q = h1.dot(&l.wq);
    let k = h1.dot(&l.wk);
    let v = h1.dot(&l.wv);
    let mut concat = Array2::zeros(x.dim());
    let mut heads = Vec::with_capacity(cfg.heads);
    for a in 0..cfg.heads {
        let cols = s![.., a * dh..(a + 1) * dh];
        let (out, cache) = attention_head(
            q.slice(cols),
            k.slice(cols),
            v.slice(cols),
            l.gain_q[a],
            l.gain_k[a],
            mask,
        );
        concat.slice_mut(cols).assign(&out);
        heads.push(cache);
    }
    let x_mid = x + &concat.dot(&l.wo);
    let (h2, ln2) = layer_norm(&x_mid, &l.ln2_g, &l.ln2_b);
    let m1 = h2.dot(&l.w1) + &l.b1;
    let a1 = m1.mapv(gelu);
    let x_out = &x_mid + &(a1.dot(&l.w2) + &l.b2);
    (
        x_out,
        LayerCache {
            ln1,
            h1,
            q,
            k,
            v,
            heads,
            concat,
            ln2,
            h2,
            m1,
            a1,
        },
    )
}

/// Forward pass returning per-position logits and the activation cache.
pub fn forward_cached(
    params: &ModelParams,
    cfg: &ModelConfig,
    ids: &[u32],
    mask: &AttentionMask,
) -> Result<(Array2<f64>, ForwardCache)> {
    check_inputs(params, cfg, ids, mask)?;
    let l = ids.len();
    let d = cfg.width;
    let mut x = Array2::zeros((l, d));
    for (p, &id) in ids.iter().enumerate() {
        for j in 0..d {
            x[[p, j]] = params.tok_emb[[id as usize, j]] + params.pos_emb[[p, j]];
        }
    }
    let mut layers = Vec::with_capacity(cfg.depth);
    for layer in &params.layers {
        let (next, cache) = layer_forward(layer, cfg, &x, mask);
        layers.push(cache);
        x = next;
    }
    let (y, lnf) = layer_norm(&x, &params.lnf_g, &params.lnf_b);
    let logits = y.dot(&params.w_out) + &params.b_out;
    Ok((
        logits,
        ForwardCache {
            ids: ids.to_vec(),
            layers,
            lnf,
            y,
        },
    ))
}

/// Forward pass without keeping activations.
pub fn forward_logits(
    params: &ModelParams,
    cfg: &ModelConfig,
    ids: &[u32],
    mask: &AttentionMask,
) -> Result<Array2<f64>> {
    forward_cached(params, cfg, ids, mask).map(|(logits, _)| logits)
}

fn attention_head_backward(
    cache: &HeadCache,
    v: ArrayView2<f64>,
    gain_q: f64,
    gain_k: f64,
    mask: &AttentionMask,
    dout: ArrayView2<f64>,
) -> (Array2<f64>, Array2<f64>, Array2<f64>, f64, f64) {
    let (l, dh) = dout.dim();
    let scale = gain_q * gain_k;
    let mut dv = Array2::zeros((l, dh));
    let mut ds = Array2::zeros((l, l));
    let mut dscale = 0.0;
    for i in 0..l {
        // dw_ij and softmax backward restricted to allowed keys
        let mut row_dw = vec![0.0; l];
        let mut inner = 0.0;
        for j in 0..l {
            if mask.allowed(i, j) {
                let mut dw = 0.0;
                for c in 0..dh {
                    dw += dout[[i, c]] * v[[j, c]];
                    dv[[j, c]] += cache.weights[[i, j]] * dout[[i, c]];
                }
                row_dw[j] = dw;
                inner += cache.weights[[i, j]] * dw;
            }
        }
        for j in 0..l {
            if mask.allowed(i, j) {
                let d_sij = cache.weights[[i, j]] * (row_dw[j] - inner);
                ds[[i, j]] = d_sij;
                dscale += d_sij * cache.dots[[i, j]];
            }
        }
    }
    let dgain_q = gain_k * dscale;
    let dgain_k = gain_q * dscale;
    // dq_hat = scale * ds . k_hat ; dk_hat = scale * ds^T . q_hat
    let dq_hat = ds.dot(&cache.k_hat) * scale;
    let dk_hat = ds.t().dot(&cache.q_hat) * scale;
    // un-normalize: dq_i = (dq_hat_i - q_hat_i (q_hat_i . dq_hat_i)) / nq_i
    let mut dq = Array2::zeros((l, dh));
    let mut dk = Array2::zeros((l, dh));
    for i in 0..l {
        let qdot: f64 = (0..dh).map(|c| cache.q_hat[[i, c]] * dq_hat[[i, c]]).sum();
        let kdot: f64 = (0..dh).map(|c| cache.k_hat[[i, c]] * dk_hat[[i, c]]).sum();
        for c in 0..dh {
            dq[[i, c]] = (dq_hat[[i, c]] - cache.q_hat[[i, c]] * qdot) / cache.nq[i];
            dk[[i, c]] = (dk_hat[[i, c]] - cache.k_hat[[i, c]] * kdot) / cache.nk[i];
        }
    }
    (dq, dk, dv, dgain_q, dgain_k)
}

/// Backpropagate `dlogits` through the cached forward pass, accumulating
/// parameter gradients into `grads` (which must be shaped like the params).
pub fn backward(
    params: &ModelParams,
    cfg: &ModelConfig,
    cache: &ForwardCache,
    mask: &AttentionMask,
    dlogits: &Array2<f64>,
    grads: &mut ModelParams,
) {
    let dh = cfg.head_dim();
    // output head
    grads.b_out += &dlogits.sum_axis(Axis(0));
    grads.w_out += &cache.y.t().dot(dlogits);
    let dy = dlogits.dot(&params.w_out.t());
    // final norm; input to it is x_out of the last layer
    let mut dx = layer_norm_backward(&dy, &cache.lnf, &params.lnf_g, &mut grads.lnf_g, &mut grads.lnf_b);
    for (li, l) in params.layers.iter().enumerate().rev() {
        let lc = &cache.layers[li];
        let gl = &mut grads.layers[li];
        // MLP branch
        let dm2 = &dx;
        gl.b2 += &dm2.sum_axis(Axis(0));
        gl.w2 += &lc.a1.t().dot(dm2);
        let da1 = dm2.dot(&l.w2.t());
        let dm1 = &da1 * &lc.m1.mapv(gelu_prime);
        gl.b1 += &dm1.sum_axis(Axis(0));
        gl.w1 += &lc.h2.t().dot(&dm1);
        let dh2 = dm1.dot(&l.w1.t());
        let mut dx_mid =
            layer_norm_backward(&dh2, &lc.ln2, &l.ln2_g, &mut gl.ln2_g, &mut gl.ln2_b);
        dx_mid += &dx; // residual
        // attention branch
        let dattn = &dx_mid;
        gl.wo += &lc.concat.t().dot(dattn);
        let dconcat = dattn.dot(&l.wo.t());
        let mut dq = Array2::zeros(lc.q.dim());
        let mut dk = Array2::zeros(lc.k.dim());
        let mut dv = Array2::zeros(lc.v.dim());
        for a in 0..cfg.heads {
            let cols = s![.., a * dh..(a + 1) * dh];
            let (hdq, hdk, hdv, dgq, dgk) = attention_head_backward(
                &lc.heads[a],
                lc.v.slice(cols),
                l.gain_q[a],
                l.gain_k[a],
                mask,
                dconcat.slice(cols),
            );
            dq.slice_mut(cols).assign(&hdq);
            dk.slice_mut(cols).assign(&hdk);
            dv.slice_mut(cols).assign(&hdv);
            gl.gain_q[a] += dgq;
            gl.gain_k[a] += dgk;
        }
        gl.wq += &lc.h1.t().dot(&dq);
        gl.wk += &lc.h1.t().dot(&dk);
        gl.wv += &lc.h1.t().dot(&dv);
        let dh1 = dq.dot(&l.wq.t()) + dk.dot(&l.wk.t()) + dv.dot(&l.wv.t());
        let mut dx_in =
            layer_norm_backward(&dh1, &lc.ln1, &l.ln1_g, &mut gl.ln1_g, &mut gl.ln1_b);
        dx_in += &dx_mid; // residual
        dx = dx_in;
    }
    // embeddings
    for (p, &id) in cache.ids.iter().enumerate() {
        for j in 0..cfg.width {
            grads.tok_emb[[id as usize, j]] += dx[[p, j]];
            grads.pos_emb[[p, j]] += dx[[p, j]];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_params, ModelConfig};
    use crate::sequence::{build_omni_mask, build_t2i_sequence, causal_mask};
    use crate::tokenizer::Vocabulary;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_cfg(vocab_total: usize) -> ModelConfig {
        ModelConfig {
            depth: 2,
            width: 16,
            heads: 2,
            vocab_total,
            max_len: 32,
            time_conditioning: false,
        }
    }

    #[test]
    fn attention_single_position_returns_value() {
        let q = Array2::from_shape_vec((1, 4), vec![0.3, -0.5, 0.2, 0.9]).unwrap();
        let k = Array2::from_shape_vec((1, 4), vec![1.0, 0.0, -1.0, 0.5]).unwrap();
        let v = Array2::from_shape_vec((1, 4), vec![7.0, -2.0, 3.0, 0.25]).unwrap();
        let mask = causal_mask(1);
        let out = qk_norm_attention(&q, &k, &v, 1.3, 0.7, &mask).unwrap();
        for c in 0..4 {
            assert!((out[[0, c]] - v[[0, c]]).abs() < 1e-15);
        }
    }

    #[test]
    fn attention_constant_qk_is_uniform() {
        let l = 5;
        let dh = 3;
        let q = Array2::from_elem((l, dh), 0.4);
        let k = Array2::from_elem((l, dh), -0.8);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = Array2::from_shape_fn((l, dh), |_| rng.gen::<f64>());
        let full = AttentionMask {
            allow: ndarray::Array2::from_elem((l, l), true),
        };
        let out = qk_norm_attention(&q, &k, &v, 2.0, 2.0, &full).unwrap();
        let mean = v.sum_axis(Axis(0)) / l as f64;
        for i in 0..l {
            for c in 0..dh {
                assert!((out[[i, c]] - mean[c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn attention_matches_brute_force_reference() {
        let l = 7;
        let dh = 5;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q = Array2::from_shape_fn((l, dh), |_| rng.gen::<f64>() - 0.5);
        let k = Array2::from_shape_fn((l, dh), |_| rng.gen::<f64>() - 0.5);
        let v = Array2::from_shape_fn((l, dh), |_| rng.gen::<f64>() - 0.5);
        let (gq, gk) = (1.7, 0.9);
        let mask = causal_mask(l);
        let out = qk_norm_attention(&q, &k, &v, gq, gk, &mask).unwrap();
        // naive per-position reference
        for i in 0..l {
            let norm = |row: ndarray::ArrayView1<f64>| {
                let n = (row.iter().map(|x| x * x).sum::<f64>() + 1e-12).sqrt();
                row.iter().map(|x| x / n).collect::<Vec<f64>>()
            };
            let qi = norm(q.row(i));
            let mut weights = Vec::new();
            for j in 0..=i {
                let kj = norm(k.row(j));
                let s: f64 = qi.iter().zip(&kj).map(|(a, b)| a * b).sum();
                weights.push((gq * gk * s).exp());
            }
            let z: f64 = weights.iter().sum();
            for c in 0..dh {
                let want: f64 = (0..=i).map(|j| weights[j] / z * v[[j, c]]).sum();
                assert!((out[[i, c]] - want).abs() < 1e-6, "({i},{c})");
            }
        }
    }

    #[test]
    fn forward_is_deterministic_and_finite() {
        let vocab = Vocabulary::default_with_image_size(16).unwrap();
        let cfg = small_cfg(vocab.total());
        let params = init_params(&cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let text: Vec<u32> = (0..5).map(|_| rng.gen_range(0..64)).collect();
            let img: Vec<u32> = (0..4)
                .map(|_| vocab.image_id(rng.gen_range(0..16)).unwrap())
                .collect();
            let seq = build_t2i_sequence(&text, &img, &vocab, 4).unwrap();
            let mask = build_omni_mask(&seq);
            let a = forward_logits(&params, &cfg, &seq.ids, &mask).unwrap();
            let b = forward_logits(&params, &cfg, &seq.ids, &mask).unwrap();
            assert_eq!(a, b);
            assert!(a.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn invisible_perturbation_leaves_logits_bitwise_unchanged() {
        let vocab = Vocabulary::default_with_image_size(16).unwrap();
        let cfg = small_cfg(vocab.total());
        let params = init_params(&cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let text = vec![0u32, 1, 2];
        let img: Vec<u32> = (0..4).map(|i| vocab.image_id(i).unwrap()).collect();
        let seq = build_t2i_sequence(&text, &img, &vocab, 4).unwrap();
        let mask = build_omni_mask(&seq);
        let base = forward_logits(&params, &cfg, &seq.ids, &mask).unwrap();
        // perturb the trailing [EOI]: invisible to every earlier position
        let j = seq.len() - 1;
        let mut ids = seq.ids.clone();
        ids[j] = vocab.pad_id();
        let pert = forward_logits(&params, &cfg, &ids, &mask).unwrap();
        let mut changed_visible = false;
        for i in 0..seq.len() {
            if !mask.allowed(i, j) {
                for c in 0..cfg.vocab_total {
                    assert_eq!(base[[i, c]].to_bits(), pert[[i, c]].to_bits(), "row {i}");
                }
            } else if base.row(i) != pert.row(i) {
                changed_visible = true;
            }
        }
        assert!(changed_visible, "visible perturbation had no effect");
    }

    #[test]
    fn overlength_is_capacity_error() {
        let vocab = Vocabulary::default_with_image_size(16).unwrap();
        let mut cfg = small_cfg(vocab.total());
        cfg.max_len = 4;
        let params = init_params(&cfg, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        let ids = vec![0u32; 5];
        let mask = causal_mask(5);
        match forward_logits(&params, &cfg, &ids, &mask) {
            Err(Error::Capacity(_)) => {}
            other => panic!("expected capacity error, got {other:?}"),
        }
    }
}
