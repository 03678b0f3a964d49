use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;

use super::config::ModelConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub ln1_g: Array1<f64>,
    pub ln1_b: Array1<f64>,
    pub wq: Array2<f64>,
    pub wk: Array2<f64>,
    pub wv: Array2<f64>,
    /// Per-head gains applied after L2-normalizing queries / keys.
    pub gain_q: Array1<f64>,
    pub gain_k: Array1<f64>,
    pub wo: Array2<f64>,
    pub ln2_g: Array1<f64>,
    pub ln2_b: Array1<f64>,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub tok_emb: Array2<f64>,
    pub pos_emb: Array2<f64>,
    pub layers: Vec<LayerParams>,
    pub lnf_g: Array1<f64>,
    pub lnf_b: Array1<f64>,
    pub w_out: Array2<f64>,
    pub b_out: Array1<f64>,
}

/// Borrowed view of one named parameter tensor, used for flattening,
/// checkpoints and gradient checking.
pub enum TensorRef<'a> {
    V(&'a Array1<f64>),
    M(&'a Array2<f64>),
}

pub enum TensorMut<'a> {
    V(&'a mut Array1<f64>),
    M(&'a mut Array2<f64>),
}

impl TensorRef<'_> {
    pub fn len(&self) -> usize {
        match self {
            TensorRef::V(a) => a.len(),
            TensorRef::M(a) => a.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn shape(&self) -> Vec<usize> {
        match self {
            TensorRef::V(a) => vec![a.len()],
            TensorRef::M(a) => a.shape().to_vec(),
        }
    }
}

impl ModelParams {
    /// Named tensors in the canonical (checkpoint) order.
    pub fn visit(&self) -> Vec<(String, TensorRef<'_>)> {
        let mut out: Vec<(String, TensorRef<'_>)> = vec![
            ("tok_emb".into(), TensorRef::M(&self.tok_emb)),
            ("pos_emb".into(), TensorRef::M(&self.pos_emb)),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            let p = |n: &str| format!("layer{i}.{n}");
            out.push((p("ln1_g"), TensorRef::V(&l.ln1_g)));
            out.push((p("ln1_b"), TensorRef::V(&l.ln1_b)));
            out.push((p("wq"), TensorRef::M(&l.wq)));
            out.push((p("wk"), TensorRef::M(&l.wk)));
            out.push((p("wv"), TensorRef::M(&l.wv)));
            out.push((p("gain_q"), TensorRef::V(&l.gain_q)));
            out.push((p("gain_k"), TensorRef::V(&l.gain_k)));
            out.push((p("wo"), TensorRef::M(&l.wo)));
            out.push((p("ln2_g"), TensorRef::V(&l.ln2_g)));
            out.push((p("ln2_b"), TensorRef::V(&l.ln2_b)));
            out.push((p("w1"), TensorRef::M(&l.w1)));
            out.push((p("b1"), TensorRef::V(&l.b1)));
            out.push((p("w2"), TensorRef::M(&l.w2)));
            out.push((p("b2"), TensorRef::V(&l.b2)));
        }
        out.push(("lnf_g".into(), TensorRef::V(&self.lnf_g)));
        out.push(("lnf_b".into(), TensorRef::V(&self.lnf_b)));
        out.push(("w_out".into(), TensorRef::M(&self.w_out)));
        out.push(("b_out".into(), TensorRef::V(&self.b_out)));
        out
    }

    pub fn visit_mut(&mut self) -> Vec<(String, TensorMut<'_>)> {
        let mut out: Vec<(String, TensorMut<'_>)> = vec![
            ("tok_emb".into(), TensorMut::M(&mut self.tok_emb)),
            ("pos_emb".into(), TensorMut::M(&mut self.pos_emb)),
        ];
        for (i, l) in self.layers.iter_mut().enumerate() {
            let p = |n: &str| format!("layer{i}.{n}");
            out.push((p("ln1_g"), TensorMut::V(&mut l.ln1_g)));
            out.push((p("ln1_b"), TensorMut::V(&mut l.ln1_b)));
            out.push((p("wq"), TensorMut::M(&mut l.wq)));
            out.push((p("wk"), TensorMut::M(&mut l.wk)));
            out.push((p("wv"), TensorMut::M(&mut l.wv)));
            out.push((p("gain_q"), TensorMut::V(&mut l.gain_q)));
            out.push((p("gain_k"), TensorMut::V(&mut l.gain_k)));
            out.push((p("wo"), TensorMut::M(&mut l.wo)));
            out.push((p("ln2_g"), TensorMut::V(&mut l.ln2_g)));
            out.push((p("ln2_b"), TensorMut::V(&mut l.ln2_b)));
            out.push((p("w1"), TensorMut::M(&mut l.w1)));
            out.push((p("b1"), TensorMut::V(&mut l.b1)));
            out.push((p("w2"), TensorMut::M(&mut l.w2)));
            out.push((p("b2"), TensorMut::V(&mut l.b2)));
        }
        out.push(("lnf_g".into(), TensorMut::V(&mut self.lnf_g)));
        out.push(("lnf_b".into(), TensorMut::V(&mut self.lnf_b)));
        out.push(("w_out".into(), TensorMut::M(&mut self.w_out)));
        out.push(("b_out".into(), TensorMut::V(&mut self.b_out)));
        out
    }

    pub fn num_params(&self) -> usize {
        self.visit().iter().map(|(_, t)| t.len()).sum()
    }

    /// Concatenate all tensors into one vector in canonical order.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for (_, t) in self.visit() {
            match t {
                TensorRef::V(a) => out.extend(a.iter()),
                TensorRef::M(a) => out.extend(a.iter()),
            }
        }
        out
    }

    /// Inverse of `flat`; panics on length mismatch.
    pub fn set_flat(&mut self, flat: &[f64]) {
        let mut off = 0;
        for (_, t) in self.visit_mut() {
            match t {
                TensorMut::V(a) => {
                    for v in a.iter_mut() {
                        *v = flat[off];
                        off += 1;
                    }
                }
                TensorMut::M(a) => {
                    for v in a.iter_mut() {
                        *v = flat[off];
                        off += 1;
                    }
                }
            }
        }
        assert_eq!(off, flat.len(), "flat parameter length mismatch");
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, t) in z.visit_mut() {
            match t {
                TensorMut::V(a) => a.fill(0.0),
                TensorMut::M(a) => a.fill(0.0),
            }
        }
        z
    }

    pub fn all_finite(&self) -> bool {
        self.visit().iter().all(|(_, t)| match t {
            TensorRef::V(a) => a.iter().all(|v| v.is_finite()),
            TensorRef::M(a) => a.iter().all(|v| v.is_finite()),
        })
    }
}

/// Scaled random initialization: weight variance 1/width, residual output
/// projections additionally scaled by 1/sqrt(2 * depth), QK gains set so the
/// initial score scale is about sqrt(head_dim).
pub fn init_params<R: Rng>(cfg: &ModelConfig, rng: &mut R) -> Result<ModelParams> {
    cfg.validate()?;
    let d = cfg.width;
    let sigma = (1.0 / d as f64).sqrt();
    let res_scale = 1.0 / (2.0 * cfg.depth as f64).sqrt();
    let normal = Normal::new(0.0, sigma).expect("valid sigma");
    let mut mat = |rows: usize, cols: usize, scale: f64| {
        Array2::from_shape_fn((rows, cols), |_| normal.sample(rng) * scale)
    };
    let tok_emb = mat(cfg.vocab_total, d, 1.0);
    let pos_emb = mat(cfg.max_len, d, 1.0);
    let gain_init = (cfg.head_dim() as f64).powf(0.25);
    let mut layers = Vec::with_capacity(cfg.depth);
    for _ in 0..cfg.depth {
        layers.push(LayerParams {
            ln1_g: Array1::ones(d),
            ln1_b: Array1::zeros(d),
            wq: mat(d, d, 1.0),
            wk: mat(d, d, 1.0),
            wv: mat(d, d, 1.0),
            gain_q: Array1::from_elem(cfg.heads, gain_init),
            gain_k: Array1::from_elem(cfg.heads, gain_init),
            wo: mat(d, d, res_scale),
            ln2_g: Array1::ones(d),
            ln2_b: Array1::zeros(d),
            w1: mat(d, cfg.hidden(), 1.0),
            b1: Array1::zeros(cfg.hidden()),
            w2: mat(cfg.hidden(), d, res_scale),
            b2: Array1::zeros(d),
        });
    }
    Ok(ModelParams {
        tok_emb,
        pos_emb,
        layers,
        lnf_g: Array1::ones(d),
        lnf_b: Array1::zeros(d),
        w_out: mat(d, cfg.vocab_total, 1.0),
        b_out: Array1::zeros(cfg.vocab_total),
    })
}
