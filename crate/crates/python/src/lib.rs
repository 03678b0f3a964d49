//! Python bindings: the unified vocabulary, sequence/attention builders and
//! the corruption-chain math, exposed as the `unimask_py` module.

use ndarray::Array2;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use unimask_core::diffusion::{
    self, cumulative, gamma as gamma_fn, marginal, posterior, GammaKind, NoiseSchedule,
};
use unimask_core::sampler::cfg_combine as cfg_combine_fn;
use unimask_core::sequence::{
    build_mmu_sequence, build_omni_mask, build_t2i_sequence, UnifiedSequence,
};
use unimask_core::tokenizer;

fn to_py_err(e: unimask_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_gamma(kind: &str) -> PyResult<GammaKind> {
    kind.parse().map_err(to_py_err)
}

/// The unified id space: text characters, special/task tokens, image
/// codebook ids.
#[pyclass(name = "Vocabulary")]
struct PyVocabulary {
    inner: tokenizer::Vocabulary,
}

#[pymethods]
impl PyVocabulary {
    #[new]
    fn new(image_size: usize) -> PyResult<Self> {
        Ok(Self {
            inner: tokenizer::Vocabulary::default_with_image_size(image_size)
                .map_err(to_py_err)?,
        })
    }

    fn total(&self) -> usize {
        self.inner.total()
    }

    fn text_size(&self) -> usize {
        self.inner.text_size()
    }

    fn image_size(&self) -> usize {
        self.inner.image_size()
    }

    fn mask_id(&self) -> u32 {
        self.inner.mask_id()
    }

    fn pad_id(&self) -> u32 {
        self.inner.pad_id()
    }

    fn image_id(&self, value: u32) -> PyResult<u32> {
        self.inner.image_id(value).map_err(to_py_err)
    }

    fn image_value(&self, id: u32) -> PyResult<u32> {
        self.inner.image_value(id).map_err(to_py_err)
    }

    fn encode_text(&self, text: &str) -> PyResult<Vec<u32>> {
        self.inner.encode_text(text).map_err(to_py_err)
    }

    fn decode_text(&self, ids: Vec<u32>) -> PyResult<String> {
        self.inner.decode_text(&ids).map_err(to_py_err)
    }
}

/// A built prompt sequence: ids, one role letter per position
/// (k/t/i/s/p), supervision flags and the attention visibility grid.
#[pyclass(name = "Sequence")]
struct PySequence {
    inner: UnifiedSequence,
}

#[pymethods]
impl PySequence {
    #[staticmethod]
    fn t2i(text_ids: Vec<u32>, image_tokens: Vec<u32>, vocab: &PyVocabulary) -> PyResult<Self> {
        let m = image_tokens.len();
        Ok(Self {
            inner: build_t2i_sequence(&text_ids, &image_tokens, &vocab.inner, m)
                .map_err(to_py_err)?,
        })
    }

    #[staticmethod]
    fn mmu(
        image_tokens: Vec<u32>,
        question_ids: Vec<u32>,
        answer_ids: Vec<u32>,
        vocab: &PyVocabulary,
    ) -> PyResult<Self> {
        let m = image_tokens.len();
        Ok(Self {
            inner: build_mmu_sequence(&image_tokens, &question_ids, &answer_ids, &vocab.inner, m)
                .map_err(to_py_err)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn ids(&self) -> Vec<u32> {
        self.inner.ids.clone()
    }

    fn roles(&self) -> String {
        self.inner.roles.iter().map(|r| r.letter()).collect()
    }

    fn loss_mask(&self) -> Vec<bool> {
        self.inner.loss_mask.clone()
    }

    /// Attention visibility as a list of `0`/`1` strings, one per query row.
    fn attention_grid(&self) -> Vec<String> {
        build_omni_mask(&self.inner)
            .to_grid_string()
            .lines()
            .map(str::to_string)
            .collect()
    }
}

/// Mask-schedule value at progress ratio `r`.
#[pyfunction]
#[pyo3(name = "gamma")]
fn gamma_py(kind: &str, r: f64) -> PyResult<f64> {
    gamma_fn(parse_gamma(kind)?, r).map_err(to_py_err)
}

/// One-step transition matrix over codebook size `k` plus the mask state:
/// absorb with probability `alpha`, uniform-move with probability `beta`.
#[pyfunction]
#[pyo3(signature = (alpha, beta, k, first_order = false))]
fn transition_matrix(alpha: f64, beta: f64, k: usize, first_order: bool) -> PyResult<Vec<Vec<f64>>> {
    let m = if first_order {
        diffusion::build_first_order(alpha, beta, k).map_err(to_py_err)?
    } else {
        diffusion::compose_step(
            &diffusion::build_absorbing(alpha, k).map_err(to_py_err)?,
            &diffusion::build_uniform(beta, k, false).map_err(to_py_err)?,
        )
        .map_err(to_py_err)?
    };
    Ok(m.entries().rows().into_iter().map(|r| r.to_vec()).collect())
}

fn schedule_of(alphas: Vec<f64>, betas: Vec<f64>) -> PyResult<NoiseSchedule> {
    NoiseSchedule::new(alphas, betas, GammaKind::Cosine).map_err(to_py_err)
}

/// Marginal q(x_t | x_0) after `t` steps of the given schedule.
#[pyfunction]
fn marginal_probs(
    x0: usize,
    alphas: Vec<f64>,
    betas: Vec<f64>,
    t: usize,
    k: usize,
) -> PyResult<Vec<f64>> {
    let sched = schedule_of(alphas, betas)?;
    let qbar = cumulative(&sched, t, k, false).map_err(to_py_err)?;
    Ok(marginal(x0, &qbar).map_err(to_py_err)?.probs().to_vec())
}

/// Posterior q(x_{t-1} | x_t, x_0) under the given schedule.
#[pyfunction]
fn posterior_probs(
    xt: usize,
    x0: usize,
    alphas: Vec<f64>,
    betas: Vec<f64>,
    t: usize,
    k: usize,
) -> PyResult<Vec<f64>> {
    let sched = schedule_of(alphas, betas)?;
    Ok(posterior(xt, x0, &sched, t, k)
        .map_err(to_py_err)?
        .probs()
        .to_vec())
}

/// Absorbing corruption of codebook tokens at step `t`; masked tokens come
/// back as the value `k`.
#[pyfunction]
fn corrupt_tokens(
    tokens: Vec<u32>,
    alphas: Vec<f64>,
    t: usize,
    k: usize,
    seed: u64,
) -> PyResult<Vec<u32>> {
    let sched =
        NoiseSchedule::absorbing_only(alphas, GammaKind::Cosine).map_err(to_py_err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    diffusion::corrupt(&tokens, &sched, t, k, &mut rng).map_err(to_py_err)
}

/// Guided logits `(1 + w) * cond - w * uncond`, row-wise.
#[pyfunction]
fn cfg_combine(
    cond: Vec<Vec<f64>>,
    uncond: Vec<Vec<f64>>,
    w: f64,
) -> PyResult<Vec<Vec<f64>>> {
    let to_arr = |rows: &[Vec<f64>]| -> PyResult<Array2<f64>> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(PyValueError::new_err("ragged logit rows"));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Array2::from_shape_vec((nrows, ncols), flat)
            .map_err(|e| PyValueError::new_err(e.to_string()))
    };
    let out = cfg_combine_fn(&to_arr(&cond)?, &to_arr(&uncond)?, w).map_err(to_py_err)?;
    Ok(out.rows().into_iter().map(|r| r.to_vec()).collect())
}

#[pymodule]
fn unimask_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyVocabulary>()?;
    m.add_class::<PySequence>()?;
    m.add_function(wrap_pyfunction!(gamma_py, m)?)?;
    m.add_function(wrap_pyfunction!(transition_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(marginal_probs, m)?)?;
    m.add_function(wrap_pyfunction!(posterior_probs, m)?)?;
    m.add_function(wrap_pyfunction!(corrupt_tokens, m)?)?;
    m.add_function(wrap_pyfunction!(cfg_combine, m)?)?;
    Ok(())
}
