use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{init_params, ModelParams};
use crate::train::{OptKind, Optimizer};

use super::config::RunConfig;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"UMCK";

/// Everything needed to resume a run bitwise: the config snapshot, flat
/// parameters with a named manifest, optimizer moments and the RNG state.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub params: ModelParams,
    pub opt: Optimizer,
    /// Completed global training steps.
    pub step: u64,
    pub rng_seed: [u8; 32],
    pub rng_word_pos: u128,
}

impl Checkpoint {
    /// Capture the training RNG so a restore replays the exact stream.
    pub fn rng_state(rng: &ChaCha8Rng) -> ([u8; 32], u128) {
        (rng.get_seed(), rng.get_word_pos())
    }

    pub fn restore_rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.rng_seed);
        rng.set_word_pos(self.rng_word_pos);
        rng
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u128(&mut self, v: u128) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn bytes(&mut self, b: &[u8]) {
        self.0.extend_from_slice(b);
    }
    fn str(&mut self, s: &str) {
        self.u64(s.len() as u64);
        self.bytes(s.as_bytes());
    }
    fn f64s(&mut self, xs: &[f64]) {
        self.u64(xs.len() as u64);
        for &x in xs {
            self.f64(x);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint(format!("truncated file at {what}")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
    fn u128(&mut self, what: &str) -> Result<u128> {
        Ok(u128::from_le_bytes(self.take(16, what)?.try_into().unwrap()))
    }
    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
    fn str(&mut self, what: &str) -> Result<String> {
        let n = self.u64(what)? as usize;
        if n > self.buf.len() {
            return Err(Error::Checkpoint(format!("implausible {what} length {n}")));
        }
        String::from_utf8(self.take(n, what)?.to_vec())
            .map_err(|_| Error::Checkpoint(format!("non-utf8 {what}")))
    }
    fn f64s(&mut self, what: &str) -> Result<Vec<f64>> {
        let n = self.u64(what)? as usize;
        if n.saturating_mul(8) > self.buf.len() {
            return Err(Error::Checkpoint(format!("implausible {what} length {n}")));
        }
        (0..n).map(|_| self.f64(what)).collect()
    }
}

/// Serialize to the versioned little-endian binary layout.
pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let mut w = Writer(Vec::new());
    w.bytes(MAGIC);
    w.u32(CHECKPOINT_VERSION);
    w.str(&ckpt.config.to_text());
    w.u64(ckpt.step);
    w.bytes(&ckpt.rng_seed);
    w.u128(ckpt.rng_word_pos);

    w.0.push(match ckpt.opt.kind {
        OptKind::Sgd => 0,
        OptKind::Adam => 1,
    });
    w.f64(ckpt.opt.lr);
    w.f64(ckpt.opt.beta1);
    w.f64(ckpt.opt.beta2);
    w.f64(ckpt.opt.eps);
    w.u64(ckpt.opt.t);
    w.f64s(&ckpt.opt.m);
    w.f64s(&ckpt.opt.v);

    // manifest of (name, shape, flat offset) in canonical order
    let tensors = ckpt.params.visit();
    w.u64(tensors.len() as u64);
    let mut offset = 0u64;
    for (name, t) in &tensors {
        w.str(name);
        let shape = t.shape();
        w.u64(shape.len() as u64);
        for &d in &shape {
            w.u64(d as u64);
        }
        w.u64(offset);
        offset += t.len() as u64;
    }
    w.f64s(&ckpt.params.flat());
    std::fs::write(path, &w.0)?;
    Ok(())
}

/// Parse and validate: magic, version, config, manifest consistency against
/// the config's parameter layout, and blob coverage.
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let buf = std::fs::read(path)?;
    let mut r = Reader { buf: &buf, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Checkpoint("bad magic; not a checkpoint file".into()));
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported version {version} (expected {CHECKPOINT_VERSION})"
        )));
    }
    let config = RunConfig::from_text(&r.str("config")?)
        .map_err(|e| Error::Checkpoint(format!("embedded config: {e}")))?;
    let step = r.u64("step")?;
    let rng_seed: [u8; 32] = r.take(32, "rng seed")?.try_into().unwrap();
    let rng_word_pos = r.u128("rng word pos")?;

    let kind = match r.take(1, "optimizer kind")?[0] {
        0 => OptKind::Sgd,
        1 => OptKind::Adam,
        k => return Err(Error::Checkpoint(format!("unknown optimizer kind {k}"))),
    };
    let lr = r.f64("lr")?;
    let beta1 = r.f64("beta1")?;
    let beta2 = r.f64("beta2")?;
    let eps = r.f64("eps")?;
    let t = r.u64("optimizer t")?;
    let m = r.f64s("optimizer m")?;
    let v = r.f64s("optimizer v")?;

    // rebuild the parameter skeleton from the config, then check the
    // manifest names/shapes/offsets against it
    let mcfg = config.model_config();
    let mut params = init_params(&mcfg, &mut ChaCha8Rng::seed_from_u64(0))?.zeros_like();
    let expected = params.visit();
    let count = r.u64("manifest count")? as usize;
    if count != expected.len() {
        return Err(Error::Checkpoint(format!(
            "manifest has {count} tensors, config implies {}",
            expected.len()
        )));
    }
    let mut offset = 0u64;
    for (name, tensor) in &expected {
        let got_name = r.str("manifest name")?;
        if &got_name != name {
            return Err(Error::Checkpoint(format!(
                "manifest tensor '{got_name}' where '{name}' expected"
            )));
        }
        let ndim = r.u64("manifest ndim")? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u64("manifest dim")? as usize);
        }
        if shape != tensor.shape() {
            return Err(Error::Checkpoint(format!(
                "tensor '{name}' has shape {shape:?}, config implies {:?}",
                tensor.shape()
            )));
        }
        let got_offset = r.u64("manifest offset")?;
        if got_offset != offset {
            return Err(Error::Checkpoint(format!(
                "tensor '{name}' at offset {got_offset}, expected {offset} \
                 (overlap or gap in blob)"
            )));
        }
        offset += tensor.len() as u64;
    }
    let blob = r.f64s("parameter blob")?;
    if blob.len() as u64 != offset {
        return Err(Error::Checkpoint(format!(
            "blob holds {} values, manifest covers {offset}",
            blob.len()
        )));
    }
    if r.pos != buf.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes after blob",
            buf.len() - r.pos
        )));
    }
    if m.len() != blob.len() || v.len() != blob.len() {
        return Err(Error::Checkpoint(format!(
            "optimizer state length {} does not match {} parameters",
            m.len(),
            blob.len()
        )));
    }
    params.set_flat(&blob);
    Ok(Checkpoint {
        config,
        params,
        opt: Optimizer {
            kind,
            lr,
            beta1,
            beta2,
            eps,
            t,
            m,
            v,
        },
        step,
        rng_seed,
        rng_word_pos,
    })
}
