//! Deterministic toy tokenizers over a unified vocabulary: a character-level
//! text tokenizer and a lossless palette-grid "image tokenizer". The id
//! layout is contiguous: text ids, then special/task ids, then image
//! codebook ids.

use crate::error::{Error, Result};

/// Default 64-character alphabet for the toy text tokenizer.
pub const DEFAULT_ALPHABET: &str =
    "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789 .";

/// Special / task tokens in fixed id order.
pub const SPECIAL_NAMES: [&str; 8] = [
    "[MMU]", "[T2I]", "[SOT]", "[EOT]", "[SOI]", "[EOI]", "[MASK]", "[PAD]",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Special {
    Mmu = 0,
    T2i = 1,
    Sot = 2,
    Eot = 3,
    Soi = 4,
    Eoi = 5,
    Mask = 6,
    Pad = 7,
}

/// The unified id space: `[0, text_size)` text, then the eight specials,
/// then `[text_size + 8, text_size + 8 + image_size)` image codebook ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    alphabet: Vec<char>,
    image_size: usize,
}

impl Vocabulary {
    pub fn new(alphabet: &str, image_size: usize) -> Result<Self> {
        let chars: Vec<char> = alphabet.chars().collect();
        if chars.is_empty() {
            return Err(Error::InvalidArgument("alphabet must be non-empty".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for &c in &chars {
            if !seen.insert(c) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate character {c:?} in alphabet"
                )));
            }
        }
        if image_size == 0 {
            return Err(Error::InvalidArgument("image codebook must be non-empty".into()));
        }
        Ok(Self {
            alphabet: chars,
            image_size,
        })
    }

    /// Default desk-scale vocabulary: 64 text chars, K image ids.
    pub fn default_with_image_size(image_size: usize) -> Result<Self> {
        Self::new(DEFAULT_ALPHABET, image_size)
    }

    pub fn alphabet(&self) -> String {
        self.alphabet.iter().collect()
    }

    pub fn text_size(&self) -> usize {
        self.alphabet.len()
    }

    pub fn image_size(&self) -> usize {
        self.image_size
    }

    pub fn total(&self) -> usize {
        self.text_size() + SPECIAL_NAMES.len() + self.image_size
    }

    pub fn special_base(&self) -> usize {
        self.text_size()
    }

    pub fn image_base(&self) -> usize {
        self.text_size() + SPECIAL_NAMES.len()
    }

    pub fn special_id(&self, s: Special) -> u32 {
        (self.special_base() + s as usize) as u32
    }

    pub fn mask_id(&self) -> u32 {
        self.special_id(Special::Mask)
    }

    pub fn pad_id(&self) -> u32 {
        self.special_id(Special::Pad)
    }

    /// Image codebook value -> unified id.
    pub fn image_id(&self, value: u32) -> Result<u32> {
        if (value as usize) >= self.image_size {
            return Err(Error::InvalidArgument(format!(
                "image value {value} outside codebook 0..{}",
                self.image_size
            )));
        }
        Ok((self.image_base() + value as usize) as u32)
    }

    /// Unified id -> image codebook value.
    pub fn image_value(&self, id: u32) -> Result<u32> {
        if !self.is_image(id) {
            return Err(Error::Decoding(format!("id {id} is not an image token")));
        }
        Ok(id - self.image_base() as u32)
    }

    pub fn is_text(&self, id: u32) -> bool {
        (id as usize) < self.text_size()
    }

    pub fn is_special(&self, id: u32) -> bool {
        let i = id as usize;
        i >= self.special_base() && i < self.image_base()
    }

    pub fn is_image(&self, id: u32) -> bool {
        let i = id as usize;
        i >= self.image_base() && i < self.total()
    }

    /// One id per character; fails on out-of-alphabet characters naming the
    /// character and its position.
    pub fn encode_text(&self, s: &str) -> Result<Vec<u32>> {
        s.chars()
            .enumerate()
            .map(|(pos, c)| {
                self.alphabet
                    .iter()
                    .position(|&a| a == c)
                    .map(|i| i as u32)
                    .ok_or_else(|| {
                        Error::Encoding(format!(
                            "character {c:?} at position {pos} not in alphabet"
                        ))
                    })
            })
            .collect()
    }

    pub fn decode_text(&self, ids: &[u32]) -> Result<String> {
        ids.iter()
            .map(|&id| {
                if self.is_text(id) {
                    Ok(self.alphabet[id as usize])
                } else {
                    Err(Error::Decoding(format!("id {id} is not a text token")))
                }
            })
            .collect()
    }
}

/// A small palette-indexed grid; the desk-scale stand-in for a tokenized
/// image. `grid` is raster order (row-major), length `h * w`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToyImage {
    pub h: usize,
    pub w: usize,
    pub palette_bits: u32,
    pub grid: Vec<u32>,
}

impl ToyImage {
    pub fn new(h: usize, w: usize, palette_bits: u32, grid: Vec<u32>) -> Result<Self> {
        if h == 0 || w == 0 {
            return Err(Error::InvalidArgument("grid dimensions must be positive".into()));
        }
        if grid.len() != h * w {
            return Err(Error::InvalidArgument(format!(
                "grid has {} cells, expected {}x{}={}",
                grid.len(),
                h,
                w,
                h * w
            )));
        }
        let limit = 1u32 << palette_bits;
        if let Some(&v) = grid.iter().find(|&&v| v >= limit) {
            return Err(Error::InvalidArgument(format!(
                "palette overflow: cell value {v} >= 2^{palette_bits}"
            )));
        }
        Ok(Self {
            h,
            w,
            palette_bits,
            grid,
        })
    }

    pub fn token_count(&self) -> usize {
        self.h * self.w
    }
}

/// Raster-order mapping of palette values to image-range ids; lossless.
pub fn encode_toy_image(img: &ToyImage, vocab: &Vocabulary) -> Result<Vec<u32>> {
    if (1usize << img.palette_bits) > vocab.image_size() {
        return Err(Error::InvalidArgument(format!(
            "palette 2^{} exceeds codebook size {}",
            img.palette_bits,
            vocab.image_size()
        )));
    }
    img.grid.iter().map(|&v| vocab.image_id(v)).collect()
}

/// Inverse raster mapping. `[MASK]` ids are a decoding error (denoising
/// must finish first); other non-image ids and length mismatches are
/// argument errors.
pub fn decode_toy_image(
    ids: &[u32],
    vocab: &Vocabulary,
    h: usize,
    w: usize,
    palette_bits: u32,
) -> Result<ToyImage> {
    if ids.len() != h * w {
        return Err(Error::InvalidArgument(format!(
            "{} ids cannot fill a {h}x{w} grid",
            ids.len()
        )));
    }
    let mut grid = Vec::with_capacity(ids.len());
    for &id in ids {
        if id == vocab.mask_id() {
            return Err(Error::Decoding(
                "sequence still contains [MASK]; finish denoising before decoding".into(),
            ));
        }
        grid.push(vocab.image_value(id)?);
    }
    ToyImage::new(h, w, palette_bits, grid)
}
