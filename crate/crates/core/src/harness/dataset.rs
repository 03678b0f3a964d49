use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::sequence::Chunk;
use crate::tokenizer::Vocabulary;
use crate::train::TrainExample;

use super::config::RunConfig;

/// One chunk of a mixed record in raw (pre-tokenized) form.
#[derive(Debug, Clone, PartialEq)]
pub enum RecChunk {
    Text(String),
    Grid(Vec<u32>),
}

/// One self-describing training record; grids are raster-order palette
/// values stored as hex digits on disk.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetRecord {
    T2i {
        caption: String,
        grid: Vec<u32>,
    },
    Mmu {
        grid: Vec<u32>,
        question: String,
        answer: String,
    },
    Mixed {
        chunks: Vec<RecChunk>,
    },
}

fn grid_to_hex(grid: &[u32]) -> String {
    grid.iter()
        .map(|&v| char::from_digit(v, 16).expect("validated palette value"))
        .collect()
}

fn hex_to_grid(s: &str) -> Result<Vec<u32>> {
    s.chars()
        .map(|c| {
            c.to_digit(16)
                .ok_or_else(|| Error::Decoding(format!("bad grid digit {c:?}")))
        })
        .collect()
}

impl DatasetRecord {
    pub fn to_line(&self) -> String {
        match self {
            DatasetRecord::T2i { caption, grid } => {
                format!("t2i|{caption}|{}", grid_to_hex(grid))
            }
            DatasetRecord::Mmu {
                grid,
                question,
                answer,
            } => format!("mmu|{}|{question}|{answer}", grid_to_hex(grid)),
            DatasetRecord::Mixed { chunks } => {
                let mut s = String::from("mixed");
                for c in chunks {
                    match c {
                        RecChunk::Text(t) => {
                            s.push_str("|t:");
                            s.push_str(t);
                        }
                        RecChunk::Grid(g) => {
                            s.push_str("|g:");
                            s.push_str(&grid_to_hex(g));
                        }
                    }
                }
                s
            }
        }
    }

    /// Grid sizes, palette range and caption alphabet checks.
    pub fn validate(&self, cfg: &RunConfig, vocab: &Vocabulary) -> Result<()> {
        let check_grid = |grid: &[u32]| -> Result<()> {
            if grid.len() != cfg.m() {
                return Err(Error::InvalidArgument(format!(
                    "grid has {} cells, config wants {}",
                    grid.len(),
                    cfg.m()
                )));
            }
            for &v in grid {
                if v as usize >= cfg.image_size {
                    return Err(Error::InvalidArgument(format!(
                        "cell value {v} outside codebook 0..{}",
                        cfg.image_size
                    )));
                }
            }
            Ok(())
        };
        let check_text = |s: &str| vocab.encode_text(s).map(|_| ());
        match self {
            DatasetRecord::T2i { caption, grid } => {
                check_text(caption)?;
                check_grid(grid)
            }
            DatasetRecord::Mmu {
                grid,
                question,
                answer,
            } => {
                check_grid(grid)?;
                check_text(question)?;
                check_text(answer)
            }
            DatasetRecord::Mixed { chunks } => {
                if chunks.is_empty() {
                    return Err(Error::InvalidArgument("mixed record with no chunks".into()));
                }
                for c in chunks {
                    match c {
                        RecChunk::Text(t) => check_text(t)?,
                        RecChunk::Grid(g) => check_grid(g)?,
                    }
                }
                Ok(())
            }
        }
    }

    /// Tokenize into a raw training example.
    pub fn to_example(&self, vocab: &Vocabulary) -> Result<TrainExample> {
        let grid_ids = |grid: &[u32]| -> Result<Vec<u32>> {
            grid.iter().map(|&v| vocab.image_id(v)).collect()
        };
        Ok(match self {
            DatasetRecord::T2i { caption, grid } => TrainExample::T2i {
                text: vocab.encode_text(caption)?,
                image: grid_ids(grid)?,
            },
            DatasetRecord::Mmu {
                grid,
                question,
                answer,
            } => TrainExample::Mmu {
                image: grid_ids(grid)?,
                question: vocab.encode_text(question)?,
                answer: vocab.encode_text(answer)?,
            },
            DatasetRecord::Mixed { chunks } => TrainExample::Mixed {
                chunks: chunks
                    .iter()
                    .map(|c| {
                        Ok(match c {
                            RecChunk::Text(t) => Chunk::Text(vocab.encode_text(t)?),
                            RecChunk::Grid(g) => Chunk::Image(grid_ids(g)?),
                        })
                    })
                    .collect::<Result<_>>()?,
            },
        })
    }
}

/// Parse one dataset line (inverse of `to_line`).
pub fn parse_dataset_line(line: &str) -> Result<DatasetRecord> {
    let mut parts = line.split('|');
    let kind = parts.next().unwrap_or("");
    let fields: Vec<&str> = parts.collect();
    match kind {
        "t2i" => {
            if fields.len() != 2 {
                return Err(Error::Decoding(format!(
                    "t2i record wants 2 fields, got {}",
                    fields.len()
                )));
            }
            Ok(DatasetRecord::T2i {
                caption: fields[0].to_string(),
                grid: hex_to_grid(fields[1])?,
            })
        }
        "mmu" => {
            if fields.len() != 3 {
                return Err(Error::Decoding(format!(
                    "mmu record wants 3 fields, got {}",
                    fields.len()
                )));
            }
            Ok(DatasetRecord::Mmu {
                grid: hex_to_grid(fields[0])?,
                question: fields[1].to_string(),
                answer: fields[2].to_string(),
            })
        }
        "mixed" => {
            let mut chunks = Vec::new();
            for f in &fields {
                if let Some(t) = f.strip_prefix("t:") {
                    chunks.push(RecChunk::Text(t.to_string()));
                } else if let Some(g) = f.strip_prefix("g:") {
                    chunks.push(RecChunk::Grid(hex_to_grid(g)?));
                } else {
                    return Err(Error::Decoding(format!(
                        "mixed chunk '{f}' lacks a t:/g: prefix"
                    )));
                }
            }
            if chunks.is_empty() {
                return Err(Error::Decoding("mixed record with no chunks".into()));
            }
            Ok(DatasetRecord::Mixed { chunks })
        }
        other => Err(Error::Decoding(format!("unknown record kind '{other}'"))),
    }
}

pub fn write_dataset(path: &Path, records: &[DatasetRecord]) -> Result<()> {
    let mut text = String::new();
    for r in records {
        text.push_str(&r.to_line());
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Vec<DatasetRecord>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            parse_dataset_line(l)
                .map_err(|e| Error::Decoding(format!("line {}: {e}", i + 1)))
        })
        .collect()
}

const COLORS: [(&str, u32); 4] = [("red", 1), ("green", 2), ("blue", 3), ("yellow", 4)];
const SHAPES: [&str; 3] = ["square", "dot", "bar"];
const POSITIONS: [&str; 4] = ["top left", "top right", "bottom left", "bottom right"];

/// Deterministic caption renderer for the "shapes" generator: paints the
/// named shape in the named quadrant of a background-0 grid.
fn render_shape(color: u32, shape: &str, pos: usize, h: usize, w: usize) -> Vec<u32> {
    let (r0, c0) = match pos {
        0 => (0, 0),
        1 => (0, w / 2),
        2 => (h / 2, 0),
        _ => (h / 2, w / 2),
    };
    let (qh, qw) = (h - h / 2, w - w / 2);
    let mut grid = vec![0u32; h * w];
    let mut paint = |r: usize, c: usize| grid[r * w + c] = color;
    match shape {
        "square" => {
            for r in 0..2.min(qh) {
                for c in 0..2.min(qw) {
                    paint(r0 + r, c0 + c);
                }
            }
        }
        "dot" => paint(r0, c0),
        _ => {
            for c in 0..qw {
                paint(r0, c0 + c);
            }
        }
    }
    grid
}

/// Built-in synthetic generators. `copy` emits t2i records whose caption is
/// the grid's own hex digits; `shapes` rotates through t2i / mmu / mixed
/// records built from "color shape position" captions. Fixed seeds
/// reproduce the stream exactly.
pub fn gen_synthetic_dataset(
    generator: &str,
    count: usize,
    seed: u64,
    cfg: &RunConfig,
) -> Result<Vec<DatasetRecord>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w) = (cfg.grid_h, cfg.grid_w);
    let mut out = Vec::with_capacity(count);
    match generator {
        "copy" => {
            for _ in 0..count {
                let grid: Vec<u32> =
                    (0..cfg.m()).map(|_| rng.gen_range(0..cfg.image_size as u32)).collect();
                out.push(DatasetRecord::T2i {
                    caption: grid_to_hex(&grid),
                    grid,
                });
            }
        }
        "shapes" => {
            if cfg.image_size <= COLORS.len() {
                return Err(Error::InvalidArgument(format!(
                    "shapes generator needs image_size > {}, got {}",
                    COLORS.len(),
                    cfg.image_size
                )));
            }
            for i in 0..count {
                let (color_name, color) = COLORS[rng.gen_range(0..COLORS.len())];
                let shape = SHAPES[rng.gen_range(0..SHAPES.len())];
                let pos = rng.gen_range(0..POSITIONS.len());
                let caption = format!("{color_name} {shape} {}", POSITIONS[pos]);
                let grid = render_shape(color, shape, pos, h, w);
                out.push(match i % 3 {
                    0 => DatasetRecord::T2i { caption, grid },
                    1 => DatasetRecord::Mmu {
                        grid,
                        question: "color".to_string(),
                        answer: color_name.to_string(),
                    },
                    _ => DatasetRecord::Mixed {
                        chunks: vec![RecChunk::Text(caption), RecChunk::Grid(grid)],
                    },
                });
            }
        }
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown generator '{other}' (expected copy|shapes)"
            )))
        }
    }
    Ok(out)
}
