use std::path::Path;

use crate::error::{Error, Result};
use crate::tokenizer::ToyImage;

/// Fixed RGB triple per palette index; index 0 is the background.
pub const PALETTE: [(u8, u8, u8); 16] = [
    (30, 30, 30),    // 0 background
    (230, 25, 75),   // 1 red
    (60, 180, 75),   // 2 green
    (0, 130, 200),   // 3 blue
    (255, 225, 25),  // 4 yellow
    (245, 130, 48),  // 5 orange
    (145, 30, 180),  // 6 purple
    (70, 240, 240),  // 7 cyan
    (240, 50, 230),  // 8 magenta
    (210, 245, 60),  // 9 lime
    (250, 190, 212), // 10 pink
    (0, 128, 128),   // 11 teal
    (220, 190, 255), // 12 lavender
    (170, 110, 40),  // 13 brown
    (255, 250, 200), // 14 cream
    (255, 255, 255), // 15 white
];

/// Render a grid as plain-text portable pixmap ("P3") with each cell drawn
/// as a `scale x scale` pixel block.
pub fn pixmap_text(img: &ToyImage, scale: usize) -> Result<String> {
    if scale == 0 {
        return Err(Error::InvalidArgument("scale must be >= 1".into()));
    }
    if let Some(&v) = img.grid.iter().find(|&&v| v as usize >= PALETTE.len()) {
        return Err(Error::InvalidArgument(format!(
            "palette index {v} exceeds the {}-color palette",
            PALETTE.len()
        )));
    }
    let (pw, ph) = (img.w * scale, img.h * scale);
    let mut s = format!("P3\n{pw} {ph}\n255\n");
    for py in 0..ph {
        let mut row = String::new();
        for px in 0..pw {
            let cell = img.grid[(py / scale) * img.w + px / scale];
            let (r, g, b) = PALETTE[cell as usize];
            if !row.is_empty() {
                row.push(' ');
            }
            row.push_str(&format!("{r} {g} {b}"));
        }
        s.push_str(&row);
        s.push('\n');
    }
    Ok(s)
}

/// Write the pixmap to disk (byte-identical for identical grids).
pub fn emit_image(img: &ToyImage, path: &Path, scale: usize) -> Result<()> {
    let text = pixmap_text(img, scale)?;
    std::fs::write(path, text)?;
    Ok(())
}

/// Inverse of `pixmap_text` for known `scale` and palette bits; the oracle
/// for emission round-trips.
pub fn parse_pixmap(text: &str, scale: usize, palette_bits: u32) -> Result<ToyImage> {
    let mut tokens = text.split_ascii_whitespace();
    if tokens.next() != Some("P3") {
        return Err(Error::Decoding("missing P3 magic".into()));
    }
    let mut next_num = |what: &str| -> Result<usize> {
        tokens
            .next()
            .ok_or_else(|| Error::Decoding(format!("truncated pixmap at {what}")))?
            .parse()
            .map_err(|_| Error::Decoding(format!("bad {what}")))
    };
    let pw = next_num("width")?;
    let ph = next_num("height")?;
    let maxval = next_num("maxval")?;
    if maxval != 255 {
        return Err(Error::Decoding(format!("unsupported maxval {maxval}")));
    }
    if scale == 0 || pw % scale != 0 || ph % scale != 0 {
        return Err(Error::Decoding(format!(
            "{pw}x{ph} pixels do not tile with scale {scale}"
        )));
    }
    let (w, h) = (pw / scale, ph / scale);
    let mut grid = vec![0u32; w * h];
    for py in 0..ph {
        for px in 0..pw {
            let r = next_num("r")? as u8;
            let g = next_num("g")? as u8;
            let b = next_num("b")? as u8;
            if py % scale == 0 && px % scale == 0 {
                let idx = PALETTE
                    .iter()
                    .position(|&c| c == (r, g, b))
                    .ok_or_else(|| {
                        Error::Decoding(format!("color ({r},{g},{b}) not in palette"))
                    })?;
                grid[(py / scale) * w + px / scale] = idx as u32;
            }
        }
    }
    ToyImage::new(h, w, palette_bits, grid)
}
