//! Label masks on disk as palette-indexed PNG: the pixel value is the class
//! id and the PLTE chunk carries the display colour, so the same file is both
//! the colourised mask and a lossless label store.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use crate::error::{Error, Result};
use crate::palette::Palette;
use crate::taxonomy::LabelMask;

pub fn write_mask_png(path: &Path, mask: &LabelMask, palette: &Palette) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), mask.width(), mask.height());
    enc.set_color(png::ColorType::Indexed);
    enc.set_depth(png::BitDepth::Eight);
    let mut table = palette.as_table();
    let max_label = mask.labels().iter().copied().max().unwrap_or(0) as usize;
    if table.len() <= max_label {
        table.resize(max_label + 1, [0, 0, 0]);
    }
    enc.set_palette(table.concat());
    let mut w = enc
        .write_header()
        .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    w.write_image_data(mask.labels())
        .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    w.finish()
        .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    Ok(())
}

/// Reads the raw palette indices back as labels. Non-indexed 8-bit
/// grayscale files are accepted too, with gray value = class id.
pub fn read_mask_png(path: &Path) -> Result<LabelMask> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut dec = png::Decoder::new(std::io::BufReader::new(file));
    dec.set_transformations(png::Transformations::IDENTITY);
    let bad = |msg: String| Error::input(format!("{}: {msg}", path.display()));
    let mut reader = dec.read_info().map_err(|e| bad(e.to_string()))?;
    let mut buf = vec![
        0;
        reader
            .output_buffer_size()
            .ok_or_else(|| bad("image too large".into()))?
    ];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| bad(e.to_string()))?;
    match (info.color_type, info.bit_depth) {
        (png::ColorType::Indexed | png::ColorType::Grayscale, png::BitDepth::Eight) => {}
        (c, d) => {
            return Err(bad(format!(
                "expected 8-bit indexed mask, found {c:?}/{d:?}"
            )))
        }
    }
    let (w, h) = (info.width, info.height);
    let mut labels = Vec::with_capacity(w as usize * h as usize);
    for row in buf[..info.buffer_size()].chunks(info.line_size) {
        labels.extend_from_slice(&row[..w as usize]);
    }
    LabelMask::new(w, h, labels)
}
