use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numeric::Tensor;

/// Binary PGM (P5, maxval 255) bytes; `v` maps to `round(255 v)`.
pub fn encode_pgm(field: &Tensor) -> Result<Vec<u8>> {
    let [h, w] = field.shape()[..] else {
        return Err(Error::Render(format!("expected an H x W field, got {:?}", field.shape())));
    };
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    for &v in field.data() {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Render(format!("value {v} outside [0, 1]")));
        }
        out.push((255.0 * v).round() as u8);
    }
    Ok(out)
}

pub fn render_pgm(field: &Tensor, path: &Path) -> Result<()> {
    let bytes = encode_pgm(field)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Lays out rows of `S x H x W` stacks as one image, frames left to right,
/// with a one-pixel white gutter.
pub fn strip(rows: &[&Tensor]) -> Result<Tensor> {
    let first = rows.first().ok_or_else(|| Error::Render("nothing to draw".into()))?;
    let [_, h, w] = first.shape()[..] else {
        return Err(Error::Render(format!("expected S x H x W frames, got {:?}", first.shape())));
    };
    let cols = rows.iter().map(|r| r.shape()[0]).max().unwrap_or(0);
    let (out_h, out_w) = (rows.len() * (h + 1) - 1, cols * (w + 1) - 1);
    let mut img = Tensor::full(&[out_h, out_w], 1.0);
    for (ri, r) in rows.iter().enumerate() {
        if r.shape()[1..] != [h, w] {
            return Err(Error::Render("frames of differing size".into()));
        }
        for s in 0..r.shape()[0] {
            for y in 0..h {
                for x in 0..w {
                    img.set(&[ri * (h + 1) + y, s * (w + 1) + x], r.get(&[s, y, x]).clamp(0.0, 1.0));
                }
            }
        }
    }
    Ok(img)
}
