//! Binary PGM (P5) image grids.

use deepstack_core::Matrix;

use crate::error::{Error, Result};

/// Side length if `d` is a perfect square.
pub fn square_side(d: usize) -> Option<usize> {
    let s = (d as f64).sqrt().round() as usize;
    (s * s == d).then_some(s)
}

/// Tiles each row of `images` as a `side×side` image on a grid `columns`
/// wide, separated by one-pixel black gutters.
pub fn image_grid(images: &Matrix, side: usize, columns: usize) -> Result<Vec<u8>> {
    if side * side != images.cols() || columns == 0 || images.rows() == 0 {
        return Err(Error::Config(format!(
            "cannot tile {} rows of width {} as {side}x{side} images",
            images.rows(),
            images.cols()
        )));
    }
    let n = images.rows();
    let grid_rows = n.div_ceil(columns);
    let cols_used = columns.min(n);
    let width = cols_used * side + cols_used - 1;
    let height = grid_rows * side + grid_rows - 1;
    let mut pixels = vec![0u8; width * height];
    for (k, img) in images.iter_rows().enumerate() {
        let (gr, gc) = (k / columns, k % columns);
        let (top, left) = (gr * (side + 1), gc * (side + 1));
        for r in 0..side {
            for c in 0..side {
                let v = img[r * side + c].clamp(0.0, 1.0);
                pixels[(top + r) * width + left + c] = (v * 255.0).round() as u8;
            }
        }
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(&pixels);
    Ok(out)
}

/// Width, height and pixel bytes of a P5 image.
pub fn parse_pgm(bytes: &[u8]) -> Option<(usize, usize, &[u8])> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).ok()?);
    }
    if fields[0] != "P5" {
        return None;
    }
    let (w, h): (usize, usize) = (fields[1].parse().ok()?, fields[2].parse().ok()?);
    let data = bytes.get(pos + 1..)?;
    (data.len() == w * h).then_some((w, h, data))
}
