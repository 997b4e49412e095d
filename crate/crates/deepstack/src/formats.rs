//! IDX (MNIST) and amat (MNIST variations) readers and writers.

use std::fs;
use std::path::Path;

use deepstack_core::Matrix;

use crate::error::{Error, Result};

pub const IDX_IMAGES: u32 = 0x0000_0803;
pub const IDX_LABELS: u32 = 0x0000_0801;

/// Images as rows scaled to `[0,1]`, plus the image geometry.
#[derive(Clone, Debug, PartialEq)]
pub struct IdxImages {
    pub x: Matrix,
    pub rows: usize,
    pub cols: usize,
}

fn format_err<T>(path: &Path, offset: usize, msg: impl Into<String>) -> Result<T> {
    Err(Error::Format {
        path: path.to_path_buf(),
        offset: offset as u64,
        msg: msg.into(),
    })
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    match bytes.get(at..at + 4) {
        Some(b) => Ok(u32::from_be_bytes(b.try_into().unwrap())),
        None => format_err(path, at, "file ends inside the header"),
    }
}

pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<IdxImages> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != IDX_IMAGES {
        return format_err(path, 0, format!("bad magic {magic:#010x}, expected {IDX_IMAGES:#010x}"));
    }
    let n = be_u32(bytes, 4, path)? as usize;
    let rows = be_u32(bytes, 8, path)? as usize;
    let cols = be_u32(bytes, 12, path)? as usize;
    let d = rows * cols;
    let need = n.checked_mul(d).and_then(|v| v.checked_add(16));
    match need {
        Some(len) if len == bytes.len() => {}
        Some(len) => {
            return format_err(
                path,
                bytes.len().min(len),
                format!("header promises {n} images of {rows}x{cols} ({len} bytes) but the file has {} bytes", bytes.len()),
            )
        }
        None => return format_err(path, 4, "image dimensions overflow"),
    }
    let data = bytes[16..].iter().map(|&b| b as f64 / 255.0).collect();
    Ok(IdxImages {
        x: Matrix::from_vec(n, d, data)?,
        rows,
        cols,
    })
}

pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<usize>> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != IDX_LABELS {
        return format_err(path, 0, format!("bad magic {magic:#010x}, expected {IDX_LABELS:#010x}"));
    }
    let n = be_u32(bytes, 4, path)? as usize;
    if bytes.len() != 8 + n {
        return format_err(path, bytes.len().min(8 + n), format!("header promises {n} labels but the file has {} bytes", bytes.len()));
    }
    Ok(bytes[8..].iter().map(|&b| b as usize).collect())
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Reads an image file and its label file and checks they agree in count.
pub fn load_idx(images: &Path, labels: &Path) -> Result<(IdxImages, Vec<usize>)> {
    let img = parse_idx_images(&read(images)?, images)?;
    let lab = parse_idx_labels(&read(labels)?, labels)?;
    if img.x.rows() != lab.len() {
        return format_err(labels, 4, format!("{} labels for {} images", lab.len(), img.x.rows()));
    }
    Ok((img, lab))
}

/// Pixel values are rounded to the nearest of 256 levels.
pub fn write_idx_images(x: &Matrix, rows: usize, cols: usize) -> Result<Vec<u8>> {
    if rows * cols != x.cols() {
        return Err(Error::Config(format!("{rows}x{cols} images cannot hold {} features", x.cols())));
    }
    let mut out = Vec::with_capacity(16 + x.as_slice().len());
    for v in [IDX_IMAGES, x.rows() as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend(x.as_slice().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    Ok(out)
}

pub fn write_idx_labels(labels: &[usize]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    for &y in labels {
        let b = u8::try_from(y).map_err(|_| Error::Config(format!("label {y} does not fit in a byte")))?;
        out.push(b);
    }
    Ok(out)
}

/// Whitespace-separated rows of `d` features followed by an integer label.
pub fn parse_amat(text: &str, d: usize, path: &Path) -> Result<(Matrix, Vec<usize>)> {
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: lineno,
            msg,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != d + 1 {
            return Err(err(format!("expected {} fields, found {}", d + 1, fields.len())));
        }
        for f in &fields[..d] {
            let v: f64 = f.parse().map_err(|_| err(format!("'{f}' is not a number")))?;
            if !(0.0..=1.0).contains(&v) {
                return Err(err(format!("feature {v} outside [0,1]")));
            }
            data.push(v);
        }
        let raw = fields[d];
        let y: f64 = raw.parse().map_err(|_| err(format!("label '{raw}' is not a number")))?;
        if y < 0.0 || y.fract() != 0.0 {
            return Err(err(format!("label '{raw}' is not a non-negative integer")));
        }
        labels.push(y as usize);
    }
    Ok((Matrix::from_vec(labels.len(), d, data)?, labels))
}

pub fn load_amat(path: &Path, d: usize) -> Result<(Matrix, Vec<usize>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_amat(&text, d, path)
}

/// One row per line, values in shortest round-trip form.
pub fn write_amat(x: &Matrix, labels: &[usize]) -> String {
    let mut out = String::new();
    for (row, y) in x.iter_rows().zip(labels) {
        for v in row {
            out.push_str(&format!("{v} "));
        }
        out.push_str(&format!("{y}\n"));
    }
    out
}
