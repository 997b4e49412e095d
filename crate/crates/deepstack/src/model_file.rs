//! Binary model files.
//!
//! Little-endian throughout:
//!
//! ```text
//! "DAEJ" | version u32 | layer count u32
//! per layer: d_in u32 | h u32 | tied u8 | act_e u8 | act_d u8
//! per layer: W_e (h×d_in, row-major f64) | b_e | W_d (d_in×h, untied only) | b_d
//! CRC32 of everything above, u32
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use deepstack_core::{Activation, LayerParams, Matrix, StackParams};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"DAEJ";
pub const VERSION: u32 = 1;

pub fn encode(stack: &StackParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + stack.num_params() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(stack.depth() as u32).to_le_bytes());
    for l in stack.layers() {
        out.extend_from_slice(&(l.input_width() as u32).to_le_bytes());
        out.extend_from_slice(&(l.hidden_width() as u32).to_le_bytes());
        out.push(u8::from(l.is_tied()));
        out.push(l.act_e().tag());
        out.push(l.act_d().tag());
    }
    for l in stack.layers() {
        for t in l.tensors() {
            for v in t {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn fail<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::Format {
            path: self.path.to_path_buf(),
            offset: self.pos as u64,
            msg: msg.into(),
        })
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return self.fail(format!("file ends while reading {what}"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let Some(len) = n.checked_mul(8) else {
            return self.fail(format!("{what}: size overflows"));
        };
        let raw = self.take(len, what)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

struct Header {
    d_in: usize,
    h: usize,
    tied: bool,
    act_e: Activation,
    act_d: Activation,
}

/// Parses a model file image; `path` is only used in error messages.
pub fn decode(bytes: &[u8], path: &Path) -> Result<StackParams> {
    let mut r = Reader { bytes, pos: 0, path };
    if r.take(4, "magic")? != MAGIC {
        r.pos = 0;
        return r.fail("not a model file (bad magic)");
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::Version {
            path: path.to_path_buf(),
            found: version,
            expected: VERSION,
        });
    }
    if bytes.len() < 4 + r.pos {
        return r.fail("file ends before the checksum");
    }
    let body = bytes.len() - 4;
    let stored = u32::from_le_bytes(bytes[body..].try_into().unwrap());
    let count = r.u32("layer count")? as usize;
    if count == 0 {
        return r.fail("model has no layers");
    }
    let mut headers = Vec::with_capacity(count.min(1024));
    for i in 0..count {
        let d_in = r.u32("layer header")? as usize;
        let h = r.u32("layer header")? as usize;
        let tied = match r.u8("layer header")? {
            0 => false,
            1 => true,
            t => return r.fail(format!("layer {}: tied flag {t} is not 0 or 1", i + 1)),
        };
        let tag = |r: &mut Reader, t: u8| match Activation::from_tag(t) {
            Some(a) => Ok(a),
            None => r.fail(format!("layer {}: unknown activation tag {t}", i + 1)),
        };
        let t = r.u8("layer header")?;
        let act_e = tag(&mut r, t)?;
        let t = r.u8("layer header")?;
        let act_d = tag(&mut r, t)?;
        headers.push(Header { d_in, h, tied, act_e, act_d });
    }
    let mut layers = Vec::with_capacity(count);
    for (i, hd) in headers.iter().enumerate() {
        let what = format!("layer {} parameters", i + 1);
        let size = hd.h.saturating_mul(hd.d_in);
        let w_e = Matrix::from_vec(hd.h, hd.d_in, r.f64s(size, &what)?)?;
        let b_e = r.f64s(hd.h, &what)?;
        let w_d = if hd.tied {
            None
        } else {
            Some(Matrix::from_vec(hd.d_in, hd.h, r.f64s(size, &what)?)?)
        };
        let b_d = r.f64s(hd.d_in, &what)?;
        layers.push(LayerParams::new(w_e, b_e, w_d, b_d, hd.act_e, hd.act_d)?);
    }
    if r.pos != body {
        if r.pos > body {
            r.pos = body;
            return r.fail("file ends before the checksum");
        }
        return r.fail(format!("{} unexpected bytes after the parameters", body - r.pos));
    }
    let crc = crc32fast::hash(&bytes[..body]);
    if crc != stored {
        r.pos = body;
        return r.fail(format!("checksum mismatch (stored {stored:08x}, computed {crc:08x})"));
    }
    let stack = StackParams::new(layers).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        offset: 12,
        msg: e.to_string(),
    })?;
    Ok(stack)
}

pub fn save(stack: &StackParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(stack)).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<StackParams> {
    let path: PathBuf = path.as_ref().into();
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    decode(&bytes, &path)
}
