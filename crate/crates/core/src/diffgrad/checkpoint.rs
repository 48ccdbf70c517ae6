//! `SAILCKPT` binary tensor container.
//!
//! Layout: 8-byte magic, `u32` version, then records until EOF, each
//! `u32` name length, UTF-8 name, `u32` rows, `u32` cols and `rows·cols`
//! little-endian `f64` values.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::tensor::Tensor2;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SAILCKPT";
pub const VERSION: u32 = 1;

pub fn encode(tensors: &[(&str, &Tensor2)]) -> Vec<u8> {
    let payload: usize = tensors
        .iter()
        .map(|(n, t)| 12 + n.len() + 8 * t.len())
        .sum();
    let mut out = Vec::with_capacity(12 + payload);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for (name, t) in tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(t.cols() as u32).to_le_bytes());
        for v in t.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Checkpoint(format!(
                "truncated file while reading {what} at byte {}",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn decode(buf: &[u8]) -> Result<Vec<(String, Tensor2)>> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(8, "magic")? != MAGIC {
        return Err(Error::Checkpoint("bad magic bytes".into()));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported version {version} (expected {VERSION})"
        )));
    }
    let mut out = Vec::new();
    while r.pos < buf.len() {
        let len = r.u32("name length")? as usize;
        let name = std::str::from_utf8(r.take(len, "name")?)
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?
            .to_owned();
        let rows = r.u32("rows")? as usize;
        let cols = r.u32("cols")? as usize;
        let bytes = r.take(rows * cols * 8, &name)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        out.push((name, Tensor2::from_vec(rows, cols, data)?));
    }
    Ok(out)
}

/// Writes through a temporary sibling so a crash never leaves a torn file.
pub fn write_file(path: &Path, tensors: &[(&str, &Tensor2)]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(&encode(tensors))
        .map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_file(path: &Path) -> Result<Vec<(String, Tensor2)>> {
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&buf)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> (Tensor2, Tensor2) {
        (
            Tensor2::from_fn(3, 2, |r, c| r as f64 * 0.1 - c as f64 / 3.0),
            Tensor2::filled(1, 1, 42.0),
        )
    }

    #[test]
    fn layout_is_little_endian_with_header() {
        let (a, _) = sample();
        let bytes = encode(&[("w", &a)]);
        assert_eq!(&bytes[..8], b"SAILCKPT");
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 1);
        assert_eq!(bytes[16], b'w');
        assert_eq!(u32::from_le_bytes(bytes[17..21].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(bytes[21..25].try_into().unwrap()), 2);
        assert_eq!(bytes.len(), 25 + 6 * 8);
        assert_eq!(
            f64::from_le_bytes(bytes[25..33].try_into().unwrap()),
            a.get(0, 0)
        );
    }

    #[test]
    fn round_trip_preserves_bits_and_order() {
        let (a, b) = sample();
        let back = decode(&encode(&[("student.W", &a), ("state.epoch", &b)])).unwrap();
        assert_eq!(back[0].0, "student.W");
        assert_eq!(back[0].1, a);
        assert_eq!(back[1].0, "state.epoch");
        assert_eq!(back[1].1, b);
    }

    #[test]
    fn bad_magic_version_and_truncation() {
        let (a, _) = sample();
        let good = encode(&[("w", &a)]);
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(decode(&bad).unwrap_err().to_string().contains("magic"));
        let mut bad = good.clone();
        bad[8] = 9;
        assert!(decode(&bad).unwrap_err().to_string().contains("version"));
        let err = decode(&good[..good.len() - 3]).unwrap_err();
        assert!(err.to_string().contains("truncated"));
    }
}
