//! Binary feature files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "SNNFEAT1"                  8 bytes
//! n                           u32
//! d                           u32
//! len(network_id), bytes      u32 + UTF-8
//! len(dataset_id), bytes      u32 + UTF-8
//! n·d values                  f32, row-major
//! ```

use std::path::Path;

use super::FeatureMatrix;
use crate::error::{Error, Result};
use crate::util;

pub const FEATURE_MAGIC: &[u8; 8] = b"SNNFEAT1";

pub fn encode(m: &FeatureMatrix) -> Vec<u8> {
    let name = m.network_id().as_bytes();
    let ds = m.dataset_id().as_bytes();
    let mut out = Vec::with_capacity(8 + 16 + name.len() + ds.len() + 4 * m.data().len());
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&(m.n() as u32).to_le_bytes());
    out.extend_from_slice(&(m.d() as u32).to_le_bytes());
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name);
    out.extend_from_slice(&(ds.len() as u32).to_le_bytes());
    out.extend_from_slice(ds);
    for v in m.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn write_feature_file(m: &FeatureMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if m.n() > u32::MAX as usize || m.d() > u32::MAX as usize {
        return Err(Error::invalid("feature matrix too large for the file format"));
    }
    util::write_atomic(path, &encode(m))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, k: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < k {
            return Err(Error::corrupt(self.path, format!("truncated {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + k];
        self.pos += k;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let len = self.u32(what)?;
        let b = self.take(len, what)?;
        String::from_utf8(b.to_vec()).map_err(|_| Error::corrupt(self.path, format!("{what} is not UTF-8")))
    }
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<FeatureMatrix> {
    if bytes.len() < FEATURE_MAGIC.len() || &bytes[..8] != FEATURE_MAGIC {
        return Err(Error::NotAFeatureFile(path.to_path_buf()));
    }
    let mut cur = Cursor { bytes, pos: 8, path };
    let n = cur.u32("header")?;
    let d = cur.u32("header")?;
    let network_id = cur.string("network id")?;
    let dataset_id = cur.string("dataset id")?;
    if n == 0 || d == 0 {
        return Err(Error::corrupt(path, format!("empty shape {n}x{d}")));
    }
    let count = n
        .checked_mul(d)
        .filter(|c| c.checked_mul(4).is_some())
        .ok_or_else(|| Error::corrupt(path, "shape overflows"))?;
    let payload = cur.take(count * 4, "payload")?;
    if cur.pos != bytes.len() {
        return Err(Error::corrupt(path, "trailing bytes after payload"));
    }
    let mut data = Vec::with_capacity(count);
    for (i, c) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
        if !v.is_finite() {
            return Err(Error::corrupt(
                path,
                format!("non-finite value at row {}, column {}", i / d, i % d),
            ));
        }
        data.push(v);
    }
    FeatureMatrix::new(network_id, dataset_id, n, d, data)
}

pub fn read_feature_file(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let bytes = util::read_file(path)?;
    decode(&bytes, path)
}

/// Reads features from CSV with a header row `f0,f1,...,f{d-1}`.
pub fn read_feature_csv(path: impl AsRef<Path>, network_id: &str, dataset_id: &str) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let ctx = || path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|source| Error::Csv { context: ctx(), source })?;
    let headers = rdr
        .headers()
        .map_err(|source| Error::Csv { context: ctx(), source })?
        .clone();
    let d = headers.len();
    for (j, h) in headers.iter().enumerate() {
        if h.trim() != format!("f{j}") {
            return Err(Error::invalid(format!(
                "{}: expected header column f{j}, found {h:?}",
                path.display()
            )));
        }
    }
    let mut data = Vec::new();
    let mut n = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|source| Error::Csv { context: ctx(), source })?;
        if rec.len() != d {
            return Err(Error::invalid(format!(
                "{}: row {n} has {} columns, expected {d}",
                path.display(),
                rec.len()
            )));
        }
        for field in rec.iter() {
            let v: f32 = field
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("{}: bad number {field:?} in row {n}", path.display())))?;
            data.push(v);
        }
        n += 1;
    }
    FeatureMatrix::new(network_id, dataset_id, n, d, data)
}
