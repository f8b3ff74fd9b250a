//! Model files: a binary blob with the parameters plus a JSON sidecar
//! (`<file>.json`) holding config and training history.
//!
//! Blob layout, little-endian:
//!
//! ```text
//! "SNNMDL1"                    7 bytes
//! C, D                         u32, u32
//! normalized                   u8 (0 or 1)
//! len(stack spec JSON), bytes  u32 + UTF-8
//! W                            C·D f64, row-major
//! b                            C f64
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{EpochRecord, TrainConfig, TrainedModel};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::stacking::StackSpec;
use crate::util;

pub const MODEL_MAGIC: &[u8; 7] = b"SNNMDL1";

#[derive(Serialize, Deserialize)]
struct Sidecar {
    config: TrainConfig,
    best_epoch: usize,
    history: Vec<EpochRecord>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".json");
    PathBuf::from(s)
}

fn encode(model: &TrainedModel) -> Result<Vec<u8>> {
    let spec = serde_json::to_vec(&model.stack_spec).map_err(|source| Error::Json {
        context: "stack spec".into(),
        source,
    })?;
    let (c, d) = model.weights.shape();
    let mut out = Vec::with_capacity(7 + 13 + spec.len() + 8 * (c * d + c));
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&(c as u32).to_le_bytes());
    out.extend_from_slice(&(d as u32).to_le_bytes());
    out.push(u8::from(model.normalized));
    out.extend_from_slice(&(spec.len() as u32).to_le_bytes());
    out.extend_from_slice(&spec);
    for v in model.weights.as_slice().iter().chain(&model.bias) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn save_model(model: &TrainedModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    util::write_atomic(path, &encode(model)?)?;
    util::write_json(
        &sidecar_path(path),
        &Sidecar {
            config: model.config.clone(),
            best_epoch: model.best_epoch,
            history: model.history.clone(),
        },
    )
}

fn take<'a>(bytes: &'a [u8], pos: &mut usize, k: usize, path: &Path) -> Result<&'a [u8]> {
    if bytes.len() - *pos < k {
        return Err(Error::corrupt(path, "truncated model"));
    }
    let s = &bytes[*pos..*pos + k];
    *pos += k;
    Ok(s)
}

fn take_u32(bytes: &[u8], pos: &mut usize, path: &Path) -> Result<usize> {
    let b = take(bytes, pos, 4, path)?;
    Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
}

fn decode(bytes: &[u8], path: &Path) -> Result<(Matrix, Vec<f64>, bool, StackSpec)> {
    if bytes.len() < MODEL_MAGIC.len() || &bytes[..7] != MODEL_MAGIC {
        return Err(Error::NotAModelFile(path.to_path_buf()));
    }
    let mut pos = 7;
    let c = take_u32(bytes, &mut pos, path)?;
    let d = take_u32(bytes, &mut pos, path)?;
    let normalized = match take(bytes, &mut pos, 1, path)?[0] {
        0 => false,
        1 => true,
        v => return Err(Error::corrupt(path, format!("bad normalization flag {v}"))),
    };
    let spec_len = take_u32(bytes, &mut pos, path)?;
    let spec: StackSpec = serde_json::from_slice(take(bytes, &mut pos, spec_len, path)?)
        .map_err(|e| Error::corrupt(path, format!("stack spec: {e}")))?;
    let count = c
        .checked_mul(d)
        .and_then(|cd| cd.checked_add(c))
        .and_then(|k| k.checked_mul(8))
        .ok_or_else(|| Error::corrupt(path, "shape overflows"))?;
    let payload = take(bytes, &mut pos, count, path)?;
    if pos != bytes.len() {
        return Err(Error::corrupt(path, "trailing bytes after payload"));
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("chunk of 8")))
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::corrupt(path, "non-finite parameter"));
    }
    let bias = values[c * d..].to_vec();
    let weights = Matrix::from_vec(c, d, values[..c * d].to_vec())?;
    Ok((weights, bias, normalized, spec))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedModel> {
    let path = path.as_ref();
    let (weights, bias, normalized, stack_spec) = decode(&util::read_file(path)?, path)?;
    let side: Sidecar = util::read_json(&sidecar_path(path))?;
    if side.best_epoch >= side.history.len().max(1) {
        return Err(Error::corrupt(path, "best epoch outside history"));
    }
    Ok(TrainedModel {
        weights,
        bias,
        stack_spec,
        normalized,
        config: side.config,
        history: side.history,
        best_epoch: side.best_epoch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> TrainedModel {
        TrainedModel {
            weights: Matrix::from_fn(3, 2, |i, j| (i as f64 + 0.1) / (j as f64 + 3.0)),
            bias: vec![0.1, -0.2, 1.0 / 3.0],
            stack_spec: StackSpec::new(["b", "a"]).unwrap(),
            normalized: true,
            config: TrainConfig::default(),
            history: vec![
                EpochRecord {
                    train_loss: 1.0 / 7.0,
                    val_accuracy: 0.5,
                    lr: 0.01,
                },
                EpochRecord {
                    train_loss: 0.1,
                    val_accuracy: 2.0 / 3.0,
                    lr: 0.01 * 0.98,
                },
            ],
            best_epoch: 1,
        }
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.snnm");
        save_model(&model(), &p).unwrap();
        assert_eq!(load_model(&p).unwrap(), model());
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let bytes = encode(&model()).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad, Path::new("m")), Err(Error::NotAModelFile(_))));
        let err = decode(&bytes[..bytes.len() - 3], Path::new("m")).unwrap_err();
        assert!(err.to_string().contains("corrupt"), "{err}");
    }
}
