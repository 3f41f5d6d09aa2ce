//! Binary checkpoint: `QKCAE1` magic, u32 version, length-prefixed spec
//! JSON, trained flag, loss log, then every state blob of every layer.
//! All integers and floats are little-endian.

use std::fs;
use std::path::{Path, PathBuf};

use super::model::{CaeModel, EpochLoss};
use super::spec::NetworkSpec;
use crate::error::{Error, IoContext, Result};

const MAGIC: &[u8; 6] = b"QKCAE1";
const VERSION: u32 = 1;

/// Path of the human-readable architecture dump written beside a checkpoint.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".spec.txt");
    PathBuf::from(name)
}

pub fn encode(model: &CaeModel) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let spec = serde_json::to_vec(&model.spec)?;
    out.extend_from_slice(&(spec.len() as u32).to_le_bytes());
    out.extend_from_slice(&spec);
    out.push(u8::from(model.trained));
    out.extend_from_slice(&(model.training_log.len() as u32).to_le_bytes());
    for e in &model.training_log {
        out.extend_from_slice(&(e.epoch as u32).to_le_bytes());
        out.extend_from_slice(&e.train_loss.to_le_bytes());
        out.extend_from_slice(&e.val_loss.to_le_bytes());
    }
    for (li, layer) in model.layers().enumerate() {
        for (bi, blob) in layer.state().iter().enumerate() {
            out.extend_from_slice(&(li as u32).to_le_bytes());
            out.extend_from_slice(&(bi as u32).to_le_bytes());
            out.extend_from_slice(&(blob.len() as u64).to_le_bytes());
            for v in blob.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn fail(&self, message: impl Into<String>) -> Error {
        Error::format(self.path, self.pos as u64, message)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.fail(format!("truncated: need {n} more bytes")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// `path` is only used to label errors.
pub fn decode(bytes: &[u8], path: &Path) -> Result<CaeModel> {
    let mut r = Reader { bytes, pos: 0, path };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(Error::format(path, 0, "not a CAE checkpoint (bad magic)"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(r.fail(format!("unsupported checkpoint version {version}")));
    }
    let spec_len = r.u32()? as usize;
    let spec: NetworkSpec =
        serde_json::from_slice(r.take(spec_len)?).map_err(|e| r.fail(format!("bad network spec: {e}")))?;
    spec.validate()?;
    let trained = match r.take(1)?[0] {
        0 => false,
        1 => true,
        other => return Err(r.fail(format!("bad trained flag {other}"))),
    };
    let n_log = r.u32()? as usize;
    let mut training_log = Vec::with_capacity(n_log.min(1 << 16));
    for _ in 0..n_log {
        training_log.push(EpochLoss {
            epoch: r.u32()? as usize,
            train_loss: r.f64()?,
            val_loss: r.f64()?,
        });
    }

    let mut model = CaeModel::new(spec, 0)?;
    for (li, layer) in model.layers_mut().enumerate() {
        for (bi, blob) in layer.state_mut().into_iter().enumerate() {
            let (l, b, len) = (r.u32()? as usize, r.u32()? as usize, r.u64()? as usize);
            if l != li || b != bi || len != blob.len() {
                return Err(r.fail(format!(
                    "blob header ({l}, {b}, len {len}) does not match expected ({li}, {bi}, len {})",
                    blob.len()
                )));
            }
            for v in blob.iter_mut() {
                *v = r.f64()?;
            }
        }
    }
    if r.pos != bytes.len() {
        return Err(r.fail(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    model.training_log = training_log;
    model.trained = trained;
    Ok(model)
}

/// Writes the checkpoint and its `.spec.txt` sidecar.
pub fn save(model: &CaeModel, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).at(dir)?;
    }
    fs::write(path, encode(model)?).at(path)?;
    let sidecar = sidecar_path(path);
    fs::write(&sidecar, model.spec.to_string()).at(&sidecar)
}

pub fn load(path: &Path) -> Result<CaeModel> {
    decode(&fs::read(path).at(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cae::spec::{build_network, Architecture};

    fn model() -> CaeModel {
        let mut m = CaeModel::new(build_network(Architecture::Resnet10, [1, 28, 28]).unwrap(), 3).unwrap();
        m.trained = true;
        m.training_log = vec![EpochLoss {
            epoch: 1,
            train_loss: 0.5,
            val_loss: 0.25,
        }];
        if let Some(crate::nn::Layer::BatchNorm(p)) = m.encoder.get_mut(1) {
            p.running_mean[0] = 0.125;
        }
        m
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/model.qkcae");
        let m = model();
        save(&m, &path).unwrap();
        assert_eq!(load(&path).unwrap(), m);
        let dump = fs::read_to_string(sidecar_path(&path)).unwrap();
        assert!(dump.starts_with("architecture: resnet10"));
    }

    #[test]
    fn corruption_is_reported() {
        let bytes = encode(&model()).unwrap();
        let p = Path::new("x");
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad, p), Err(Error::Format { offset: 0, .. })));
        assert!(matches!(
            decode(&bytes[..bytes.len() - 3], p),
            Err(Error::Format { .. })
        ));
        let mut extra = bytes;
        extra.push(0);
        assert!(decode(&extra, p).is_err());
    }
}
