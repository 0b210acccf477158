//! Parameter file: `SRKPv1` magic, 32-byte SHA-256 digest of the canonical
//! model config, u32 record count, then per record a u32-length path,
//! four u32 dims and raw f64 values. All integers little-endian.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{LandmarkNet, ModelConfig};
use crate::scalar::Scalar;
use crate::tensor::Shape4;

pub const PARAM_MAGIC: &[u8; 6] = b"SRKPv1";

pub fn config_digest(cfg: &ModelConfig) -> [u8; 32] {
    let d = Sha256::digest(cfg.canonical_json().as_bytes());
    let mut out = [0u8; 32];
    out.copy_from_slice(d.as_slice());
    out
}

struct Record {
    path: String,
    shape: Shape4,
    values: Vec<f64>,
}

fn fmt_err(msg: impl Into<String>) -> Error {
    Error::Format {
        what: "parameter file",
        msg: msg.into(),
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| fmt_err("truncated file"))?;
    Ok(u32::from_le_bytes(b))
}

impl<T: Scalar> LandmarkNet<T> {
    pub fn write_params(&self, mut out: impl Write) -> std::io::Result<()> {
        out.write_all(PARAM_MAGIC)?;
        out.write_all(&config_digest(&self.config))?;
        let params = self.named_params();
        out.write_all(&(params.len() as u32).to_le_bytes())?;
        for (path, p) in params {
            out.write_all(&(path.len() as u32).to_le_bytes())?;
            out.write_all(path.as_bytes())?;
            for d in p.shape().dims() {
                out.write_all(&(d as u32).to_le_bytes())?;
            }
            for v in p.value.data() {
                out.write_all(&v.f64().to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Reads and validates every record before touching the model, so a
    /// failed load leaves the parameters unchanged.
    pub fn read_params(&mut self, mut input: impl Read) -> Result<()> {
        let mut magic = [0u8; 6];
        input.read_exact(&mut magic).map_err(|_| fmt_err("truncated header"))?;
        if &magic != PARAM_MAGIC {
            return Err(fmt_err("bad magic"));
        }
        let mut digest = [0u8; 32];
        input.read_exact(&mut digest).map_err(|_| fmt_err("truncated header"))?;
        let count = read_u32(&mut input)? as usize;
        let mut records = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            let len = read_u32(&mut input)? as usize;
            if len > 4096 {
                return Err(fmt_err(format!("implausible path length {len}")));
            }
            let mut name = vec![0u8; len];
            input.read_exact(&mut name).map_err(|_| fmt_err("truncated path"))?;
            let path = String::from_utf8(name).map_err(|_| fmt_err("path is not UTF-8"))?;
            let mut dims = [0usize; 4];
            for d in &mut dims {
                *d = read_u32(&mut input)? as usize;
            }
            let shape = Shape4::from(dims);
            let mut values = vec![0f64; shape.len()];
            let mut b = [0u8; 8];
            for v in &mut values {
                input
                    .read_exact(&mut b)
                    .map_err(|_| fmt_err(format!("truncated values for `{path}`")))?;
                *v = f64::from_le_bytes(b);
            }
            records.push(Record { path, shape, values });
        }
        let mut extra = [0u8; 1];
        if input.read(&mut extra).map_err(|e| fmt_err(e.to_string()))? != 0 {
            return Err(fmt_err("trailing bytes after last record"));
        }

        let mut by_path: HashMap<&str, &Record> = HashMap::new();
        for r in &records {
            if by_path.insert(r.path.as_str(), r).is_some() {
                return Err(Error::Param {
                    path: r.path.clone(),
                    msg: "duplicate record".into(),
                });
            }
        }
        {
            let params = self.named_params();
            for (path, p) in &params {
                let rec = by_path.get(path.as_str()).ok_or_else(|| Error::Param {
                    path: path.clone(),
                    msg: "missing from file".into(),
                })?;
                if rec.shape != p.shape() {
                    return Err(Error::Param {
                        path: path.clone(),
                        msg: format!("shape mismatch: file {} vs model {}", rec.shape, p.shape()),
                    });
                }
                if let Some(i) = rec.values.iter().position(|v| !v.is_finite()) {
                    return Err(Error::Param {
                        path: path.clone(),
                        msg: format!("non-finite value at {i}"),
                    });
                }
            }
            if params.len() != records.len() {
                let known: std::collections::HashSet<&str> = params.iter().map(|(p, _)| p.as_str()).collect();
                let stray = records.iter().find(|r| !known.contains(r.path.as_str())).expect("extra record");
                return Err(Error::Param {
                    path: stray.path.clone(),
                    msg: "not present in model".into(),
                });
            }
        }
        if digest != config_digest(&self.config) {
            return Err(fmt_err("config digest differs from the model's configuration"));
        }
        for (path, p) in self.named_params_mut() {
            let rec = by_path[path.as_str()];
            for (dst, &v) in p.value.data_mut().iter_mut().zip(&rec.values) {
                *dst = T::of(v);
            }
            p.zero_grad();
        }
        Ok(())
    }

    pub fn save_params(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        self.write_params(&mut buf).expect("in-memory write");
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn load_params(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        self.read_params(&bytes[..])
    }

    /// Builds a model for `config` and loads `path` into it.
    pub fn from_file(config: &ModelConfig, path: impl AsRef<Path>) -> Result<Self> {
        let mut net = Self::new(config, 0)?;
        net.load_params(path)?;
        Ok(net)
    }
}
