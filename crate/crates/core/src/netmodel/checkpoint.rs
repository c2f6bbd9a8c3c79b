//! Binary model checkpoint.
//!
//! Layout (little-endian):
//!
//! ```text
//! b"FPCKPT01"
//! u32 header_len, header_len bytes of JSON header
//! u32 n_tensors
//! per tensor: u16 name_len, name, u8 dtype (0 = f32), u8 ndim, ndim x u32 dims,
//!             prod(dims) x f32 row-major values
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::{Network, Params};
use super::ModelConfig;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"FPCKPT01";
const DTYPE_F32: u8 = 0;

/// Where a checkpoint's weights came from; used for leakage checks.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Provenance {
    pub train_font_ids: Vec<String>,
    /// SHA-256 of each training font file, hex encoded.
    pub train_font_sha256: Vec<String>,
    pub val_font_ids: Vec<String>,
    pub split_seed: Option<u64>,
    /// Free-form notes (tool version, dataset root, ...).
    pub notes: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    trained_epochs: usize,
    rng_seed: u64,
    provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub config: ModelConfig,
    pub trained_epochs: usize,
    pub rng_seed: u64,
    pub provenance: Provenance,
    pub params: Params<f32>,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::format("checkpoint", "truncated file"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

impl ModelCheckpoint {
    pub fn from_network(net: &Network<f32>, trained_epochs: usize, rng_seed: u64, provenance: Provenance) -> Self {
        ModelCheckpoint {
            config: net.config().clone(),
            trained_epochs,
            rng_seed,
            provenance,
            params: net.params.clone(),
        }
    }

    pub fn network(&self) -> Result<Network<f32>> {
        Network::new(self.config.clone(), self.params.clone())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            config: self.config.clone(),
            trained_epochs: self.trained_epochs,
            rng_seed: self.rng_seed,
            provenance: self.provenance.clone(),
        };
        let header = serde_json::to_vec(&header).expect("header serializes");
        let tensors = self.params.tensors();
        let mut out = Vec::with_capacity(16 + header.len() + 4 * self.params.num_params());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for (name, shape, values) in tensors {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(DTYPE_F32);
            out.push(shape.len() as u8);
            for d in &shape {
                out.extend_from_slice(&(*d as u32).to_le_bytes());
            }
            for v in values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(Error::format("checkpoint", "bad magic bytes"));
        }
        let header_len = r.u32()? as usize;
        let header: Header = serde_json::from_slice(r.take(header_len)?)
            .map_err(|e| Error::format("checkpoint", format!("bad header: {e}")))?;
        let geom = header.config.validate()?;
        let mut params = Params::<f32>::zeros(&header.config, &geom);
        let expected: Vec<(String, Vec<usize>)> =
            params.tensors().into_iter().map(|(n, s, _)| (n, s)).collect();

        let n = r.u32()? as usize;
        if n != expected.len() {
            return Err(Error::ShapeMismatch(format!("checkpoint has {n} tensors, config needs {}", expected.len())));
        }
        for ((want_name, want_shape), slot) in expected.iter().zip(params.tensors_mut()) {
            let name_len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::format("checkpoint", "tensor name is not UTF-8"))?;
            if name != want_name {
                return Err(Error::ShapeMismatch(format!("expected tensor {want_name}, found {name}")));
            }
            if r.u8()? != DTYPE_F32 {
                return Err(Error::format("checkpoint", format!("unsupported dtype for {name}")));
            }
            let ndim = r.u8()? as usize;
            let shape = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            if &shape != want_shape {
                return Err(Error::ShapeMismatch(format!("{name}: shape {shape:?}, config needs {want_shape:?}")));
            }
            let data = r.take(4 * slot.len())?;
            for (v, b) in slot.iter_mut().zip(data.chunks_exact(4)) {
                *v = f32::from_le_bytes(b.try_into().expect("4 bytes"));
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::format("checkpoint", "trailing bytes after last tensor"));
        }
        Ok(ModelCheckpoint {
            config: header.config,
            trained_epochs: header.trained_epochs,
            rng_seed: header.rng_seed,
            provenance: header.provenance,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ModelCheckpoint {
        let net = Network::<f32>::init(ModelConfig::reduced(), 11).unwrap();
        let mut prov = Provenance { train_font_ids: vec!["a".into()], ..Default::default() };
        prov.notes.insert("k".into(), "v".into());
        ModelCheckpoint::from_network(&net, 3, 11, prov)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ck = sample();
        let back = ModelCheckpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back, ck);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = sample().to_bytes();
        assert!(ModelCheckpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(ModelCheckpoint::from_bytes(&bad).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(ModelCheckpoint::from_bytes(&extra).is_err());
    }
}
