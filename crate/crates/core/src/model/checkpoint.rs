//! Checkpoint files: `ATRC` magic, `u32` version, a length-prefixed UTF-8
//! config block, a parameter directory (name, dtype code, rank, extents),
//! then the payloads in directory order. Integers and floats are
//! little-endian; values are stored as 4-byte floats.

use std::fmt::Write as _;
use std::path::Path;

use crate::config::KeyValues;
use crate::nn::Tensor;

use super::{Model, ModelError, NetworkConfig};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"ATRC";
pub const CHECKPOINT_VERSION: u32 = 1;
const DTYPE_F32: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct StoredTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: NetworkConfig,
    /// Last completed epoch.
    pub epoch: usize,
    /// Mean training loss of that epoch.
    pub loss: f64,
    pub tensors: Vec<StoredTensor>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], ModelError> {
        if self.bytes.len() - self.pos < n {
            return Err(ModelError::Truncated(format!(
                "needed {n} bytes for {what} at offset {}, {} left",
                self.pos,
                self.bytes.len() - self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32, ModelError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

impl Checkpoint {
    /// Snapshot of `model`; values are rounded to single precision.
    pub fn from_model(model: &Model, epoch: usize, loss: f64) -> Self {
        let tensors = model
            .named_tensors()
            .into_iter()
            .map(|(name, t)| StoredTensor {
                name,
                shape: t.shape().to_vec(),
                values: t.data().iter().map(|&v| v as f32).collect(),
            })
            .collect();
        Checkpoint {
            config: model.config().clone(),
            epoch,
            loss,
            tensors,
        }
    }

    /// Rebuilds the model. Every network tensor must appear exactly once
    /// with a matching shape.
    pub fn to_model(&self) -> Result<Model, ModelError> {
        let mut model = Model::zeros(self.config.clone())?;
        let expected: Vec<(String, Vec<usize>)> = model
            .named_tensors()
            .into_iter()
            .map(|(n, t)| (n, t.shape().to_vec()))
            .collect();
        if expected.len() != self.tensors.len() {
            return Err(ModelError::ParameterMismatch(format!(
                "network has {} tensors, checkpoint {}",
                expected.len(),
                self.tensors.len()
            )));
        }
        let targets = model.named_tensors_mut();
        for ((name, shape), (stored, slot)) in expected.iter().zip(self.tensors.iter().zip(targets)) {
            if &stored.name != name || &stored.shape != shape {
                return Err(ModelError::ParameterMismatch(format!(
                    "expected {name} {shape:?}, found {} {:?}",
                    stored.name, stored.shape
                )));
            }
            *slot = Tensor::from_vec(shape, stored.values.iter().map(|&v| v as f64).collect())?;
        }
        Ok(model)
    }

    fn config_block(&self) -> String {
        let mut s = self.config.to_text();
        let _ = writeln!(s, "epoch={}", self.epoch);
        let _ = writeln!(s, "loss={}", self.loss);
        s
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let block = self.config_block();
        out.extend_from_slice(&(block.len() as u32).to_le_bytes());
        out.extend_from_slice(block.as_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.push(DTYPE_F32);
            out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
            for &e in &t.shape {
                out.extend_from_slice(&(e as u32).to_le_bytes());
            }
        }
        for t in &self.tensors {
            for v in &t.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4, "magic")? != CHECKPOINT_MAGIC {
            return Err(ModelError::BadMagic);
        }
        let version = r.u32("version")?;
        if version != CHECKPOINT_VERSION {
            return Err(ModelError::UnknownVersion(version));
        }
        let block_len = r.u32("config length")? as usize;
        let block = std::str::from_utf8(r.take(block_len, "config block")?)
            .map_err(|_| ModelError::CorruptHeader("config block is not UTF-8".into()))?;
        let kv = KeyValues::parse(block).map_err(|e| ModelError::CorruptHeader(e.to_string()))?;
        let corrupt = |e: ModelError| ModelError::CorruptHeader(e.to_string());
        let config = NetworkConfig::from_key_values(&kv).map_err(corrupt)?;
        let epoch = kv
            .get::<usize>("epoch")
            .map_err(|e| ModelError::CorruptHeader(e.to_string()))?
            .ok_or_else(|| ModelError::CorruptHeader("missing epoch".into()))?;
        let loss = kv
            .get::<f64>("loss")
            .map_err(|e| ModelError::CorruptHeader(e.to_string()))?
            .ok_or_else(|| ModelError::CorruptHeader("missing loss".into()))?;
        let count = r.u32("tensor count")? as usize;
        let mut directory = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            let name_len = r.u32("name length")? as usize;
            let name = std::str::from_utf8(r.take(name_len, "tensor name")?)
                .map_err(|_| ModelError::CorruptHeader("tensor name is not UTF-8".into()))?
                .to_string();
            let dtype = r.take(1, "dtype")?[0];
            if dtype != DTYPE_F32 {
                return Err(ModelError::CorruptHeader(format!("{name}: unknown dtype code {dtype}")));
            }
            let rank = r.u32("rank")? as usize;
            if rank > 8 {
                return Err(ModelError::CorruptHeader(format!("{name}: rank {rank}")));
            }
            let shape = (0..rank)
                .map(|_| r.u32("extent").map(|e| e as usize))
                .collect::<Result<Vec<_>, _>>()?;
            directory.push((name, shape));
        }
        let mut tensors = Vec::with_capacity(directory.len());
        for (name, shape) in directory {
            let n: usize = shape.iter().product();
            let raw = r.take(4 * n, &format!("payload of {name}"))?;
            let values = raw
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            tensors.push(StoredTensor { name, shape, values });
        }
        if r.pos != bytes.len() {
            return Err(ModelError::CorruptHeader(format!(
                "{} trailing bytes after the payloads",
                bytes.len() - r.pos
            )));
        }
        Ok(Checkpoint {
            config,
            epoch,
            loss,
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_bytes()).map_err(|e| ModelError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let bytes = std::fs::read(path).map_err(|e| ModelError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctc::Alphabet;

    fn checkpoint() -> Checkpoint {
        let config = NetworkConfig::toy(Alphabet::new(vec!['x', 'y']).unwrap());
        Checkpoint::from_model(&Model::new(config, 5).unwrap(), 3, 0.125)
    }

    #[test]
    fn bytes_round_trip() {
        let c = checkpoint();
        let bytes = c.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes(), bytes);
        let model = back.to_model().unwrap();
        assert_eq!(Checkpoint::from_model(&model, 3, 0.125), c);
    }

    #[test]
    fn corruption_is_classified() {
        let bytes = checkpoint().to_bytes();
        assert!(matches!(
            Checkpoint::from_bytes(&bytes[..bytes.len() - 3]),
            Err(ModelError::Truncated(_))
        ));
        let mut v = bytes.clone();
        v[4] = 9;
        assert!(matches!(Checkpoint::from_bytes(&v), Err(ModelError::UnknownVersion(9))));
        let mut v = bytes.clone();
        v[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&v), Err(ModelError::BadMagic)));
        let mut v = bytes.clone();
        v[12] = b'!';
        assert!(matches!(Checkpoint::from_bytes(&v), Err(ModelError::CorruptHeader(_))));
        let mut v = bytes;
        v.push(0);
        assert!(matches!(Checkpoint::from_bytes(&v), Err(ModelError::CorruptHeader(_))));
    }
}
