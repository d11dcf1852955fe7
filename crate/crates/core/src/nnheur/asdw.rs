//! ASDW named-tensor container.
//!
//! Little-endian layout: magic `ASDW`, `u32` version (1), `u32` tensor count,
//! then per tensor a `u32` name length, the UTF-8 name, a `u32` rank, `rank`
//! `u32` dimensions and the row-major `f32` payload.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"ASDW";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum WeightsError {
    #[error("not an ASDW file (magic {0:02x?})")]
    BadMagic([u8; 4]),

    #[error("unsupported ASDW version {0}")]
    UnsupportedVersion(u32),

    #[error("file truncated while reading {0}")]
    Truncated(String),

    #[error("{0} trailing bytes after the last tensor")]
    TrailingBytes(usize),

    #[error("tensor {name}: expected shape {expected:?}, found {found:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("missing tensor {0}")]
    MissingTensor(String),

    #[error("duplicate tensor {0}")]
    DuplicateTensor(String),

    #[error("tensor {0} holds a non-finite value")]
    NonFinite(String),

    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(name: impl Into<String>, dims: Vec<usize>, data: Vec<f32>) -> Self {
        debug_assert_eq!(dims.iter().product::<usize>(), data.len());
        Tensor {
            name: name.into(),
            dims,
            data,
        }
    }
}

/// Ordered tensors exactly as stored on disk.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TensorFile {
    pub tensors: Vec<Tensor>,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], WeightsError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| WeightsError::Truncated(what.to_string()))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32, WeightsError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

impl TensorFile {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self, WeightsError> {
        let mut r = Reader { buf, pos: 0 };
        let magic = r.take(4, "magic")?;
        if magic != MAGIC {
            let mut m = [0u8; 4];
            m.copy_from_slice(magic);
            return Err(WeightsError::BadMagic(m));
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(WeightsError::UnsupportedVersion(version));
        }
        let count = r.u32("tensor count")? as usize;
        let mut tensors: Vec<Tensor> = Vec::with_capacity(count.min(1024));
        for i in 0..count {
            let name_len = r.u32(&format!("name length of tensor {i}"))? as usize;
            let name = String::from_utf8(r.take(name_len, &format!("name of tensor {i}"))?.to_vec())
                .map_err(|_| WeightsError::Truncated(format!("UTF-8 name of tensor {i}")))?;
            let rank = r.u32(&format!("rank of {name}"))? as usize;
            let mut dims = Vec::with_capacity(rank.min(8));
            for _ in 0..rank {
                dims.push(r.u32(&format!("dims of {name}"))? as usize);
            }
            let count = dims
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| WeightsError::Truncated(format!("data of {name}")))?;
            let bytes = r.take(
                count
                    .checked_mul(4)
                    .ok_or_else(|| WeightsError::Truncated(format!("data of {name}")))?,
                &format!("data of {name}"),
            )?;
            let data = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            if tensors.iter().any(|t| t.name == name) {
                return Err(WeightsError::DuplicateTensor(name));
            }
            tensors.push(Tensor { name, dims, data });
        }
        if r.pos != buf.len() {
            return Err(WeightsError::TrailingBytes(buf.len() - r.pos));
        }
        Ok(TensorFile { tensors })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.extend_from_slice(&(t.dims.len() as u32).to_le_bytes());
            for &d in &t.dims {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, WeightsError> {
        let path = path.as_ref();
        let buf = fs::read(path).map_err(|source| WeightsError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&buf)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), WeightsError> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|source| WeightsError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> TensorFile {
        TensorFile {
            tensors: vec![
                Tensor::new("a", vec![2, 3], vec![1.0, -2.0, 3.5, 0.0, -0.0, 7.25]),
                Tensor::new("b.c", vec![1], vec![f32::MIN_POSITIVE]),
                Tensor::new("scalar", vec![], vec![4.0]),
            ],
        }
    }

    #[test]
    fn header_layout() {
        let bytes = sample().to_bytes();
        assert_eq!(&bytes[..4], &[0x41, 0x53, 0x44, 0x57]);
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &3u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &1u32.to_le_bytes());
        assert_eq!(bytes[16], b'a');
    }

    #[test]
    fn errors_are_distinct() {
        let good = sample().to_bytes();

        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(TensorFile::from_bytes(&bad), Err(WeightsError::BadMagic(_))));

        let mut bad = good.clone();
        bad[4] = 2;
        assert!(matches!(
            TensorFile::from_bytes(&bad),
            Err(WeightsError::UnsupportedVersion(2))
        ));

        for cut in [2, 10, 20, good.len() - 1] {
            assert!(matches!(
                TensorFile::from_bytes(&good[..cut]),
                Err(WeightsError::Truncated(_))
            ));
        }

        let mut bad = good.clone();
        bad.push(0);
        assert!(matches!(
            TensorFile::from_bytes(&bad),
            Err(WeightsError::TrailingBytes(1))
        ));
    }

    proptest! {
        #[test]
        fn bytes_round_trip(
            shapes in prop::collection::vec(prop::collection::vec(1usize..4, 0..3), 0..5),
            seed in any::<u32>(),
        ) {
            let tensors = shapes
                .iter()
                .enumerate()
                .map(|(i, dims)| {
                    let n: usize = dims.iter().product();
                    let data = (0..n)
                        .map(|k| f32::from_bits(seed.wrapping_mul(2654435761).wrapping_add(k as u32 * 7919)))
                        .collect();
                    Tensor::new(format!("t{i}"), dims.clone(), data)
                })
                .collect();
            let file = TensorFile { tensors };
            let bytes = file.to_bytes();
            let back = TensorFile::from_bytes(&bytes).unwrap();
            prop_assert_eq!(back.to_bytes(), bytes);
        }
    }
}
