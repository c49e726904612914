//! Binary tensor container.
//!
//! Layout (all little-endian):
//! - magic `DWT1` (4 bytes)
//! - entry count: u32
//! - per entry: name length u16, UTF-8 name, dtype u8 (0 = f32, 1 = f64),
//!   ndim u8, dims as u32 each, then the row-major payload
//!
//! Round trips are bitwise: read(write(c)) reproduces the file exactly.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const CONTAINER_MAGIC: [u8; 4] = *b"DWT1";

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl TensorData {
    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Values widened to f64 regardless of storage type.
    pub fn to_f64(&self) -> Vec<f64> {
        match self {
            TensorData::F32(v) => v.iter().map(|&x| x as f64).collect(),
            TensorData::F64(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContainerEntry {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: TensorData,
}

impl ContainerEntry {
    pub fn to_tensor(&self) -> Tensor {
        Tensor { dims: self.dims.clone(), data: self.data.to_f64() }
    }
}

/// Ordered collection of named tensors; order is preserved on disk.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TensorContainer {
    pub entries: Vec<ContainerEntry>,
}

impl TensorContainer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push_f64(&mut self, name: impl Into<String>, dims: &[usize], data: Vec<f64>) -> Result<()> {
        let expect: usize = dims.iter().product();
        if data.len() != expect {
            return Err(Error::invalid_argument(format!(
                "entry data length {} does not match dims {dims:?}",
                data.len()
            )));
        }
        self.entries.push(ContainerEntry {
            name: name.into(),
            dims: dims.to_vec(),
            data: TensorData::F64(data),
        });
        Ok(())
    }

    pub fn push_f32(&mut self, name: impl Into<String>, dims: &[usize], data: Vec<f32>) -> Result<()> {
        let expect: usize = dims.iter().product();
        if data.len() != expect {
            return Err(Error::invalid_argument(format!(
                "entry data length {} does not match dims {dims:?}",
                data.len()
            )));
        }
        self.entries.push(ContainerEntry {
            name: name.into(),
            dims: dims.to_vec(),
            data: TensorData::F32(data),
        });
        Ok(())
    }

    pub fn push_tensor(&mut self, name: impl Into<String>, tensor: &Tensor) -> Result<()> {
        self.push_f64(name, &tensor.dims, tensor.data.clone())
    }

    pub fn get(&self, name: &str) -> Option<&ContainerEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn require(&self, name: &str) -> Result<&ContainerEntry> {
        self.get(name)
            .ok_or_else(|| Error::IncompatibleCheckpoint(format!("missing entry {name}")))
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(&CONTAINER_MAGIC)?;
        let count = u32::try_from(self.entries.len())
            .map_err(|_| Error::invalid_argument("too many entries"))?;
        w.write_all(&count.to_le_bytes())?;
        for entry in &self.entries {
            let name_bytes = entry.name.as_bytes();
            let name_len = u16::try_from(name_bytes.len())
                .map_err(|_| Error::invalid_argument(format!("name too long: {}", entry.name)))?;
            w.write_all(&name_len.to_le_bytes())?;
            w.write_all(name_bytes)?;
            let dtype: u8 = match entry.data {
                TensorData::F32(_) => 0,
                TensorData::F64(_) => 1,
            };
            w.write_all(&[dtype])?;
            let ndim = u8::try_from(entry.dims.len())
                .map_err(|_| Error::invalid_argument("too many dimensions"))?;
            w.write_all(&[ndim])?;
            let mut expect: usize = 1;
            for &d in &entry.dims {
                let d32 = u32::try_from(d)
                    .map_err(|_| Error::invalid_argument("dimension too large"))?;
                w.write_all(&d32.to_le_bytes())?;
                expect = expect.saturating_mul(d);
            }
            if entry.data.len() != expect {
                return Err(Error::invalid_argument(format!(
                    "entry {} payload does not match dims",
                    entry.name
                )));
            }
            match &entry.data {
                TensorData::F32(v) => {
                    for x in v {
                        w.write_all(&x.to_le_bytes())?;
                    }
                }
                TensorData::F64(v) => {
                    for x in v {
                        w.write_all(&x.to_le_bytes())?;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic)?;
        if magic != CONTAINER_MAGIC {
            return Err(Error::Parse(format!(
                "bad container magic {magic:?}, expected {CONTAINER_MAGIC:?}"
            )));
        }
        let count = read_u32(&mut r)? as usize;
        let mut entries = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let name_len = read_u16(&mut r)? as usize;
            let mut name_buf = vec![0u8; name_len];
            read_exact(&mut r, &mut name_buf)?;
            let name = String::from_utf8(name_buf)
                .map_err(|_| Error::Parse("entry name is not UTF-8".into()))?;
            let mut small = [0u8; 2];
            read_exact(&mut r, &mut small)?;
            let (dtype, ndim) = (small[0], small[1] as usize);
            let mut dims = Vec::with_capacity(ndim);
            let mut len: usize = 1;
            for _ in 0..ndim {
                let d = read_u32(&mut r)? as usize;
                dims.push(d);
                len = len.saturating_mul(d);
            }
            let data = match dtype {
                0 => {
                    let mut buf = vec![0u8; len * 4];
                    read_exact(&mut r, &mut buf)?;
                    TensorData::F32(
                        buf.chunks_exact(4)
                            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                            .collect(),
                    )
                }
                1 => {
                    let mut buf = vec![0u8; len * 8];
                    read_exact(&mut r, &mut buf)?;
                    TensorData::F64(
                        buf.chunks_exact(8)
                            .map(|c| {
                                f64::from_le_bytes([
                                    c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7],
                                ])
                            })
                            .collect(),
                    )
                }
                other => {
                    return Err(Error::Parse(format!("unknown dtype {other} in entry {name}")))
                }
            };
            entries.push(ContainerEntry { name, dims, data });
        }
        Ok(TensorContainer { entries })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = File::create(path)?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = File::open(path)?;
        Self::read_from(BufReader::new(file))
    }
}

fn read_exact(r: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|e| Error::Parse(format!("truncated container: {e}")))
}

fn read_u16(r: &mut impl Read) -> Result<u16> {
    let mut b = [0u8; 2];
    read_exact(r, &mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}
