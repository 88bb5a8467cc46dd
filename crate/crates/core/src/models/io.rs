//! Flat little-endian parameter container.
//!
//! Layout: `b"QRMP"`, `u32` version, `u32` block count, then per block a
//! `u32` rank followed by its `u32` dims; after all headers the block
//! values as `f64`, in block order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::mlp::MlpParams;
use crate::error::{Error, Result};
use crate::ndgrad::Tensor;
use crate::scalar::Real;

pub const MAGIC: [u8; 4] = *b"QRMP";
pub const FORMAT_VERSION: u32 = 1;

fn bad(msg: impl Into<String>) -> Error {
    Error::invalid(format!("model container: {}", msg.into()))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|e| bad(format!("truncated header ({e})")))?;
    Ok(u32::from_le_bytes(b))
}

impl<T: Real> MlpParams<T> {
    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(&MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.blocks.len() as u32).to_le_bytes())?;
        for b in &self.blocks {
            w.write_all(&(b.shape().len() as u32).to_le_bytes())?;
            for &d in b.shape() {
                w.write_all(&(d as u32).to_le_bytes())?;
            }
        }
        for b in &self.blocks {
            for v in b.data() {
                w.write_all(&v.as_f64().to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|_| bad("too short"))?;
        if magic != MAGIC {
            return Err(bad("bad magic"));
        }
        let version = read_u32(r)?;
        if version != FORMAT_VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let count = read_u32(r)? as usize;
        if count > 64 {
            return Err(bad(format!("implausible block count {count}")));
        }
        let mut shapes = Vec::with_capacity(count);
        for _ in 0..count {
            let rank = read_u32(r)? as usize;
            if rank > 4 {
                return Err(bad(format!("implausible rank {rank}")));
            }
            shapes.push((0..rank).map(|_| read_u32(r).map(|d| d as usize)).collect::<Result<Vec<_>>>()?);
        }
        let mut blocks = Vec::with_capacity(count);
        for shape in shapes {
            let len: usize = shape.iter().product();
            let mut raw = vec![0u8; len * 8];
            r.read_exact(&mut raw).map_err(|_| bad("truncated values"))?;
            let data = raw
                .chunks_exact(8)
                .map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
                .collect();
            blocks.push(Tensor::new(shape, data)?);
        }
        let mut extra = [0u8; 1];
        if r.read(&mut extra).map_err(|e| bad(e.to_string()))? != 0 {
            return Err(bad("trailing bytes"));
        }
        MlpParams::from_blocks(blocks)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let io = |source| Error::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        self.write_to(&mut w).map_err(io)?;
        w.flush().map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        MlpParams::read_from(&mut BufReader::new(f)).map_err(|e| Error::Data {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })
    }
}
