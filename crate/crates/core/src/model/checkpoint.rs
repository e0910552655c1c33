//! Checkpoint container: named arrays.
//!
//! Layout (little-endian): magic "UPOC2CKP", version u32, count u32;
//! per entry: name length u32, UTF-8 name, rank u32, dims u32[], payload.
//! Version 1 stores f32 payloads (the interchange format); version 2
//! stores f64 payloads and is used where bit-exact 64-bit resumption is
//! required.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};

pub const CKPT_MAGIC: &[u8; 8] = b"UPOC2CKP";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CkptPrecision {
    F32,
    F64,
}

impl CkptPrecision {
    fn version(self) -> u32 {
        match self {
            CkptPrecision::F32 => 1,
            CkptPrecision::F64 => 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

pub fn save_arrays(arrays: &[NamedArray], path: &Path, precision: CkptPrecision) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(CKPT_MAGIC)?;
    w.write_u32::<LittleEndian>(precision.version())?;
    w.write_u32::<LittleEndian>(arrays.len() as u32)?;
    for a in arrays {
        w.write_u32::<LittleEndian>(a.name.len() as u32)?;
        w.write_all(a.name.as_bytes())?;
        w.write_u32::<LittleEndian>(a.shape.len() as u32)?;
        for &d in &a.shape {
            w.write_u32::<LittleEndian>(d as u32)?;
        }
        match precision {
            CkptPrecision::F32 => {
                for &x in &a.data {
                    w.write_f32::<LittleEndian>(x as f32)?;
                }
            }
            CkptPrecision::F64 => {
                for &x in &a.data {
                    w.write_f64::<LittleEndian>(x)?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_arrays(path: &Path) -> Result<Vec<NamedArray>> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != CKPT_MAGIC {
        return Err(Error::Format {
            offset: 0,
            what: format!("bad checkpoint magic {magic:?}"),
        });
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != 1 && version != 2 {
        return Err(Error::Format {
            offset: 8,
            what: format!("unsupported checkpoint version {version}"),
        });
    }
    let count = r.read_u32::<LittleEndian>()? as usize;
    let mut arrays = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = r.read_u32::<LittleEndian>()? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| Error::Format {
            offset: 0,
            what: "checkpoint entry name is not UTF-8".into(),
        })?;
        let rank = r.read_u32::<LittleEndian>()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.read_u32::<LittleEndian>()? as usize);
        }
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(match version {
                1 => r.read_f32::<LittleEndian>()? as f64,
                _ => r.read_f64::<LittleEndian>()?,
            });
        }
        arrays.push(NamedArray { name, shape, data });
    }
    Ok(arrays)
}
