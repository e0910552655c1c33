//! Binary image-feature file (little-endian):
//! magic "UPOCFEAT", version u32 = 1, dim u32, count u32;
//! per entry: id length u16, UTF-8 id, dim x f32.

use std::collections::HashMap;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};

pub const FEAT_MAGIC: &[u8; 8] = b"UPOCFEAT";
pub const FEAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Default)]
pub struct FeatureTable {
    pub dim: usize,
    features: HashMap<String, Vec<f32>>,
    order: Vec<String>,
}

impl FeatureTable {
    pub fn new(dim: usize) -> Self {
        FeatureTable {
            dim,
            features: HashMap::new(),
            order: Vec::new(),
        }
    }

    pub fn insert(&mut self, id: &str, vec: Vec<f32>) -> Result<()> {
        if vec.len() != self.dim {
            return Err(Error::contract(format!(
                "feature {id:?} has dim {}, table dim {}",
                vec.len(),
                self.dim
            )));
        }
        if !self.features.contains_key(id) {
            self.order.push(id.to_string());
        }
        self.features.insert(id.to_string(), vec);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.features.get(id).map(|v| v.as_slice())
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

pub fn write_features(table: &FeatureTable, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(FEAT_MAGIC)?;
    w.write_u32::<LittleEndian>(FEAT_VERSION)?;
    w.write_u32::<LittleEndian>(table.dim as u32)?;
    w.write_u32::<LittleEndian>(table.len() as u32)?;
    for id in &table.order {
        let vec = &table.features[id];
        w.write_u16::<LittleEndian>(id.len() as u16)?;
        w.write_all(id.as_bytes())?;
        for &x in vec {
            w.write_f32::<LittleEndian>(x)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_image_features(path: &Path) -> Result<FeatureTable> {
    let mut r = CountingReader::new(BufReader::new(std::fs::File::open(path)?));
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| Error::Format {
        offset: 0,
        what: "truncated magic".into(),
    })?;
    if &magic != FEAT_MAGIC {
        return Err(Error::Format {
            offset: 0,
            what: format!("bad magic {magic:?}"),
        });
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != FEAT_VERSION {
        return Err(Error::Format {
            offset: 8,
            what: format!("unsupported version {version}"),
        });
    }
    let dim = r.read_u32::<LittleEndian>()? as usize;
    let count = r.read_u32::<LittleEndian>()? as usize;
    let mut table = FeatureTable::new(dim);
    for _ in 0..count {
        let at = r.offset;
        let id_len = r.read_u16::<LittleEndian>().map_err(|_| Error::Format {
            offset: at,
            what: "truncated entry header".into(),
        })? as usize;
        let mut id = vec![0u8; id_len];
        r.read_exact(&mut id).map_err(|_| Error::Format {
            offset: at,
            what: "truncated id".into(),
        })?;
        let id = String::from_utf8(id).map_err(|_| Error::Format {
            offset: at,
            what: "id is not UTF-8".into(),
        })?;
        let mut vec = Vec::with_capacity(dim);
        for _ in 0..dim {
            let at = r.offset;
            vec.push(r.read_f32::<LittleEndian>().map_err(|_| Error::Format {
                offset: at,
                what: format!("truncated payload for feature {id:?}"),
            })?);
        }
        table.insert(&id, vec)?;
    }
    Ok(table)
}

struct CountingReader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> CountingReader<R> {
    fn new(inner: R) -> Self {
        CountingReader { inner, offset: 0 }
    }
}

impl<R: Read> Read for CountingReader<R> {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.offset += n as u64;
        Ok(n)
    }
}
