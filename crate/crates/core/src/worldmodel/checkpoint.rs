//! Flat binary parameter container.
//!
//! All integers and floats are little-endian:
//!
//! ```text
//! magic        8 bytes  "BLWMCKPT"
//! version      u32      1
//! fingerprint  32 bytes SHA-256 of the model configuration
//! count        u32      number of arrays
//! per array:
//!   name_len   u32, name (UTF-8, name_len bytes)
//!   ndim       u32, dims (u64 each)
//!   values     f64 × product(dims)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::{ParamStore, Tensor};

const MAGIC: &[u8; 8] = b"BLWMCKPT";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub fingerprint: [u8; 32],
    pub arrays: Vec<(String, Tensor)>,
}

impl Checkpoint {
    /// Arrays of each store, named `"{prefix}/{parameter}"`.
    pub fn from_stores(fingerprint: [u8; 32], stores: &[(&str, &ParamStore)]) -> Self {
        let arrays = stores
            .iter()
            .flat_map(|(prefix, s)| s.iter().map(move |(n, t)| (format!("{prefix}/{n}"), t.clone())))
            .collect();
        Self { fingerprint, arrays }
    }

    /// Copy the arrays under `prefix` back into `store`, which must have
    /// exactly the same names and shapes.
    pub fn restore(&self, prefix: &str, store: &mut ParamStore) -> Result<()> {
        let lead = format!("{prefix}/");
        let mine: Vec<&(String, Tensor)> = self.arrays.iter().filter(|(n, _)| n.starts_with(&lead)).collect();
        if mine.len() != store.len() {
            return Err(Error::Format(format!(
                "checkpoint holds {} arrays under `{prefix}`, store expects {}",
                mine.len(),
                store.len()
            )));
        }
        for (name, t) in mine {
            let short = &name[lead.len()..];
            let id = store.id_of(short).ok_or_else(|| Error::Format(format!("unexpected array {name}")))?;
            if store.get(id).shape() != t.shape() {
                return Err(Error::Format(format!("shape mismatch for {name}")));
            }
            *store.get_mut(id) = t.clone();
        }
        Ok(())
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&self.fingerprint)?;
        w.write_all(&(self.arrays.len() as u32).to_le_bytes())?;
        for (name, t) in &self.arrays {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
            for &d in t.shape() {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let mut fingerprint = [0u8; 32];
        r.read_exact(&mut fingerprint)?;
        let count = read_u32(&mut r)? as usize;
        let mut arrays = Vec::with_capacity(count);
        for _ in 0..count {
            let len = read_u32(&mut r)? as usize;
            let mut name = vec![0u8; len];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name).map_err(|_| Error::Format("array name is not UTF-8".into()))?;
            let ndim = read_u32(&mut r)? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                let mut b = [0u8; 8];
                r.read_exact(&mut b)?;
                shape.push(u64::from_le_bytes(b) as usize);
            }
            if shape.is_empty() || shape.contains(&0) {
                return Err(Error::Format(format!("invalid shape for {name}")));
            }
            let n: usize = shape.iter().product();
            let mut data = Vec::with_capacity(n);
            let mut b = [0u8; 8];
            for _ in 0..n {
                r.read_exact(&mut b)?;
                data.push(f64::from_le_bytes(b));
            }
            arrays.push((name, Tensor::new(shape, data)));
        }
        Ok(Self { fingerprint, arrays })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}
