//! Parameter checkpoints.
//!
//! Little-endian layout:
//!
//! ```text
//! magic       8 bytes  "TDAECKPT"
//! version     u32      1
//! meta_len    u32      length of the metadata blob
//! meta        bytes    UTF-8 JSON (the experiment config that produced the weights)
//! count       u32      number of tensors
//! per tensor, in store order:
//!   name_len  u32
//!   name      bytes    UTF-8
//!   rank      u32
//!   dims      u64 × rank
//!   values    f64 × product(dims)
//! ```
//!
//! Values are always written as f64 regardless of the build precision.

use std::io::{self, Read, Write};

use crate::tensorgrad::{ParamStore, Real, Tensor};

pub const MAGIC: &[u8; 8] = b"TDAECKPT";
pub const VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(mut w: W, params: &ParamStore, meta: &str) -> io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(meta.len() as u32).to_le_bytes())?;
    w.write_all(meta.as_bytes())?;
    w.write_all(&(params.len() as u32).to_le_bytes())?;
    for (name, t) in params.iter() {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.rank() as u32).to_le_bytes())?;
        for d in t.shape() {
            w.write_all(&(*d as u64).to_le_bytes())?;
        }
        for v in t.data() {
            w.write_all(&(*v as f64).to_le_bytes())?;
        }
    }
    w.flush()
}

fn u32_of<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn u64_of<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn string_of<R: Read>(r: &mut R, len: usize) -> io::Result<String> {
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}

/// Returns the parameters and the metadata blob.
pub fn read_checkpoint<R: Read>(mut r: R) -> io::Result<(ParamStore, String)> {
    let bad = |m: String| io::Error::new(io::ErrorKind::InvalidData, m);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(bad("not a checkpoint file".into()));
    }
    let version = u32_of(&mut r)?;
    if version != VERSION {
        return Err(bad(format!("unsupported checkpoint version {version}")));
    }
    let meta_len = u32_of(&mut r)? as usize;
    let meta = string_of(&mut r, meta_len)?;
    let count = u32_of(&mut r)?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let name_len = u32_of(&mut r)? as usize;
        let name = string_of(&mut r, name_len)?;
        let rank = u32_of(&mut r)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(u64_of(&mut r)? as usize);
        }
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(f64::from_bits(u64_of(&mut r)?) as Real);
        }
        let t = Tensor::new(&shape, data).map_err(|e| bad(format!("{name}: {e}")))?;
        if store.index_of(&name).is_some() {
            return Err(bad(format!("duplicate tensor {name}")));
        }
        store.push(name, t);
    }
    Ok((store, meta))
}
