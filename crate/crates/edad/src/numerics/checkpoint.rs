//! Checkpoint serialization.
//!
//! Layout: the ASCII magic `EDADCKPT1`, then one record per named tensor in
//! ascending name order. A record is: name length (u64 LE), name bytes
//! (UTF-8), rank (u64 LE), one extent per rank dimension (u64 LE each), then
//! the values as f64 LE in row-major order. The reader rejects an unknown
//! magic and any trailing bytes that do not form a complete record.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::{Error, Result};

use super::tensor::Tensor;
use super::Real;

pub const MAGIC: &[u8; 9] = b"EDADCKPT1";

pub fn save(path: &Path, tensors: &BTreeMap<String, Tensor>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    for (name, t) in tensors {
        let bytes = name.as_bytes();
        w.write_all(&(bytes.len() as u64).to_le_bytes())?;
        w.write_all(bytes)?;
        w.write_all(&(t.shape().len() as u64).to_le_bytes())?;
        for &e in t.shape() {
            w.write_all(&(e as u64).to_le_bytes())?;
        }
        for &v in t.data() {
            w.write_all(&(v as f64).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<BTreeMap<String, Tensor>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 9];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Checkpoint("file too short for magic".into()))?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("unknown magic".into()));
    }

    let mut out = BTreeMap::new();
    loop {
        let mut len8 = [0u8; 8];
        match r.read(&mut len8)? {
            0 => break, // clean EOF at a record boundary
            8 => {}
            n => {
                // A short read may still be a split buffer; try to finish it.
                let mut rest = len8;
                if r.read_exact(&mut rest[n..]).is_err() {
                    return Err(Error::Checkpoint("trailing bytes".into()));
                }
                len8 = rest;
            }
        }
        let name_len = u64::from_le_bytes(len8) as usize;
        let mut name_bytes = vec![0u8; name_len];
        r.read_exact(&mut name_bytes)
            .map_err(|_| Error::Checkpoint("trailing bytes".into()))?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| Error::Checkpoint("parameter name is not UTF-8".into()))?;

        let rank = read_u64(&mut r)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u64(&mut r)? as usize);
        }
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        for _ in 0..numel {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)
                .map_err(|_| Error::Checkpoint("trailing bytes".into()))?;
            data.push(f64::from_le_bytes(b) as Real);
        }
        let t = Tensor::new(shape, data)
            .map_err(|e| Error::Checkpoint(format!("bad record '{name}': {e}")))?;
        out.insert(name, t);
    }
    Ok(out)
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)
        .map_err(|_| Error::Checkpoint("trailing bytes".into()))?;
    Ok(u64::from_le_bytes(b))
}
