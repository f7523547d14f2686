//! `DIMT` binary tensor files.
//!
//! Layout: magic `DIMT`, version byte (1), dtype byte (1 = f32, 2 = f64),
//! rank byte, `rank` little-endian `u32` extents, then the row-major
//! little-endian scalars.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{DType, Tensor};
use crate::{Error, Result};

const MAGIC: [u8; 4] = *b"DIMT";
const VERSION: u8 = 1;

pub fn write_dimt(t: &Tensor, mut w: impl Write) -> Result<()> {
    if t.rank() > u8::MAX as usize {
        return Err(Error::Format("rank exceeds 255".into()));
    }
    w.write_all(&MAGIC)?;
    w.write_all(&[VERSION, t.dtype().code(), t.rank() as u8])?;
    for &d in t.shape() {
        let d = u32::try_from(d).map_err(|_| Error::Format(format!("extent {d} exceeds u32")))?;
        w.write_all(&d.to_le_bytes())?;
    }
    match t.dtype() {
        DType::F32 => {
            for &v in t.data() {
                w.write_all(&(v as f32).to_le_bytes())?;
            }
        }
        DType::F64 => {
            for &v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

pub fn read_dimt(mut r: impl Read) -> Result<Tensor> {
    let mut head = [0u8; 7];
    r.read_exact(&mut head)?;
    if head[..4] != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    if head[4] != VERSION {
        return Err(Error::Format(format!("unsupported version {}", head[4])));
    }
    let dtype = DType::from_code(head[5]).ok_or_else(|| Error::Format(format!("unknown dtype code {}", head[5])))?;
    let rank = head[6] as usize;
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        let mut b = [0u8; 4];
        r.read_exact(&mut b)?;
        shape.push(u32::from_le_bytes(b) as usize);
    }
    let numel: usize = shape.iter().product();
    let mut data = Vec::with_capacity(numel);
    match dtype {
        DType::F32 => {
            let mut b = [0u8; 4];
            for _ in 0..numel {
                r.read_exact(&mut b)?;
                data.push(f32::from_le_bytes(b) as f64);
            }
        }
        DType::F64 => {
            let mut b = [0u8; 8];
            for _ in 0..numel {
                r.read_exact(&mut b)?;
                data.push(f64::from_le_bytes(b));
            }
        }
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after tensor data".into()));
    }
    Ok(Tensor::new(&shape, data)?.to_dtype(dtype))
}

pub fn write_dimt_file(t: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_dimt(t, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_dimt_file(path: impl AsRef<Path>) -> Result<Tensor> {
    read_dimt(BufReader::new(File::open(path)?))
}
