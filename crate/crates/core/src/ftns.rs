//! FTNS binary tensor files.
//!
//! Layout (little-endian): `b"FTNS"`, version `1`, dtype `1` (f64), ndim
//! (1..=4), one reserved zero byte, `ndim` u32 dims, then the row-major
//! f64 values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{format_err, Result};
use crate::tensor::{Tensor, MAX_AXES};

pub const MAGIC: &[u8; 4] = b"FTNS";
pub const VERSION: u8 = 1;
pub const DTYPE_F64: u8 = 1;

pub fn encode(t: &Tensor, out: &mut impl Write) -> Result<()> {
    let mut header = Vec::with_capacity(8 + 4 * t.dims().len());
    header.extend_from_slice(MAGIC);
    header.extend_from_slice(&[VERSION, DTYPE_F64, t.dims().len() as u8, 0]);
    for &d in t.dims() {
        let d = u32::try_from(d).map_err(|_| format_err(format!("dimension {d} exceeds u32")))?;
        header.extend_from_slice(&d.to_le_bytes());
    }
    out.write_all(&header)?;
    let mut body = Vec::with_capacity(8 * t.len());
    for v in t.as_slice() {
        body.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&body)?;
    Ok(())
}

fn read_exact_or(input: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    input.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            format_err(format!("truncated FTNS data ({what})"))
        } else {
            e.into()
        }
    })
}

pub fn decode(input: &mut impl Read) -> Result<Tensor> {
    let mut head = [0u8; 8];
    read_exact_or(input, &mut head, "header")?;
    if &head[0..4] != MAGIC {
        return Err(format_err("bad magic, not an FTNS tensor"));
    }
    if head[4] != VERSION {
        return Err(format_err(format!("unsupported FTNS version {}", head[4])));
    }
    if head[5] != DTYPE_F64 {
        return Err(format_err(format!("unsupported FTNS dtype {}", head[5])));
    }
    let ndim = head[6] as usize;
    if ndim == 0 || ndim > MAX_AXES {
        return Err(format_err(format!("invalid FTNS ndim {ndim}")));
    }
    if head[7] != 0 {
        return Err(format_err("reserved FTNS byte must be zero"));
    }
    let mut dims = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        let mut d = [0u8; 4];
        read_exact_or(input, &mut d, "dims")?;
        dims.push(u32::from_le_bytes(d) as usize);
    }
    let len: usize = dims.iter().product();
    if len == 0 {
        return Err(format_err("FTNS tensor has a zero dimension"));
    }
    let mut body = vec![0u8; len * 8];
    read_exact_or(input, &mut body, "values")?;
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Tensor::from_vec(&dims, data).map_err(|e| format_err(e.to_string()))
}

pub fn write_tensor(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    encode(t, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let mut r = BufReader::new(File::open(path)?);
    let t = decode(&mut r)?;
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(format_err("trailing bytes after FTNS tensor"));
    }
    Ok(t)
}
