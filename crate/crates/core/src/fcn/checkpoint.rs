//! Binary parameter files.
//!
//! Layout (little-endian): the 10-byte magic `LCFCNCKPT1`, then `u32` input
//! channels, `u32` classes and `u32` layer count. Each layer is a `u32` stride
//! followed by two arrays (weights `[out, in, k, k]`, biases `[out]`). An array
//! is a `u32` rank, one `u64` per dimension, then the `f64` values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::layers::Conv;
use super::net::FcnParams;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 10] = b"LCFCNCKPT1";

const MAX_ELEMENTS: u64 = 1 << 28;

fn write_array<W: Write>(w: &mut W, dims: &[usize], values: &[f64]) -> Result<()> {
    w.write_u32::<LittleEndian>(dims.len() as u32)?;
    for &d in dims {
        w.write_u64::<LittleEndian>(d as u64)?;
    }
    for &v in values {
        w.write_f64::<LittleEndian>(v)?;
    }
    Ok(())
}

fn read_array<R: Read>(r: &mut R) -> Result<(Vec<usize>, Vec<f64>)> {
    let rank = r.read_u32::<LittleEndian>()?;
    if rank > 8 {
        return Err(Error::Checkpoint(format!("array rank {rank}")));
    }
    let mut dims = Vec::with_capacity(rank as usize);
    let mut total = 1u64;
    for _ in 0..rank {
        let d = r.read_u64::<LittleEndian>()?;
        total = total.saturating_mul(d);
        dims.push(d as usize);
    }
    if total > MAX_ELEMENTS {
        return Err(Error::Checkpoint(format!("array of {total} elements")));
    }
    let mut values = vec![0.0; total as usize];
    r.read_f64_into::<LittleEndian>(&mut values)?;
    Ok((dims, values))
}

pub fn write_checkpoint<W: Write>(w: &mut W, params: &FcnParams) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(params.in_channels as u32)?;
    w.write_u32::<LittleEndian>(params.classes as u32)?;
    w.write_u32::<LittleEndian>(params.layers.len() as u32)?;
    for l in &params.layers {
        w.write_u32::<LittleEndian>(l.stride as u32)?;
        write_array(w, &[l.out_channels, l.in_channels, l.kernel, l.kernel], &l.weight)?;
        write_array(w, &[l.out_channels], &l.bias)?;
    }
    Ok(())
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Checkpoint("file is truncated".into())
    } else {
        Error::Io(e)
    }
}

pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<FcnParams> {
    let mut magic = [0u8; 10];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic header".into()));
    }
    let io = |e: Error| match e {
        Error::Io(e) => truncated(e),
        e => e,
    };
    let in_channels = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
    let classes = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
    let count = r.read_u32::<LittleEndian>().map_err(truncated)?;
    if count > 64 {
        return Err(Error::Checkpoint(format!("{count} layers")));
    }
    let mut layers = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let stride = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
        let (wd, weight) = read_array(r).map_err(io)?;
        let (bd, bias) = read_array(r).map_err(io)?;
        if wd.len() != 4 || wd[2] != wd[3] || bd != [wd[0]] || stride == 0 {
            return Err(Error::Checkpoint(format!("bad layer shape {wd:?} / {bd:?}")));
        }
        layers.push(Conv {
            in_channels: wd[1],
            out_channels: wd[0],
            kernel: wd[2],
            stride,
            weight,
            bias,
        });
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    let params = FcnParams::from_layers(layers).map_err(|e| Error::Checkpoint(e.to_string()))?;
    if params.in_channels != in_channels || params.classes != classes {
        return Err(Error::Checkpoint("header disagrees with layer shapes".into()));
    }
    Ok(params)
}

pub fn save_checkpoint(path: &Path, params: &FcnParams) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(&mut w, params)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<FcnParams> {
    read_checkpoint(&mut BufReader::new(File::open(path)?))
}
