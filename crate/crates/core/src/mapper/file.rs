//! `FSMP` mapper parameter files.
//!
//! Layout (little-endian): magic `FSMP`, version `u32`, `in_dim`, `hidden_dim`,
//! `out_dim` as `u32`, then `w1`, `b1`, `w2`, `b2` as `f64`.

use std::fs;
use std::path::Path;

use super::mlp::MapperParams;
use crate::binfmt::{put_f64s, put_u32, ByteReader};
use crate::error::{Error, Result};

pub const MAPPER_MAGIC: &[u8; 4] = b"FSMP";
pub const MAPPER_VERSION: u32 = 1;

pub fn encode_mapper(params: &MapperParams) -> Result<Vec<u8>> {
    params.validate()?;
    let mut out = Vec::with_capacity(20 + 8 * params.len());
    out.extend_from_slice(MAPPER_MAGIC);
    out.extend_from_slice(&MAPPER_VERSION.to_le_bytes());
    put_u32(&mut out, params.in_dim)?;
    put_u32(&mut out, params.hidden_dim)?;
    put_u32(&mut out, params.out_dim)?;
    put_f64s(&mut out, &params.w1);
    put_f64s(&mut out, &params.b1);
    put_f64s(&mut out, &params.w2);
    put_f64s(&mut out, &params.b2);
    Ok(out)
}

pub fn decode_mapper(bytes: &[u8]) -> Result<MapperParams> {
    let mut r = ByteReader::new(bytes);
    if r.take(4)? != MAPPER_MAGIC {
        return Err(Error::Format("bad magic, expected FSMP".into()));
    }
    let version = r.u32()?;
    if version != MAPPER_VERSION {
        return Err(Error::Format(format!("unsupported FSMP version {version}")));
    }
    let in_dim = r.u32()? as usize;
    let hidden_dim = r.u32()? as usize;
    let out_dim = r.u32()? as usize;
    let params = MapperParams {
        in_dim,
        hidden_dim,
        out_dim,
        w1: r.f64s(hidden_dim * in_dim)?,
        b1: r.f64s(hidden_dim)?,
        w2: r.f64s(out_dim * hidden_dim)?,
        b2: r.f64s(out_dim)?,
    };
    r.expect_end()?;
    params.validate()?;
    Ok(params)
}

pub fn write_mapper(params: &MapperParams, path: &Path) -> Result<()> {
    let bytes = encode_mapper(params)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_mapper(path: &Path) -> Result<MapperParams> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_mapper(&bytes)
}
