//! Binary table dumps. Records are written in key order so two checkpoints
//! with equal contents are byte-identical.
//!
//! `GPRP`: magic, `u32 version`, `u32 N`, `u32 L`, `L × u32 K_l`, `N × f64`
//! head weights, `u64 records`, then per record `u16 head`, `u8 level`,
//! `u32 bucket`, `u8 prefix_len`, prefix codes as `u32`, `K_level × f64`.
//!
//! `GPRV`: magic, `u32 version`, `u64 records`, then per record `u8 level`,
//! `u32 bucket`, `u8 prefix_len`, prefix codes, `f64 value`.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{DecisionKey, PolicyParams, ValueKey, ValueParams};
use crate::error::{GprError, Result};

const POLICY_MAGIC: &[u8; 4] = b"GPRP";
const VALUE_MAGIC: &[u8; 4] = b"GPRV";
const VERSION: u32 = 1;

fn header<R: Read>(r: &mut R, magic: &[u8; 4]) -> Result<()> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    if &buf != magic {
        return Err(GprError::Format(format!("bad checkpoint magic {:?}", String::from_utf8_lossy(&buf))));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(GprError::Format(format!("unsupported checkpoint version {version}")));
    }
    Ok(())
}

fn write_prefix<W: Write>(w: &mut W, prefix: &[u32]) -> Result<()> {
    w.write_u8(prefix.len() as u8)?;
    for &c in prefix {
        w.write_u32::<LittleEndian>(c)?;
    }
    Ok(())
}

fn read_prefix<R: Read>(r: &mut R) -> Result<Vec<u32>> {
    let n = r.read_u8()? as usize;
    (0..n).map(|_| Ok(r.read_u32::<LittleEndian>()?)).collect()
}

pub fn write_policy<W: Write>(params: &PolicyParams, mut w: W) -> Result<()> {
    w.write_all(POLICY_MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_u32::<LittleEndian>(params.num_heads() as u32)?;
    w.write_u32::<LittleEndian>(params.num_levels() as u32)?;
    for &k in params.level_sizes() {
        w.write_u32::<LittleEndian>(k as u32)?;
    }
    for &hw in params.head_weights() {
        w.write_f64::<LittleEndian>(hw)?;
    }
    w.write_u64::<LittleEndian>(params.num_entries() as u64)?;
    for (key, row) in params.entries() {
        w.write_u16::<LittleEndian>(key.head)?;
        w.write_u8(key.level)?;
        w.write_u32::<LittleEndian>(key.bucket)?;
        write_prefix(&mut w, &key.prefix)?;
        for &v in row {
            w.write_f64::<LittleEndian>(v)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_policy<R: Read>(mut r: R) -> Result<PolicyParams> {
    header(&mut r, POLICY_MAGIC)?;
    let n = r.read_u32::<LittleEndian>()? as usize;
    let l = r.read_u32::<LittleEndian>()? as usize;
    let sizes = (0..l)
        .map(|_| Ok(r.read_u32::<LittleEndian>()? as usize))
        .collect::<Result<Vec<_>>>()?;
    let mut params = PolicyParams::new(n, sizes.clone())?;
    let weights = (0..n)
        .map(|_| Ok(r.read_f64::<LittleEndian>()?))
        .collect::<Result<Vec<_>>>()?;
    params.set_head_weights(&weights)?;
    let records = r.read_u64::<LittleEndian>()?;
    for _ in 0..records {
        let head = r.read_u16::<LittleEndian>()?;
        let level = r.read_u8()?;
        let bucket = r.read_u32::<LittleEndian>()?;
        let prefix = read_prefix(&mut r)?;
        let k = *sizes
            .get(usize::from(level))
            .ok_or_else(|| GprError::Format(format!("record level {level} out of range")))?;
        let row = (0..k)
            .map(|_| Ok(r.read_f64::<LittleEndian>()?))
            .collect::<Result<Vec<_>>>()?;
        params.set_logits(DecisionKey { head, level, bucket, prefix }, row)?;
    }
    Ok(params)
}

pub fn write_value<W: Write>(vparams: &ValueParams, mut w: W) -> Result<()> {
    w.write_all(VALUE_MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_u64::<LittleEndian>(vparams.len() as u64)?;
    for (key, &v) in vparams.entries() {
        w.write_u8(key.level)?;
        w.write_u32::<LittleEndian>(key.bucket)?;
        write_prefix(&mut w, &key.prefix)?;
        w.write_f64::<LittleEndian>(v)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_value<R: Read>(mut r: R) -> Result<ValueParams> {
    header(&mut r, VALUE_MAGIC)?;
    let records = r.read_u64::<LittleEndian>()?;
    let mut out = ValueParams::new();
    for _ in 0..records {
        let level = r.read_u8()?;
        let bucket = r.read_u32::<LittleEndian>()?;
        let prefix = read_prefix(&mut r)?;
        let v = r.read_f64::<LittleEndian>()?;
        out.set(ValueKey { level, bucket, prefix }, v)?;
    }
    Ok(out)
}
