use std::io::{Read, Write};

use ndarray::Array3;

use super::{checked_len, expect_eof, push_f32s, read_f32s, read_f64, read_magic, read_u32};
use crate::error::{QuoptError, Result};

pub const QVOL_VERSION: u32 = 1;

/// Writes a `[nz, ny, nx]` volume.
pub fn write_qvol<W: Write>(w: &mut W, data: &Array3<f64>, pitch: f64) -> Result<()> {
    let (nz, ny, nx) = data.dim();
    let mut buf = Vec::with_capacity(28 + data.len() * 4);
    buf.extend_from_slice(b"QVOL");
    buf.extend_from_slice(&QVOL_VERSION.to_le_bytes());
    for d in [nx, ny, nz] {
        let d = u32::try_from(d).map_err(|_| QuoptError::Format(format!("dimension {d} exceeds u32")))?;
        buf.extend_from_slice(&d.to_le_bytes());
    }
    buf.extend_from_slice(&pitch.to_le_bytes());
    // standard layout iterates x fastest
    push_f32s(&mut buf, data.iter());
    w.write_all(&buf)?;
    Ok(())
}

/// Reads a volume as `([nz, ny, nx] data, pitch)`.
pub fn read_qvol<R: Read>(r: &mut R) -> Result<(Array3<f64>, f64)> {
    read_magic(r, b"QVOL")?;
    let version = read_u32(r)?;
    if version != QVOL_VERSION {
        return Err(QuoptError::Format(format!("unsupported QVOL version {version}")));
    }
    let nx = read_u32(r)? as usize;
    let ny = read_u32(r)? as usize;
    let nz = read_u32(r)? as usize;
    let pitch = read_f64(r)?;
    let len = checked_len(&[nx, ny, nz])?;
    let values = read_f32s(r, len)?;
    expect_eof(r)?;
    let data = Array3::from_shape_vec((nz, ny, nx), values)
        .map_err(|e| QuoptError::Format(e.to_string()))?;
    Ok((data, pitch))
}
