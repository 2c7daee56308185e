//! Binary file formats.
//!
//! * QVOL: `"QVOL"`, u32 version, u32 nx, ny, nz, f64 pitch (mm), then f32
//!   voxels with x fastest. All little-endian.
//! * QSTK: `"QSTK"`, u32 version, u32 M, rows, cols, f64 angle (rad), u32
//!   byte length of a `key=value` text block holding the scan config, the
//!   block, then f32 counts with the phase step slowest.
//! * PFM (grayscale `Pf`, little-endian, scale −1.0) and 8-bit binary PGM.

mod netpbm;
mod qstk;
mod qvol;

use std::io::{self, Read};

pub use netpbm::{read_pfm, read_pgm, write_pfm, write_pgm, write_pgm_preview};
pub use qstk::{read_qstk, write_qstk, QSTK_VERSION};
pub use qvol::{read_qvol, write_qvol, QVOL_VERSION};

use crate::error::{QuoptError, Result};

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0; 8];
    read_exact(r, &mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub(crate) fn read_magic<R: Read>(r: &mut R, magic: &[u8; 4]) -> Result<()> {
    let mut b = [0; 4];
    read_exact(r, &mut b)?;
    if &b != magic {
        return Err(QuoptError::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&b),
            String::from_utf8_lossy(magic)
        )));
    }
    Ok(())
}

/// Reads `count` little-endian f32 values, widened to f64.
pub(crate) fn read_f32s<R: Read>(r: &mut R, count: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0; count * 4];
    read_exact(r, &mut bytes)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

pub(crate) fn push_f32s<'a, I: IntoIterator<Item = &'a f64>>(buf: &mut Vec<u8>, values: I) {
    for v in values {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => QuoptError::Format("unexpected end of file".into()),
        _ => QuoptError::Io(e),
    })
}

pub(crate) fn expect_eof<R: Read>(r: &mut R) -> Result<()> {
    let mut b = [0; 1];
    match r.read(&mut b)? {
        0 => Ok(()),
        _ => Err(QuoptError::Format("trailing bytes after payload".into())),
    }
}

/// Guards allocations driven by header fields.
pub(crate) fn checked_len(dims: &[usize]) -> Result<usize> {
    const MAX_ELEMENTS: usize = 1 << 31;
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .filter(|n| *n <= MAX_ELEMENTS)
        .ok_or_else(|| QuoptError::Format(format!("implausible dimensions {dims:?}")))
}
