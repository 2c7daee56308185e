use std::io::{Read, Write};

use ndarray::Array3;

use super::{checked_len, expect_eof, push_f32s, read_f32s, read_f64, read_magic, read_u32};
use crate::config::{parse_key_values, scan_config_from_pairs, scan_config_pairs};
use crate::error::{QuoptError, Result};
use crate::interferometer::FringeStack;

pub const QSTK_VERSION: u32 = 1;

/// Key carrying the camera pixel pitch in the config block.
const PIXEL_PITCH_KEY: &str = "pixel_pitch_mm";

/// Writes a fringe stack. Ground truth is not stored.
pub fn write_qstk<W: Write>(w: &mut W, stack: &FringeStack) -> Result<()> {
    let (m, rows, cols) = stack.counts.dim();
    let mut block = String::new();
    for (k, v) in scan_config_pairs(&stack.config) {
        block.push_str(&format!("{k}={v}\n"));
    }
    block.push_str(&format!("{PIXEL_PITCH_KEY}={:?}\n", stack.pixel_pitch));

    let mut buf = Vec::with_capacity(40 + block.len() + stack.counts.len() * 4);
    buf.extend_from_slice(b"QSTK");
    buf.extend_from_slice(&QSTK_VERSION.to_le_bytes());
    for d in [m, rows, cols] {
        let d = u32::try_from(d).map_err(|_| QuoptError::Format(format!("dimension {d} exceeds u32")))?;
        buf.extend_from_slice(&d.to_le_bytes());
    }
    buf.extend_from_slice(&stack.angle.to_le_bytes());
    buf.extend_from_slice(&(block.len() as u32).to_le_bytes());
    buf.extend_from_slice(block.as_bytes());
    push_f32s(&mut buf, stack.counts.iter());
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_qstk<R: Read>(r: &mut R) -> Result<FringeStack> {
    read_magic(r, b"QSTK")?;
    let version = read_u32(r)?;
    if version != QSTK_VERSION {
        return Err(QuoptError::Format(format!("unsupported QSTK version {version}")));
    }
    let m = read_u32(r)? as usize;
    let rows = read_u32(r)? as usize;
    let cols = read_u32(r)? as usize;
    let angle = read_f64(r)?;
    let block_len = read_u32(r)? as usize;
    checked_len(&[block_len])?;
    let mut block = vec![0; block_len];
    r.read_exact(&mut block)
        .map_err(|_| QuoptError::Format("truncated config block".into()))?;
    let text = String::from_utf8(block).map_err(|_| QuoptError::Format("config block is not UTF-8".into()))?;
    let mut pairs = parse_key_values(&text)?;
    let pixel_pitch = match pairs.remove(PIXEL_PITCH_KEY) {
        Some(v) => v
            .parse::<f64>()
            .map_err(|_| QuoptError::Format(format!("bad {PIXEL_PITCH_KEY} '{v}'")))?,
        None => return Err(QuoptError::Format(format!("config block lacks {PIXEL_PITCH_KEY}"))),
    };
    let config = scan_config_from_pairs(&pairs)?;
    if config.n_steps != m {
        return Err(QuoptError::Format(format!(
            "header has {m} steps, config block {}",
            config.n_steps
        )));
    }
    let len = checked_len(&[m, rows, cols])?;
    let counts = Array3::from_shape_vec((m, rows, cols), read_f32s(r, len)?)
        .map_err(|e| QuoptError::Format(e.to_string()))?;
    expect_eof(r)?;
    Ok(FringeStack { counts, config, angle, pixel_pitch, truth: None })
}
