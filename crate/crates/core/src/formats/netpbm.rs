//! PFM and PGM images. Array row 0 is the bottom of the picture: PFM stores
//! scanlines bottom-to-top, so rows are written in order; PGM stores them
//! top-to-bottom, so rows are written reversed.

use std::io::{BufRead, Write};

use ndarray::Array2;

use super::{checked_len, expect_eof};
use crate::error::{QuoptError, Result};

fn header_tokens<R: BufRead>(r: &mut R, count: usize) -> Result<Vec<String>> {
    let mut tokens = Vec::with_capacity(count);
    let mut current = Vec::new();
    let mut in_comment = false;
    let mut byte = [0u8; 1];
    while tokens.len() < count {
        if r.read(&mut byte)? == 0 {
            return Err(QuoptError::Format("truncated header".into()));
        }
        let b = byte[0];
        if in_comment {
            in_comment = b != b'\n';
            continue;
        }
        if b == b'#' && current.is_empty() {
            in_comment = true;
        } else if b.is_ascii_whitespace() {
            if !current.is_empty() {
                tokens.push(String::from_utf8_lossy(&current).into_owned());
                current.clear();
            }
        } else {
            current.push(b);
        }
    }
    Ok(tokens)
}

fn parse_dim(s: &str) -> Result<usize> {
    s.parse().map_err(|_| QuoptError::Format(format!("bad dimension '{s}'")))
}

pub fn write_pfm<W: Write>(w: &mut W, img: &Array2<f64>) -> Result<()> {
    let (rows, cols) = img.dim();
    let mut buf = format!("Pf\n{cols} {rows}\n-1.0\n").into_bytes();
    for v in img.iter() {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_pfm<R: BufRead>(r: &mut R) -> Result<Array2<f64>> {
    let tokens = header_tokens(r, 4)?;
    if tokens[0] != "Pf" {
        return Err(QuoptError::Format(format!("not a grayscale PFM: '{}'", tokens[0])));
    }
    let cols = parse_dim(&tokens[1])?;
    let rows = parse_dim(&tokens[2])?;
    let scale: f64 = tokens[3]
        .parse()
        .map_err(|_| QuoptError::Format(format!("bad PFM scale '{}'", tokens[3])))?;
    if scale == 0.0 {
        return Err(QuoptError::Format("PFM scale must be non-zero".into()));
    }
    let len = checked_len(&[rows, cols])?;
    let mut bytes = vec![0; len * 4];
    r.read_exact(&mut bytes)
        .map_err(|_| QuoptError::Format("truncated PFM payload".into()))?;
    expect_eof(r)?;
    let values = bytes
        .chunks_exact(4)
        .map(|c| {
            let b = [c[0], c[1], c[2], c[3]];
            let v = if scale < 0.0 { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
            v as f64
        })
        .collect();
    Array2::from_shape_vec((rows, cols), values).map_err(|e| QuoptError::Format(e.to_string()))
}

/// Writes an 8-bit PGM; values are clamped to `0..=255` and rounded.
pub fn write_pgm<W: Write>(w: &mut W, img: &Array2<u8>) -> Result<()> {
    let (rows, cols) = img.dim();
    let mut buf = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    for row in img.rows().into_iter().rev() {
        buf.extend(row.iter());
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Linearly maps `[min, max]` of the image to `0..=255` and writes a PGM.
pub fn write_pgm_preview<W: Write>(w: &mut W, img: &Array2<f64>) -> Result<()> {
    let lo = img.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = img.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let bytes = img.mapv(|v| (((v - lo) / span) * 255.0).round().clamp(0.0, 255.0) as u8);
    write_pgm(w, &bytes)
}

pub fn read_pgm<R: BufRead>(r: &mut R) -> Result<Array2<u8>> {
    let tokens = header_tokens(r, 4)?;
    if tokens[0] != "P5" {
        return Err(QuoptError::Format(format!("not a binary PGM: '{}'", tokens[0])));
    }
    let cols = parse_dim(&tokens[1])?;
    let rows = parse_dim(&tokens[2])?;
    let maxval = parse_dim(&tokens[3])?;
    if maxval == 0 || maxval > 255 {
        return Err(QuoptError::Format(format!("unsupported PGM maxval {maxval}")));
    }
    let len = checked_len(&[rows, cols])?;
    let mut bytes = vec![0; len];
    r.read_exact(&mut bytes)
        .map_err(|_| QuoptError::Format("truncated PGM payload".into()))?;
    expect_eof(r)?;
    let flipped = Array2::from_shape_vec((rows, cols), bytes).map_err(|e| QuoptError::Format(e.to_string()))?;
    Ok(Array2::from_shape_fn((rows, cols), |(r, c)| flipped[[rows - 1 - r, c]]))
}
