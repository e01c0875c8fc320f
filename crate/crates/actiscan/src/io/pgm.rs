//! Binary 16-bit PGM (`P5`, maxval 65535, big-endian samples) for previews.
//!
//! Pixel values are mapped through the display window `[lo, hi]`, clamped,
//! and quantized with round-half-to-even. The window is kept in a
//! `# window <lo> <hi>` comment so [`read_pgm`] can map samples back.

use std::path::Path;

use actiscan_core::Image;

use super::{read_all, write_atomic, DecodeError};
use crate::error::{Error, Result};

pub const PGM_MAX: u16 = u16::MAX;

pub fn quantize(v: f64, lo: f64, hi: f64) -> u16 {
    let t = if hi > lo { (v - lo) / (hi - lo) } else { 0.0 };
    let q = (t * f64::from(PGM_MAX)).round_ties_even();
    if q.is_nan() {
        0
    } else {
        q.clamp(0.0, f64::from(PGM_MAX)) as u16
    }
}

pub fn encode_pgm(img: &Image, window: (f64, f64)) -> Result<Vec<u8>> {
    let (lo, hi) = window;
    if !(lo.is_finite() && hi.is_finite() && hi > lo) {
        return Err(Error::Config(format!("invalid display window [{lo}, {hi}]")));
    }
    let mut out = format!(
        "P5\n# window {lo:?} {hi:?}\n{} {}\n{}\n",
        img.w(),
        img.h(),
        PGM_MAX
    )
    .into_bytes();
    out.reserve(2 * img.len());
    for &v in img.data() {
        out.extend_from_slice(&quantize(v, lo, hi).to_be_bytes());
    }
    Ok(out)
}

/// Writes `img` using `window`, or the image's own min/max when `None`.
pub fn write_pgm(path: &Path, img: &Image, window: Option<(f64, f64)>) -> Result<()> {
    let window = window.unwrap_or_else(|| {
        let (lo, hi) = img.min_max();
        if hi > lo {
            (lo, hi)
        } else {
            (lo, lo + 1.0)
        }
    });
    write_atomic(path, &encode_pgm(img, window)?)
}

struct Header {
    w: usize,
    h: usize,
    maxval: u32,
    window: Option<(f64, f64)>,
}

fn parse_header(bytes: &[u8]) -> Result<(Header, usize), DecodeError> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(DecodeError::at(0, "bad magic (expected P5)"));
    }
    let mut pos = 2;
    let mut fields = Vec::with_capacity(3);
    let mut window = None;
    while fields.len() < 3 {
        match bytes.get(pos) {
            None => return Err(DecodeError::at(pos, "truncated header")),
            Some(b) if b.is_ascii_whitespace() => pos += 1,
            Some(b'#') => {
                let end = bytes[pos..]
                    .iter()
                    .position(|&b| b == b'\n')
                    .map_or(bytes.len(), |e| pos + e);
                let line = String::from_utf8_lossy(&bytes[pos + 1..end]);
                let mut it = line.split_whitespace();
                if it.next() == Some("window") {
                    let lo = it.next().and_then(|s| s.parse::<f64>().ok());
                    let hi = it.next().and_then(|s| s.parse::<f64>().ok());
                    match (lo, hi) {
                        (Some(lo), Some(hi)) => window = Some((lo, hi)),
                        _ => return Err(DecodeError::at(pos, "malformed window comment")),
                    }
                }
                pos = end;
            }
            Some(_) => {
                let start = pos;
                while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
                    pos += 1;
                }
                if pos == start {
                    return Err(DecodeError::at(pos, "expected a decimal header field"));
                }
                let s = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
                let v: u32 = s
                    .parse()
                    .map_err(|_| DecodeError::at(start, "header field out of range"))?;
                fields.push(v);
            }
        }
    }
    // exactly one whitespace byte separates the header from the samples
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(DecodeError::at(pos, "missing whitespace after maxval")),
    }
    let header = Header {
        w: fields[0] as usize,
        h: fields[1] as usize,
        maxval: fields[2],
        window,
    };
    Ok((header, pos))
}

/// Decodes a 16-bit P5 file. Returns the image mapped back through the
/// stored window (or `[0, 1]` if none is recorded) and the window itself.
pub fn decode_pgm(bytes: &[u8]) -> Result<(Image, (f64, f64)), DecodeError> {
    let (hdr, start) = parse_header(bytes)?;
    if hdr.maxval != u32::from(PGM_MAX) {
        return Err(DecodeError::at(start - 1, format!("unsupported maxval {}", hdr.maxval)));
    }
    let n = hdr.w * hdr.h;
    let body = &bytes[start..];
    if body.len() < 2 * n {
        return Err(DecodeError::at(bytes.len(), "truncated pixel data"));
    }
    if body.len() > 2 * n {
        return Err(DecodeError::at(start + 2 * n, "trailing bytes"));
    }
    let (lo, hi) = hdr.window.unwrap_or((0.0, 1.0));
    let data = body
        .chunks_exact(2)
        .map(|c| lo + f64::from(u16::from_be_bytes([c[0], c[1]])) / f64::from(PGM_MAX) * (hi - lo))
        .collect();
    let img = Image::from_vec(hdr.h, hdr.w, data).map_err(|e| DecodeError::at(0, e.to_string()))?;
    Ok((img, (lo, hi)))
}

pub fn read_pgm(path: &Path) -> Result<(Image, (f64, f64))> {
    decode_pgm(&read_all(path)?).map_err(|e| e.with_path(path))
}
