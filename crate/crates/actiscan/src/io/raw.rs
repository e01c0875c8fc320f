//! `ACTISCAN1` raw container.
//!
//! Layout, all little-endian:
//!
//! ```text
//! image:    "ACTISCAN1" h:u32 w:u32 data:f64[h*w]
//! sinogram: "ACTISCAN1" h:u32 w:u32 D:u32 T:u32 alpha_max_milli:u32
//!           M:u32 angles:u32[M] pixel_size:f64 detector_spacing:f64
//!           rows:f64[M*D]
//! ```
//!
//! The two are told apart by length: an image file is exactly
//! `17 + 8*h*w` bytes. Rows are stored in ascending angle order.

use std::path::Path;

use actiscan_core::{Geometry, Image, Sinogram};

use super::{put_f64s, put_u32, read_all, to_u32, write_atomic, DecodeError, Reader};
use crate::error::{Error, Result};

pub const RAW_MAGIC: &[u8; 9] = b"ACTISCAN1";
const HEADER: usize = 9 + 8;

#[derive(Debug, Clone, PartialEq)]
pub enum RawData {
    Image(Image),
    Sinogram(Sinogram),
}

pub fn encode_image(img: &Image) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(HEADER + 8 * img.len());
    out.extend_from_slice(RAW_MAGIC);
    put_u32(&mut out, to_u32(img.h(), "height")?);
    put_u32(&mut out, to_u32(img.w(), "width")?);
    put_f64s(&mut out, img.data());
    Ok(out)
}

pub fn encode_sinogram(sino: &Sinogram) -> Result<Vec<u8>> {
    let g = sino.geometry();
    let milli = (g.alpha_max * 1000.0).round();
    if (milli / 1000.0 - g.alpha_max).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "alpha_max {} is not representable in millidegrees",
            g.alpha_max
        )));
    }
    let mut out = Vec::new();
    out.extend_from_slice(RAW_MAGIC);
    put_u32(&mut out, to_u32(g.image_h, "height")?);
    put_u32(&mut out, to_u32(g.image_w, "width")?);
    put_u32(&mut out, to_u32(g.num_detectors, "detector count")?);
    put_u32(&mut out, to_u32(g.num_angles, "angle count")?);
    put_u32(&mut out, to_u32(milli as usize, "alpha_max")?);
    put_u32(&mut out, to_u32(sino.num_rows(), "row count")?);
    for (a, _) in sino.rows() {
        put_u32(&mut out, to_u32(a, "angle index")?);
    }
    put_f64s(&mut out, &[g.pixel_size, g.detector_spacing]);
    for (_, row) in sino.rows() {
        put_f64s(&mut out, row);
    }
    Ok(out)
}

pub fn decode_raw(bytes: &[u8]) -> Result<RawData, DecodeError> {
    let mut r = Reader::new(bytes);
    r.expect(RAW_MAGIC)?;
    let h = r.u32("height")? as usize;
    let w = r.u32("width")? as usize;
    let n = h
        .checked_mul(w)
        .ok_or_else(|| DecodeError::at(9, "image size overflows"))?;
    if n.checked_mul(8) == Some(r.remaining()) {
        let data = r.f64s(n, "pixels")?;
        let img = Image::from_vec(h, w, data).map_err(|e| DecodeError::at(HEADER, e.to_string()))?;
        return Ok(RawData::Image(img));
    }
    let nd = r.u32("detector count")? as usize;
    let t = r.u32("angle count")? as usize;
    let alpha = f64::from(r.u32("alpha_max")?) / 1000.0;
    let m = r.u32("row count")? as usize;
    let mut angles = Vec::with_capacity(m.min(1 << 16));
    for _ in 0..m {
        angles.push(r.u32("angle index")? as usize);
    }
    let geom_at = r.pos();
    let ps = r.f64("pixel size")?;
    let ds = r.f64("detector spacing")?;
    let mut geom = Geometry::with_detectors(h, w, nd, t, alpha)
        .map_err(|e| DecodeError::at(9, e.to_string()))?;
    geom.pixel_size = ps;
    geom.detector_spacing = ds;
    geom.validate().map_err(|e| DecodeError::at(geom_at, e.to_string()))?;
    let mut sino = Sinogram::empty(geom);
    let mut last = None;
    for (i, a) in angles.into_iter().enumerate() {
        if last.is_some_and(|l| a <= l) {
            return Err(DecodeError::at(9 + 28 + 4 * i, "angle indices must be strictly increasing"));
        }
        last = Some(a);
        let at = r.pos();
        let row = r.f64s(nd, "sinogram row")?;
        sino.insert_row(a, row)
            .map_err(|e| DecodeError::at(at, e.to_string()))?;
    }
    r.finish()?;
    Ok(RawData::Sinogram(sino))
}

pub fn read_raw(path: &Path) -> Result<RawData> {
    decode_raw(&read_all(path)?).map_err(|e| e.with_path(path))
}

pub fn read_image_raw(path: &Path) -> Result<Image> {
    match read_raw(path)? {
        RawData::Image(img) => Ok(img),
        RawData::Sinogram(_) => Err(Error::Format {
            path: path.to_path_buf(),
            offset: 0,
            reason: "expected an image, found a sinogram".into(),
        }),
    }
}

pub fn read_sinogram_raw(path: &Path) -> Result<Sinogram> {
    match read_raw(path)? {
        RawData::Sinogram(s) => Ok(s),
        RawData::Image(_) => Err(Error::Format {
            path: path.to_path_buf(),
            offset: 0,
            reason: "expected a sinogram, found an image".into(),
        }),
    }
}

pub fn write_image_raw(path: &Path, img: &Image) -> Result<()> {
    write_atomic(path, &encode_image(img)?)
}

pub fn write_sinogram_raw(path: &Path, sino: &Sinogram) -> Result<()> {
    write_atomic(path, &encode_sinogram(sino)?)
}
