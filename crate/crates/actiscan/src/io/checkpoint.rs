//! `ACTIMODEL1` checkpoints holding a post-filter, a scorer, or both.
//!
//! ```text
//! "ACTIMODEL1" sections:u32
//!   tag=1 kernel:u32 n:u32 channels:u32[n] params:f64[..]
//!   tag=2 n:u32 widths:u32[n] input_scale:f64 params:f64[..]
//! ```
//!
//! Parameter counts follow from the architecture, so they are not stored.

use std::path::Path;

use actiscan_core::agent::ScorerModel;
use actiscan_core::recon::PostFilterModel;

use super::{put_f64s, put_u32, read_all, to_u32, write_atomic, DecodeError, Reader};
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 10] = b"ACTIMODEL1";
const TAG_POSTFILTER: u32 = 1;
const TAG_SCORER: u32 = 2;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub post_filter: Option<PostFilterModel>,
    pub scorer: Option<ScorerModel>,
}

impl Checkpoint {
    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut out = MODEL_MAGIC.to_vec();
        let n = self.post_filter.is_some() as u32 + self.scorer.is_some() as u32;
        put_u32(&mut out, n);
        if let Some(pf) = &self.post_filter {
            put_u32(&mut out, TAG_POSTFILTER);
            put_u32(&mut out, to_u32(pf.kernel(), "kernel")?);
            put_u32(&mut out, to_u32(pf.channels().len(), "layer count")?);
            for &c in pf.channels() {
                put_u32(&mut out, to_u32(c, "channel width")?);
            }
            put_f64s(&mut out, pf.params());
        }
        if let Some(sc) = &self.scorer {
            put_u32(&mut out, TAG_SCORER);
            let widths = sc.layer_widths();
            put_u32(&mut out, widths.len() as u32);
            for w in widths {
                put_u32(&mut out, to_u32(w, "layer width")?);
            }
            put_f64s(&mut out, &[sc.input_scale()]);
            put_f64s(&mut out, sc.params());
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        r.expect(MODEL_MAGIC)?;
        let sections = r.u32("section count")?;
        let mut ck = Checkpoint::default();
        for _ in 0..sections {
            let at = r.pos();
            match r.u32("section tag")? {
                TAG_POSTFILTER if ck.post_filter.is_none() => {
                    let kernel = r.u32("kernel")? as usize;
                    let n = r.u32("layer count")? as usize;
                    if n > 1024 {
                        return Err(DecodeError::at(at + 8, "implausible layer count"));
                    }
                    let mut channels = Vec::with_capacity(n);
                    for _ in 0..n {
                        channels.push(r.u32("channel width")? as usize);
                    }
                    let mut pf = PostFilterModel::zeros(channels, kernel)
                        .map_err(|e| DecodeError::at(at, e.to_string()))?;
                    let p = r.f64s(pf.num_params(), "post-filter parameters")?;
                    pf.set_params(p).map_err(|e| DecodeError::at(at, e.to_string()))?;
                    ck.post_filter = Some(pf);
                }
                TAG_SCORER if ck.scorer.is_none() => {
                    let n = r.u32("layer count")? as usize;
                    if n != 4 {
                        return Err(DecodeError::at(at + 4, format!("scorer must have 4 widths, found {n}")));
                    }
                    let widths_at = r.pos();
                    let mut widths = [0usize; 4];
                    for w in &mut widths {
                        *w = r.u32("layer width")? as usize;
                    }
                    let mut sc = ScorerModel::zeros(widths[0])
                        .map_err(|e| DecodeError::at(widths_at, e.to_string()))?;
                    if sc.layer_widths() != widths {
                        return Err(DecodeError::at(
                            widths_at,
                            format!("unsupported scorer widths {widths:?}"),
                        ));
                    }
                    let scale = r.f64("input scale")?;
                    let p = r.f64s(sc.num_params(), "scorer parameters")?;
                    sc = ScorerModel::from_parts(widths[0], scale, p)
                        .map_err(|e| DecodeError::at(widths_at, e.to_string()))?;
                    ck.scorer = Some(sc);
                }
                TAG_POSTFILTER | TAG_SCORER => {
                    return Err(DecodeError::at(at, "duplicate section"));
                }
                t => return Err(DecodeError::at(at, format!("unknown section tag {t}"))),
            }
        }
        r.finish()?;
        Ok(ck)
    }
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    write_atomic(path, &ck.encode()?)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = read_all(path)?;
    Checkpoint::decode(&bytes).map_err(|e: DecodeError| -> Error { e.with_path(path) })
}
