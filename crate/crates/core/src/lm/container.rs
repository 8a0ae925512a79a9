//! Versioned flat binary model container.
//!
//! Layout: magic `SDLB1`, one kind byte, the dimensions `(w, d_e, d_f, V)` as
//! little-endian `u32`, kind-specific extra `u32` fields, then every tensor
//! in [`Params`] order, row-major, as little-endian `f64`.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Params;

use super::draft::DraftHead;
use super::target::{LmDims, TargetLm};

pub const MAGIC: &[u8; 5] = b"SDLB1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum ModelKind {
    Target = 1,
    Draft = 2,
    LdlpRegression = 3,
    LdlpClassification = 4,
}

impl ModelKind {
    fn from_byte(b: u8) -> Result<Self> {
        Ok(match b {
            1 => Self::Target,
            2 => Self::Draft,
            3 => Self::LdlpRegression,
            4 => Self::LdlpClassification,
            other => return Err(Error::Format(format!("unknown model kind byte {other}"))),
        })
    }
}

pub(crate) struct Header {
    pub kind: ModelKind,
    pub dims: LmDims,
    pub extra: Vec<u32>,
}

pub(crate) fn write_header(out: &mut Vec<u8>, kind: ModelKind, dims: LmDims, extra: &[u32]) {
    out.extend_from_slice(MAGIC);
    out.push(kind as u8);
    for v in [dims.window, dims.embed, dims.feature, dims.vocab] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for v in extra {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub(crate) fn write_tensors<S: Scalar, P: Params<S>>(out: &mut Vec<u8>, model: &P) {
    for (_, t) in model.tensors() {
        for v in t {
            out.extend_from_slice(&v.as_f64().to_le_bytes());
        }
    }
}

pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format("truncated file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn header(&mut self, n_extra: impl Fn(ModelKind) -> usize) -> Result<Header> {
        if self.take(MAGIC.len())? != MAGIC {
            return Err(Error::Format("bad magic, expected SDLB1".into()));
        }
        let kind = ModelKind::from_byte(self.take(1)?[0])?;
        let dims = LmDims {
            window: self.u32()? as usize,
            embed: self.u32()? as usize,
            feature: self.u32()? as usize,
            vocab: self.u32()? as usize,
        };
        dims.validate()
            .map_err(|e| Error::Format(format!("bad dimensions: {e}")))?;
        let extra = (0..n_extra(kind))
            .map(|_| self.u32())
            .collect::<Result<Vec<_>>>()?;
        Ok(Header { kind, dims, extra })
    }

    pub fn fill<S: Scalar, P: Params<S>>(&mut self, model: &mut P) -> Result<()> {
        for (_, t) in model.tensors_mut() {
            for v in t.iter_mut() {
                *v = S::cast(self.f64()?);
            }
        }
        Ok(())
    }

    pub fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

/// Serialization into the model container.
pub trait Persist: Sized {
    fn to_bytes(&self) -> Vec<u8>;
    fn from_bytes(bytes: &[u8]) -> Result<Self>;

    fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

pub(crate) fn expect_kind(found: ModelKind, want: ModelKind) -> Result<()> {
    if found != want {
        return Err(Error::Format(format!(
            "expected a {want:?} model, found {found:?}"
        )));
    }
    Ok(())
}

impl<S: Scalar> Persist for TargetLm<S> {
    fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        write_header(&mut out, ModelKind::Target, self.dims(), &[]);
        write_tensors(&mut out, self);
        out
    }

    fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let h = r.header(|_| 0)?;
        expect_kind(h.kind, ModelKind::Target)?;
        let mut m = TargetLm::zeros(h.dims);
        r.fill(&mut m)?;
        r.finish()?;
        Ok(m)
    }
}

impl<S: Scalar> Persist for DraftHead<S> {
    fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        write_header(&mut out, ModelKind::Draft, self.dims(), &[]);
        write_tensors(&mut out, self);
        out
    }

    fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let h = r.header(|_| 0)?;
        expect_kind(h.kind, ModelKind::Draft)?;
        let mut m = DraftHead::zeros(h.dims);
        r.fill(&mut m)?;
        r.finish()?;
        Ok(m)
    }
}
