//! Little-endian tagged binary container shared by scenario, codebook,
//! dataset and checkpoint files.
//!
//! ```text
//! file    := magic "NFBT" | version: u32 | section*
//! section := tag: [u8; 4] | length: u64 | payload: [u8; length]
//! ```
//!
//! All integers are little-endian, all reals IEEE-754 `f64`, complex numbers
//! are interleaved `(re, im)` pairs. Section payload layouts are documented by
//! the modules that own them (`SCEN` in [`crate::scenario`], `CDBK` in
//! [`crate::codebook`], `DSET`/`SMPL`/`CONF` in [`crate::dataset`],
//! `MODL`/`GNNP`/`TRST` in [`crate::gnn::checkpoint`]).

use std::path::Path;

use crate::error::{Error, Result};
use crate::C64;

pub const MAGIC: &[u8; 4] = b"NFBT";
pub const VERSION: u32 = 1;

pub type Tag = [u8; 4];

#[derive(Debug, Default, Clone)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn usize(&mut self, v: usize) -> &mut Self {
        self.u32(u32::try_from(v).expect("dimension exceeds u32"))
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn f64(&mut self, v: f64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn f64s(&mut self, v: &[f64]) -> &mut Self {
        for x in v {
            self.f64(*x);
        }
        self
    }

    pub fn c64(&mut self, v: C64) -> &mut Self {
        self.f64(v.re).f64(v.im)
    }

    pub fn c64s(&mut self, v: &[C64]) -> &mut Self {
        for x in v {
            self.c64(*x);
        }
        self
    }

    pub fn bytes(&mut self, v: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(v);
        self
    }

    pub fn into_inner(self) -> Vec<u8> {
        self.buf
    }
}

pub struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.data.len() - self.pos < n {
            return Err(Error::Format(format!(
                "truncated payload: wanted {n} bytes at offset {}",
                self.pos
            )));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn usize(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }

    pub fn c64(&mut self) -> Result<C64> {
        Ok(C64::new(self.f64()?, self.f64()?))
    }

    pub fn c64s(&mut self, n: usize) -> Result<Vec<C64>> {
        (0..n).map(|_| self.c64()).collect()
    }

    pub fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        self.take(n)
    }

    pub fn is_empty(&self) -> bool {
        self.pos == self.data.len()
    }

    pub fn finish(&self) -> Result<()> {
        if self.is_empty() {
            Ok(())
        } else {
            Err(Error::Format(format!("{} trailing bytes", self.data.len() - self.pos)))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub tag: Tag,
    pub payload: Vec<u8>,
}

impl Section {
    pub fn new(tag: &Tag, payload: Vec<u8>) -> Self {
        Self { tag: *tag, payload }
    }

    pub fn tag_str(&self) -> String {
        String::from_utf8_lossy(&self.tag).into_owned()
    }
}

pub fn encode(sections: &[Section]) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(MAGIC).u32(VERSION);
    for s in sections {
        w.bytes(&s.tag).u64(s.payload.len() as u64).bytes(&s.payload);
    }
    w.into_inner()
}

pub fn decode(bytes: &[u8]) -> Result<Vec<Section>> {
    let mut r = Reader::new(bytes);
    if r.bytes(4).map_err(|_| Error::Format("file too short".into()))? != MAGIC {
        return Err(Error::Format("bad magic, expected NFBT".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported container version {version}")));
    }
    let mut out = Vec::new();
    while !r.is_empty() {
        let tag: Tag = r.bytes(4)?.try_into().unwrap();
        let len = usize::try_from(r.u64()?).map_err(|_| Error::Format("section too large".into()))?;
        out.push(Section { tag, payload: r.bytes(len)?.to_vec() });
    }
    Ok(out)
}

pub fn write_file(path: &Path, sections: &[Section]) -> Result<()> {
    std::fs::write(path, encode(sections))?;
    Ok(())
}

pub fn read_file(path: &Path) -> Result<Vec<Section>> {
    decode(&std::fs::read(path)?)
}

/// First section carrying `tag`.
pub fn find<'a>(sections: &'a [Section], tag: &Tag) -> Result<&'a Section> {
    sections
        .iter()
        .find(|s| &s.tag == tag)
        .ok_or_else(|| Error::Format(format!("missing section {}", String::from_utf8_lossy(tag))))
}
