//! Little-endian binary encoding shared by all persisted dispatchers.
//!
//! Every file starts with the magic `BDSP1` and a one-byte type tag.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::model::PointSet;

pub const MAGIC: &[u8; 5] = b"BDSP1";

/// Type tags following the magic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Tag {
    NearestNeighbor = 1,
    Random = 2,
    PartitionTree = 3,
    Lsh = 4,
}

impl Tag {
    pub fn from_byte(b: u8) -> Result<Self> {
        Ok(match b {
            1 => Tag::NearestNeighbor,
            2 => Tag::Random,
            3 => Tag::PartitionTree,
            4 => Tag::Lsh,
            _ => return Err(Error::Format(format!("unknown dispatcher tag {b}"))),
        })
    }
}

#[derive(Debug, Default)]
pub struct Encoder {
    pub buf: Vec<u8>,
}

impl Encoder {
    pub fn with_header(tag: Tag) -> Self {
        let mut buf = MAGIC.to_vec();
        buf.push(tag as u8);
        Self { buf }
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64s(&mut self, v: &[f64]) {
        self.usize(v.len());
        for &x in v {
            self.f64(x);
        }
    }

    pub fn usizes(&mut self, v: &[usize]) {
        self.usize(v.len());
        for &x in v {
            self.usize(x);
        }
    }

    /// `n`, `dim`, then the rows in row-major order.
    pub fn points(&mut self, p: &PointSet) {
        self.usize(p.len());
        self.usize(p.dim());
        for &x in p.as_slice() {
            self.f64(x);
        }
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(&self.buf)?;
        Ok(())
    }
}

pub struct Decoder<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    /// Checks the magic and returns the tag.
    pub fn header(&mut self) -> Result<Tag> {
        let magic = self.take(MAGIC.len())?;
        if magic != MAGIC {
            return Err(Error::Format("missing BDSP1 header".into()));
        }
        Tag::from_byte(self.u8()?)
    }

    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Format("truncated dispatcher file".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    pub fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Format("length overflows usize".into()))
    }

    /// A length that must fit in the remaining bytes at `unit` bytes per item.
    fn len(&mut self, unit: usize) -> Result<usize> {
        let n = self.usize()?;
        if n.saturating_mul(unit) > self.buf.len() - self.pos {
            return Err(Error::Format("length exceeds file size".into()));
        }
        Ok(n)
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    pub fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.len(8)?;
        (0..n).map(|_| self.f64()).collect()
    }

    pub fn usizes(&mut self) -> Result<Vec<usize>> {
        let n = self.len(8)?;
        (0..n).map(|_| self.usize()).collect()
    }

    pub fn points(&mut self) -> Result<PointSet> {
        let n = self.usize()?;
        let dim = self.usize()?;
        let total = n
            .checked_mul(dim)
            .ok_or_else(|| Error::Format("point block overflows".into()))?;
        if total.saturating_mul(8) > self.buf.len() - self.pos {
            return Err(Error::Format("point block exceeds file size".into()));
        }
        let data = (0..total).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
        PointSet::new(dim, data)
    }

    pub fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

pub fn read_all(mut r: impl Read) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    Ok(buf)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_primitives() {
        let mut e = Encoder::with_header(Tag::Lsh);
        e.u64(7);
        e.f64s(&[1.5, -2.0]);
        e.usizes(&[3, 4, 5]);
        e.points(&PointSet::new(2, vec![0.0, 1.0, 2.0, 3.0]).unwrap());
        let mut d = Decoder::new(&e.buf);
        assert_eq!(d.header().unwrap(), Tag::Lsh);
        assert_eq!(d.u64().unwrap(), 7);
        assert_eq!(d.f64s().unwrap(), vec![1.5, -2.0]);
        assert_eq!(d.usizes().unwrap(), vec![3, 4, 5]);
        assert_eq!(d.points().unwrap().row(1), &[2.0, 3.0]);
        d.finish().unwrap();
    }

    #[test]
    fn rejects_bad_headers_and_truncation() {
        assert!(Decoder::new(b"BDSP2\x01").header().is_err());
        assert!(Decoder::new(b"BDSP1\x09").header().is_err());
        let mut e = Encoder::with_header(Tag::Random);
        e.f64s(&[1.0, 2.0]);
        let cut = &e.buf[..e.buf.len() - 3];
        let mut d = Decoder::new(cut);
        d.header().unwrap();
        assert!(d.f64s().is_err());
    }
}
