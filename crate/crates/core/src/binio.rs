//! Little-endian helpers shared by the binary file formats.
//!
//! Every format starts with a four-byte magic and a `u32` version:
//!
//! | magic  | content                  |
//! |--------|--------------------------|
//! | `CAPD` | feature dataset          |
//! | `CAPM` | distance matrix dump     |
//! | `CAPK` | memory bank snapshot     |
//! | `CAPE` | encoder checkpoint       |

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

pub struct BinWriter<W: Write> {
    inner: W,
}

impl<W: Write> BinWriter<W> {
    pub fn new(mut inner: W, magic: &[u8; 4]) -> Result<Self> {
        inner.write_all(magic)?;
        inner.write_all(&FORMAT_VERSION.to_le_bytes())?;
        Ok(Self { inner })
    }

    pub fn u8(&mut self, v: u8) -> Result<()> {
        self.inner.write_all(&[v])?;
        Ok(())
    }

    pub fn u32(&mut self, v: u32) -> Result<()> {
        self.inner.write_all(&v.to_le_bytes())?;
        Ok(())
    }

    pub fn u64(&mut self, v: u64) -> Result<()> {
        self.inner.write_all(&v.to_le_bytes())?;
        Ok(())
    }

    pub fn i64(&mut self, v: i64) -> Result<()> {
        self.inner.write_all(&v.to_le_bytes())?;
        Ok(())
    }

    pub fn f64(&mut self, v: f64) -> Result<()> {
        self.inner.write_all(&v.to_le_bytes())?;
        Ok(())
    }

    pub fn f64s(&mut self, vs: &[f64]) -> Result<()> {
        for &v in vs {
            self.f64(v)?;
        }
        Ok(())
    }

    pub fn bytes(&mut self, b: &[u8]) -> Result<()> {
        self.u64(b.len() as u64)?;
        self.inner.write_all(b)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

pub struct BinReader<R: Read> {
    inner: R,
    what: &'static str,
}

impl<R: Read> BinReader<R> {
    pub fn new(mut inner: R, magic: &[u8; 4], what: &'static str) -> Result<Self> {
        let mut m = [0u8; 4];
        inner.read_exact(&mut m).map_err(|_| truncated(what))?;
        if &m != magic {
            return Err(Error::Format {
                what,
                reason: format!(
                    "expected magic {:?}, found {:?}",
                    String::from_utf8_lossy(magic),
                    String::from_utf8_lossy(&m)
                ),
            });
        }
        let mut r = Self { inner, what };
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format {
                what,
                reason: format!("unsupported version {version}"),
            });
        }
        Ok(r)
    }

    fn fill<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.inner.read_exact(&mut b).map_err(|_| truncated(self.what))?;
        Ok(b)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.fill::<1>()?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.fill()?))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.fill()?))
    }

    pub fn usize(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| Error::Format {
            what: self.what,
            reason: format!("count {v} does not fit in memory"),
        })
    }

    pub fn i64(&mut self) -> Result<i64> {
        Ok(i64::from_le_bytes(self.fill()?))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.fill()?))
    }

    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }

    pub fn bytes(&mut self) -> Result<Vec<u8>> {
        let n = self.usize()?;
        let mut b = vec![0u8; n];
        self.inner.read_exact(&mut b).map_err(|_| truncated(self.what))?;
        Ok(b)
    }

    /// Errors unless the stream is exhausted.
    pub fn expect_end(mut self) -> Result<()> {
        let mut b = [0u8; 1];
        match self.inner.read(&mut b)? {
            0 => Ok(()),
            _ => Err(Error::Format {
                what: self.what,
                reason: "trailing bytes".into(),
            }),
        }
    }
}

fn truncated(what: &'static str) -> Error {
    Error::Format {
        what,
        reason: "unexpected end of file".into(),
    }
}
