//! Little-endian binary readers/writers shared by the artifact formats.

use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub(crate) struct Writer<W: Write> {
    inner: W,
    path: PathBuf,
}

impl<W: Write> Writer<W> {
    pub fn new(inner: W, path: &Path) -> Self {
        Writer {
            inner,
            path: path.to_path_buf(),
        }
    }

    fn put(&mut self, bytes: &[u8]) -> Result<()> {
        self.inner
            .write_all(bytes)
            .map_err(|e| Error::io(&self.path, e))
    }

    pub fn bytes(&mut self, b: &[u8]) -> Result<()> {
        self.put(b)
    }

    pub fn u8(&mut self, v: u8) -> Result<()> {
        self.put(&[v])
    }

    pub fn u32(&mut self, v: u32) -> Result<()> {
        self.put(&v.to_le_bytes())
    }

    pub fn u64(&mut self, v: u64) -> Result<()> {
        self.put(&v.to_le_bytes())
    }

    pub fn f64(&mut self, v: f64) -> Result<()> {
        self.put(&v.to_le_bytes())
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush().map_err(|e| Error::io(&self.path, e))
    }
}

pub(crate) struct Reader<R: Read> {
    inner: R,
    path: PathBuf,
}

impl<R: Read> Reader<R> {
    pub fn new(inner: R, path: &Path) -> Self {
        Reader {
            inner,
            path: path.to_path_buf(),
        }
    }

    pub fn fail(&self, reason: impl Into<String>) -> Error {
        Error::Artifact {
            path: self.path.clone(),
            reason: reason.into(),
        }
    }

    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| match e.kind() {
                io::ErrorKind::UnexpectedEof => self.fail("unexpected end of file"),
                _ => Error::io(&self.path, e),
            })?;
        Ok(buf)
    }

    pub fn magic<const N: usize>(&mut self, expect: &[u8; N]) -> Result<()> {
        let got: [u8; N] = self.take()?;
        if &got != expect {
            return Err(self.fail(format!("bad magic bytes {:?}, expected {:?}", got, expect)));
        }
        Ok(())
    }

    pub fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        self.take()
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take::<1>()?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take()?))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take()?))
    }
}
