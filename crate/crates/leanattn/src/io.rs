//! Golden tensor files.
//!
//! Little-endian layout: a 16-byte header (magic `LATN`, version u32,
//! rank u32, reserved u32), then `rank` u64 dims, then the f32 data.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use leanattn_core::DeviceTensor;
use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"LATN";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum GoldenError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("bad magic {0:?}, expected \"LATN\"")]
    BadMagic([u8; 4]),
    #[error("unsupported version {0}, expected {VERSION}")]
    BadVersion(u32),
    #[error("unreasonable rank {0}")]
    BadRank(u32),
    #[error("file truncated: expected {expected} data elements, got {got}")]
    Truncated { expected: usize, got: usize },
}

/// A golden array of any rank.
#[derive(Debug, Clone, PartialEq)]
pub struct GoldenArray {
    pub dims: Vec<u64>,
    pub data: Vec<f32>,
}

impl GoldenArray {
    pub fn from_tensor(t: &DeviceTensor) -> Self {
        Self {
            dims: t.dims().iter().map(|&d| d as u64).collect(),
            data: t.data().to_vec(),
        }
    }

    pub fn to_tensor(&self) -> Option<DeviceTensor> {
        if self.dims.len() != 4 {
            return None;
        }
        let dims = [
            self.dims[0] as usize,
            self.dims[1] as usize,
            self.dims[2] as usize,
            self.dims[3] as usize,
        ];
        DeviceTensor::from_vec(dims, self.data.clone()).ok()
    }
}

pub fn write_golden<W: Write>(mut w: W, dims: &[u64], data: &[f32]) -> Result<(), GoldenError> {
    debug_assert_eq!(dims.iter().product::<u64>() as usize, data.len());
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(dims.len() as u32).to_le_bytes())?;
    w.write_all(&0u32.to_le_bytes())?;
    for &d in dims {
        w.write_all(&d.to_le_bytes())?;
    }
    for &x in data {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_golden<R: Read>(mut r: R) -> Result<GoldenArray, GoldenError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(GoldenError::BadMagic(magic));
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        return Err(GoldenError::BadVersion(version));
    }
    r.read_exact(&mut word)?;
    let rank = u32::from_le_bytes(word);
    if rank > 8 {
        return Err(GoldenError::BadRank(rank));
    }
    r.read_exact(&mut word)?; // reserved

    let mut dims = Vec::with_capacity(rank as usize);
    let mut dword = [0u8; 8];
    for _ in 0..rank {
        r.read_exact(&mut dword)?;
        dims.push(u64::from_le_bytes(dword));
    }
    let expected = dims.iter().product::<u64>() as usize;
    let mut data = Vec::with_capacity(expected);
    loop {
        match r.read_exact(&mut word) {
            Ok(()) => data.push(f32::from_le_bytes(word)),
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e.into()),
        }
    }
    if data.len() != expected {
        return Err(GoldenError::Truncated { expected, got: data.len() });
    }
    Ok(GoldenArray { dims, data })
}

pub fn write_golden_file<P: AsRef<Path>>(
    path: P,
    dims: &[u64],
    data: &[f32],
) -> Result<(), GoldenError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_golden(&mut w, dims, data)?;
    w.flush()?;
    Ok(())
}

pub fn read_golden_file<P: AsRef<Path>>(path: P) -> Result<GoldenArray, GoldenError> {
    read_golden(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn round_trip() {
        let dims = [1u64, 2, 3, 2];
        let data: Vec<f32> = (0..12).map(|x| x as f32 * 0.5 - 3.0).collect();
        let mut buf = Vec::new();
        write_golden(&mut buf, &dims, &data).unwrap();
        assert_eq!(&buf[0..4], b"LATN");
        assert_eq!(buf.len(), 16 + 4 * 8 + 12 * 4);
        let back = read_golden(Cursor::new(&buf)).unwrap();
        assert_eq!(back.dims, dims);
        assert_eq!(back.data, data);
        assert!(back.to_tensor().is_some());
    }

    #[test]
    fn rejects_bad_magic_and_version() {
        let mut buf = Vec::new();
        write_golden(&mut buf, &[1], &[0.0]).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_golden(Cursor::new(&bad)), Err(GoldenError::BadMagic(_))));
        let mut bad = buf.clone();
        bad[4] = 9;
        assert!(matches!(read_golden(Cursor::new(&bad)), Err(GoldenError::BadVersion(9))));
        buf.truncate(buf.len() - 2);
        assert!(read_golden(Cursor::new(&buf)).is_err());
    }
}
