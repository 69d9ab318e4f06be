//! Little-endian helpers shared by the binary containers.

use std::io::{Read, Write};

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use num_complex::Complex64;

use crate::{Error, Result};

/// Stored width of complex entries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Precision {
    /// Two `f32` per entry.
    Complex64,
    /// Two `f64` per entry.
    #[default]
    Complex128,
}

impl Precision {
    pub(crate) fn code(self) -> u8 {
        match self {
            Precision::Complex64 => 4,
            Precision::Complex128 => 8,
        }
    }

    pub(crate) fn from_code(c: u8) -> Result<Self> {
        match c {
            4 => Ok(Precision::Complex64),
            8 => Ok(Precision::Complex128),
            _ => Err(Error::Format(format!("unknown precision code {c}"))),
        }
    }
}

pub(crate) fn eof(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Format("truncated file".into())
    } else {
        Error::Io(e)
    }
}

pub(crate) fn expect_magic<R: Read>(r: &mut R, magic: &[u8; 8]) -> Result<()> {
    let mut got = [0u8; 8];
    r.read_exact(&mut got).map_err(eof)?;
    if &got != magic {
        return Err(Error::Format(format!(
            "bad magic, expected {}",
            String::from_utf8_lossy(magic)
        )));
    }
    Ok(())
}

pub(crate) fn write_complex<W: Write>(w: &mut W, data: &[Complex64], p: Precision) -> Result<()> {
    for z in data {
        match p {
            Precision::Complex128 => {
                w.write_f64::<LE>(z.re)?;
                w.write_f64::<LE>(z.im)?;
            }
            Precision::Complex64 => {
                w.write_f32::<LE>(z.re as f32)?;
                w.write_f32::<LE>(z.im as f32)?;
            }
        }
    }
    Ok(())
}

pub(crate) fn read_complex<R: Read>(r: &mut R, n: usize, p: Precision) -> Result<Vec<Complex64>> {
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let z = match p {
            Precision::Complex128 => Complex64::new(
                r.read_f64::<LE>().map_err(eof)?,
                r.read_f64::<LE>().map_err(eof)?,
            ),
            Precision::Complex64 => Complex64::new(
                r.read_f32::<LE>().map_err(eof)? as f64,
                r.read_f32::<LE>().map_err(eof)? as f64,
            ),
        };
        out.push(z);
    }
    Ok(out)
}

pub(crate) fn write_f64s<W: Write>(w: &mut W, v: &[f64]) -> Result<()> {
    for &x in v {
        w.write_f64::<LE>(x)?;
    }
    Ok(())
}

pub(crate) fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut v = vec![0.0; n];
    r.read_f64_into::<LE>(&mut v).map_err(eof)?;
    Ok(v)
}

/// Refuse absurd sizes before allocating.
pub(crate) fn checked_len(a: u64, b: u64) -> Result<usize> {
    a.checked_mul(b)
        .filter(|&n| n < (1 << 34))
        .map(|n| n as usize)
        .ok_or_else(|| Error::Format("implausible matrix size".into()))
}
