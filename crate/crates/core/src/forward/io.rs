//! Measurement dumps share the dictionary container conventions:
//!
//! ```text
//! magic "CBLPMEAS" | version u32 | precision u8 | rows u64 | cols u64 | entries row-major
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;

use crate::binio::{checked_len, eof, expect_magic, read_complex, write_complex};
use crate::{Error, Precision, Result};

const MAGIC: &[u8; 8] = b"CBLPMEAS";
const VERSION: u32 = 1;

pub fn write_measurements_to<W: Write>(w: &mut W, y: ArrayView2<Complex64>, p: Precision) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_u32::<LE>(VERSION)?;
    w.write_u8(p.code())?;
    w.write_u64::<LE>(y.nrows() as u64)?;
    w.write_u64::<LE>(y.ncols() as u64)?;
    let flat: Vec<Complex64> = y.iter().copied().collect();
    write_complex(w, &flat, p)
}

pub fn read_measurements_from<R: Read>(r: &mut R) -> Result<Array2<Complex64>> {
    expect_magic(r, MAGIC)?;
    let version = r.read_u32::<LE>().map_err(eof)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported measurement version {version}")));
    }
    let p = Precision::from_code(r.read_u8().map_err(eof)?)?;
    let rows = r.read_u64::<LE>().map_err(eof)?;
    let cols = r.read_u64::<LE>().map_err(eof)?;
    let n = checked_len(rows, cols)?;
    let flat = read_complex(r, n, p)?;
    Array2::from_shape_vec((rows as usize, cols as usize), flat).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_measurements(path: impl AsRef<Path>, y: ArrayView2<Complex64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_measurements_to(&mut w, y, Precision::Complex128)?;
    w.flush()?;
    Ok(())
}

pub fn read_measurements(path: impl AsRef<Path>) -> Result<Array2<Complex64>> {
    read_measurements_from(&mut BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let y = Array2::from_shape_fn((5, 3), |(i, j)| Complex64::new(i as f64 * 0.5, -(j as f64)));
        let mut buf = Vec::new();
        write_measurements_to(&mut buf, y.view(), Precision::Complex128).unwrap();
        assert_eq!(read_measurements_from(&mut buf.as_slice()).unwrap(), y);
        buf.pop();
        assert!(read_measurements_from(&mut buf.as_slice()).is_err());
    }
}
