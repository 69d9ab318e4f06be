//! Dictionary container, little-endian:
//!
//! ```text
//! magic "CBLPDICT" | version u32 | precision u8 (4 = complex64, 8 = complex128)
//! | d u64 | L u64 | tr_ms f64 | unfiltered grid size u64
//! atoms d·L complex, row-major | norms d f64 | T1 column | T2 column | B0 column
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;

use super::{Atoms, Dictionary};
use crate::binio::{checked_len, eof, expect_magic, read_complex, read_f64s, write_complex, write_f64s};
use crate::{Error, Precision, Result};

const MAGIC: &[u8; 8] = b"CBLPDICT";
const VERSION: u32 = 1;

impl Dictionary {
    pub fn write_to<W: Write>(&self, w: &mut W, precision: Precision) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_u32::<LE>(VERSION)?;
        w.write_u8(precision.code())?;
        w.write_u64::<LE>(self.len() as u64)?;
        w.write_u64::<LE>(self.dim() as u64)?;
        w.write_f64::<LE>(self.tr_ms)?;
        w.write_u64::<LE>(self.unfiltered)?;
        write_complex(w, self.flat(), precision)?;
        write_f64s(w, &self.norms)?;
        for c in 0..3 {
            let col: Vec<f64> = self.lookup.iter().map(|p| p[c]).collect();
            write_f64s(w, &col)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        expect_magic(r, MAGIC)?;
        let version = r.read_u32::<LE>().map_err(eof)?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported dictionary version {version}")));
        }
        let precision = Precision::from_code(r.read_u8().map_err(eof)?)?;
        let d = r.read_u64::<LE>().map_err(eof)?;
        let l = r.read_u64::<LE>().map_err(eof)?;
        let tr_ms = r.read_f64::<LE>().map_err(eof)?;
        let unfiltered = r.read_u64::<LE>().map_err(eof)?;
        if d == 0 || l == 0 {
            return Err(Error::Format("empty dictionary".into()));
        }
        let n = checked_len(d, l)?;
        let (d, l) = (d as usize, l as usize);
        let flat = read_complex(r, n, precision)?;
        let norms = read_f64s(r, d)?;
        let t1 = read_f64s(r, d)?;
        let t2 = read_f64s(r, d)?;
        let b0 = read_f64s(r, d)?;
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::Format("trailing bytes after dictionary".into()));
        }
        let atoms = Array2::from_shape_vec((d, l), flat).map_err(|e| Error::Format(e.to_string()))?;
        let lookup = (0..d).map(|j| [t1[j], t2[j], b0[j]]).collect();
        Ok(Self { atoms, norms, lookup, tr_ms, unfiltered })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.save_with_precision(path, Precision::Complex128)
    }

    pub fn save_with_precision(&self, path: impl AsRef<Path>, precision: Precision) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w, precision)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }

    /// Lookup table as CSV with columns `index,t1_ms,t2_ms,b0_hz`.
    pub fn write_lookup_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["index", "t1_ms", "t2_ms", "b0_hz"])?;
        for (j, p) in self.lookup.iter().enumerate() {
            w.write_record([j.to_string(), p[0].to_string(), p[1].to_string(), p[2].to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::ParameterGrid;

    fn dict() -> Dictionary {
        let g = ParameterGrid::from_ranges("[300:200:1500]", "[40:40:200]", "[-20:20:20]").unwrap();
        Dictionary::generate(&g, 1.5, 32).unwrap()
    }

    #[test]
    fn round_trip_is_lossless() {
        let d = dict();
        let mut buf = Vec::new();
        d.write_to(&mut buf, Precision::Complex128).unwrap();
        let e = Dictionary::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(d, e);
        let mut again = Vec::new();
        e.write_to(&mut again, Precision::Complex128).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn single_precision_round_trip() {
        let d = dict();
        let mut buf = Vec::new();
        d.write_to(&mut buf, Precision::Complex64).unwrap();
        let e = Dictionary::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(d.lookup_table(), e.lookup_table());
        let err = (&d.atoms() - &e.atoms()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(err < 1e-6);
    }

    #[test]
    fn truncated_and_trailing_files_fail() {
        let mut buf = Vec::new();
        dict().write_to(&mut buf, Precision::Complex128).unwrap();
        let short = &buf[..buf.len() - 3];
        assert!(matches!(Dictionary::read_from(&mut &short[..]), Err(Error::Format(_))));
        let mut long = buf.clone();
        long.push(0);
        assert!(matches!(Dictionary::read_from(&mut long.as_slice()), Err(Error::Format(_))));
        assert!(Dictionary::read_from(&mut &b"CBLPTREE"[..]).is_err());
    }

    #[test]
    fn lookup_csv_has_one_row_per_atom() {
        let d = dict();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("lut.csv");
        d.write_lookup_csv(&p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), d.len() + 1);
        assert!(text.starts_with("index,t1_ms,t2_ms,b0_hz\n0,300,40,-20\n"));
    }
}
