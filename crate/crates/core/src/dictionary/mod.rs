//! Fingerprint dictionaries: generation, lookup tables and subspace compression.
//!
//! Fingerprints come from an analytic surrogate signal model
//!
//! ```text
//!   D(t) = (1 − 2e^{−t·TR/T1}) · e^{−t·TR/T2} · e^{i·2π·B0·t·TR/1000},   t = 1..L
//! ```
//!
//! with TR in msec and B0 in Hz. Atoms are stored unit-normalized, and their
//! original norms are kept.

mod compress;
mod grid;
mod io;

pub use compress::CompressedDictionary;
pub use grid::{parse_ranges, ParameterGrid};

use std::collections::HashSet;
use std::f64::consts::PI;

use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;

use crate::covertree::{CoverTree, PointSet};
use crate::linalg::as_real;
use crate::{Error, Exec, Result};

/// Read access to a matrix of unit-norm atoms (rows) with a parameter table.
pub trait Atoms: Sync {
    /// Row-major `d × dim` storage.
    fn flat(&self) -> &[Complex64];
    fn dim(&self) -> usize;
    fn lookup_table(&self) -> &[[f64; 3]];

    fn atoms(&self) -> ArrayView2<'_, Complex64> {
        ArrayView2::from_shape((self.len(), self.dim()), self.flat()).expect("flat storage matches shape")
    }

    fn len(&self) -> usize {
        self.flat().len() / self.dim()
    }

    fn is_empty(&self) -> bool {
        self.flat().is_empty()
    }

    fn atom(&self, j: usize) -> &[Complex64] {
        let l = self.dim();
        &self.flat()[j * l..(j + 1) * l]
    }

    fn lookup(&self, j: usize) -> Result<[f64; 3]> {
        let t = self.lookup_table();
        t.get(j).copied().ok_or(Error::IndexOutOfRange { index: j, len: t.len() })
    }

    /// Atoms as real points, for building a cover tree.
    fn point_set(&self) -> Result<PointSet> {
        PointSet::new(self.dim() * 2, as_real(self.flat()).to_vec())
    }

    fn build_tree(&self) -> Result<CoverTree> {
        CoverTree::build(self.point_set()?)
    }
}

/// Unnormalized surrogate fingerprint for one parameter triple.
pub fn fingerprint(t1: f64, t2: f64, b0: f64, tr_ms: f64, l: usize) -> Vec<Complex64> {
    (1..=l)
        .map(|t| {
            let tt = t as f64 * tr_ms;
            let mag = (1.0 - 2.0 * (-tt / t1).exp()) * (-tt / t2).exp();
            Complex64::from_polar(1.0, 2.0 * PI * b0 * tt / 1000.0) * mag
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dictionary {
    atoms: Array2<Complex64>,
    norms: Vec<f64>,
    lookup: Vec<[f64; 3]>,
    tr_ms: f64,
    /// Grid size before the `t2 ≤ t1` filter, 0 when not generated from a grid.
    unfiltered: u64,
}

impl Dictionary {
    /// Normalize the rows of `atoms` and pair them with a parameter table.
    pub fn from_atoms(atoms: Array2<Complex64>, lookup: Vec<[f64; 3]>, tr_ms: f64) -> Result<Self> {
        let (d, l) = atoms.dim();
        if d == 0 {
            return Err(Error::EmptyDataset);
        }
        if l == 0 {
            return Err(Error::InvalidArgument("atoms must have at least one entry".into()));
        }
        if lookup.len() != d {
            return Err(Error::dim(d, lookup.len()));
        }
        let mut atoms = atoms.as_standard_layout().into_owned();
        let mut norms = Vec::with_capacity(d);
        for (j, mut row) in atoms.rows_mut().into_iter().enumerate() {
            let n = row.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if !(n > 0.0) || !n.is_finite() {
                return Err(Error::InvalidArgument(format!("atom {j} has norm {n}")));
            }
            row.mapv_inplace(|z| z / n);
            norms.push(n);
        }
        Ok(Self { atoms, norms, lookup, tr_ms, unfiltered: 0 })
    }

    pub fn generate(grid: &ParameterGrid, tr_ms: f64, l: usize) -> Result<Self> {
        Self::generate_with(grid, tr_ms, l, Exec::default())
    }

    pub fn generate_with(grid: &ParameterGrid, tr_ms: f64, l: usize, exec: Exec) -> Result<Self> {
        if !(tr_ms > 0.0) || !tr_ms.is_finite() {
            return Err(Error::InvalidArgument(format!("TR must be positive, got {tr_ms}")));
        }
        if l < 2 {
            return Err(Error::InvalidArgument(format!("sequence length must be ≥ 2, got {l}")));
        }
        if let Some((a, b)) = grid.b0_alias(tr_ms) {
            return Err(Error::InvalidGrid(format!(
                "B0 values {a} and {b} Hz give identical phase trajectories at TR = {tr_ms} ms"
            )));
        }
        let combos = grid.combinations();
        if combos.is_empty() {
            return Err(Error::InvalidGrid("no combination survives the t2 ≤ t1 filter".into()));
        }
        let rows = exec.map_items(&combos, |&[t1, t2, b0]| fingerprint(t1, t2, b0, tr_ms, l));
        let d = combos.len();
        let flat: Vec<Complex64> = rows.into_iter().flatten().collect();
        let atoms = Array2::from_shape_vec((d, l), flat).expect("row lengths are L");
        let mut dict = Self::from_atoms(atoms, combos, tr_ms)?;
        dict.unfiltered = grid.unfiltered_count() as u64;
        dict.check_distinct()?;
        Ok(dict)
    }

    /// Distinct parameter triples must give distinct normalized atoms.
    fn check_distinct(&self) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.len());
        for j in 0..self.len() {
            let key: Vec<u64> = self.atom(j).iter().flat_map(|z| [z.re.to_bits(), z.im.to_bits()]).collect();
            if !seen.insert(key) {
                return Err(Error::InvalidGrid(format!(
                    "atom {j} {:?} coincides with an earlier atom",
                    self.lookup[j]
                )));
            }
        }
        Ok(())
    }

    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    pub fn tr_ms(&self) -> f64 {
        self.tr_ms
    }

    pub fn unfiltered_count(&self) -> u64 {
        self.unfiltered
    }

    pub fn into_atoms(self) -> Array2<Complex64> {
        self.atoms
    }

    pub fn compress(&self, s: usize) -> Result<CompressedDictionary> {
        CompressedDictionary::new(self, s)
    }
}

impl Atoms for Dictionary {
    fn flat(&self) -> &[Complex64] {
        self.atoms.as_slice().expect("standard layout")
    }

    fn dim(&self) -> usize {
        self.atoms.ncols()
    }

    fn lookup_table(&self) -> &[[f64; 3]] {
        &self.lookup
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_grid() -> ParameterGrid {
        ParameterGrid::new(vec![100.0, 500.0, 1000.0], vec![20.0, 80.0, 600.0], vec![-30.0, 0.0, 40.0]).unwrap()
    }

    #[test]
    fn aliased_b0_rejected() {
        let g = ParameterGrid::new(vec![1000.0], vec![50.0], vec![-50.0, 50.0]).unwrap();
        assert!(matches!(Dictionary::generate(&g, 10.0, 16), Err(Error::InvalidGrid(_))));
        assert!(Dictionary::generate(&g, 1.5, 16).is_ok());
        assert_eq!(ParameterGrid::brain().b0_alias(10.0), Some((-250.0, -50.0)));
        assert_eq!(ParameterGrid::brain().b0_alias(1.5), None);
    }

    #[test]
    fn atoms_are_unit_norm() {
        let d = Dictionary::generate(&small_grid(), 1.5, 50).unwrap();
        for j in 0..d.len() {
            let n: f64 = d.atom(j).iter().map(|z| z.norm_sqr()).sum();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn filter_drops_long_t2() {
        let g = small_grid();
        // 600 > every T1 except 1000
        assert_eq!(g.count(), (2 + 2 + 3) * 3);
        let d = Dictionary::generate(&g, 1.5, 20).unwrap();
        assert_eq!(d.len(), g.count());
        assert_eq!(d.unfiltered_count(), 27);
    }

    #[test]
    fn infinite_t1_leaves_t2_envelope() {
        let (tr, t2, l) = (3.0, 40.0, 30);
        let f = fingerprint(1e12, t2, 0.0, tr, l);
        for (k, z) in f.iter().enumerate() {
            let t = (k + 1) as f64;
            assert!((z.norm() - (-t * tr / t2).exp()).abs() < 1e-6);
        }
        let g = ParameterGrid::new(vec![1e12], vec![t2], vec![0.0]).unwrap();
        let d = Dictionary::generate(&g, tr, l).unwrap();
        for (k, z) in d.atom(0).iter().enumerate() {
            let t = (k + 1) as f64;
            assert!((z.norm() * d.norms()[0] - (-t * tr / t2).exp()).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_off_resonance_is_real() {
        let f = fingerprint(800.0, 70.0, 0.0, 1.5, 100);
        assert!(f.iter().all(|z| z.im.abs() < 1e-12));
    }

    #[test]
    fn lookup_round_trip() {
        let d = Dictionary::generate(&small_grid(), 1.5, 40).unwrap();
        assert_eq!(d.lookup(0).unwrap(), [100.0, 20.0, -30.0]);
        for j in 0..d.len() {
            let [t1, t2, b0] = d.lookup(j).unwrap();
            let f = fingerprint(t1, t2, b0, 1.5, 40);
            let n: f64 = f.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            for (a, b) in f.iter().zip(d.atom(j)) {
                assert!((a / n - b).norm() < 1e-12);
            }
        }
        assert!(matches!(d.lookup(d.len()), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn lookup_is_a_bijection() {
        let g = small_grid();
        let d = Dictionary::generate(&g, 1.5, 10).unwrap();
        let mut expected: Vec<[u64; 3]> = Vec::new();
        for &t1 in &g.t1 {
            for &t2 in &g.t2 {
                for &b0 in &g.b0 {
                    if t2 <= t1 {
                        expected.push([t1.to_bits(), t2.to_bits(), b0.to_bits()]);
                    }
                }
            }
        }
        let mut got: Vec<[u64; 3]> =
            d.lookup_table().iter().map(|p| [p[0].to_bits(), p[1].to_bits(), p[2].to_bits()]).collect();
        expected.sort();
        got.sort();
        got.dedup();
        assert_eq!(got, expected);
    }

    #[test]
    fn invalid_generation_arguments() {
        let g = small_grid();
        assert!(Dictionary::generate(&g, 0.0, 10).is_err());
        assert!(Dictionary::generate(&g, 1.5, 1).is_err());
        let g = ParameterGrid::new(vec![10.0], vec![20.0], vec![0.0]).unwrap();
        assert!(matches!(Dictionary::generate(&g, 1.5, 10), Err(Error::InvalidGrid(_))));
    }

    #[test]
    fn from_atoms_checks_lookup_length() {
        let a = Array2::from_elem((3, 4), Complex64::new(1.0, 0.0));
        assert!(Dictionary::from_atoms(a, vec![[0.0; 3]; 2], 1.0).is_err());
    }
}
