use ndarray::{s, Array2, ArrayView2};
use num_complex::Complex64;

use super::{Atoms, Dictionary};
use crate::linalg::{from_nalgebra, to_nalgebra};
use crate::{Error, Result};

/// Above this many atom entries the basis comes from the `L × L` Gram matrix
/// instead of a full SVD.
const SVD_ENTRY_LIMIT: usize = 10_000_000;

/// Dictionary expressed in the top-`s` singular basis of its atoms.
///
/// Rows of an `n × L` image compress as `X̃ = X·conj(V_s)` and decompress as
/// `X = X̃·V_sᵀ`; per row that is `x̃ = V_sᴴx` and `x = V_s x̃`.
#[derive(Clone, Debug, PartialEq)]
pub struct CompressedDictionary {
    basis: Array2<Complex64>,
    basis_conj: Array2<Complex64>,
    atoms: Array2<Complex64>,
    factors: Vec<f64>,
    /// All squared singular values, descending.
    energies: Vec<f64>,
    lookup: Vec<[f64; 3]>,
    tr_ms: f64,
}

/// Eigenvectors of `Σ_j D_j D_jᴴ` (columns) and their eigenvalues, descending.
fn dominant_basis(atoms: ArrayView2<Complex64>) -> (Array2<Complex64>, Vec<f64>) {
    let (d, l) = atoms.dim();
    let (vectors, values) = if d >= l && d * l <= SVD_ENTRY_LIMIT {
        let m = to_nalgebra(atoms.t());
        let svd = m.svd(true, false);
        let u = svd.u.expect("left singular vectors requested");
        let vals: Vec<f64> = svd.singular_values.iter().map(|s| s * s).collect();
        (from_nalgebra(&u), vals)
    } else {
        let gram = atoms.t().dot(&atoms.mapv(|z| z.conj()));
        let eig = to_nalgebra(gram.view()).symmetric_eigen();
        let vals: Vec<f64> = eig.eigenvalues.iter().map(|&e| e.max(0.0)).collect();
        (from_nalgebra(&eig.eigenvectors), vals)
    };
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut basis = Array2::zeros((l, order.len()));
    for (k, &o) in order.iter().enumerate() {
        basis.column_mut(k).assign(&vectors.column(o));
    }
    let energies = order.iter().map(|&o| values[o]).collect();
    (basis, energies)
}

impl CompressedDictionary {
    pub fn new(dict: &Dictionary, s: usize) -> Result<Self> {
        let l = dict.dim();
        if s < 1 || s > l {
            return Err(Error::InvalidArgument(format!("compression rank must be in 1..={l}, got {s}")));
        }
        let (full, mut energies) = dominant_basis(dict.atoms());
        if full.ncols() < s {
            return Err(Error::InvalidArgument(format!(
                "only {} basis vectors available for rank {s}",
                full.ncols()
            )));
        }
        energies.resize(l, 0.0);
        let basis = full.slice(s![.., ..s]).to_owned();
        let basis_conj = basis.mapv(|z| z.conj());
        let mut atoms = dict.atoms().dot(&basis_conj);
        let mut factors = Vec::with_capacity(atoms.nrows());
        for (j, mut row) in atoms.rows_mut().into_iter().enumerate() {
            let n = row.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if !(n > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "atom {j} vanishes in the rank-{s} subspace"
                )));
            }
            row.mapv_inplace(|z| z / n);
            factors.push(n);
        }
        Ok(Self {
            basis,
            basis_conj,
            atoms,
            factors,
            energies,
            lookup: dict.lookup_table().to_vec(),
            tr_ms: dict.tr_ms(),
        })
    }

    /// `L × s` basis with orthonormal columns.
    pub fn basis(&self) -> ArrayView2<'_, Complex64> {
        self.basis.view()
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    /// Norms of `V_sᴴD_j` before renormalization.
    pub fn factors(&self) -> &[f64] {
        &self.factors
    }

    /// Squared singular values of the atom matrix, descending, padded to `L`.
    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    /// `Σ_{k>s} σ_k²`.
    pub fn tail_energy(&self) -> f64 {
        self.energies[self.rank()..].iter().sum()
    }

    pub fn tr_ms(&self) -> f64 {
        self.tr_ms
    }

    /// `n × L` → `n × s`.
    pub fn compress(&self, x: ArrayView2<Complex64>) -> Result<Array2<Complex64>> {
        if x.ncols() != self.ambient_dim() {
            return Err(Error::dim(self.ambient_dim(), x.ncols()));
        }
        Ok(x.dot(&self.basis_conj))
    }

    /// `n × s` → `n × L`.
    pub fn decompress(&self, x: ArrayView2<Complex64>) -> Result<Array2<Complex64>> {
        if x.ncols() != self.rank() {
            return Err(Error::dim(self.rank(), x.ncols()));
        }
        Ok(x.dot(&self.basis.t()))
    }

    /// `Σ_j ‖D_j − V_sV_sᴴD_j‖²` over the atoms of `dict`.
    pub fn residual(&self, dict: &Dictionary) -> Result<f64> {
        let coeff = self.compress(dict.atoms())?;
        let recon = self.decompress(coeff.view())?;
        Ok((&dict.atoms() - &recon).iter().map(|z| z.norm_sqr()).sum())
    }
}

impl Atoms for CompressedDictionary {
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
