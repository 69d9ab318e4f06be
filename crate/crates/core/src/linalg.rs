//! Small dense helpers shared across modules.
//!
//! Complex vectors are compared through their real embedding: a `[Complex64]`
//! slice of length `L` is viewed as `2L` interleaved reals, and every distance in
//! the crate goes through [`sq_dist`] so that tree search and brute force see
//! bit-identical values for the same pair of points.

use ndarray::{Array2, ArrayView1, ArrayView2};
use num_complex::Complex64;

/// Reinterpret a complex slice as interleaved `(re, im)` reals.
#[inline]
pub fn as_real(v: &[Complex64]) -> &[f64] {
    bytemuck::cast_slice(v)
}

/// Squared Euclidean distance between two real vectors of equal length.
#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            let d = x[k] - y[k];
            acc[k] += d * d;
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        let d = x - y;
        tail += d * d;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    sq_dist(a, b).sqrt()
}

pub fn norm_sqr_slice(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// Squared Frobenius norm.
pub fn norm_sqr(a: ArrayView2<Complex64>) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

pub fn norm(a: ArrayView2<Complex64>) -> f64 {
    norm_sqr(a).sqrt()
}

/// `Σ w_i |a_i|²`, elementwise weights of the same shape.
pub fn weighted_norm_sqr(a: ArrayView2<Complex64>, w: ArrayView2<f64>) -> f64 {
    a.iter().zip(w.iter()).map(|(z, &wi)| wi * z.norm_sqr()).sum()
}

/// `⟨a, b⟩ = Σ a_i conj(b_i)` over two rows.
pub fn inner(a: ArrayView1<Complex64>, b: ArrayView1<Complex64>) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y.conj()).sum()
}

/// Frobenius inner product of two matrices.
pub fn inner_mat(a: ArrayView2<Complex64>, b: ArrayView2<Complex64>) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y.conj()).sum()
}

pub fn to_nalgebra(a: ArrayView2<Complex64>) -> nalgebra::DMatrix<Complex64> {
    let (r, c) = a.dim();
    nalgebra::DMatrix::from_fn(r, c, |i, j| a[[i, j]])
}

pub fn from_nalgebra(m: &nalgebra::DMatrix<Complex64>) -> Array2<Complex64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}
