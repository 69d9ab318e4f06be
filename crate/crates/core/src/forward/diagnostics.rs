use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ForwardOperator;
use crate::dictionary::Atoms;
use crate::linalg::{norm, norm_sqr};
use crate::{Error, Result};

const POWER_TOL: f64 = 1e-8;
const POWER_MAX_ITERS: usize = 1000;

/// Largest singular value `|||A|||` by power iteration on `AᴴA`.
pub fn estimate_spectral_norm(op: &ForwardOperator) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut x = Array2::from_shape_simple_fn((op.n(), op.l()), || {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    });
    let nx = norm(x.view());
    x.mapv_inplace(|z| z / nx);
    let mut lambda = 0.0f64;
    for _ in 0..POWER_MAX_ITERS {
        let y = op.adjoint(op.apply(x.view())?.view())?;
        let next: f64 = x.iter().zip(y.iter()).map(|(a, b)| (a.conj() * b).re).sum();
        let ny = norm(y.view());
        if ny == 0.0 {
            return Ok(0.0);
        }
        x = y.mapv(|z| z / ny);
        let done = (next - lambda).abs() <= POWER_TOL * next.abs();
        lambda = next;
        if done {
            break;
        }
    }
    Ok(lambda.max(0.0).sqrt())
}

fn check_dims<D: Atoms + ?Sized>(op: &ForwardOperator, dict: &D) -> Result<()> {
    if dict.dim() != op.l() {
        return Err(Error::dim(op.l(), dict.dim()));
    }
    if dict.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(())
}

fn ratio(op: &ForwardOperator, diff: &Array2<Complex64>) -> Result<Option<f64>> {
    let den = norm_sqr(diff.view());
    if den == 0.0 {
        return Ok(None);
    }
    Ok(Some(norm_sqr(op.apply(diff.view())?.view()) / den))
}

fn sample_cone<D: Atoms + ?Sized>(
    dict: &D,
    n: usize,
    rng: &mut ChaCha8Rng,
    scale: &mut impl FnMut(&mut ChaCha8Rng) -> f64,
) -> Array2<Complex64> {
    let mut x = Array2::zeros((n, dict.dim()));
    for mut row in x.rows_mut() {
        let j = rng.random_range(0..dict.len());
        let g = scale(rng);
        for (r, a) in row.iter_mut().zip(dict.atom(j)) {
            *r = a * g;
        }
    }
    x
}

fn sampled<D: Atoms + ?Sized>(
    op: &ForwardOperator,
    dict: &D,
    n_pairs: usize,
    seed: u64,
    mut scale: impl FnMut(&mut ChaCha8Rng) -> f64,
) -> Result<(f64, f64)> {
    check_dims(op, dict)?;
    if n_pairs == 0 {
        return Err(Error::InvalidArgument("need at least one pair".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for _ in 0..n_pairs {
        let a = sample_cone(dict, op.n(), &mut rng, &mut scale);
        let b = sample_cone(dict, op.n(), &mut rng, &mut scale);
        if let Some(r) = ratio(op, &(a - b))? {
            lo = lo.min(r);
            hi = hi.max(r);
        }
    }
    if hi == 0.0 && lo.is_infinite() {
        return Err(Error::InvalidArgument("every sampled pair coincided".into()));
    }
    Ok((lo, hi))
}

/// Extremes of `‖A(x−x')‖²/‖x−x'‖²` over random pairs of cone points with
/// per-voxel scales uniform in `[0.5, 2)`.
pub fn estimate_bilipschitz<D: Atoms + ?Sized>(
    op: &ForwardOperator,
    dict: &D,
    n_pairs: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    sampled(op, dict, n_pairs, seed, |rng| rng.random_range(0.5..2.0))
}

/// As [`estimate_bilipschitz`] with scales drawn from a finite set.
pub fn estimate_bilipschitz_with_scales<D: Atoms + ?Sized>(
    op: &ForwardOperator,
    dict: &D,
    n_pairs: usize,
    seed: u64,
    scales: &[f64],
) -> Result<(f64, f64)> {
    if scales.is_empty() || scales.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::InvalidArgument("scales must be positive".into()));
    }
    sampled(op, dict, n_pairs, seed, |rng| scales[rng.random_range(0..scales.len())])
}

/// Exact extremes over every pair of cone points whose voxels use any atom
/// and any scale from `scales`. Only feasible for tiny `n`, `d`.
pub fn estimate_bilipschitz_exhaustive<D: Atoms + ?Sized>(
    op: &ForwardOperator,
    dict: &D,
    scales: &[f64],
) -> Result<(f64, f64)> {
    check_dims(op, dict)?;
    if scales.is_empty() || scales.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::InvalidArgument("scales must be positive".into()));
    }
    let per_voxel = (dict.len() * scales.len()).pow(2);
    let total = (per_voxel as f64).powi(op.n() as i32);
    if total > 1e7 {
        return Err(Error::InvalidArgument(format!("{total:.0} pairs is too many for exhaustive mode")));
    }
    let total = total as usize;
    let l = dict.dim();
    let choice = |c: usize| {
        let k = scales.len();
        let (ja, rest) = (c % dict.len(), c / dict.len());
        let (ga, rest) = (scales[rest % k], rest / k);
        let (jb, rest) = (rest % dict.len(), rest / dict.len());
        let gb = scales[rest % k];
        (ja, ga, jb, gb)
    };
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    let mut diff = Array2::zeros((op.n(), l));
    for mut code in 0..total {
        for v in 0..op.n() {
            let (ja, ga, jb, gb) = choice(code % per_voxel);
            code /= per_voxel;
            for t in 0..l {
                diff[[v, t]] = dict.atom(ja)[t] * ga - dict.atom(jb)[t] * gb;
            }
        }
        if let Some(r) = ratio(op, &diff)? {
            lo = lo.min(r);
            hi = hi.max(r);
        }
    }
    Ok((lo, hi))
}
