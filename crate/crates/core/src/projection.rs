//! Per-voxel projection onto the cone of fingerprints.
//!
//! For each row `Z_v` the nearest unit atom to `Z_v/‖Z_v‖` is found, either by
//! exhaustive search or by cover tree `(1+ε)` search, and the row is replaced by
//! `γ_v D_j` with `γ_v = max(Re⟨Z_v, D_j⟩/‖D_j‖², 0)`.
//!
//! Both searches measure distances with [`crate::linalg::dist`] on the same
//! real embedding, so at `ε = 0` they agree bit for bit, ties included (lowest
//! index wins).

use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;

use crate::covertree::CoverTree;
use crate::dictionary::Atoms;
use crate::linalg::{as_real, dist, norm_sqr_slice};
use crate::{Error, Exec, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ConeProjection {
    pub indices: Vec<usize>,
    pub gammas: Vec<f64>,
    /// Row `v` is `gammas[v] · atom(indices[v])`.
    pub projected: Array2<Complex64>,
    /// Distance evaluations spent on the search.
    pub cost: u64,
}

struct Voxel {
    index: usize,
    gamma: f64,
    cost: u64,
}

fn normalized(z: &[Complex64]) -> Option<Vec<Complex64>> {
    let n = norm_sqr_slice(z).sqrt();
    (n > 0.0).then(|| z.iter().map(|x| x / n).collect())
}

fn gamma(z: &[Complex64], atom: &[Complex64]) -> f64 {
    let re: f64 = z.iter().zip(atom).map(|(a, b)| (a * b.conj()).re).sum();
    (re / norm_sqr_slice(atom)).max(0.0)
}

fn check<D: Atoms + ?Sized>(z: ArrayView2<Complex64>, dict: &D, prev: Option<&[usize]>) -> Result<()> {
    if z.ncols() != dict.dim() {
        return Err(Error::dim(dict.dim(), z.ncols()));
    }
    if dict.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let Some(p) = prev {
        if p.len() != z.nrows() {
            return Err(Error::dim(z.nrows(), p.len()));
        }
        if let Some(&bad) = p.iter().find(|&&j| j >= dict.len()) {
            return Err(Error::IndexOutOfRange { index: bad, len: dict.len() });
        }
    }
    Ok(())
}

fn assemble<D: Atoms + ?Sized>(dict: &D, voxels: Vec<Voxel>) -> ConeProjection {
    let n = voxels.len();
    let mut projected = Array2::zeros((n, dict.dim()));
    for (mut row, vx) in projected.rows_mut().into_iter().zip(&voxels) {
        if vx.gamma > 0.0 {
            for (r, a) in row.iter_mut().zip(dict.atom(vx.index)) {
                *r = a * vx.gamma;
            }
        }
    }
    ConeProjection {
        indices: voxels.iter().map(|v| v.index).collect(),
        gammas: voxels.iter().map(|v| v.gamma).collect(),
        cost: voxels.iter().map(|v| v.cost).sum(),
        projected,
    }
}

/// Exhaustive matched filtering.
pub fn project_cone_exact<D: Atoms + ?Sized>(z: ArrayView2<Complex64>, dict: &D) -> Result<ConeProjection> {
    project_cone_exact_with(z, dict, None, Exec::default())
}

/// `prev` only supplies the index reported for all-zero rows.
pub fn project_cone_exact_with<D: Atoms + ?Sized>(
    z: ArrayView2<Complex64>,
    dict: &D,
    prev: Option<&[usize]>,
    exec: Exec,
) -> Result<ConeProjection> {
    check(z, dict, prev)?;
    let z = z.as_standard_layout();
    let zs = z.as_slice().expect("standard layout");
    let l = dict.dim();
    let voxels = exec.map(z.nrows(), |v| {
        let row = &zs[v * l..(v + 1) * l];
        let Some(q) = normalized(row) else {
            return Voxel { index: prev.map_or(0, |p| p[v]), gamma: 0.0, cost: 0 };
        };
        let q = as_real(&q);
        let mut best = (f64::INFINITY, 0usize);
        for j in 0..dict.len() {
            let d = dist(q, as_real(dict.atom(j)));
            if d < best.0 {
                best = (d, j);
            }
        }
        Voxel { index: best.1, gamma: gamma(row, dict.atom(best.1)), cost: dict.len() as u64 }
    });
    Ok(assemble(dict, voxels))
}

/// Cover tree matched filtering, warm-started from `prev` when given.
pub fn project_cone_ann<D: Atoms + ?Sized>(
    z: ArrayView2<Complex64>,
    tree: &CoverTree,
    dict: &D,
    epsilon: f64,
    prev: Option<&[usize]>,
) -> Result<ConeProjection> {
    project_cone_ann_with(z, tree, dict, epsilon, prev, Exec::default())
}

pub fn project_cone_ann_with<D: Atoms + ?Sized>(
    z: ArrayView2<Complex64>,
    tree: &CoverTree,
    dict: &D,
    epsilon: f64,
    prev: Option<&[usize]>,
    exec: Exec,
) -> Result<ConeProjection> {
    check(z, dict, prev)?;
    if tree.len() != dict.len() || tree.point_dim() != 2 * dict.dim() {
        return Err(Error::InvalidArgument("cover tree was not built on this dictionary".into()));
    }
    if !(epsilon >= 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidArgument(format!("epsilon must be finite and ≥ 0, got {epsilon}")));
    }
    let z = z.as_standard_layout();
    let zs = z.as_slice().expect("standard layout");
    let l = dict.dim();
    let voxels = exec.map(z.nrows(), |v| -> Result<Voxel> {
        let row = &zs[v * l..(v + 1) * l];
        let warm = prev.map(|p| p[v]);
        let Some(q) = normalized(row) else {
            return Ok(Voxel { index: warm.unwrap_or(0), gamma: 0.0, cost: 0 });
        };
        let r = tree.ann_search(as_real(&q), epsilon, warm)?;
        // keep the previous atom unless the new one is strictly better in (distance, index)
        let index = match (warm, r.warm_distance) {
            (Some(w), Some(dw)) if (dw, w) < (r.distance, r.index) => w,
            _ => r.index,
        };
        Ok(Voxel { index, gamma: gamma(row, dict.atom(index)), cost: r.cost })
    });
    let voxels = voxels.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(assemble(dict, voxels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::Dictionary;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(rng: &mut ChaCha8Rng) -> Complex64 {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    }

    fn random_dict(d: usize, l: usize, seed: u64) -> Dictionary {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Array2::from_shape_simple_fn((d, l), || c(&mut rng));
        Dictionary::from_atoms(a, (0..d).map(|j| [j as f64, 1.0, 0.0]).collect(), 1.0).unwrap()
    }

    fn random_image(n: usize, l: usize, seed: u64) -> Array2<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((n, l), || c(&mut rng))
    }

    fn row_dist(a: &[Complex64], b: &[Complex64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
    }

    #[test]
    fn point_on_the_cone_is_fixed() {
        let d = random_dict(7, 5, 1);
        let mut z = Array2::zeros((1, 5));
        for (t, a) in d.atom(3).iter().enumerate() {
            z[[0, t]] = a * 2.5;
        }
        let p = project_cone_exact(z.view(), &d).unwrap();
        assert_eq!(p.indices, vec![3]);
        assert!((p.gammas[0] - 2.5).abs() < 1e-12);
        assert!(row_dist(p.projected.row(0).as_slice().unwrap(), z.row(0).as_slice().unwrap()) < 1e-12);
    }

    #[test]
    fn negative_correlation_clips_to_zero() {
        let d = random_dict(1, 4, 2);
        let z = Array2::from_shape_fn((1, 4), |(_, t)| -d.atom(0)[t]);
        let p = project_cone_exact(z.view(), &d).unwrap();
        assert_eq!(p.gammas, vec![0.0]);
        assert!(p.projected.iter().all(|x| *x == Complex64::ZERO));
    }

    #[test]
    fn exact_matches_exhaustive_cone_minimizer() {
        let d = random_dict(5, 6, 3);
        let z = random_image(3, 6, 4);
        let p = project_cone_exact(z.view(), &d).unwrap();
        for v in 0..3 {
            let zv = z.row(v).to_vec();
            // per atom, the best γ ≥ 0 is the clipped real inner product
            let mut best = (f64::INFINITY, 0, 0.0);
            for j in 0..5 {
                let a = d.atom(j);
                let g = zv.iter().zip(a).map(|(x, y)| (x * y.conj()).re).sum::<f64>().max(0.0);
                let cand: Vec<Complex64> = a.iter().map(|x| x * g).collect();
                let e = row_dist(&zv, &cand);
                if e < best.0 {
                    best = (e, j, g);
                }
            }
            let got = row_dist(&zv, p.projected.row(v).as_slice().unwrap());
            assert!((got - best.0).abs() < 1e-12);
            assert_eq!(p.indices[v], best.1);
        }
        assert_eq!(p.cost, 15);
    }

    #[test]
    fn normalized_argmin_agrees_with_raw_argmin_over_the_cone() {
        // argmin_j ‖Z_v − D_j‖ over unit atoms, then rescaling, lands on the same atom
        // as the normalized search whenever the best correlation is positive
        let d = random_dict(40, 8, 5);
        let z = random_image(50, 8, 6);
        let p = project_cone_exact(z.view(), &d).unwrap();
        for v in 0..50 {
            let zv = z.row(v).to_vec();
            let raw = (0..40)
                .min_by(|&a, &b| row_dist(&zv, d.atom(a)).total_cmp(&row_dist(&zv, d.atom(b))))
                .unwrap();
            if p.gammas[v] > 0.0 {
                assert_eq!(raw, p.indices[v]);
            }
        }
    }

    #[test]
    fn idempotent() {
        let d = random_dict(30, 6, 7);
        let z = random_image(20, 6, 8);
        let p = project_cone_exact(z.view(), &d).unwrap();
        let q = project_cone_exact(p.projected.view(), &d).unwrap();
        assert!((&p.projected - &q.projected).iter().all(|x| x.norm() < 1e-12));
    }

    #[test]
    fn zero_rows_keep_previous_index() {
        let d = random_dict(10, 4, 9);
        let tree = d.build_tree().unwrap();
        let z = Array2::zeros((2, 4));
        let prev = [7, 2];
        let p = project_cone_ann(z.view(), &tree, &d, 0.4, Some(&prev)).unwrap();
        assert_eq!(p.indices, vec![7, 2]);
        assert_eq!(p.gammas, vec![0.0, 0.0]);
        assert_eq!(p.cost, 0);
        let e = project_cone_exact_with(z.view(), &d, Some(&prev), Exec::Sequential).unwrap();
        assert_eq!(e.indices, vec![7, 2]);
    }

    #[test]
    fn ann_at_zero_epsilon_equals_exact() {
        let d = random_dict(300, 8, 10);
        let tree = d.build_tree().unwrap();
        let z = random_image(100, 8, 11);
        let e = project_cone_exact(z.view(), &d).unwrap();
        let a = project_cone_ann(z.view(), &tree, &d, 0.0, None).unwrap();
        assert_eq!(e.indices, a.indices);
        assert_eq!(e.gammas, a.gammas);
        assert_eq!(e.projected, a.projected);
    }

    #[test]
    fn ann_meets_the_relative_contract() {
        let d = random_dict(400, 6, 12);
        let tree = d.build_tree().unwrap();
        let z = random_image(200, 6, 13);
        let p = project_cone_ann(z.view(), &tree, &d, 0.4, None).unwrap();
        for v in 0..200 {
            let zv = z.row(v).to_vec();
            let n = zv.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
            let q: Vec<Complex64> = zv.iter().map(|x| x / n).collect();
            let best = (0..400).map(|j| row_dist(&q, d.atom(j))).fold(f64::INFINITY, f64::min);
            assert!(row_dist(&q, d.atom(p.indices[v])) <= 1.4 * best * (1.0 + 1e-12));
        }
    }

    #[test]
    fn warm_start_is_non_expansive() {
        let d = random_dict(400, 6, 14);
        let tree = d.build_tree().unwrap();
        let z = random_image(200, 6, 15);
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let prev: Vec<usize> = (0..200).map(|_| rng.random_range(0..400)).collect();
        let p = project_cone_ann(z.view(), &tree, &d, 1.6, Some(&prev)).unwrap();
        for v in 0..200 {
            let zv = z.row(v).to_vec();
            let n = zv.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
            let q: Vec<Complex64> = zv.iter().map(|x| x / n).collect();
            assert!(row_dist(&q, d.atom(p.indices[v])) <= row_dist(&q, d.atom(prev[v])));
            // cone distance with γ re-optimized on the previous atom
            let a = d.atom(prev[v]);
            let g = zv.iter().zip(a).map(|(x, y)| (x * y.conj()).re).sum::<f64>().max(0.0);
            let old: Vec<Complex64> = a.iter().map(|x| x * g).collect();
            assert!(row_dist(&zv, p.projected.row(v).as_slice().unwrap()) <= row_dist(&zv, &old) + 1e-12);
        }
    }

    #[test]
    fn cost_matches_tree_counter() {
        let d = random_dict(300, 5, 17);
        let tree = d.build_tree().unwrap();
        let z = random_image(64, 5, 18);
        let before = tree.distance_count();
        let p = project_cone_ann(z.view(), &tree, &d, 0.2, None).unwrap();
        assert_eq!(tree.distance_count() - before, p.cost);
    }

    #[test]
    fn outputs_lie_in_the_cone() {
        let d = random_dict(50, 4, 19);
        let tree = d.build_tree().unwrap();
        let z = random_image(40, 4, 20);
        let p = project_cone_ann(z.view(), &tree, &d, 0.8, None).unwrap();
        for v in 0..40 {
            assert!(p.gammas[v] >= 0.0);
            for (x, a) in p.projected.row(v).iter().zip(d.atom(p.indices[v])) {
                assert_eq!(*x, a * p.gammas[v]);
            }
        }
    }

    #[test]
    fn policies_agree() {
        let d = random_dict(120, 6, 21);
        let tree = d.build_tree().unwrap();
        let z = random_image(60, 6, 22);
        let a = project_cone_ann_with(z.view(), &tree, &d, 0.4, None, Exec::Sequential).unwrap();
        let b = project_cone_ann_with(z.view(), &tree, &d, 0.4, None, Exec::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dimension_checks() {
        let d = random_dict(10, 4, 23);
        assert!(project_cone_exact(Array2::zeros((2, 5)).view(), &d).is_err());
        let other = random_dict(11, 4, 24).build_tree().unwrap();
        assert!(project_cone_ann(Array2::zeros((2, 4)).view(), &other, &d, 0.1, None).is_err());
    }
}
