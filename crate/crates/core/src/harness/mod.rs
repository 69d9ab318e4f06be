//! Phantoms, measurement simulation, reconstruction metrics and the
//! experiment runner.

mod experiment;
mod phantom;

pub use experiment::{
    env_output_root, run_experiment, AlgorithmRow, DictionaryConfig, ExperimentConfig, ExperimentReport,
    OperatorConfig, PhantomConfig, OUTPUT_ROOT_ENV,
};
pub use phantom::{CustomPhantom, Layout, Phantom, ADIPOSE, CSF, GREY_MATTER, SKIN_MUSCLE, WHITE_MATTER};

use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::dictionary::ParameterGrid;
use crate::forward::ForwardOperator;
use crate::linalg::norm;
use crate::{Error, Result};

impl std::str::FromStr for Layout {
    type Err = Error;

    /// Accepts `brainweb_like` and `custom_file:<path>`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "brainweb_like" => Ok(Layout::BrainwebLike),
            _ => match s.strip_prefix("custom_file:") {
                Some(p) => Ok(Layout::CustomFile(p.into())),
                None => Err(Error::UnknownLayout(s.to_string())),
            },
        }
    }
}

pub fn build_phantom(h: usize, w: usize, layout: &Layout, grid: &ParameterGrid, snap: bool) -> Result<Phantom> {
    Phantom::build(h, w, layout, grid, snap)
}

/// `A(X₀) + ξ` with complex white Gaussian `ξ` scaled so that
/// `20·log10(‖A X₀‖/‖ξ‖) = snr_db`. An infinite SNR adds nothing.
pub fn simulate_measurements(
    x0: ArrayView2<Complex64>,
    op: &ForwardOperator,
    snr_db: f64,
    seed: u64,
) -> Result<Array2<Complex64>> {
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(Error::InvalidArgument(format!("bad SNR {snr_db}")));
    }
    let mut y = op.apply(x0)?;
    if snr_db == f64::INFINITY {
        return Ok(y);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Array2::from_shape_simple_fn(y.dim(), || {
        Complex64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))
    });
    let nn = norm(noise.view());
    let target = norm(y.view()) * 10f64.powf(-snr_db / 20.0);
    if nn > 0.0 {
        y.zip_mut_with(&noise, |a, b| *a += b * (target / nn));
    }
    Ok(y)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Metrics {
    pub nmse: f64,
    pub t1_acc: f64,
    pub t2_acc: f64,
    pub b0_acc: f64,
    pub mask_voxels: usize,
}

/// Object voxels whose estimated proton density exceeds `fraction · max`.
pub fn pd_mask(pd: &[f64], phantom: &Phantom, fraction: f64) -> Vec<usize> {
    let max = pd.iter().copied().fold(0.0, f64::max);
    (0..pd.len())
        .filter(|&v| pd[v] > fraction * max && phantom.labels[v] != 0)
        .collect()
}

/// NMSE over the whole image and `1 − mean |p̂ − p|/p` accuracies over the
/// proton density mask. B0 divides by `max(|B0|, 1 Hz)`.
pub fn compute_metrics(
    maps: &[[f64; 3]],
    pd: &[f64],
    image: ArrayView2<Complex64>,
    phantom: &Phantom,
    gt: ArrayView2<Complex64>,
    mask_fraction: f64,
) -> Result<Metrics> {
    let n = phantom.n();
    if maps.len() != n || pd.len() != n || image.dim() != gt.dim() || gt.nrows() != n {
        return Err(Error::InvalidArgument("estimate and phantom sizes differ".into()));
    }
    let mask = pd_mask(pd, phantom, mask_fraction);
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    let acc = |k: usize, floor: f64| {
        let s: f64 = mask
            .iter()
            .map(|&v| {
                let t = phantom.voxel_params(v).expect("mask is inside the object")[k];
                (maps[v][k] - t).abs() / t.abs().max(floor)
            })
            .sum();
        1.0 - s / mask.len() as f64
    };
    Ok(Metrics {
        nmse: norm((&image - &gt).view()) / norm(gt),
        t1_acc: acc(0, 0.0),
        t2_acc: acc(1, 0.0),
        b0_acc: acc(2, 1.0),
        mask_voxels: mask.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::SamplingPattern;

    fn blocks() -> Phantom {
        let layout = Layout::Blocks { rows: 1, cols: 2, tissues: vec![[800.0, 60.0, 0.5], [1200.0, 100.0, -20.0]] };
        Phantom::build(3, 4, &layout, &ParameterGrid::brain(), false).unwrap()
    }

    #[test]
    fn perfect_recovery() {
        let ph = blocks();
        let gt = ph.gt_image(10.0, 8).unwrap();
        let maps: Vec<[f64; 3]> = (0..ph.n()).map(|v| ph.voxel_params(v).unwrap_or([0.0; 3])).collect();
        let m = compute_metrics(&maps, &ph.pd, gt.view(), &ph, gt.view(), 0.05).unwrap();
        assert_eq!((m.nmse, m.t1_acc, m.t2_acc, m.b0_acc, m.mask_voxels), (0.0, 1.0, 1.0, 1.0, 2));
    }

    #[test]
    fn doubled_t1_scores_zero() {
        let ph = blocks();
        let gt = ph.gt_image(10.0, 8).unwrap();
        let maps: Vec<[f64; 3]> = (0..ph.n())
            .map(|v| ph.voxel_params(v).map_or([0.0; 3], |p| [2.0 * p[0], p[1], p[2]]))
            .collect();
        let m = compute_metrics(&maps, &ph.pd, gt.view(), &ph, gt.view(), 0.05).unwrap();
        assert_eq!(m.t1_acc, 0.0);
    }

    #[test]
    fn hand_computed_case() {
        let ph = blocks();
        let gt = ph.gt_image(10.0, 8).unwrap();
        let mut maps = vec![[0.0; 3]; ph.n()];
        // voxels 5 and 6 are the two object voxels
        maps[5] = [880.0, 45.0, 1.5];
        maps[6] = [1200.0, 110.0, -30.0];
        let mut pd = vec![0.0; ph.n()];
        pd[5] = 1.0;
        pd[6] = 0.5;
        pd[0] = 9.0;
        let est = gt.data.mapv(|z| z * 1.1);
        let m = compute_metrics(&maps, &pd, est.view(), &ph, gt.view(), 0.05).unwrap();
        assert_eq!(m.mask_voxels, 2);
        assert!((m.nmse - 0.1).abs() < 1e-12);
        assert!((m.t1_acc - (1.0 - 0.1 / 2.0)).abs() < 1e-12);
        assert!((m.t2_acc - (1.0 - (0.25 + 0.1) / 2.0)).abs() < 1e-12);
        assert!((m.b0_acc - (1.0 - (1.0 + 0.5) / 2.0)).abs() < 1e-12);
    }

    #[test]
    fn empty_mask() {
        let ph = blocks();
        let gt = ph.gt_image(10.0, 8).unwrap();
        let maps = vec![[0.0; 3]; ph.n()];
        let err = compute_metrics(&maps, &vec![0.0; ph.n()], gt.view(), &ph, gt.view(), 0.05).unwrap_err();
        assert!(matches!(err, Error::EmptyMask));
    }

    #[test]
    fn snr_is_exact_and_seeded() {
        let ph = blocks();
        let gt = ph.gt_image(10.0, 8).unwrap();
        let op = ForwardOperator::cartesian(SamplingPattern::full(3, 4, 8).unwrap());
        let clean = simulate_measurements(gt.view(), &op, f64::INFINITY, 1).unwrap();
        assert_eq!(clean, op.apply(gt.view()).unwrap());
        let y = simulate_measurements(gt.view(), &op, 50.0, 1).unwrap();
        let snr = 20.0 * (norm(clean.view()) / norm((&y - &clean).view())).log10();
        assert!((snr - 50.0).abs() < 0.1);
        assert_eq!(y, simulate_measurements(gt.view(), &op, 50.0, 1).unwrap());
        assert_ne!(y, simulate_measurements(gt.view(), &op, 50.0, 2).unwrap());
    }

    #[test]
    fn layout_from_name() {
        assert_eq!("brainweb_like".parse::<Layout>().unwrap(), Layout::BrainwebLike);
        assert!(matches!("spiral".parse::<Layout>(), Err(Error::UnknownLayout(_))));
    }
}
