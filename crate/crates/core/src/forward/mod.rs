//! Spatio-temporal acquisition operators `A = P_Ω F S` and their adjoints.
//!
//! Images are `n × L` complex matrices: row `v` is the time course of voxel `v`,
//! column `t` is frame `t` over the `h × w` grid (row-major). Measurements are
//! `c·m × L`: coil-major blocks of the `m` samples of each frame.
//!
//! The Fourier transform is the unitary 2-D DFT, so full single-coil sampling is
//! an isometry.

mod diagnostics;
mod io;
mod pattern;

pub use diagnostics::{estimate_bilipschitz, estimate_bilipschitz_exhaustive, estimate_bilipschitz_with_scales, estimate_spectral_norm};
pub use io::{read_measurements, read_measurements_from, write_measurements, write_measurements_to};
pub use pattern::{OffsetRule, PatternSpec, SamplingPattern};

use std::sync::Arc;

use ndarray::{Array2, ArrayView1, ArrayView2};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::{Fft, FftPlanner};

use crate::{Error, Exec, Result};

/// `n × L` image with its spatial shape.
#[derive(Clone, Debug, PartialEq)]
pub struct MrfImage {
    pub data: Array2<Complex64>,
    pub h: usize,
    pub w: usize,
}

impl MrfImage {
    pub fn new(data: Array2<Complex64>, h: usize, w: usize) -> Result<Self> {
        if data.nrows() != h * w {
            return Err(Error::dim(h * w, data.nrows()));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidArgument("image has non-finite entries".into()));
        }
        Ok(Self { data, h, w })
    }

    pub fn zeros(h: usize, w: usize, l: usize) -> Self {
        Self { data: Array2::zeros((h * w, l)), h, w }
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn frames(&self) -> usize {
        self.data.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, Complex64> {
        self.data.view()
    }
}

/// Spatial transform of a Cartesian operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Transform {
    Dft,
    /// Test hook: sample the image directly.
    Identity,
}

#[derive(Clone)]
struct Fft2 {
    h: usize,
    w: usize,
    fwd_h: Arc<dyn Fft<f64>>,
    fwd_w: Arc<dyn Fft<f64>>,
    inv_h: Arc<dyn Fft<f64>>,
    inv_w: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    fn new(h: usize, w: usize) -> Self {
        let mut p = FftPlanner::new();
        Self {
            h,
            w,
            fwd_h: p.plan_fft_forward(h),
            fwd_w: p.plan_fft_forward(w),
            inv_h: p.plan_fft_inverse(h),
            inv_w: p.plan_fft_inverse(w),
        }
    }

    /// In-place unitary 2-D transform of a row-major `h × w` buffer.
    fn run(&self, buf: &mut [Complex64], inverse: bool) {
        let (h, w) = (self.h, self.w);
        let (fh, fw) = if inverse { (&self.inv_h, &self.inv_w) } else { (&self.fwd_h, &self.fwd_w) };
        fw.process(buf);
        let mut col = vec![Complex64::ZERO; h];
        for c in 0..w {
            for r in 0..h {
                col[r] = buf[r * w + c];
            }
            fh.process(&mut col);
            for r in 0..h {
                buf[r * w + c] = col[r];
            }
        }
        let scale = 1.0 / ((h * w) as f64).sqrt();
        buf.iter_mut().for_each(|z| *z *= scale);
    }
}

#[derive(Clone)]
enum Kind {
    Cartesian { pattern: SamplingPattern, transform: Transform, fft: Fft2 },
    Gaussian { mats: Vec<Array2<Complex64>>, mats_h: Vec<Array2<Complex64>> },
    Diagonal { diag: Vec<f64> },
}

#[derive(Clone)]
pub struct ForwardOperator {
    kind: Kind,
    n: usize,
    m: usize,
    l: usize,
    coil_maps: Option<Array2<Complex64>>,
    weights: Option<Array2<f64>>,
    exec: Exec,
}

impl std::fmt::Debug for ForwardOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ForwardOperator")
            .field("kind", &self.kind_name())
            .field("n", &self.n)
            .field("m", &self.m)
            .field("L", &self.l)
            .field("coils", &self.coils())
            .field("weighted", &self.weights.is_some())
            .finish()
    }
}

impl ForwardOperator {
    pub fn cartesian(pattern: SamplingPattern) -> Self {
        Self::cartesian_with(pattern, Transform::Dft)
    }

    pub fn cartesian_with(pattern: SamplingPattern, transform: Transform) -> Self {
        let (n, m, l) = (pattern.n(), pattern.m(), pattern.frames());
        let fft = Fft2::new(pattern.h(), pattern.w());
        Self {
            kind: Kind::Cartesian { pattern, transform, fft },
            n,
            m,
            l,
            coil_maps: None,
            weights: None,
            exec: Exec::default(),
        }
    }

    /// Dense i.i.d. complex Gaussian entries with variance `1/m`, so that
    /// `E‖A x‖² = ‖x‖²`. One matrix for all frames unless `per_frame`.
    pub fn gaussian(n: usize, m: usize, l: usize, seed: u64, per_frame: bool) -> Result<Self> {
        if n == 0 || m == 0 || l == 0 {
            return Err(Error::InvalidArgument("gaussian operator needs n, m, L > 0".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, (0.5 / m as f64).sqrt()).expect("positive variance");
        let count = if per_frame { l } else { 1 };
        let mats: Vec<Array2<Complex64>> = (0..count)
            .map(|_| Array2::from_shape_simple_fn((m, n), || Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng))))
            .collect();
        let mats_h = mats.iter().map(|a| a.t().mapv(|z| z.conj())).collect();
        Ok(Self {
            kind: Kind::Gaussian { mats, mats_h },
            n,
            m,
            l,
            coil_maps: None,
            weights: None,
            exec: Exec::default(),
        })
    }

    /// `y_v = diag_v · x_v` for every frame.
    pub fn diagonal(diag: Vec<f64>, l: usize) -> Result<Self> {
        if diag.is_empty() || l == 0 {
            return Err(Error::InvalidArgument("diagonal operator needs n, L > 0".into()));
        }
        let n = diag.len();
        Ok(Self {
            kind: Kind::Diagonal { diag },
            n,
            m: n,
            l,
            coil_maps: None,
            weights: None,
            exec: Exec::default(),
        })
    }

    /// Coil sensitivities, `c × n`.
    pub fn with_coil_maps(mut self, maps: Array2<Complex64>) -> Result<Self> {
        if maps.ncols() != self.n || maps.nrows() == 0 {
            return Err(Error::dim(self.n, maps.ncols()));
        }
        if self.weights.is_some() {
            return Err(Error::InvalidArgument("set coil maps before weights".into()));
        }
        self.coil_maps = Some(maps);
        Ok(self)
    }

    /// Nonnegative sample weights shaped like the measurements (`c·m × L`).
    pub fn with_weights(mut self, weights: Array2<f64>) -> Result<Self> {
        let shape = self.measurement_shape();
        if weights.dim() != shape {
            return Err(Error::InvalidArgument(format!(
                "weights must be {}×{}, got {}×{}",
                shape.0,
                shape.1,
                weights.nrows(),
                weights.ncols()
            )));
        }
        if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument("weights must be finite and nonnegative".into()));
        }
        self.weights = Some(weights);
        Ok(self)
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub fn exec(&self) -> Exec {
        self.exec
    }

    pub fn kind_name(&self) -> &'static str {
        match &self.kind {
            Kind::Cartesian { transform: Transform::Dft, .. } => "cartesian_dft",
            Kind::Cartesian { transform: Transform::Identity, .. } => "cartesian_identity",
            Kind::Gaussian { .. } => "dense_gaussian",
            Kind::Diagonal { .. } => "diagonal",
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Samples per frame per coil.
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn coils(&self) -> usize {
        self.coil_maps.as_ref().map_or(1, |c| c.nrows())
    }

    pub fn weights(&self) -> Option<ArrayView2<'_, f64>> {
        self.weights.as_ref().map(|w| w.view())
    }

    pub fn measurement_shape(&self) -> (usize, usize) {
        (self.coils() * self.m, self.l)
    }

    /// `n / m`, the default initial step size.
    pub fn undersampling(&self) -> f64 {
        self.n as f64 / self.m as f64
    }

    fn coil_input(&self, coil: usize, x: ArrayView1<Complex64>) -> Vec<Complex64> {
        match &self.coil_maps {
            Some(s) => x.iter().zip(s.row(coil)).map(|(a, b)| a * b).collect(),
            None => x.to_vec(),
        }
    }

    fn apply_frame(&self, t: usize, x: ArrayView1<Complex64>) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(self.coils() * self.m);
        for coil in 0..self.coils() {
            let mut buf = self.coil_input(coil, x);
            match &self.kind {
                Kind::Cartesian { pattern, transform, fft } => {
                    if *transform == Transform::Dft {
                        fft.run(&mut buf, false);
                    }
                    out.extend(pattern.frame(t).iter().map(|&k| buf[k]));
                }
                Kind::Gaussian { mats, .. } => {
                    let a = &mats[t.min(mats.len() - 1)];
                    out.extend(a.rows().into_iter().map(|row| row.iter().zip(&buf).map(|(p, q)| p * q).sum::<Complex64>()));
                }
                Kind::Diagonal { diag } => out.extend(buf.iter().zip(diag).map(|(z, &d)| z * d)),
            }
        }
        out
    }

    fn adjoint_frame(&self, t: usize, y: ArrayView1<Complex64>) -> Vec<Complex64> {
        let mut acc = vec![Complex64::ZERO; self.n];
        for coil in 0..self.coils() {
            let yc = y.slice(ndarray::s![coil * self.m..(coil + 1) * self.m]);
            let buf: Vec<Complex64> = match &self.kind {
                Kind::Cartesian { pattern, transform, fft } => {
                    let mut b = vec![Complex64::ZERO; self.n];
                    for (&k, &v) in pattern.frame(t).iter().zip(yc.iter()) {
                        b[k] = v;
                    }
                    if *transform == Transform::Dft {
                        fft.run(&mut b, true);
                    }
                    b
                }
                Kind::Gaussian { mats_h, .. } => {
                    let ah = &mats_h[t.min(mats_h.len() - 1)];
                    ah.rows().into_iter().map(|row| row.iter().zip(yc.iter()).map(|(p, q)| p * q).sum()).collect()
                }
                Kind::Diagonal { diag } => yc.iter().zip(diag).map(|(z, &d)| z * d).collect(),
            };
            match &self.coil_maps {
                Some(s) => {
                    for ((a, b), sv) in acc.iter_mut().zip(&buf).zip(s.row(coil)) {
                        *a += b * sv.conj();
                    }
                }
                None => acc.iter_mut().zip(&buf).for_each(|(a, b)| *a += b),
            }
        }
        acc
    }

    fn check(&self, x: ArrayView2<Complex64>, rows: usize) -> Result<()> {
        if x.nrows() != rows {
            return Err(Error::dim(rows, x.nrows()));
        }
        if x.ncols() != self.l {
            return Err(Error::dim(self.l, x.ncols()));
        }
        Ok(())
    }

    /// `A(X)`: `n × L` → `c·m × L`. Weights are not applied.
    pub fn apply(&self, x: ArrayView2<Complex64>) -> Result<Array2<Complex64>> {
        self.check(x, self.n)?;
        let cols = self.exec.map(self.l, |t| self.apply_frame(t, x.column(t)));
        Ok(from_columns(&cols, self.coils() * self.m))
    }

    /// `Aᴴ(Y)`: `c·m × L` → `n × L`.
    pub fn adjoint(&self, y: ArrayView2<Complex64>) -> Result<Array2<Complex64>> {
        self.check(y, self.coils() * self.m)?;
        let cols = self.exec.map(self.l, |t| self.adjoint_frame(t, y.column(t)));
        Ok(from_columns(&cols, self.n))
    }
}

fn from_columns(cols: &[Vec<Complex64>], rows: usize) -> Array2<Complex64> {
    Array2::from_shape_fn((rows, cols.len()), |(i, t)| cols[t][i])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{inner_mat, norm};
    use rand::Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<Complex64> {
        Array2::from_shape_simple_fn((rows, cols), || Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    /// Direct `O(n²)` unitary 2-D DFT oracle.
    fn dft2(x: &[Complex64], h: usize, w: usize) -> Vec<Complex64> {
        let mut out = vec![Complex64::ZERO; h * w];
        for u in 0..h {
            for v in 0..w {
                let mut s = Complex64::ZERO;
                for r in 0..h {
                    for c in 0..w {
                        let ph = -2.0 * std::f64::consts::PI * ((u * r) as f64 / h as f64 + (v * c) as f64 / w as f64);
                        s += x[r * w + c] * Complex64::from_polar(1.0, ph);
                    }
                }
                out[u * w + v] = s / ((h * w) as f64).sqrt();
            }
        }
        out
    }

    fn operators() -> Vec<ForwardOperator> {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let (h, w, l) = (6, 5, 4);
        let epi = SamplingPattern::epi(h, w, 2, l).unwrap();
        let maps = random(3, h * w, &mut rng);
        let weights = Array2::from_shape_fn((3 * epi.m(), l), |(i, t)| 0.5 + ((i + t) % 3) as f64);
        vec![
            ForwardOperator::cartesian(SamplingPattern::full(h, w, l).unwrap()),
            ForwardOperator::cartesian(epi.clone()),
            ForwardOperator::cartesian(epi.clone()).with_coil_maps(maps.clone()).unwrap(),
            ForwardOperator::cartesian(epi).with_coil_maps(maps.clone()).unwrap().with_weights(weights).unwrap(),
            ForwardOperator::gaussian(h * w, 12, l, 5, false).unwrap(),
            ForwardOperator::gaussian(h * w, 12, l, 5, true).unwrap().with_coil_maps(maps).unwrap(),
            ForwardOperator::diagonal((0..h * w).map(|i| i as f64 * 0.1).collect(), l).unwrap(),
        ]
    }

    #[test]
    fn impulse_gives_flat_spectrum() {
        let (h, w) = (4, 8);
        let op = ForwardOperator::cartesian(SamplingPattern::full(h, w, 1).unwrap());
        let mut x = Array2::zeros((h * w, 1));
        x[[0, 0]] = Complex64::new(1.0, 0.0);
        let y = op.apply(x.view()).unwrap();
        let c = 1.0 / ((h * w) as f64).sqrt();
        assert!(y.iter().all(|z| (z - Complex64::new(c, 0.0)).norm() < 1e-14));
        assert!((norm(y.view()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fft_matches_direct_dft() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (h, w) in [(4, 4), (6, 5), (3, 7)] {
            let op = ForwardOperator::cartesian(SamplingPattern::full(h, w, 1).unwrap());
            let x = random(h * w, 1, &mut rng);
            let y = op.apply(x.view()).unwrap();
            let oracle = dft2(x.as_slice().unwrap(), h, w);
            for (a, b) in y.iter().zip(&oracle) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn identity_transform_with_full_sampling_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let op = ForwardOperator::cartesian_with(SamplingPattern::full(3, 3, 2).unwrap(), Transform::Identity);
        let x = random(9, 2, &mut rng);
        assert_eq!(op.apply(x.view()).unwrap(), x);
    }

    #[test]
    fn adjoint_identity_for_every_kind() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for op in operators() {
            let (mr, l) = op.measurement_shape();
            for _ in 0..100 {
                let x = random(op.n(), l, &mut rng);
                let y = random(mr, l, &mut rng);
                let lhs = inner_mat(op.apply(x.view()).unwrap().view(), y.view());
                let rhs = inner_mat(x.view(), op.adjoint(y.view()).unwrap().view());
                assert!((lhs - rhs).norm() <= 1e-8 * lhs.norm().max(1.0), "{op:?}");
            }
        }
    }

    #[test]
    fn linearity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (a, b) = (Complex64::new(0.3, -1.2), Complex64::new(2.0, 0.5));
        for op in operators() {
            let x = random(op.n(), op.l(), &mut rng);
            let z = random(op.n(), op.l(), &mut rng);
            let lhs = op.apply((&x * a + &z * b).view()).unwrap();
            let rhs = op.apply(x.view()).unwrap() * a + op.apply(z.view()).unwrap() * b;
            let err = norm((&lhs - &rhs).view());
            assert!(err <= 1e-10 * norm(rhs.view()).max(1.0));
        }
    }

    #[test]
    fn full_sampling_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let op = ForwardOperator::cartesian(SamplingPattern::full(8, 6, 3).unwrap());
        let x = random(48, 3, &mut rng);
        let back = op.adjoint(op.apply(x.view()).unwrap().view()).unwrap();
        assert!(norm((&back - &x).view()) < 1e-10);
        let zero = op.adjoint(Array2::zeros((48, 3)).view()).unwrap();
        assert!(zero.iter().all(|z| *z == Complex64::ZERO));
    }

    #[test]
    fn gaussian_is_isometric_on_average() {
        let op = ForwardOperator::gaussian(64, 32, 1, 7, false).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut acc = 0.0;
        for _ in 0..200 {
            let mut x = random(64, 1, &mut rng);
            let nx = norm(x.view());
            x.mapv_inplace(|z| z / nx);
            acc += norm(op.apply(x.view()).unwrap().view()).powi(2);
        }
        assert!((acc / 200.0 - 1.0).abs() < 0.1);
    }

    #[test]
    fn gaussian_seed_determinism() {
        let x = Array2::from_elem((10, 2), Complex64::new(1.0, 1.0));
        let a = ForwardOperator::gaussian(10, 4, 2, 11, false).unwrap();
        let b = ForwardOperator::gaussian(10, 4, 2, 11, false).unwrap();
        let c = ForwardOperator::gaussian(10, 4, 2, 12, false).unwrap();
        assert_eq!(a.apply(x.view()).unwrap(), b.apply(x.view()).unwrap());
        assert_ne!(a.apply(x.view()).unwrap(), c.apply(x.view()).unwrap());
    }

    #[test]
    fn shape_errors() {
        let op = ForwardOperator::diagonal(vec![1.0; 4], 2).unwrap();
        assert!(op.apply(Array2::zeros((3, 2)).view()).is_err());
        assert!(op.apply(Array2::zeros((4, 3)).view()).is_err());
        assert!(op.adjoint(Array2::zeros((5, 2)).view()).is_err());
        assert!(op.clone().with_weights(Array2::zeros((4, 3))).is_err());
        assert!(op.with_weights(Array2::from_elem((4, 2), -1.0)).is_err());
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for op in operators() {
            let x = random(op.n(), op.l(), &mut rng);
            let a = op.clone().with_exec(Exec::Sequential).apply(x.view()).unwrap();
            let b = op.with_exec(Exec::Parallel).apply(x.view()).unwrap();
            assert_eq!(a, b);
        }
    }
}
