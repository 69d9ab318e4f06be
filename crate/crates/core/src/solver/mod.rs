//! Inexact iterative projected gradient: template matching, exact BLIP and
//! cover tree CoverBLIP share one engine.
//!
//! Each iteration takes a gradient step `Z = X − μ Aᴴ(W(A X − Y))` and projects
//! every row of `Z` onto the cone of fingerprints. The step is accepted when
//! `μ < ‖ΔX‖²/‖A ΔX‖²` (weighted by `W` when sample weights are enabled);
//! otherwise `μ` is divided by `ζ` and the step and projection are redone.
//! After the first accepted iteration the estimate, the proton densities and
//! the base step are rescaled by `κ = ‖Y‖/‖A X¹‖`.

mod certificate;

pub use certificate::{certificate, certificate_from_constants, phi, ConvergenceCertificate};

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use ndarray::{Array2, ArrayView2, Zip};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::covertree::CoverTree;
use crate::dictionary::{Atoms, CompressedDictionary, Dictionary};
use crate::forward::ForwardOperator;
use crate::linalg::{norm, norm_sqr, weighted_norm_sqr};
use crate::projection::{project_cone_ann_with, project_cone_exact_with, ConeProjection};
use crate::{Error, Exec, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// One back-projection followed by one exact matched-filtering pass.
    Tm,
    #[default]
    BlipExact,
    Coverblip,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Tm => "tm",
            Mode::BlipExact => "blip_exact",
            Mode::Coverblip => "coverblip",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StepPolicy {
    /// Every iteration starts shrinking from the base step.
    #[default]
    ResetEachIter,
    /// Every iteration starts from the previously accepted step.
    CarryOver,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub mode: Mode,
    pub epsilon: f64,
    /// Defaults to `n/m`.
    pub mu_init: Option<f64>,
    pub zeta: f64,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub max_shrink_per_iter: usize,
    pub compressed: Option<usize>,
    pub step_policy: StepPolicy,
    /// Constant step, no shrinkage and no κ rescale.
    pub fixed_step: Option<f64>,
    pub weights_enabled: bool,
    pub exec: Exec,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            mode: Mode::BlipExact,
            epsilon: 0.0,
            mu_init: None,
            zeta: 2.0,
            max_iters: 50,
            rel_tol: 1e-6,
            max_shrink_per_iter: 60,
            compressed: None,
            step_policy: StepPolicy::ResetEachIter,
            fixed_step: None,
            weights_enabled: false,
            exec: Exec::default(),
        }
    }
}

impl SolverConfig {
    pub fn tm() -> Self {
        Self { mode: Mode::Tm, ..Self::default() }
    }

    pub fn blip() -> Self {
        Self { mode: Mode::BlipExact, ..Self::default() }
    }

    pub fn coverblip(epsilon: f64) -> Self {
        Self { mode: Mode::Coverblip, epsilon, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.zeta > 1.0) || !self.zeta.is_finite() {
            return bad(format!("zeta must be > 1, got {}", self.zeta));
        }
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return bad(format!("epsilon must be ≥ 0, got {}", self.epsilon));
        }
        if let Some(mu) = self.mu_init {
            if !(mu > 0.0) || !mu.is_finite() {
                return bad(format!("mu_init must be positive, got {mu}"));
            }
        }
        if let Some(mu) = self.fixed_step {
            if !(mu > 0.0) || !mu.is_finite() {
                return bad(format!("fixed_step must be positive, got {mu}"));
            }
        }
        if self.max_iters == 0 || self.max_shrink_per_iter == 0 {
            return bad("max_iters and max_shrink_per_iter must be positive".into());
        }
        if !(self.rel_tol > 0.0) {
            return bad(format!("rel_tol must be positive, got {}", self.rel_tol));
        }
        if self.compressed == Some(0) {
            return bad("compressed rank must be positive".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterRecord {
    pub k: usize,
    /// `‖Y − A(X^k)‖`, weighted when weights are enabled.
    pub fidelity: f64,
    /// Same, before the κ rescale of the first iterate.
    pub fidelity_pre_rescale: f64,
    /// Accepted step.
    pub mu: f64,
    pub shrinks: usize,
    pub cost: u64,
    pub nmse: Option<f64>,
    pub seconds: f64,
    /// The projection reproduced the previous iterate.
    pub fixed_point: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    SinglePass,
    FixedPoint,
    RelTol,
    MaxIters,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveTrace {
    pub initial_fidelity: f64,
    pub kappa: Option<f64>,
    pub records: Vec<IterRecord>,
    pub stop: StopReason,
}

impl SolveTrace {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn total_cost(&self) -> u64 {
        self.records.iter().map(|r| r.cost).sum()
    }

    pub fn total_seconds(&self) -> f64 {
        self.records.iter().map(|r| r.seconds).sum()
    }

    pub fn final_fidelity(&self) -> f64 {
        self.records.last().map_or(self.initial_fidelity, |r| r.fidelity)
    }

    /// Columns `iter,fidelity,mu,shrinks,cost,nmse,seconds`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["iter", "fidelity", "mu", "shrinks", "cost", "nmse", "seconds"])?;
        for r in &self.records {
            w.write_record([
                r.k.to_string(),
                format!("{:.12e}", r.fidelity),
                format!("{:.12e}", r.mu),
                r.shrinks.to_string(),
                r.cost.to_string(),
                r.nmse.map_or(String::new(), |x| format!("{x:.12e}")),
                format!("{:.6}", r.seconds),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    /// Final estimate, `n × L`.
    pub image: Array2<Complex64>,
    pub indices: Vec<usize>,
    /// Per-voxel scale of the matched atom in the solver's domain.
    pub gammas: Vec<f64>,
    /// Proton density relative to the unit uncompressed atom.
    pub proton_density: Vec<f64>,
    /// `(T1, T2, B0)` of the matched atom per voxel.
    pub maps: Vec<[f64; 3]>,
    pub trace: SolveTrace,
}

/// What an observer sees for every trial step, accepted or not.
pub struct IterationView<'a> {
    /// Index of the iterate being produced (1-based).
    pub k: usize,
    pub mu: f64,
    pub shrinks: usize,
    pub accepted: bool,
    /// Current iterate `X^{k−1}`.
    pub x: ArrayView2<'a, Complex64>,
    /// Gradient update.
    pub z: ArrayView2<'a, Complex64>,
    /// Projection of `z`; its `projected` field is the candidate `X^k`.
    pub projection: &'a ConeProjection,
}

/// Outcome of the step-size test for one trial.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Criterion {
    /// `ΔX = 0`: accepted without a test.
    FixedPoint,
    /// `‖ΔX‖²/‖A ΔX‖²`, infinite when `A` annihilates `ΔX`.
    Ratio(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome<T> {
    pub mu: f64,
    pub shrinks: usize,
    pub fixed_point: bool,
    pub value: T,
}

/// Shrink `mu` by `zeta` until `trial(mu)` reports a ratio strictly above `mu`
/// or a fixed point.
pub fn step_shrinkage<T>(
    mut mu: f64,
    zeta: f64,
    max_shrink: usize,
    iteration: usize,
    mut trial: impl FnMut(f64, usize) -> Result<(T, Criterion)>,
) -> Result<StepOutcome<T>> {
    let mut shrinks = 0;
    loop {
        let (value, crit) = trial(mu, shrinks)?;
        match crit {
            Criterion::FixedPoint => return Ok(StepOutcome { mu, shrinks, fixed_point: true, value }),
            Criterion::Ratio(r) if mu < r => return Ok(StepOutcome { mu, shrinks, fixed_point: false, value }),
            Criterion::Ratio(_) => {
                if shrinks == max_shrink {
                    return Err(Error::StepSizeCollapse { iteration, shrinks: shrinks + 1 });
                }
                shrinks += 1;
                mu /= zeta;
            }
        }
    }
}

/// Where iterates live: `ℂ^{n×L}`, or `ℂ^{n×s}` with `X = X̃ V_sᵀ`.
struct Domain<'a> {
    op: &'a ForwardOperator,
    comp: Option<&'a CompressedDictionary>,
}

impl Domain<'_> {
    fn forward(&self, x: ArrayView2<Complex64>) -> Result<Array2<Complex64>> {
        match self.comp {
            Some(c) => self.op.apply(c.decompress(x)?.view()),
            None => self.op.apply(x),
        }
    }

    fn adjoint(&self, r: ArrayView2<Complex64>) -> Result<Array2<Complex64>> {
        let g = self.op.adjoint(r)?;
        match self.comp {
            Some(c) => c.compress(g.view()),
            None => Ok(g),
        }
    }

    fn full(&self, x: ArrayView2<Complex64>) -> Result<Array2<Complex64>> {
        match self.comp {
            Some(c) => c.decompress(x),
            None => Ok(x.to_owned()),
        }
    }
}

fn fidelity_sqr(r: ArrayView2<Complex64>, w: Option<ArrayView2<f64>>) -> f64 {
    match w {
        Some(w) => weighted_norm_sqr(r, w),
        None => norm_sqr(r),
    }
}

fn check_finite(x: f64, iteration: usize) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::NonFiniteFidelity { iteration })
    }
}

/// Uncompressed solve. `tree` must be built on `dict` for [`Mode::Coverblip`].
pub fn solve(
    y: ArrayView2<Complex64>,
    op: &ForwardOperator,
    dict: &Dictionary,
    tree: Option<&CoverTree>,
    config: &SolverConfig,
    gt: Option<ArrayView2<Complex64>>,
) -> Result<Solution> {
    solve_observed(y, op, dict, tree, config, gt, &mut |_| {})
}

pub fn solve_observed(
    y: ArrayView2<Complex64>,
    op: &ForwardOperator,
    dict: &Dictionary,
    tree: Option<&CoverTree>,
    config: &SolverConfig,
    gt: Option<ArrayView2<Complex64>>,
    observer: &mut dyn FnMut(&IterationView),
) -> Result<Solution> {
    if config.compressed.is_some() {
        return Err(Error::Config("compressed configs go through solve_compressed".into()));
    }
    let dom = Domain { op, comp: None };
    let mut sol = run(y, &dom, dict, tree, config, gt, observer)?;
    sol.proton_density = sol.gammas.clone();
    Ok(sol)
}

/// Solve in the rank-`s` subspace of `cdict`; `tree` must be built on the
/// compressed atoms. The returned image is decompressed.
pub fn solve_compressed(
    y: ArrayView2<Complex64>,
    op: &ForwardOperator,
    cdict: &CompressedDictionary,
    tree: Option<&CoverTree>,
    config: &SolverConfig,
    gt: Option<ArrayView2<Complex64>>,
) -> Result<Solution> {
    solve_compressed_observed(y, op, cdict, tree, config, gt, &mut |_| {})
}

pub fn solve_compressed_observed(
    y: ArrayView2<Complex64>,
    op: &ForwardOperator,
    cdict: &CompressedDictionary,
    tree: Option<&CoverTree>,
    config: &SolverConfig,
    gt: Option<ArrayView2<Complex64>>,
    observer: &mut dyn FnMut(&IterationView),
) -> Result<Solution> {
    if let Some(s) = config.compressed {
        if s != cdict.rank() {
            return Err(Error::Config(format!("config asks for rank {s}, dictionary has {}", cdict.rank())));
        }
    }
    let dom = Domain { op, comp: Some(cdict) };
    let mut sol = run(y, &dom, cdict, tree, config, gt, observer)?;
    sol.proton_density = sol.gammas.iter().zip(&sol.indices).map(|(g, &j)| g / cdict.factors()[j]).collect();
    Ok(sol)
}

fn run<D: Atoms + ?Sized>(
    y: ArrayView2<Complex64>,
    dom: &Domain,
    atoms: &D,
    tree: Option<&CoverTree>,
    cfg: &SolverConfig,
    gt: Option<ArrayView2<Complex64>>,
    observer: &mut dyn FnMut(&IterationView),
) -> Result<Solution> {
    cfg.validate()?;
    let op = dom.op;
    let shape = op.measurement_shape();
    if y.dim() != shape {
        return Err(Error::InvalidArgument(format!(
            "measurements are {}×{}, operator produces {}×{}",
            y.nrows(),
            y.ncols(),
            shape.0,
            shape.1
        )));
    }
    let expect_dim = dom.comp.map_or(op.l(), |c| c.rank());
    if atoms.dim() != expect_dim {
        return Err(Error::dim(expect_dim, atoms.dim()));
    }
    if let Some(g) = gt {
        if g.dim() != (op.n(), op.l()) {
            return Err(Error::InvalidArgument("ground truth shape differs from the image shape".into()));
        }
    }
    let tree = match (cfg.mode, tree) {
        (Mode::Coverblip, None) => return Err(Error::Config("coverblip needs a cover tree".into())),
        (Mode::Coverblip, Some(t)) => Some(t),
        _ => None,
    };
    let weights = if cfg.weights_enabled {
        Some(op.weights().ok_or_else(|| Error::Config("weights enabled but the operator has none".into()))?)
    } else {
        None
    };
    let gt_norm = gt.map(|g| norm(g));
    let nmse_of = |x: ArrayView2<Complex64>| -> Result<Option<f64>> {
        match (gt, gt_norm) {
            (Some(g), Some(gn)) => {
                let full = dom.full(x)?;
                Ok(Some(norm((&full - &g).view()) / gn))
            }
            _ => Ok(None),
        }
    };
    let project = |z: ArrayView2<Complex64>, prev: Option<&[usize]>| match tree {
        Some(t) => project_cone_ann_with(z, t, atoms, cfg.epsilon, prev, cfg.exec),
        None => project_cone_exact_with(z, atoms, prev, cfg.exec),
    };

    let n = op.n();
    let y_norm = norm(y);
    let mut x: Array2<Complex64> = Array2::zeros((n, atoms.dim()));
    let mut resid = y.mapv(|v| -v);
    let initial_fidelity = check_finite(fidelity_sqr(resid.view(), weights).sqrt(), 0)?;
    let mut fid = initial_fidelity;
    let adaptive = cfg.fixed_step.is_none() && cfg.mode != Mode::Tm;
    let mut mu_base = match (cfg.fixed_step, cfg.mode) {
        (Some(mu), _) => mu,
        (None, Mode::Tm) => 1.0,
        (None, _) => cfg.mu_init.unwrap_or_else(|| op.undersampling()),
    };
    let mut mu = mu_base;
    let mut prev: Option<Vec<usize>> = None;
    let mut gammas = vec![0.0; n];
    let mut records = Vec::new();
    let mut kappa = None;
    let mut stop = StopReason::MaxIters;

    for k in 1..=cfg.max_iters {
        let start = Instant::now();
        if k > 1 && cfg.step_policy == StepPolicy::ResetEachIter {
            mu = mu_base;
        }
        let weighted = match weights {
            Some(w) => {
                let mut r = resid.clone();
                Zip::from(&mut r).and(w).for_each(|a, &b| *a *= b);
                r
            }
            None => resid.clone(),
        };
        let grad = dom.adjoint(weighted.view())?;
        let mut cost = 0u64;
        let outcome = step_shrinkage(mu, cfg.zeta, cfg.max_shrink_per_iter, k, |mu_t, shrinks| {
            let z = &x - &grad.mapv(|g| g * mu_t);
            let proj = project(z.view(), prev.as_deref())?;
            cost += proj.cost;
            let dx = &proj.projected - &x;
            let dx2 = check_finite(norm_sqr(dx.view()), k)?;
            let crit = if dx2 == 0.0 {
                Criterion::FixedPoint
            } else if !adaptive {
                Criterion::Ratio(f64::INFINITY)
            } else {
                let adx2 = check_finite(fidelity_sqr(dom.forward(dx.view())?.view(), weights), k)?;
                Criterion::Ratio(if adx2 == 0.0 { f64::INFINITY } else { dx2 / adx2 })
            };
            let accepted = match crit {
                Criterion::FixedPoint => true,
                Criterion::Ratio(r) => mu_t < r,
            };
            observer(&IterationView { k, mu: mu_t, shrinks, accepted, x: x.view(), z: z.view(), projection: &proj });
            Ok((proj, crit))
        })?;
        let accepted_mu = outcome.mu;
        mu = outcome.mu;
        let proj = outcome.value;
        let mut x_new = proj.projected;
        gammas = proj.gammas;
        let mut ax = dom.forward(x_new.view())?;
        resid = &ax - &y;
        let fid_pre = check_finite(fidelity_sqr(resid.view(), weights).sqrt(), k)?;
        let mut fid_new = fid_pre;
        if k == 1 && cfg.fixed_step.is_none() && !outcome.fixed_point {
            let ax_norm = norm(ax.view());
            if ax_norm > 0.0 {
                let kap = y_norm / ax_norm;
                x_new.mapv_inplace(|v| v * kap);
                ax.mapv_inplace(|v| v * kap);
                gammas.iter_mut().for_each(|g| *g *= kap);
                mu *= kap;
                mu_base *= kap;
                resid = &ax - &y;
                fid_new = check_finite(fidelity_sqr(resid.view(), weights).sqrt(), k)?;
                kappa = Some(kap);
            }
        }
        records.push(IterRecord {
            k,
            fidelity: fid_new,
            fidelity_pre_rescale: fid_pre,
            mu: accepted_mu,
            shrinks: outcome.shrinks,
            cost,
            nmse: nmse_of(x_new.view())?,
            seconds: start.elapsed().as_secs_f64(),
            fixed_point: outcome.fixed_point,
        });
        x = x_new;
        prev = Some(proj.indices);
        let obj_prev = fid * fid;
        let obj_new = fid_new * fid_new;
        fid = fid_new;
        if cfg.mode == Mode::Tm {
            stop = StopReason::SinglePass;
            break;
        }
        if outcome.fixed_point {
            stop = StopReason::FixedPoint;
            break;
        }
        if obj_prev == 0.0 || (obj_prev - obj_new) / obj_prev < cfg.rel_tol {
            stop = StopReason::RelTol;
            break;
        }
    }

    let indices = prev.expect("at least one iteration ran");
    let maps = indices.iter().map(|&j| atoms.lookup(j)).collect::<Result<Vec<_>>>()?;
    Ok(Solution {
        image: dom.full(x.view())?,
        indices,
        proton_density: Vec::new(),
        gammas,
        maps,
        trace: SolveTrace { initial_fidelity, kappa, records, stop },
    })
}
