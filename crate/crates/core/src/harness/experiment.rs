//! JSON-configured experiment grids over TM, BLIP and CoverBLIP.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{compute_metrics, simulate_measurements, Layout, Metrics, Phantom};
use crate::covertree::CoverTree;
use crate::dictionary::{Atoms, CompressedDictionary, Dictionary, ParameterGrid};
use crate::forward::{ForwardOperator, OffsetRule, SamplingPattern};
use crate::solver::{solve, solve_compressed, Mode, Solution, SolverConfig};
use crate::{Error, Exec, Result};

/// Environment variable that replaces the configured output root.
pub const OUTPUT_ROOT_ENV: &str = "COVERBLIP_OUTPUT_ROOT";

pub fn env_output_root() -> Option<PathBuf> {
    std::env::var_os(OUTPUT_ROOT_ENV).filter(|s| !s.is_empty()).map(PathBuf::from)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomConfig {
    pub h: usize,
    pub w: usize,
    #[serde(default)]
    pub layout: Layout,
    #[serde(default = "yes")]
    pub snap: bool,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DictionaryConfig {
    /// MATLAB-style ranges, e.g. `"[100:40:2000, 2200:200:6000]"`.
    pub t1: String,
    pub t2: String,
    pub b0: String,
    #[serde(default = "default_tr")]
    pub tr_ms: f64,
    #[serde(rename = "L")]
    pub l: usize,
    /// Load atoms from a dictionary file instead of generating them. The
    /// grid is still used for snapping phantom parameters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

fn default_tr() -> f64 {
    1.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorConfig {
    Full,
    Epi {
        lines_per_frame: usize,
        #[serde(default)]
        offset_rule: OffsetRule,
    },
    PatternFile {
        path: PathBuf,
    },
    Gaussian {
        m: usize,
        #[serde(default)]
        per_frame: bool,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub phantom: PhantomConfig,
    pub dictionary: DictionaryConfig,
    pub operator: OperatorConfig,
    /// `null` for noiseless measurements.
    #[serde(default)]
    pub snr_db: Option<f64>,
    pub algorithms: Vec<Mode>,
    /// Only CoverBLIP runs are repeated over this list.
    #[serde(default = "default_eps")]
    pub epsilons: Vec<f64>,
    /// `null` entries run uncompressed.
    #[serde(default = "default_compression")]
    pub compression: Vec<Option<usize>>,
    /// Shared solver settings; mode, epsilon and compressed come from the grid.
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default = "default_mask")]
    pub mask_fraction: f64,
    #[serde(default = "yes")]
    pub parallel_runs: bool,
    /// Output root; the run directory is `<root>/<name>`.
    #[serde(default = "default_root")]
    pub output_root: PathBuf,
}

fn default_name() -> String {
    "experiment".into()
}

fn default_eps() -> Vec<f64> {
    vec![0.4]
}

fn default_compression() -> Vec<Option<usize>> {
    vec![None]
}

fn default_mask() -> f64 {
    0.05
}

fn default_root() -> PathBuf {
    "runs".into()
}

impl ExperimentConfig {
    /// Schema errors carry the line and column of the offending entry.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.algorithms.is_empty() {
            return bad("algorithms must not be empty");
        }
        if self.algorithms.contains(&Mode::Coverblip) && self.epsilons.is_empty() {
            return bad("coverblip needs at least one epsilon");
        }
        if self.epsilons.iter().any(|e| !(*e >= 0.0) || !e.is_finite()) {
            return bad("epsilons must be finite and nonnegative");
        }
        if self.compression.is_empty() {
            return bad("compression must list at least one entry (null = none)");
        }
        if self.compression.iter().any(|s| matches!(s, Some(s) if *s == 0 || *s > self.dictionary.l)) {
            return bad("compression ranks must be in 1..=L");
        }
        if self.snr_db.is_some_and(|s| s.is_nan()) {
            return bad("snr_db must be a number or null");
        }
        if !(0.0..1.0).contains(&self.mask_fraction) {
            return bad("mask_fraction must be in [0, 1)");
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return bad("name must be a plain directory name");
        }
        SolverConfig { mode: Mode::BlipExact, ..self.solver.clone() }.validate()
    }

    /// One entry per `(algorithm, ε, s)`; ε only varies for CoverBLIP.
    pub fn runs(&self) -> Vec<RunSpec> {
        let mut out = Vec::new();
        for &mode in &self.algorithms {
            for &s in &self.compression {
                let eps: Vec<Option<f64>> = match mode {
                    Mode::Coverblip => self.epsilons.iter().map(|&e| Some(e)).collect(),
                    _ => vec![None],
                };
                for e in eps {
                    out.push(RunSpec { mode, epsilon: e, s });
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunSpec {
    pub mode: Mode,
    pub epsilon: Option<f64>,
    pub s: Option<usize>,
}

impl RunSpec {
    pub fn id(&self) -> String {
        let mut id = self.mode.name().to_string();
        if let Some(e) = self.epsilon {
            id.push_str(&format!("_eps{e}"));
        }
        if let Some(s) = self.s {
            id.push_str(&format!("_s{s}"));
        }
        id
    }
}

/// One summary line.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AlgorithmRow {
    pub run: String,
    pub algorithm: String,
    pub epsilon: Option<f64>,
    pub s: Option<usize>,
    pub iterations: usize,
    pub stop: String,
    #[serde(flatten)]
    pub metrics: Metrics,
    pub search_cost: u64,
    pub final_fidelity: f64,
    #[serde(skip)]
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub dir: PathBuf,
    pub rows: Vec<AlgorithmRow>,
    pub dictionary_size: usize,
}

struct Setup {
    phantom: Phantom,
    gt: ndarray::Array2<num_complex::Complex64>,
    y: ndarray::Array2<num_complex::Complex64>,
    op: ForwardOperator,
    dict: Dictionary,
}

fn setup(cfg: &ExperimentConfig) -> Result<Setup> {
    let dc = &cfg.dictionary;
    let grid = ParameterGrid::from_ranges(&dc.t1, &dc.t2, &dc.b0)?;
    let dict = match &dc.path {
        Some(p) => {
            let d = Dictionary::load(p)?;
            if d.dim() != dc.l || d.tr_ms() != dc.tr_ms {
                return Err(Error::Config(format!(
                    "{}: dictionary has L={} TR={}, config says L={} TR={}",
                    p.display(),
                    d.dim(),
                    d.tr_ms(),
                    dc.l,
                    dc.tr_ms
                )));
            }
            d
        }
        None => Dictionary::generate(&grid, dc.tr_ms, dc.l)?,
    };
    let pc = &cfg.phantom;
    let phantom = Phantom::build(pc.h, pc.w, &pc.layout, &grid, pc.snap)?;
    let n = phantom.n();
    let op = match &cfg.operator {
        OperatorConfig::Full => ForwardOperator::cartesian(SamplingPattern::full(pc.h, pc.w, dc.l)?),
        OperatorConfig::Epi { lines_per_frame, offset_rule } => ForwardOperator::cartesian(
            SamplingPattern::epi_with_rule(pc.h, pc.w, *lines_per_frame, dc.l, *offset_rule)?,
        ),
        OperatorConfig::PatternFile { path } => {
            let p = SamplingPattern::load_json(path)?;
            if (p.h(), p.w(), p.frames()) != (pc.h, pc.w, dc.l) {
                return Err(Error::Config(format!("{}: pattern shape differs from phantom/L", path.display())));
            }
            ForwardOperator::cartesian(p)
        }
        OperatorConfig::Gaussian { m, per_frame } => {
            ForwardOperator::gaussian(n, *m, dc.l, cfg.seed.wrapping_add(1), *per_frame)?
        }
    };
    let gt = phantom.gt_image(dc.tr_ms, dc.l)?.data;
    let y = simulate_measurements(gt.view(), &op, cfg.snr_db.unwrap_or(f64::INFINITY), cfg.seed)?;
    Ok(Setup { phantom, gt, y, op, dict })
}

/// Run every `(algorithm, ε, s)` combination and write the report files into
/// `<root>/<name>`, where `root` is `root_override`, else the environment
/// override, else the configured root.
pub fn run_experiment(cfg: &ExperimentConfig, root_override: Option<&Path>) -> Result<ExperimentReport> {
    cfg.validate()?;
    let root = root_override.map(Path::to_path_buf).or_else(env_output_root).unwrap_or(cfg.output_root.clone());
    let dir = root.join(&cfg.name);
    fs::create_dir_all(&dir)?;
    let st = setup(cfg)?;

    let ranks: Vec<usize> = {
        let mut r: Vec<usize> = cfg.compression.iter().flatten().copied().collect();
        r.sort_unstable();
        r.dedup();
        r
    };
    let compressed: BTreeMap<usize, CompressedDictionary> =
        ranks.iter().map(|&s| Ok((s, st.dict.compress(s)?))).collect::<Result<_>>()?;
    let needs_tree = cfg.algorithms.contains(&Mode::Coverblip);
    let mut trees: BTreeMap<Option<usize>, CoverTree> = BTreeMap::new();
    if needs_tree {
        for &s in &cfg.compression {
            if trees.contains_key(&s) {
                continue;
            }
            let t = match s {
                Some(s) => compressed[&s].build_tree()?,
                None => st.dict.build_tree()?,
            };
            trees.insert(s, t);
        }
    }

    let specs = cfg.runs();
    let exec = if cfg.parallel_runs { Exec::Parallel } else { Exec::Sequential };
    let results: Vec<Result<(AlgorithmRow, Solution)>> = exec.map_items(&specs, |spec| {
        let start = Instant::now();
        let mut sc = cfg.solver.clone();
        sc.mode = spec.mode;
        sc.epsilon = spec.epsilon.unwrap_or(0.0);
        sc.compressed = spec.s;
        let tree = if spec.mode == Mode::Coverblip { trees.get(&spec.s) } else { None };
        let sol = match spec.s {
            Some(s) => solve_compressed(st.y.view(), &st.op, &compressed[&s], tree, &sc, Some(st.gt.view()))?,
            None => solve(st.y.view(), &st.op, &st.dict, tree, &sc, Some(st.gt.view()))?,
        };
        let metrics =
            compute_metrics(&sol.maps, &sol.proton_density, sol.image.view(), &st.phantom, st.gt.view(), cfg.mask_fraction)?;
        let row = AlgorithmRow {
            run: spec.id(),
            algorithm: spec.mode.name().into(),
            epsilon: spec.epsilon,
            s: spec.s,
            iterations: sol.trace.iterations(),
            stop: serde_json::to_value(sol.trace.stop)?.as_str().unwrap_or_default().to_string(),
            metrics,
            search_cost: sol.trace.total_cost(),
            final_fidelity: sol.trace.final_fidelity(),
            seconds: start.elapsed().as_secs_f64(),
        };
        Ok((row, sol))
    });

    let mut rows = Vec::new();
    for r in results {
        let (row, sol) = r?;
        sol.trace.save_csv(dir.join(format!("trace_{}.csv", row.run)))?;
        write_maps(&dir.join(format!("maps_{}", row.run)), &st.phantom, &sol)?;
        rows.push(row);
    }
    write_summary(&dir, cfg, &rows)?;
    Ok(ExperimentReport { dir, rows, dictionary_size: st.dict.len() })
}

fn fmt(x: f64) -> String {
    format!("{x:.9e}")
}

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map_or(String::new(), |v| v.to_string())
}

fn write_grid(path: &Path, h: usize, w: usize, values: impl Iterator<Item = f64>) -> Result<()> {
    let vals: Vec<f64> = values.collect();
    let mut out = String::with_capacity(h * w * 12);
    for r in 0..h {
        let line: Vec<String> = vals[r * w..(r + 1) * w].iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

fn write_maps(dir: &Path, ph: &Phantom, sol: &Solution) -> Result<()> {
    fs::create_dir_all(dir)?;
    // background voxels and unmatched rows report zero parameters
    let shown = |v: usize, k: usize| if sol.proton_density[v] > 0.0 { sol.maps[v][k] } else { 0.0 };
    write_grid(&dir.join("t1.csv"), ph.h, ph.w, (0..ph.n()).map(|v| shown(v, 0)))?;
    write_grid(&dir.join("t2.csv"), ph.h, ph.w, (0..ph.n()).map(|v| shown(v, 1)))?;
    write_grid(&dir.join("b0.csv"), ph.h, ph.w, (0..ph.n()).map(|v| shown(v, 2)))?;
    write_grid(&dir.join("pd.csv"), ph.h, ph.w, sol.proton_density.iter().copied())
}

fn write_summary(dir: &Path, cfg: &ExperimentConfig, rows: &[AlgorithmRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
    w.write_record([
        "run", "algorithm", "epsilon", "s", "iterations", "stop", "nmse", "t1_acc", "t2_acc", "b0_acc",
        "mask_voxels", "search_cost", "final_fidelity",
    ])?;
    for r in rows {
        w.write_record([
            r.run.clone(),
            r.algorithm.clone(),
            opt(r.epsilon),
            opt(r.s),
            r.iterations.to_string(),
            r.stop.clone(),
            fmt(r.metrics.nmse),
            fmt(r.metrics.t1_acc),
            fmt(r.metrics.t2_acc),
            fmt(r.metrics.b0_acc),
            r.metrics.mask_voxels.to_string(),
            r.search_cost.to_string(),
            fmt(r.final_fidelity),
        ])?;
    }
    w.flush()?;

    let json = serde_json::json!({ "config": cfg, "runs": rows });
    let mut f = fs::File::create(dir.join("summary.json"))?;
    serde_json::to_writer_pretty(&mut f, &json)?;
    f.write_all(b"\n")?;

    let mut w = csv::Writer::from_path(dir.join("plotdata_cost_vs_nmse.csv"))?;
    w.write_record(["run", "algorithm", "epsilon", "s", "search_cost", "nmse"])?;
    for r in rows {
        w.write_record([
            r.run.clone(),
            r.algorithm.clone(),
            opt(r.epsilon),
            opt(r.s),
            r.search_cost.to_string(),
            fmt(r.metrics.nmse),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("timings.csv"))?;
    w.write_record(["run", "seconds", "iterations"])?;
    for r in rows {
        w.write_record([r.run.clone(), format!("{:.3}", r.seconds), r.iterations.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
