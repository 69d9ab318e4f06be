use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use coverblip::covertree::CoverTree;
use coverblip::dictionary::{Atoms, Dictionary, ParameterGrid};
use coverblip::harness::{run_experiment, ExperimentConfig, OUTPUT_ROOT_ENV};
use coverblip::linalg::{as_real, dist};
use coverblip::{Complex64, Precision};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[derive(Parser)]
#[command(name = "coverblip", version, about = "Cover tree accelerated dictionary-constrained reconstruction")]
struct Cli {
    /// Worker threads for data-parallel loops (default: all cores).
    #[arg(long, global = true, env = "COVERBLIP_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run an experiment grid from a JSON config.
    Run {
        config: PathBuf,
        /// Directory that receives `<name>/`; overrides the config.
        #[arg(long, env = OUTPUT_ROOT_ENV)]
        output_root: Option<PathBuf>,
    },
    /// Build or inspect dictionary files.
    #[command(subcommand)]
    Dict(DictCmd),
    /// Build or check cover tree files.
    #[command(subcommand)]
    Tree(TreeCmd),
    /// Benchmarks.
    #[command(subcommand)]
    Bench(BenchCmd),
}

#[derive(Args, Clone)]
struct GridArgs {
    #[arg(long, default_value = "[100:40:2000, 2200:200:6000]")]
    t1: String,
    #[arg(long, default_value = "[20:2:100, 110:4:200, 220:20:600]")]
    t2: String,
    #[arg(long, default_value = "[-250:40:-190, -50:2:50, 190:40:250]")]
    b0: String,
    #[arg(long, default_value_t = 1.5)]
    tr_ms: f64,
    #[arg(long = "length", short = 'L', default_value_t = 200)]
    l: usize,
}

impl GridArgs {
    fn generate(&self) -> Result<Dictionary> {
        let grid = ParameterGrid::from_ranges(&self.t1, &self.t2, &self.b0)?;
        Ok(Dictionary::generate(&grid, self.tr_ms, self.l)?)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PrecisionArg {
    F32,
    F64,
}

#[derive(Subcommand)]
enum DictCmd {
    /// Generate a fingerprint dictionary and save it.
    Build {
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "f64")]
        precision: PrecisionArg,
        /// Also write the lookup table as CSV.
        #[arg(long)]
        lookup_csv: Option<PathBuf>,
    },
    /// Print a dictionary's header and a few lookup rows.
    Inspect {
        path: PathBuf,
        #[arg(long, default_value_t = 5)]
        rows: usize,
        #[arg(long)]
        lookup_csv: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum TreeCmd {
    /// Build a cover tree over a dictionary's atoms.
    Build {
        dict: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        /// Index the rank-s SVD-compressed atoms instead.
        #[arg(long)]
        compress: Option<usize>,
    },
    /// Verify the structural invariants of a saved tree.
    Check { path: PathBuf },
}

#[derive(Subcommand)]
enum BenchCmd {
    /// Cover tree (1+ε) search against brute force on noisy atom queries.
    Anns {
        /// Dictionary file; generated from the grid options when absent.
        #[arg(long)]
        dict: Option<PathBuf>,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        compress: Option<usize>,
        #[arg(long, default_value_t = 200)]
        queries: usize,
        #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.2,0.4,0.8,1.6")]
        eps: Vec<f64>,
        /// Per-entry noise standard deviation added to each query atom.
        #[arg(long, default_value_t = 0.02)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: cannot configure {t} threads: {e}");
            return ExitCode::FAILURE;
        }
    }
    match dispatch(cli.cmd) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cmd: Cmd) -> Result<ExitCode> {
    match cmd {
        Cmd::Run { config, output_root } => {
            let cfg = ExperimentConfig::load(&config)?;
            let rep = run_experiment(&cfg, output_root.as_deref())?;
            println!("dictionary atoms: {}", rep.dictionary_size);
            println!("{:<28} {:>6} {:>12} {:>9} {:>9} {:>9} {:>14}", "run", "iters", "nmse", "t1_acc", "t2_acc", "b0_acc", "search_cost");
            for r in &rep.rows {
                println!(
                    "{:<28} {:>6} {:>12.4e} {:>9.4} {:>9.4} {:>9.4} {:>14}",
                    r.run, r.iterations, r.metrics.nmse, r.metrics.t1_acc, r.metrics.t2_acc, r.metrics.b0_acc, r.search_cost
                );
            }
            println!("wrote {}", rep.dir.display());
        }
        Cmd::Dict(DictCmd::Build { grid, out, precision, lookup_csv }) => {
            let start = Instant::now();
            let dict = grid.generate()?;
            let p = match precision {
                PrecisionArg::F32 => Precision::Complex64,
                PrecisionArg::F64 => Precision::Complex128,
            };
            dict.save_with_precision(&out, p).with_context(|| format!("writing {}", out.display()))?;
            if let Some(csv) = lookup_csv {
                dict.write_lookup_csv(csv)?;
            }
            println!(
                "{} atoms (of {} grid points) of length {} in {:.2}s -> {}",
                dict.len(),
                dict.unfiltered_count(),
                dict.dim(),
                start.elapsed().as_secs_f64(),
                out.display()
            );
        }
        Cmd::Dict(DictCmd::Inspect { path, rows, lookup_csv }) => {
            let dict = Dictionary::load(&path).with_context(|| format!("reading {}", path.display()))?;
            println!("atoms: {}", dict.len());
            println!("grid points before filtering: {}", dict.unfiltered_count());
            println!("length L: {}", dict.dim());
            println!("TR: {} ms", dict.tr_ms());
            println!("index,t1_ms,t2_ms,b0_hz");
            for j in 0..rows.min(dict.len()) {
                let [t1, t2, b0] = dict.lookup(j)?;
                println!("{j},{t1},{t2},{b0}");
            }
            if let Some(csv) = lookup_csv {
                dict.write_lookup_csv(csv)?;
            }
        }
        Cmd::Tree(TreeCmd::Build { dict, out, compress }) => {
            let d = Dictionary::load(&dict).with_context(|| format!("reading {}", dict.display()))?;
            let start = Instant::now();
            let tree = match compress {
                Some(s) => d.compress(s)?.build_tree()?,
                None => d.build_tree()?,
            };
            let secs = start.elapsed().as_secs_f64();
            tree.save(&out)?;
            println!(
                "{} points, {} nodes, {} duplicates, sigma {:.6}, i_max {}, {} distances, {:.2}s -> {}",
                tree.len(),
                tree.node_count(),
                tree.duplicate_count(),
                tree.sigma(),
                tree.i_max(),
                tree.distance_count(),
                secs,
                out.display()
            );
        }
        Cmd::Tree(TreeCmd::Check { path }) => {
            let tree = CoverTree::load(&path).with_context(|| format!("reading {}", path.display()))?;
            let v = tree.verify_invariants();
            if v.is_empty() {
                println!("ok: {} points, {} nodes, i_max {}", tree.len(), tree.node_count(), tree.i_max());
            } else {
                for x in v.iter().take(50) {
                    println!("{x}");
                }
                println!("{} violations", v.len());
                return Ok(ExitCode::FAILURE);
            }
        }
        Cmd::Bench(BenchCmd::Anns { dict, grid, compress, queries, eps, noise, seed }) => {
            bench_anns(dict.as_deref(), &grid, compress, queries, &eps, noise, seed)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn noisy_queries<D: Atoms>(atoms: &D, count: usize, noise: f64, seed: u64) -> Vec<Vec<Complex64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let j = rng.random_range(0..atoms.len());
            let mut q: Vec<Complex64> = atoms
                .atom(j)
                .iter()
                .map(|a| {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    a + Complex64::new(re, im) * noise
                })
                .collect();
            let n = q.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            q.iter_mut().for_each(|z| *z /= n);
            q
        })
        .collect()
}

fn bench_anns(
    dict: Option<&Path>,
    grid: &GridArgs,
    compress: Option<usize>,
    queries: usize,
    eps: &[f64],
    noise: f64,
    seed: u64,
) -> Result<()> {
    if queries == 0 {
        bail!("need at least one query");
    }
    let d = match dict {
        Some(p) => Dictionary::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => grid.generate()?,
    };
    match compress {
        Some(s) => run_bench(&d.compress(s)?, queries, eps, noise, seed),
        None => run_bench(&d, queries, eps, noise, seed),
    }
}

fn run_bench<D: Atoms>(atoms: &D, queries: usize, eps: &[f64], noise: f64, seed: u64) -> Result<()> {
    let start = Instant::now();
    let tree = atoms.build_tree()?;
    println!("atoms {}, search dim {}, tree built in {:.2}s", atoms.len(), atoms.dim(), start.elapsed().as_secs_f64());
    let qs = noisy_queries(atoms, queries, noise, seed);
    let points = tree.points();
    let start = Instant::now();
    let exact: Vec<f64> = qs
        .iter()
        .map(|q| {
            let q = as_real(q);
            (0..points.len()).map(|j| dist(points.point(j), q)).fold(f64::INFINITY, f64::min)
        })
        .collect();
    let brute_us = start.elapsed().as_secs_f64() * 1e6 / queries as f64;
    println!("{:>6} {:>12} {:>12} {:>12} {:>10}", "eps", "mean_cost", "cost_ratio", "us/query", "max_ratio");
    println!("{:>6} {:>12} {:>12.2} {:>12.1} {:>10.4}", "brute", atoms.len(), 1.0, brute_us, 1.0);
    for &e in eps {
        let start = Instant::now();
        let mut cost = 0u64;
        let mut worst = 1.0f64;
        for (q, &ex) in qs.iter().zip(&exact) {
            let r = tree.ann_search_complex(q, e, None)?;
            cost += r.cost;
            if ex > 0.0 {
                worst = worst.max(r.distance / ex);
            }
        }
        let us = start.elapsed().as_secs_f64() * 1e6 / queries as f64;
        let mean = cost as f64 / queries as f64;
        println!("{e:>6} {mean:>12.1} {:>12.2} {us:>12.1} {worst:>10.4}", atoms.len() as f64 / mean);
    }
    Ok(())
}
