use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use coverblip::dictionary::{Atoms, Dictionary, ParameterGrid};
use coverblip::forward::{ForwardOperator, SamplingPattern};
use coverblip::projection::{project_cone_ann_with, project_cone_exact_with};
use coverblip::{Complex64, Exec};

const POLICIES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn grid() -> ParameterGrid {
    ParameterGrid::from_ranges("[100:100:2000]", "[20:10:200]", "[-40:10:40]").unwrap()
}

fn random_image(n: usize, l: usize, seed: u64) -> Array2<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((n, l), |_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

fn dictionary_generation(c: &mut Criterion) {
    let g = grid();
    let mut group = c.benchmark_group("dictionary_generate");
    for (name, exec) in POLICIES {
        group.bench_function(name, |b| b.iter(|| Dictionary::generate_with(&g, 1.5, 100, exec).unwrap()));
    }
    group.finish();
}

fn projection(c: &mut Criterion) {
    let dict = Dictionary::generate(&grid(), 1.5, 100).unwrap().compress(10).unwrap();
    let tree = dict.build_tree().unwrap();
    let z = random_image(256, dict.dim(), 1);
    let mut group = c.benchmark_group("projection");
    group.sample_size(10);
    for (name, exec) in POLICIES {
        group.bench_with_input(BenchmarkId::new("exact", name), &exec, |b, &e| {
            b.iter(|| project_cone_exact_with(z.view(), &dict, None, e).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("ann_eps0.4", name), &exec, |b, &e| {
            b.iter(|| project_cone_ann_with(z.view(), &tree, &dict, 0.4, None, e).unwrap())
        });
    }
    group.finish();
}

fn operator(c: &mut Criterion) {
    let l = 64;
    let x = random_image(64 * 64, l, 2);
    let mut group = c.benchmark_group("operator_apply_adjoint");
    for (name, exec) in POLICIES {
        let op = ForwardOperator::cartesian(SamplingPattern::epi(64, 64, 4, l).unwrap()).with_exec(exec);
        group.bench_function(name, |b| {
            b.iter(|| {
                let y = op.apply(x.view()).unwrap();
                op.adjoint(y.view()).unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, dictionary_generation, projection, operator);
criterion_main!(benches);
