//! One worker versus the full pool on the data-parallel kernels.
//!
//! Build with `--no-default-features` to measure the sequential fallback instead of rayon.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use genbench::interpolant::{sample_sde, GaussianField, SamplerConfig};
use genbench::metrics::{fit_gaussian, frechet_distance, precision_recall};
use genbench::preprocess::bicubic_resize;
use genbench::rng::{fill_normal, seeded};
use genbench::{par, EmbeddingSet, RasterImage};

fn random_set(rows: usize, dim: usize, seed: u64) -> EmbeddingSet {
    let mut v = vec![0.0; rows * dim];
    fill_normal(&mut seeded(seed), &mut v);
    let rows: Vec<Vec<f64>> = v.chunks(dim).map(<[f64]>::to_vec).collect();
    EmbeddingSet::from_rows_f64(&rows, "bench", "bench").unwrap()
}

fn pools() -> Vec<(String, Option<usize>)> {
    let all = par::current_threads();
    let mut p = vec![("1-thread".to_string(), Some(1))];
    if all > 1 {
        p.push((format!("{all}-threads"), None));
    }
    p
}

fn fd(c: &mut Criterion) {
    let a = random_set(10_000, 64, 1);
    let b = random_set(10_000, 64, 2);
    let mut g = c.benchmark_group("fd_10k_x64");
    for (name, threads) in pools() {
        g.bench_function(BenchmarkId::from_parameter(&name), |bench| {
            bench.iter(|| {
                par::with_threads(threads, || {
                    frechet_distance(&fit_gaussian(&a).unwrap(), &fit_gaussian(&b).unwrap())
                        .unwrap()
                })
            })
        });
    }
    g.finish();
}

fn knn(c: &mut Criterion) {
    let a = random_set(2_000, 32, 3);
    let b = random_set(2_000, 32, 4);
    let mut g = c.benchmark_group("precision_recall_2k_x32");
    g.sample_size(10);
    for (name, threads) in pools() {
        g.bench_function(BenchmarkId::from_parameter(&name), |bench| {
            bench.iter(|| par::with_threads(threads, || precision_recall(&a, &b, 3).unwrap()))
        });
    }
    g.finish();
}

fn resize(c: &mut Criterion) {
    let data: Vec<u8> = (0..256 * 256 * 3).map(|i| (i * 31 % 251) as u8).collect();
    let img = RasterImage::new(256, 256, 3, data).unwrap();
    let mut g = c.benchmark_group("resize_256_to_224_x16");
    for (name, threads) in pools() {
        g.bench_function(BenchmarkId::from_parameter(&name), |bench| {
            bench.iter(|| {
                par::with_threads(threads, || {
                    par::map_indexed(16, |_| bicubic_resize(&img, (224, 224)).unwrap())
                })
            })
        });
    }
    g.finish();
}

fn sampler(c: &mut Criterion) {
    let cfg = SamplerConfig {
        steps: 50,
        ..Default::default()
    };
    let mut g = c.benchmark_group("sde_gaussian_4k_chains_x64");
    g.sample_size(10);
    for (name, threads) in pools() {
        g.bench_function(BenchmarkId::from_parameter(&name), |bench| {
            bench.iter(|| {
                par::with_threads(threads, || {
                    sample_sde(&GaussianField(64), &cfg, 4096).unwrap()
                })
            })
        });
    }
    g.finish();
}

criterion_group!(benches, fd, knn, resize, sampler);
criterion_main!(benches);
