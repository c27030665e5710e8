//! Convolution forward/backward throughput on the rayon pool versus a
//! single-thread pool. Build with `--no-default-features` to measure the
//! fully sequential kernels.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thermsynth_autograd::{init, Graph, Tensor};

fn conv_step(x: &Tensor, w: &Tensor) -> f64 {
    let g = Graph::new();
    let xv = g.constant(x.clone());
    let wv = g.variable(w.clone());
    let loss = xv.conv2d(wv, None, 1, 1).unwrap().square().mean();
    let grads = g.backward(loss).unwrap();
    grads.get(wv).unwrap().data()[0]
}

fn bench_conv(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x = init::conv_weight(&mut rng, [8, 32, 32, 32], 1.0);
    let w = init::conv_weight(&mut rng, [32, 32, 3, 3], 1.0);
    let single = rayon_single();

    let mut group = c.benchmark_group("conv3x3_fwd_bwd_b8_c32_32x32");
    group.sample_size(10);
    group.bench_function(BenchmarkId::new("pool", "default"), |b| b.iter(|| conv_step(&x, &w)));
    group.bench_function(BenchmarkId::new("pool", "single"), |b| {
        b.iter(|| single(&|| conv_step(&x, &w)))
    });
    group.finish();
}

#[cfg(feature = "parallel")]
fn rayon_single() -> impl Fn(&(dyn Fn() -> f64 + Sync)) -> f64 {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    move |f| pool.install(f)
}

#[cfg(not(feature = "parallel"))]
fn rayon_single() -> impl Fn(&(dyn Fn() -> f64 + Sync)) -> f64 {
    |f| f()
}

criterion_group!(benches, bench_conv);
criterion_main!(benches);
