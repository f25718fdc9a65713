use aaa_bench::{random_tensor, tube_study};
use aaa_core::tensor::*;
use aaa_core::training::{loss_and_gradients, Sample};
use aaa_core::unet::{self, UNetConfig};
use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

fn layers(c: &mut Criterion) {
    let x = random_tensor(&[1, 8, 32, 32, 8], 1);
    let k = random_tensor(&[8, 8, 3, 3, 3], 2);
    let g = random_tensor(&[1, 8, 32, 32, 8], 3);
    c.bench_function("conv3d forward 8→8 32×32×8", |b| b.iter(|| conv3d_forward(black_box(&x), &k, &[0.0; 8]).unwrap()));
    c.bench_function("conv3d backward 8→8 32×32×8", |b| b.iter(|| conv3d_backward(black_box(&x), &k, &g).unwrap()));

    let (gamma, beta) = (vec![1.0f32; 8], vec![0.0f32; 8]);
    let state = BatchNormState::new(8);
    let cfg = BatchNormConfig::default();
    c.bench_function("batchnorm train 8ch 32×32×8", |b| {
        b.iter(|| batchnorm_forward(black_box(&x), &gamma, &beta, &state, Mode::Train, &cfg).unwrap())
    });
    c.bench_function("maxpool 2×2×1 8ch 32×32×8", |b| b.iter(|| maxpool_2x2x1_forward(black_box(&x)).unwrap()));
    let uk = random_tensor(&[8, 4, 2, 2, 1], 4);
    c.bench_function("upconv 2×2×1 8→4 32×32×8", |b| b.iter(|| upconv_2x2x1_forward(black_box(&x), &uk, &[0.0; 4]).unwrap()));
}

fn network(c: &mut Criterion) {
    let cfg = UNetConfig::small(2, 8);
    let w = unet::build::<f32>(&cfg, 0).unwrap();
    let study = tube_study(10.0, 15.0);
    let sample = Sample::from_study(&cfg, "bench", &study.volume, &study.truth_mask).unwrap();
    let mut g = c.benchmark_group("unet levels 2, 8 features, 64×64×32");
    g.sample_size(10);
    g.bench_function("inference", |b| b.iter(|| unet::forward(&w, &cfg, black_box(&sample.input), Mode::Infer, 0).unwrap()));
    g.bench_function("training step", |b| b.iter(|| loss_and_gradients(&w, &cfg, black_box(&sample), 1).unwrap()));
    g.finish();
}

criterion_group!(benches, layers, network);
criterion_main!(benches);
