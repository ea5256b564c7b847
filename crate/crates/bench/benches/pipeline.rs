use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use prffn_core::nn::{Arch, Inputs, Network};
use prffn_core::pbp::{mmpd, pbp_stack, PbpVector};
use prffn_core::phantom::{compose_pixel, PixelTruth};
use prffn_core::radiomics::{extract_radiomics, GrayPatch, RadiomicsConfig};
use prffn_core::mueller::{AcquisitionMeta, MuellerImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn polarimetry(c: &mut Criterion) {
    let m = compose_pixel(&PixelTruth { retardance: 1.1, axis: 0.2, depolarization: 0.3, diattenuation: 0.15 });
    c.bench_function("mmpd", |b| b.iter(|| mmpd(black_box(&m)).unwrap()));
    c.bench_function("pbp_decode", |b| b.iter(|| PbpVector::decode(black_box(&m)).unwrap()));
    let img = MuellerImage::new(64, 64, vec![m; 64 * 64], AcquisitionMeta::default()).unwrap();
    c.bench_function("pbp_stack_64x64", |b| b.iter(|| pbp_stack(black_box(&img)).unwrap()));
}

fn radiomics(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let patch = GrayPatch::new(100, 100, (0..10_000).map(|_| rng.random_range(0.0..255.0)).collect()).unwrap();
    let cfg = RadiomicsConfig::default();
    c.bench_function("radiomics_100x100", |b| b.iter(|| extract_radiomics(black_box(&patch), &cfg).unwrap()));
}

fn training_step(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let arch = Arch::Prffn { in_p: 23, in_r: 93, hidden: vec![512, 256, 128], classes: 3 };
    let net: Network<f32> = Network::he_uniform(arch, &mut rng).unwrap();
    let n = 256;
    let xp: Vec<f32> = (0..n * 23).map(|_| rng.random_range(-1.0..1.0)).collect();
    let xr: Vec<f32> = (0..n * 93).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y: Vec<u8> = (0..n).map(|_| rng.random_range(0..3)).collect();
    let x = Inputs { xp: &xp, xr: &xr, n };
    c.bench_function("prffn_batch256_gradient", |b| b.iter(|| net.loss_and_gradient(black_box(&x), &y, 0.3).unwrap()));
}

criterion_group!(benches, polarimetry, radiomics, training_step);
criterion_main!(benches);
