use criterion::{criterion_group, criterion_main, Criterion};
use gradebal::augment::{apply_pipeline, sample_pipeline, PipelineConfig};
use gradebal::imageops::{gaussian_blur, warp_perspective, Homography};
use gradebal_bench::noise_image;
use std::hint::black_box;

fn bench_ops(c: &mut Criterion) {
    let img = noise_image(224, 224, 1);
    c.bench_function("gaussian_blur_224_k3", |b| {
        b.iter(|| gaussian_blur(black_box(&img), 1.5, 3).unwrap())
    });
    let h = Homography::new([[1.0, 0.05, 3.0], [-0.02, 1.0, 2.0], [1e-4, 2e-4, 1.0]]).unwrap();
    c.bench_function("warp_perspective_224", |b| {
        b.iter(|| warp_perspective(black_box(&img), &h, [0, 0, 0]))
    });
    let cfg = PipelineConfig::default();
    let src = noise_image(320, 240, 2);
    c.bench_function("full_pipeline_320x240_to_224", |b| {
        let mut seed = 0u64;
        b.iter(|| {
            seed += 1;
            let s = sample_pipeline(&cfg, seed, src.width(), src.height());
            apply_pipeline(black_box(&src), &s, &cfg).unwrap()
        })
    });
}

criterion_group!(benches, bench_ops);
criterion_main!(benches);
