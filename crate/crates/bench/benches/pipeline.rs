use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use regionplsa::descriptor::describe;
use regionplsa::plsa::{train, PlsaConfig, TermMatrix};
use regionplsa::{extract_regions, pad, segment, DescriptorConfig, PaddingStrategy, SegmenterConfig};
use regionplsa_bench::{scene, term_rows};

fn segmentation(c: &mut Criterion) {
    let mut g = c.benchmark_group("segment");
    for side in [64u32, 96, 128] {
        let (image, _) = scene(side, 1);
        g.bench_with_input(BenchmarkId::from_parameter(side), &image, |b, img| {
            b.iter(|| segment(black_box(img), &SegmenterConfig::default()).unwrap())
        });
    }
    g.finish();
}

fn descriptor(c: &mut Criterion) {
    let (image, mask) = scene(96, 2);
    let regions = extract_regions(&mask, &Arc::new(image)).unwrap();
    let cfg = DescriptorConfig::default();
    let mut g = c.benchmark_group("cedd");
    for strategy in [PaddingStrategy::PadOriginal, PaddingStrategy::PadZero] {
        let patches: Vec<_> = regions.iter().map(|r| pad(r, strategy).unwrap()).collect();
        g.bench_function(strategy.short(), |b| {
            b.iter(|| patches.iter().map(|p| describe(black_box(&p.image), &cfg).unwrap()).collect::<Vec<_>>())
        });
    }
    g.finish();
}

fn em(c: &mut Criterion) {
    let mut g = c.benchmark_group("plsa_train");
    g.sample_size(10);
    for n in [100usize, 400] {
        let matrix = TermMatrix::new(term_rows(n, 144, 3)).unwrap();
        let cfg = PlsaConfig { restarts: 1, ..PlsaConfig::default() };
        g.bench_with_input(BenchmarkId::from_parameter(n), &matrix, |b, m| {
            b.iter(|| train(black_box(m), 8, &cfg).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, segmentation, descriptor, em);
criterion_main!(benches);
