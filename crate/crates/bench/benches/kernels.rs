use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tableseq::decode::{greedy_decode, mtp_decode, DecodeBudget};
use tableseq::metrics::{s_teds, teds};
use tableseq::nn::{key_biased_attention, Mask, MicroModel, ModelConfig, Tensor};
use tableseq::targets::{build_targets, RidgeConfig};
use tableseq::tokenize::{serialize, SerializeOptions};
use tableseq::Vocab;
use tableseq_bench::{rendered, tables};

fn bench_teds(c: &mut Criterion) {
    let mut g = c.benchmark_group("teds");
    for max in [3, 6, 10] {
        let ts = tables(16, max);
        g.bench_with_input(BenchmarkId::new("teds", max), &ts, |b, ts| {
            b.iter(|| ts.windows(2).map(|w| teds(&w[0], &w[1])).sum::<f64>())
        });
        g.bench_with_input(BenchmarkId::new("s_teds", max), &ts, |b, ts| {
            b.iter(|| ts.windows(2).map(|w| s_teds(&w[0], &w[1])).sum::<f64>())
        });
    }
    g.finish();
}

fn bench_attention(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut g = c.benchmark_group("key_biased_attention");
    for (tq, tk) in [(1, 32), (64, 32), (128, 128)] {
        let d = 64;
        let mut t = |n: usize| Tensor::new(&[n, d], (0..n * d).map(|_| rng.gen_range(-1.0f32..1.0)).collect());
        let (q, k, v) = (t(tq), t(tk), t(tk));
        let bias: Vec<f32> = (0..tk).map(|i| (i % 7) as f32 * 0.3).collect();
        g.bench_function(BenchmarkId::from_parameter(format!("{tq}x{tk}")), |b| {
            b.iter(|| key_biased_attention(&q, &k, &v, 4, Mask::None, Some(black_box(&bias))).unwrap())
        });
    }
    g.finish();
}

fn bench_targets(c: &mut Criterion) {
    let ts = rendered(16);
    let ridge = RidgeConfig::default();
    c.bench_function("build_targets/16 rendered tables", |b| {
        b.iter(|| ts.iter().map(|t| build_targets(t, &ridge).unwrap().rows.len()).sum::<usize>())
    });
    let vocab = Vocab::default();
    let opts = SerializeOptions { coords: true, ..SerializeOptions::default() };
    c.bench_function("serialize/16 rendered tables", |b| {
        b.iter(|| ts.iter().map(|t| serialize(t, &vocab, &opts).unwrap().len()).sum::<usize>())
    });
}

fn bench_decode(c: &mut Criterion) {
    let vocab = Vocab::default();
    let cfg = ModelConfig { vocab: vocab.len(), mtp_heads: 4, ..ModelConfig::default() };
    let model = MicroModel::<f32>::new(cfg.clone(), 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let image: Vec<f32> = (0..cfg.image_h * cfg.image_w).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut g = c.benchmark_group("decode_max64");
    g.sample_size(10);
    g.bench_function("greedy", |b| {
        b.iter(|| greedy_decode(&model, image.as_slice(), &DecodeBudget::new(64, 1, &vocab)).unwrap())
    });
    for n in [2, 4] {
        g.bench_function(BenchmarkId::new("blockwise", n), |b| {
            b.iter(|| mtp_decode(&model, image.as_slice(), &DecodeBudget::new(64, n, &vocab)).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, bench_teds, bench_attention, bench_targets, bench_decode);
criterion_main!(benches);
