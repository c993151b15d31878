use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ihc_triage::abmil::{run_ensemble, EmbeddingBag, HeadParams, MemberId, SlideBags, Tile};
use ihc_triage::eval::{sweep, LabeledPrediction, Truth};
use ihc_triage::tiling::{extract_to_writer, ExtractMode, SyntheticSlide};
use ihc_triage::Exec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const POLICIES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn extraction(c: &mut Criterion) {
    let slide = SyntheticSlide::random(1, 4096, 4096, 0.5, 5, 3);
    let pyramid = slide.pyramid("bench");
    let mask = slide.mask("bench", 8.0);
    let mut g = c.benchmark_group("extract_4096px_at_1mpp");
    g.sample_size(10);
    for (name, exec) in POLICIES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                extract_to_writer(&pyramid, &mask, ExtractMode::Prediction, 256, 1.0, exec, std::io::sink()).unwrap()
            })
        });
    }
    g.finish();
}

fn ensemble(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let dim = 128;
    let tiles = (0..2000u32)
        .map(|i| Tile { x: i % 50 * 128, y: i / 50 * 128, feature: (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect() })
        .collect();
    let bag = EmbeddingBag { slide_id: "bench".into(), target_um_per_px: 1.0, dim, tiles, geometry: None };
    let bags = SlideBags::single(bag);
    let heads: Vec<HeadParams> = (0..10u8)
        .flat_map(|fold| (0..3u8).map(move |tta| MemberId { fold, tta }))
        .map(|m| HeadParams::random(m, dim, 64, (m.fold * 3 + m.tta) as u64))
        .collect();
    let mut g = c.benchmark_group("ensemble_2000_tiles");
    for (name, exec) in POLICIES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| run_ensemble(&bags, &heads, exec).unwrap()));
    }
    g.finish();
}

fn threshold_sweep(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let preds: Vec<LabeledPrediction> = (0..50_000)
        .map(|i| LabeledPrediction {
            slide_id: i.to_string(),
            cohort_id: "bench".into(),
            truth: if rng.random_bool(0.4) { Truth::Malignant } else { Truth::Benign },
            truth_isup: None,
            label_level: Default::default(),
            cancer_probability: rng.random(),
        })
        .collect();
    let grid: Vec<f64> = (1..=100).map(|k| k as f64 / 100.0).collect();
    let mut g = c.benchmark_group("sweep_50k_slides_100_thresholds");
    g.sample_size(10);
    for (name, exec) in POLICIES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| sweep(&preds, &grid, exec).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, extraction, ensemble, threshold_sweep);
criterion_main!(benches);
