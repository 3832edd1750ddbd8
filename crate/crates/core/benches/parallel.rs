//! Compares one training epoch and a full evaluation pass with the data
//! parallel path switched off and on.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use sgwn_core::data::{build_dataset, ClassSpec, SyntheticSpec};
use sgwn_core::nn::{build_model, evaluate, train, TrainConfig};

fn bench_dataset() -> sgwn_core::data::Dataset {
    let spec = SyntheticSpec {
        sensors: 5,
        fs: 20480.0,
        record_len: 16000,
        phase_step: 1.0,
        classes: vec![
            ClassSpec {
                name: "healthy".into(),
                carrier_hz: 3000.0,
                fault_hz: 0.0,
                impulse_decay: 0.0,
                coupling: vec![1.0; 5],
                noise_floor: 0.25,
            },
            ClassSpec {
                name: "inner_race".into(),
                carrier_hz: 3000.0,
                fault_hz: 240.0,
                impulse_decay: 800.0,
                coupling: vec![1.5, 1.0, 0.6, 0.35, 0.2],
                noise_floor: 0.25,
            },
        ],
        seed: 0,
    };
    build_dataset(&spec, 256, 0.9, 40).unwrap()
}

fn epoch_and_eval(c: &mut Criterion) {
    let dataset = bench_dataset();
    let mut group = c.benchmark_group("train_epoch");
    group.sample_size(10);
    group.warm_up_time(std::time::Duration::from_secs(1));
    group.measurement_time(std::time::Duration::from_secs(5));
    for &parallel in &[false, true] {
        let label = if parallel { "parallel" } else { "sequential" };
        group.bench_with_input(BenchmarkId::from_parameter(label), &parallel, |b, &p| {
            let config = TrainConfig {
                epochs: 1,
                batch_size: 16,
                hidden: 64,
                parallel: p,
                ..TrainConfig::default()
            };
            b.iter(|| {
                let mut model = build_model(&dataset, &config).unwrap();
                train(&mut model, &dataset, &config).unwrap()
            });
        });
    }
    group.finish();

    let config = TrainConfig { hidden: 64, ..TrainConfig::default() };
    let model = build_model(&dataset, &config).unwrap();
    c.bench_function("evaluate_test_split", |b| {
        b.iter(|| evaluate(&model, dataset.test_samples()).unwrap())
    });
}

criterion_group!(benches, epoch_and_eval);
criterion_main!(benches);
