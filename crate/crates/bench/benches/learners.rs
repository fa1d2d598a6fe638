use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use hfair_core::assignment::Init;
use hfair_core::evaluation::{
    benchmark_assignment, benchmark_mintb, OracleOptions, PredictionMode,
};
use hfair_core::scenarios::{build_assignment, build_mintb, ScenarioKind, ScenarioSpec};
use hfair_core::sim::{run_assignment, run_mintb};
use hfair_core::{EntropicOftrl, Matrix, QuadOftrl, Sense};

fn grad(rows: usize, cols: usize, k: usize) -> Matrix {
    Matrix::from_vec(
        rows,
        cols,
        (0..rows * cols)
            .map(|i| ((i * 7 + k * 3) % 11) as f64 - 5.0)
            .collect(),
    )
    .unwrap()
}

fn learner_steps(c: &mut Criterion) {
    let gs: Vec<Matrix> = (0..16).map(|k| grad(5, 4, k)).collect();
    c.bench_function("entropic_step_5x4", |b| {
        let mut l = EntropicOftrl::new(5, 4).unwrap();
        let mut k = 0;
        b.iter(|| {
            k = (k + 1) % 15;
            black_box(l.step(&gs[k], &gs[k + 1]).unwrap());
        })
    });

    let vs: Vec<Vec<f64>> = (0..16)
        .map(|k| (0..10).map(|i| ((i + k) % 5) as f64 - 2.0).collect())
        .collect();
    c.bench_function("quad_step_10", |b| {
        let mut l = QuadOftrl::new(vec![-3.0; 10], vec![-0.1; 10], Sense::Minimize).unwrap();
        let mut k = 0;
        b.iter(|| {
            k = (k + 1) % 15;
            black_box(l.step(&vs[k], &vs[k + 1]).unwrap());
        })
    });
}

fn runs(c: &mut Criterion) {
    let (seq, params) =
        build_assignment(&ScenarioSpec::preset(ScenarioKind::Assignment1, 100, 0)).unwrap();
    let mut g = c.benchmark_group("assignment_100_slots");
    g.sample_size(20);
    for mode in [PredictionMode::None, PredictionMode::Perfect] {
        g.bench_function(mode.label(), |b| {
            b.iter(|| {
                black_box(run_assignment(&seq.envs, &params, mode, Init::Default, 0).unwrap())
            })
        });
    }
    g.finish();

    let (mseq, mparams) = build_mintb(&ScenarioSpec::preset(ScenarioKind::MinTb1, 100, 0)).unwrap();
    c.bench_function("mintb_100_slots", |b| {
        b.iter(|| {
            black_box(
                run_mintb(&mseq.envs, &mparams, PredictionMode::None, Init::Default, 0).unwrap(),
            )
        })
    });
}

fn oracles(c: &mut Criterion) {
    let (seq, params) =
        build_assignment(&ScenarioSpec::preset(ScenarioKind::Assignment1, 100, 0)).unwrap();
    let mut g = c.benchmark_group("oracle");
    g.sample_size(10);
    g.bench_function("assignment_T100", |b| {
        b.iter_batched(
            OracleOptions::default,
            |o| black_box(benchmark_assignment(&seq.envs, &params, &o).unwrap()),
            BatchSize::SmallInput,
        )
    });
    let (mseq, mparams) = build_mintb(&ScenarioSpec::preset(ScenarioKind::MinTb1, 100, 0)).unwrap();
    g.bench_function("mintb_T100", |b| {
        b.iter(|| black_box(benchmark_mintb(&mseq.envs, &mparams).unwrap()))
    });
    g.finish();
}

criterion_group!(benches, learner_steps, runs, oracles);
criterion_main!(benches);
