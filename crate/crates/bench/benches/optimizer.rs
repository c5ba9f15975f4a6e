use std::hint::black_box;

use agentspace::maze::{build_maze, deceptive_maze, DECEPTIVE_GAMMA};
use agentspace::optimizer::{es_gradient, epoch_noise, sro_epoch, OptimizerState, Shaping, SroParams};
use agentspace::{RewardSpec, StochasticAgent};
use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

fn epochs(c: &mut Criterion) {
    let p = build_maze(&deceptive_maze()).unwrap();
    let spec = RewardSpec::new(DECEPTIVE_GAMMA).unwrap();
    let dim = p.n_states() * p.n_actions();
    for (name, lambda) in [("sro_epoch/maze/plain", 0.0), ("sro_epoch/maze/novelty", 1.0)] {
        let params = SroParams {
            novelty_weight: lambda,
            ..SroParams::default()
        };
        // Warm the archive so novelty has loci to compare against.
        let mut state = OptimizerState::new(
            StochasticAgent::softmax(p.n_states(), p.n_actions(), vec![0.0; dim], 1.0).unwrap(),
            &p,
            &spec,
            params,
            None,
            1,
        )
        .unwrap();
        for _ in 0..5 {
            state = sro_epoch(state, &p, &spec).unwrap();
        }
        c.bench_function(name, |bench| {
            bench.iter_batched(|| state.clone(), |s| sro_epoch(s, &p, &spec).unwrap(), BatchSize::SmallInput)
        });
    }
}

fn gradient(c: &mut Criterion) {
    let noises = epoch_noise(3, 0, 64, 100, true);
    let scores: Vec<f64> = (0..64).map(|i| ((i * 37) % 64) as f64).collect();
    c.bench_function("es_gradient/64x100", |bench| {
        bench.iter(|| es_gradient(black_box(&noises), &scores, 0.5, Shaping::Ranked).unwrap())
    });
}

criterion_group!(benches, epochs, gradient);
criterion_main!(benches);
