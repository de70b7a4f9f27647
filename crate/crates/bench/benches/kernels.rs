use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use dygssm::ssm::{ssm_step, SsmState};
use dygssm::{build_cache, generate_synthetic, Model, PreparedGraph, RunConfig, SyntheticSpec, Tensor, WalkConfig};

fn ramp(rows: usize, cols: usize) -> Tensor {
    Tensor::from_fn(rows, cols, |i, j| ((i * 31 + j * 17) % 13) as f64 / 13.0 - 0.5)
}

fn kernels(c: &mut Criterion) {
    let a = ramp(256, 64);
    let b = ramp(64, 64);
    c.bench_function("dense_matmul_256x64x64", |bench| bench.iter(|| black_box(&a).matmul(black_box(&b)).unwrap()));

    let g = generate_synthetic(&SyntheticSpec::acceptance(), 0).unwrap();
    let adj = g.graph.snapshot(0).normalized_adjacency().matrix;
    let x = ramp(g.graph.node_count(), 64);
    c.bench_function("sparse_matmul_synthetic", |bench| bench.iter(|| adj.matmul(black_box(&x)).unwrap()));

    let params = vec![("w".to_string(), ramp(64, 64))];
    let grads = vec![("w".to_string(), ramp(64, 64))];
    for block in [1, 8, 64] {
        let mut state = SsmState::zeros(&params, block).unwrap();
        c.bench_function(&format!("ssm_step_4096_b{block}"), |bench| {
            bench.iter(|| {
                state.reset();
                ssm_step(&mut state, black_box(&grads), 0.5).unwrap();
            })
        });
    }

    let walk = WalkConfig::default();
    c.bench_function("walk_cache_synthetic", |bench| bench.iter(|| build_cache(&g.graph, &walk, 0).unwrap()));

    let cache = build_cache(&g.graph, &walk, 0).unwrap();
    let data = PreparedGraph::new(g.graph.clone(), cache).unwrap();
    let cfg = RunConfig::default();
    let model = Model::new(cfg.model_config(data.node_count()), 0);
    c.bench_function("forward_synthetic_snapshot", |bench| bench.iter(|| model.embeddings(&data, black_box(3)).unwrap()));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = kernels
}
criterion_main!(benches);
