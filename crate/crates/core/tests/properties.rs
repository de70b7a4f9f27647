use dygssm::autodiff::{SparseMatrix, Tape};
use dygssm::eval::{auc, rank_positive, recall_at_k, RankingCase};
use dygssm::graph::{negative_sample, NormalizedAdjacency};
use dygssm::ssm::{dynamic_weight, hippo_matrix, ssm_step, SsmState};
use dygssm::walk::WalkCache;
use dygssm::{partition_snapshots, Snapshot, TemporalEdge, Tensor};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn edges(n: usize, max: usize) -> impl Strategy<Value = Vec<(usize, usize)>> {
    prop::collection::vec((0..n, 0..n), 0..max)
        .prop_map(|es| es.into_iter().filter(|(u, v)| u != v).collect())
}

fn tensor(rows: usize, cols: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(-3.0..3.0f64, rows * cols)
        .prop_map(move |d| Tensor::from_vec(rows, cols, d).unwrap())
}

proptest! {
    #[test]
    fn normalized_rows_match_brute_force(es in edges(9, 30)) {
        let s = Snapshot::new(0, 9, es.clone(), 0..9).unwrap();
        let norm = NormalizedAdjacency::from_adjacency(&s.adjacency()).unwrap();
        let mut adj = [[0.0f64; 9]; 9];
        for &(u, v) in &es {
            adj[u][v] = 1.0;
            adj[v][u] = 1.0;
        }
        let deg: Vec<f64> = adj.iter().map(|r| r.iter().sum()).collect();
        for r in 0..9 {
            let expect: f64 = (0..9)
                .filter(|&c| adj[r][c] != 0.0)
                .map(|c| 1.0 / (deg[r] * deg[c]).sqrt())
                .sum();
            let got: f64 = norm.matrix.row(r).map(|(_, v)| v).sum();
            prop_assert!((got - expect).abs() < 1e-12, "row {}: {} vs {}", r, got, expect);
            prop_assert_eq!(norm.degree[r] as f64, deg[r]);
        }
    }

    #[test]
    fn binning_preserves_every_edge(
        raw in prop::collection::vec((0..20usize, 0..20usize, 0.0..100.0f64), 2..80),
        count in 2..12usize,
    ) {
        let mut es: Vec<TemporalEdge> = raw.iter().map(|&(u, v, t)| TemporalEdge::new(u, v, t)).collect();
        // Guarantee a non-degenerate time range.
        es.push(TemporalEdge::new(0, 1, -1.0));
        let g = partition_snapshots(&es, count, false).unwrap();
        prop_assert_eq!(g.len(), count);
        prop_assert_eq!(g.edge_count(), es.len());
        let cumulative = partition_snapshots(&es, count, true).unwrap();
        prop_assert_eq!(cumulative.snapshot(count - 1).edges().len(), es.len());
    }

    #[test]
    fn negatives_are_never_neighbors(es in edges(12, 40), u in 0..12usize, k in 1..30usize, seed: u64) {
        let s = Snapshot::new(0, 12, es, 0..12).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match negative_sample(&s, u, k, &mut rng) {
            Ok(neg) => {
                prop_assert_eq!(neg.len(), k);
                for v in neg {
                    prop_assert!(v != u && !s.has_edge(u, v));
                }
            }
            Err(_) => prop_assert_eq!(s.degree(u), 11),
        }
    }

    #[test]
    fn ssm_step_is_linear(a in tensor(3, 7), b in tensor(3, 7), alpha in -2.0..2.0f64, block in 1..25usize) {
        // From zero state, two steps with grads x then y are linear in (x, y).
        let params = vec![("p".to_string(), Tensor::zeros(3, 7))];
        let run = |g1: &Tensor, g2: &Tensor| {
            let mut s = SsmState::zeros(&params, block).unwrap();
            ssm_step(&mut s, &[("p".into(), g1.clone())], 1.0).unwrap();
            ssm_step(&mut s, &[("p".into(), g2.clone())], 1.0).unwrap();
            s.get("p").unwrap().clone()
        };
        let mix = |x: &Tensor, y: &Tensor| {
            let mut m = x.clone();
            m.axpy(alpha, y).unwrap();
            m
        };
        let lhs = run(&mix(&a, &b), &mix(&b, &a));
        let rhs = mix(&run(&a, &b), &run(&b, &a));
        prop_assert!(lhs.max_abs_diff(&rhs) < 1e-9 * (1.0 + rhs.data().iter().fold(0.0f64, |m, x| m.max(x.abs()))));
    }

    #[test]
    fn hippo_is_lower_triangular(n in 1..=64usize) {
        let k = hippo_matrix(n).unwrap();
        for i in 0..n {
            for j in 0..n {
                let v = k.get(i, j);
                if j > i {
                    prop_assert_eq!(v, 0);
                } else if i == j {
                    prop_assert_eq!(v, 2);
                } else {
                    let sign = if (i - j) % 2 == 0 { 1 } else { -1 };
                    prop_assert_eq!(v, sign * (2 * i as i64 + 1));
                }
            }
        }
    }

    #[test]
    fn walk_cache_round_trips(
        rows in prop::collection::vec(prop::collection::vec(prop::collection::vec(0..8usize, 0..=5), 8), 1..4)
    ) {
        let mut cache = WalkCache::new(5, rows.len(), 8);
        for (t, per_node) in rows.iter().enumerate() {
            for (n, s) in per_node.iter().enumerate() {
                cache.set(t, n, s.clone());
            }
        }
        let back = WalkCache::from_csv(&cache.to_csv(), rows.len(), 8).unwrap();
        prop_assert_eq!(back, cache);
    }

    #[test]
    fn rank_matches_sort_oracle(pos in -10.0..10.0f64, negs in prop::collection::vec(-10.0..10.0f64, 1..60)) {
        prop_assume!(negs.iter().all(|&n| n != pos));
        let mut all: Vec<(f64, bool)> = negs.iter().map(|&n| (n, false)).collect();
        all.push((pos, true));
        all.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        let oracle = all.iter().position(|&(_, p)| p).unwrap() + 1;
        prop_assert_eq!(rank_positive(&RankingCase { positive: pos, negatives: negs }), oracle);
    }

    #[test]
    fn auc_survives_monotone_maps(scores in prop::collection::vec(-5.0..5.0f64, 2..50), seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut labels: Vec<bool> = scores.iter().map(|_| rand::Rng::gen_bool(&mut rng, 0.5)).collect();
        labels[0] = true;
        labels[1] = false;
        let base = auc(&scores, &labels).unwrap();
        let affine: Vec<f64> = scores.iter().map(|s| 2.0 * s + 1.0).collect();
        let squashed: Vec<f64> = scores.iter().map(|&s| dygssm::autodiff::sigmoid(s)).collect();
        prop_assert_eq!(auc(&affine, &labels).unwrap(), base);
        prop_assert_eq!(auc(&squashed, &labels).unwrap(), base);
        prop_assert!((0.0..=1.0).contains(&base));
    }

    #[test]
    fn recall_is_monotone_in_k(cases in prop::collection::vec((-3.0..3.0f64, prop::collection::vec(-3.0..3.0f64, 1..30)), 1..20)) {
        let cases: Vec<RankingCase> = cases.into_iter().map(|(positive, negatives)| RankingCase { positive, negatives }).collect();
        let mut last = 0.0;
        for k in 1..35 {
            let r = recall_at_k(&cases, k).unwrap();
            prop_assert!(r >= last && r <= 1.0);
            last = r;
        }
    }

    #[test]
    fn dynamic_weight_decreases_with_loss(a in 0.0..50.0f64, b in 0.0..50.0f64) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let eps = 1e-8;
        prop_assert!(dynamic_weight(lo, eps).unwrap() >= dynamic_weight(hi, eps).unwrap());
    }

    #[test]
    fn gradients_are_linear_in_the_loss(x in tensor(4, 3), w in tensor(3, 2), alpha in -3.0..3.0f64, beta in -3.0..3.0f64) {
        // d(αf + βg)/dw = α df/dw + β dg/dw with f = mean(xw), g = mean(tanh(xw)).
        let grad = |a: f64, b: f64| {
            let mut tape = Tape::new();
            let xv = tape.constant(x.clone());
            let wv = tape.param(w.clone());
            let y = tape.matmul(xv, wv).unwrap();
            let f = tape.mean_scalar(y).unwrap();
            let t = tape.tanh(y);
            let g = tape.mean_scalar(t).unwrap();
            let fa = tape.scale(f, a);
            let gb = tape.scale(g, b);
            let loss = tape.add(fa, gb).unwrap();
            tape.backward(loss).unwrap().take_or_zeros(wv, w.shape())
        };
        let mut expect = grad(1.0, 0.0);
        expect.data_mut().iter_mut().for_each(|v| *v *= alpha);
        expect.axpy(beta, &grad(0.0, 1.0)).unwrap();
        prop_assert!(grad(alpha, beta).max_abs_diff(&expect) < 1e-12);
    }
}

#[test]
fn sparse_and_dense_products_agree() {
    let trip = [(0, 1, 2.0), (1, 0, -1.0), (2, 2, 0.5), (2, 0, 3.0)];
    let s = SparseMatrix::from_triplets(3, 3, &trip).unwrap();
    let d = Tensor::from_fn(3, 2, |i, j| (i * 2 + j) as f64 - 1.5);
    let got = s.matmul(&d).unwrap();
    let want = s.to_dense().matmul(&d).unwrap();
    assert!(got.max_abs_diff(&want) < 1e-15);
}
