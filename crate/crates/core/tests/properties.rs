use std::sync::Arc;

use proptest::prelude::*;

use ordered_gnn::graph::synthetic::random_features;
use ordered_gnn::graph::{edge_homophily, generate_splits, EdgeOptions, Graph, SplitRatios};
use ordered_gnn::model::{cumax_left, softor};
use ordered_gnn::oracle::{all_pairs_distances, audit_model_config, enumerate_expected_gate, receptive_field_audit};
use ordered_gnn::{Matrix, OrderedGnn, Tape};

fn graph_strategy() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (2usize..20).prop_flat_map(|n| (Just(n), prop::collection::vec((0..n, 0..n), 0..40)))
}

fn gate(logits: &[f64]) -> Vec<f64> {
    let mut tape = Tape::new();
    let z = tape.constant(Matrix::from_rows(&[logits.to_vec()]));
    let g = cumax_left(&mut tape, z).unwrap();
    tape.value(g).row(0).to_vec()
}

proptest! {
    #[test]
    fn cumax_is_a_monotone_unit_profile(logits in prop::collection::vec(-20.0f64..20.0, 1..24)) {
        let g = gate(&logits);
        prop_assert!((g[0] - 1.0).abs() <= 1e-9);
        prop_assert!(g.iter().all(|&v| (0.0..=1.0 + 1e-12).contains(&v)));
        prop_assert!(g.windows(2).all(|w| w[1] <= w[0]));
        for (a, b) in g.iter().zip(enumerate_expected_gate(&logits)) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn softor_never_closes_a_gate(
        a in prop::collection::vec(0.0f64..=1.0, 1..16),
        seed in any::<u64>(),
    ) {
        let b = random_features(1, a.len(), seed).map(|v| (v + 1.0) / 2.0);
        let mut tape = Tape::new();
        let pa = tape.constant(Matrix::from_rows(std::slice::from_ref(&a)));
        let pb = tape.constant(b.clone());
        let out = softor(&mut tape, pa, pb).unwrap();
        let out = tape.value(out);
        for i in 0..a.len() {
            prop_assert!(out.get(0, i) >= a[i]);
            prop_assert!(out.get(0, i) >= b.get(0, i) - 1e-15);
            prop_assert!(out.get(0, i) <= 1.0);
        }
    }

    #[test]
    fn built_graphs_are_symmetric_and_loop_free((n, edges) in graph_strategy()) {
        let g = Graph::from_edges(n, &edges, EdgeOptions::default()).unwrap();
        g.check_invariants().unwrap();
        for v in 0..n {
            prop_assert!(!g.neighbors(v).contains(&v));
            for &u in g.neighbors(v) {
                prop_assert!(g.neighbors(u).contains(&v));
            }
        }
    }

    #[test]
    fn bfs_balls_match_floyd_warshall((n, edges) in graph_strategy(), k in 0usize..5) {
        let g = Graph::from_edges(n, &edges, EdgeOptions::default()).unwrap();
        let d = all_pairs_distances(&g);
        for v in 0..n {
            let expected: Vec<usize> = (0..n).filter(|&u| d[v][u] <= k).collect();
            prop_assert_eq!(g.k_hop_ball(v, k).unwrap(), expected);
        }
    }

    #[test]
    fn permutation_preserves_degrees_and_homophily(
        (n, edges) in graph_strategy(),
        seed in any::<u64>(),
    ) {
        use rand::{seq::SliceRandom, SeedableRng};
        let g = Graph::from_edges(n, &edges, EdgeOptions::default()).unwrap();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let p = g.permute(&perm).unwrap();
        let labels: Vec<usize> = (0..n).map(|v| v % 3).collect();
        let mut moved = vec![0; n];
        for v in 0..n {
            prop_assert_eq!(g.degree(v), p.degree(perm[v]));
            moved[perm[v]] = labels[v];
        }
        prop_assert_eq!(p.num_edges(), g.num_edges());
        let h = edge_homophily(&g, &labels, 3).unwrap();
        prop_assert!((0.0..=1.0).contains(&h));
        prop_assert_eq!(h, edge_homophily(&p, &moved, 3).unwrap());
    }

    #[test]
    fn generated_splits_partition_nodes(n in 10usize..200, seed in any::<u64>()) {
        let labels: Vec<usize> = (0..n).map(|v| v % 4).collect();
        let set = generate_splits(n, &labels, seed, SplitRatios::default(), 3).unwrap();
        for s in &set.splits {
            s.validate().unwrap();
            let (a, b, c) = s.counts();
            prop_assert_eq!(a + b + c, n);
        }
    }
}

#[test]
fn k_zero_sees_only_the_node_itself() {
    let g = Arc::new(Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3)], EdgeOptions::default()).unwrap());
    let x = random_features(4, 3, 1);
    let m = OrderedGnn::new(audit_model_config(2, 3), 2).unwrap();
    let r = receptive_field_audit(&m, &g, &x, 0, 40, 3).unwrap();
    assert!(r.passed(), "{r:?}");
}

#[test]
fn path_end_is_outside_one_hop_ball() {
    let g = Arc::new(Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3)], EdgeOptions::default()).unwrap());
    let x = random_features(4, 3, 1);
    let m = OrderedGnn::new(audit_model_config(1, 3), 2).unwrap();
    let (_, before, _) = m.inspect(&g, &x).unwrap();
    let mut y = x.clone();
    y.row_mut(3).iter_mut().for_each(|v| *v += 0.7);
    let (_, after, _) = m.inspect(&g, &y).unwrap();
    assert_eq!(before[1].row(0), after[1].row(0));
    y.row_mut(1).iter_mut().for_each(|v| *v += 0.7);
    let (_, after, _) = m.inspect(&g, &y).unwrap();
    assert_ne!(before[1].row(0), after[1].row(0));
}

#[test]
fn swapping_isolated_twins_leaves_logits_unchanged() {
    let g = Arc::new(Graph::from_edges(6, &[(0, 1), (1, 2), (2, 3)], EdgeOptions::default()).unwrap());
    let mut x = random_features(6, 3, 4);
    let twin = x.row(4).to_vec();
    x.row_mut(5).copy_from_slice(&twin);
    let m = OrderedGnn::new(audit_model_config(3, 3), 5).unwrap();
    let perm = vec![0, 1, 2, 3, 5, 4];
    let p = Arc::new(g.permute(&perm).unwrap());
    let before = m.predict(&g, &x).unwrap();
    let after = m.predict(&p, &x).unwrap();
    assert_eq!(before, after);
    assert!(ordered_gnn::oracle::permutation_holds(&m, &g, &x, &perm).unwrap());
}
