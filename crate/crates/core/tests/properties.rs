use std::collections::BTreeSet;

use ndarray::Array2;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mixgraph::compgraph::{default_budget, ComputationGraph, Relation};
use mixgraph::mixing::{global_assortativity, global_mixing_matrix};
use mixgraph::seed::SeedStream;
use mixgraph::wrgnn::{stratified_split, ModelConfig, Variant, WrgnnModel};
use mixgraph::{load_graph, LabeledGraph};

/// `(n, edges, labels)` with `n` in `2..=max_n`.
fn graph_strategy(max_n: usize) -> impl Strategy<Value = LabeledGraph> {
    (2..=max_n)
        .prop_flat_map(|n| {
            (
                Just(n),
                prop::collection::vec((0..n, 0..n), 0..3 * n),
                prop::collection::vec(0..3usize, n),
            )
        })
        .prop_map(|(n, raw, labels)| {
            let edges: Vec<_> = raw.into_iter().filter(|(u, v)| u != v).collect();
            LabeledGraph::from_edges(n, &edges)
                .unwrap()
                .with_labels(labels.into_iter().map(Some).collect())
                .unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn rings_partition_component(g in graph_strategy(25), u in 0usize..25) {
        let u = u % g.num_nodes();
        let comp = g.connected_component(u).unwrap();
        let mut seen = BTreeSet::new();
        for tau in 0..=g.num_nodes() {
            let ring = g.hop_ring(u, tau).unwrap();
            for &v in &ring.members {
                prop_assert!(seen.insert(v), "node {} in two rings", v);
            }
        }
        prop_assert_eq!(seen.len(), comp.len());
        prop_assert_eq!(g.degree(u).unwrap(), g.hop_ring(u, 1).unwrap().members.len());
    }

    #[test]
    fn edge_list_round_trip(g in graph_strategy(30)) {
        let dir = tempfile::tempdir().unwrap();
        let (e, l) = (dir.path().join("edges.txt"), dir.path().join("labels.txt"));
        g.write_edge_list(&e).unwrap();
        g.write_labels(&l).unwrap();
        let back = load_graph(&e, Some(&l), None).unwrap();
        prop_assert_eq!(back.edges(), g.edges());
        prop_assert_eq!(back.labels(), g.labels());
    }

    #[test]
    fn global_assortativity_bounded(g in graph_strategy(30)) {
        if let Ok(m) = global_mixing_matrix(&g) {
            prop_assert!((m.total() - 1.0).abs() < 1e-9);
            if let Ok(r) = global_assortativity(&m) {
                prop_assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(&r));
            }
        }
    }

    #[test]
    fn computation_graph_symmetric_and_bounded(g in graph_strategy(20), t in 0usize..3) {
        let c = ComputationGraph::build_naive(&g, t).unwrap();
        for rel in c.relations() {
            let edges = c.edges(rel);
            for (u, v, w) in edges.iter() {
                prop_assert!(u != v || matches!(rel, Relation::Structural(_)));
                prop_assert!(w > 0.0 && w <= 1.0, "weight {} out of (0, 1]", w);
                prop_assert_eq!(edges.weight(v, u), Some(w));
            }
        }
        prop_assert_eq!(c.edges(Relation::Proximity).num_edges(), 2 * g.num_edges());
    }

    #[test]
    fn tsv_round_trip_is_stable(g in graph_strategy(20), t in 0usize..3) {
        let c = ComputationGraph::build_practical(&g, t, default_budget(g.num_nodes())).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("comp.tsv");
        c.serialize(&path).unwrap();
        let back = ComputationGraph::deserialize(&path).unwrap();
        prop_assert_eq!(back.to_tsv(), c.to_tsv());
        prop_assert_eq!(back.num_edges(), c.num_edges());
        prop_assert_eq!(back.max_tau(), c.max_tau());
    }

    #[test]
    fn stratified_split_partitions_labeled_nodes(labels in prop::collection::vec(0..4usize, 8..60), seed in any::<u64>()) {
        let labels: Vec<_> = labels.into_iter().map(Some).collect();
        let s = stratified_split(&labels, 0.6, 0.2, &mut SeedStream::new(seed).rng("splits")).unwrap();
        let all: BTreeSet<_> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        prop_assert_eq!(all.len(), s.train.len() + s.val.len() + s.test.len());
        prop_assert_eq!(all.len(), labels.len());
        let classes: BTreeSet<_> = labels.iter().flatten().collect();
        let train_classes: BTreeSet<_> = s.train.iter().map(|&u| labels[u].as_ref().unwrap()).collect();
        prop_assert_eq!(classes, train_classes);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn practical_edges_subset_of_naive(g in graph_strategy(30), t in 0usize..3, budget in 1usize..5) {
        let naive = ComputationGraph::build_naive(&g, t).unwrap();
        let practical = ComputationGraph::build_practical(&g, t, budget).unwrap();
        for tau in 0..=t {
            let rel = Relation::Structural(tau);
            for (u, v, w) in practical.edges(rel).iter() {
                prop_assert_eq!(naive.edges(rel).weight(u, v), Some(w));
            }
        }
        prop_assert_eq!(practical.edges(Relation::Proximity), naive.edges(Relation::Proximity));
    }

    #[test]
    fn hidden_states_unit_or_zero(g in graph_strategy(15), seed in any::<u64>(), attention in any::<bool>()) {
        let c = ComputationGraph::build_naive(&g, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((g.num_nodes(), 4), |(u, j)| ((u * 7 + j * 3) % 5) as f64 - 2.0);
        let variant = if attention { Variant::Wrgat } else { Variant::Wrgcn };
        let model = WrgnnModel::new(ModelConfig::for_graph(&c, 4, 5, 3, variant), &mut rng).unwrap();
        let trace = model.trace(&c, &x).unwrap();
        for h in &trace.hidden {
            for row in h.rows() {
                let norm = row.dot(&row).sqrt();
                prop_assert!(norm == 0.0 || (norm - 1.0).abs() < 1e-6, "norm {}", norm);
            }
        }
        for row in trace.probs.rows() {
            prop_assert!((row.sum() - 1.0).abs() < 1e-9);
        }
    }
}
