use mixgraph::ablation::{
    accuracy_by_assortativity, full_grid, gains_over_proximity, run_grid, Architecture,
};
use mixgraph::compgraph::{distribution_shift, BuildConfig, ComputationGraph, RelationSet};
use mixgraph::datasets::synthetic::{BarbellFamily, Generator, PlantedPartition, SyntheticSpec};
use mixgraph::mixing::{assortativity_profile, Weighting};
use mixgraph::seed::SeedStream;
use mixgraph::wrgnn::{evaluate, stratified_split, train, ModelConfig, TrainConfig, Variant, WrgnnModel};
use mixgraph::{load_graph, LabeledGraph};

fn planted(seed: u64) -> LabeledGraph {
    SyntheticSpec {
        seed,
        generator: Generator::PlantedPartition(PlantedPartition {
            nodes: 60,
            blocks: 2,
            p_intra: 0.2,
            p_inter: 0.02,
            feature_noise: 0.5,
        }),
    }
    .generate()
    .unwrap()
}

#[test]
fn files_to_trained_model() {
    let g = planted(3);
    let dir = tempfile::tempdir().unwrap();
    let (e, l, f) = (
        dir.path().join("edges.txt"),
        dir.path().join("labels.txt"),
        dir.path().join("features.txt"),
    );
    g.write_edge_list(&e).unwrap();
    g.write_labels(&l).unwrap();
    g.write_features(&f).unwrap();
    let loaded = load_graph(&e, Some(&l), Some(&f)).unwrap();
    assert_eq!(loaded.num_nodes(), g.num_nodes());
    assert_eq!(loaded.edges(), g.edges());

    let c = ComputationGraph::build(&loaded, &BuildConfig::practical(1)).unwrap();
    let comp = dir.path().join("comp.tsv");
    c.serialize(&comp).unwrap();
    let c = ComputationGraph::deserialize(&comp).unwrap();

    let seeds = SeedStream::new(3);
    let split = stratified_split(loaded.labels(), 0.6, 0.2, &mut seeds.rng("splits")).unwrap();
    let x = loaded.features().unwrap().clone();
    let cfg = ModelConfig::for_graph(&c, x.ncols(), 8, 2, Variant::Wrgat);
    let model = WrgnnModel::new(cfg, &mut seeds.rng("init")).unwrap();
    let tc = TrainConfig {
        max_epochs: 150,
        lr: 0.01,
        ..TrainConfig::new(split.clone())
    };
    let out = train(model, &c, &x, loaded.labels(), &tc).unwrap();
    let eval = evaluate(&out.model, &c, &x, loaded.labels(), &split.test).unwrap();
    assert!(eval.accuracy >= 0.8, "accuracy {}", eval.accuracy);
    assert_eq!(eval.nodes.len(), split.test.len());
}

#[test]
fn construction_is_byte_identical_across_runs() {
    let g = planted(11);
    let a = ComputationGraph::build(&g, &BuildConfig::practical(2))
        .unwrap()
        .to_tsv();
    let b = ComputationGraph::build(&g, &BuildConfig::practical(2))
        .unwrap()
        .to_tsv();
    assert_eq!(a, b);
    let n1 = ComputationGraph::build_naive(&g, 1).unwrap().to_tsv();
    let n2 = ComputationGraph::build_naive(&g, 1).unwrap().to_tsv();
    assert_eq!(n1, n2);
}

#[test]
fn barbell_shift_report_covers_negative_nodes() {
    let g = SyntheticSpec {
        seed: 0,
        generator: Generator::BarbellFamily(BarbellFamily {
            clique_size: 5,
            path_len: 4,
        }),
    }
    .generate()
    .unwrap();
    let profile = assortativity_profile(&g).unwrap();
    let c = ComputationGraph::build_naive(&g, 2).unwrap();
    let report = distribution_shift(&g, &c, Weighting::default()).unwrap();
    let negative: Vec<_> = profile
        .nodes
        .iter()
        .filter(|n| n.r_local.is_some_and(|r| r < 0.0))
        .map(|n| n.node)
        .collect();
    let reported: Vec<_> = report.nodes.iter().map(|e| e.node).collect();
    assert_eq!(reported, negative);
    assert_eq!(report.to_csv().lines().count(), negative.len() + 1);
}

#[test]
fn grid_reports_every_cell() {
    let g = planted(5);
    let c = ComputationGraph::build(&g, &BuildConfig::practical(1)).unwrap();
    let x = g.features().unwrap().clone();
    let seeds = SeedStream::new(5);
    let split = stratified_split(g.labels(), 0.6, 0.2, &mut seeds.rng("splits")).unwrap();
    let cfg = TrainConfig {
        max_epochs: 40,
        ..TrainConfig::new(split)
    };
    let cells = full_grid();
    let results: Vec<_> = run_grid(&c, &x, g.labels(), &cells, &Architecture::new(8), &cfg, &seeds)
        .into_iter()
        .map(|(_, r)| r.unwrap())
        .collect();
    assert_eq!(results.len(), 6);
    let again = run_grid(
        &c,
        &x,
        g.labels(),
        &cells[..1],
        &Architecture::new(8),
        &cfg,
        &seeds,
    );
    assert_eq!(again[0].1.as_ref().unwrap(), &results[0]);

    let gains = gains_over_proximity(&results);
    for gain in &gains {
        if gain.cell.relations == RelationSet::Proximity {
            assert_eq!(gain.gain, Some(0.0));
        }
    }
    let profile = assortativity_profile(&g).unwrap();
    let bins = accuracy_by_assortativity(&results[0].nodes, &profile, 10).unwrap();
    let counted: usize = bins.iter().map(|b| b.count).sum();
    assert!(counted <= results[0].nodes.len());
}
