use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use mixgraph::ablation::{
    accuracy_by_assortativity, full_grid, gains_over_proximity, num_classes, run_grid, Architecture, Cell,
    CellResult, Gain,
};
use mixgraph::compgraph::{distribution_shift, BuildConfig, ComputationGraph, Relation, RelationSet};
use mixgraph::datasets::synthetic::{
    BarbellFamily, DegreeLabel, Generator, PlantedPartition, StructuralTwins, SyntheticSpec,
};
use mixgraph::mixing::{assortativity_profile_on, smoothness_table, Weighting};
use mixgraph::seed::SeedStream;
use mixgraph::structdist::{structural_distances, DtwConfig, StructuralDistanceTable};
use mixgraph::wrgnn::{
    degree_bucket_features, evaluate, stratified_split, train, EpochMetrics, ModelConfig, Split, TrainConfig,
    WrgnnModel,
};
use mixgraph::{load_graph, read_features, read_labels, LabeledGraph};

use crate::run::Run;
use crate::{
    AblateArgs, AnalyzeArgs, Cli, Command, DataArgs, ModelArgs, Preset, SplitArgs, SynthArgs, TrainArgs,
    TransformArgs, UsageError,
};

pub fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Analyze(a) => analyze(cli, a),
        Command::Transform(a) => transform(cli, a),
        Command::Train(a) => train_one(cli, a),
        Command::Ablate(a) => ablate(cli, a),
        Command::MakeSplits(a) => make_splits(cli, a),
        Command::GenSynthetic(a) => gen_synthetic(cli, a),
    }
}

fn opt(x: Option<f64>) -> String {
    x.map_or(String::new(), |v| v.to_string())
}

#[derive(Serialize)]
struct AnalyzeSummary {
    num_nodes: usize,
    num_edges: usize,
    num_classes: usize,
    r_global: Option<f64>,
    defined_nodes: usize,
    mean_r_local: Option<f64>,
    weighting: Weighting,
}

fn analyze(cli: &Cli, args: &AnalyzeArgs) -> Result<()> {
    let mut run = Run::start("analyze", args, cli.seed, &cli.out_dir)?;
    run.input(&args.edges)?;
    run.input(&args.labels)?;
    if let Some(f) = &args.features {
        run.input(f)?;
    }
    let g = load_graph(&args.edges, Some(&args.labels), args.features.as_deref())?;
    if g.labels().iter().all(Option::is_none) {
        return Err(mixgraph::Error::Dataset(format!("{} contains no labels", args.labels.display())).into());
    }
    let weighting = args.weighting.weighting();
    let profile = assortativity_profile_on(&g, g.labels(), weighting)?;

    let mut local = String::from("node,r_local\n");
    for n in &profile.nodes {
        let _ = writeln!(local, "{},{}", n.node, opt(n.r_local));
    }
    run.write("local_assortativity.csv", &local)?;

    let mut hist = String::from("bin_lo,bin_hi,count\n");
    for (lo, hi, count) in profile.histogram.bins() {
        let _ = writeln!(hist, "{lo},{hi},{count}");
    }
    run.write("histogram.csv", &hist)?;

    let mut smooth = String::from("node,epsilon,lambda\n");
    for s in smoothness_table(&g) {
        let _ = writeln!(smooth, "{},{},{}", s.node, opt(s.epsilon), opt(s.lambda));
    }
    run.write("smoothness.csv", &smooth)?;

    let defined: Vec<f64> = profile.defined_values().collect();
    let summary = AnalyzeSummary {
        num_nodes: g.num_nodes(),
        num_edges: g.num_edges(),
        num_classes: g.num_classes(),
        r_global: profile.r_global,
        defined_nodes: defined.len(),
        mean_r_local: (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64),
        weighting,
    };
    run.write_json("summary.json", &summary)?;
    run.finish()?;
    println!(
        "r_global = {}, {} of {} nodes with r_local",
        opt(summary.r_global),
        summary.defined_nodes,
        summary.num_nodes
    );
    Ok(())
}

#[derive(Serialize)]
struct ShiftSummary {
    nodes: usize,
    mean_before: Option<f64>,
    mean_after: Option<f64>,
    mean_delta: Option<f64>,
}

fn transform(cli: &Cli, args: &TransformArgs) -> Result<()> {
    if args.shift_report && args.labels.is_none() {
        return Err(UsageError("--shift-report needs --labels".into()).into());
    }
    let mut run = Run::start("transform", args, cli.seed, &cli.out_dir)?;
    run.input(&args.edges)?;
    if let Some(l) = &args.labels {
        run.input(l)?;
    }
    let g = load_graph(&args.edges, args.labels.as_deref(), None)?;
    let cfg = BuildConfig {
        max_tau: args.max_tau,
        mode: args.mode,
        budget_per_side: args.budget,
        weight_floor: args.weight_floor,
        dtw: DtwConfig::default(),
    };
    let c = ComputationGraph::build(&g, &cfg)?;
    run.write("comp.tsv", &c.to_tsv())?;

    if args.shift_report {
        let report = distribution_shift(&g, &c, args.weighting.weighting())?;
        run.write("shift_report.csv", &report.to_csv())?;
        run.write_json(
            "shift_summary.json",
            &ShiftSummary {
                nodes: report.nodes.len(),
                mean_before: report.mean_before,
                mean_after: report.mean_after,
                mean_delta: report.mean_delta(),
            },
        )?;
        println!(
            "shift over {} nodes: {} -> {}",
            report.nodes.len(),
            opt(report.mean_before),
            opt(report.mean_after)
        );
    }
    if args.dump_distances {
        let pairs: BTreeSet<(usize, usize)> = (0..=c.max_tau())
            .flat_map(|t| c.edges(Relation::Structural(t)).iter())
            .filter(|&(u, v, _)| u < v)
            .map(|(u, v, _)| (u, v))
            .collect();
        let rows = pairs
            .into_iter()
            .map(|(u, v)| Ok((u, v, structural_distances(&g, (u, v), c.max_tau(), &cfg.dtw)?)))
            .collect::<mixgraph::Result<Vec<_>>>()?;
        run.write("distances.csv", &StructuralDistanceTable { rows }.to_csv())?;
    }
    run.finish()?;
    println!("{} nodes, {} relation edges", c.num_nodes(), c.num_edges());
    Ok(())
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SplitFile {
    One(Split),
    Many(Vec<Split>),
}

fn read_split(path: &Path, index: usize) -> Result<Split> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let parsed: SplitFile = serde_json::from_str(&text)
        .map_err(|e| mixgraph::Error::Dataset(format!("{}: {e}", path.display())))?;
    match parsed {
        SplitFile::One(s) if index == 0 => Ok(s),
        SplitFile::One(_) => Err(UsageError(format!("{} holds a single split", path.display())).into()),
        SplitFile::Many(mut v) => {
            if index >= v.len() {
                return Err(
                    UsageError(format!("--split-index {index} out of range ({} splits)", v.len())).into(),
                );
            }
            Ok(v.swap_remove(index))
        }
    }
}

fn features(run: &mut Run, data: &DataArgs, c: &ComputationGraph) -> Result<Array2<f64>> {
    match &data.features {
        Some(path) => {
            run.input(path)?;
            Ok(read_features(path, c.num_nodes())?)
        }
        None => {
            let edges: Vec<(usize, usize)> = c
                .edges(Relation::Proximity)
                .iter()
                .filter(|&(u, v, _)| u < v)
                .map(|(u, v, _)| (u, v))
                .collect();
            Ok(degree_bucket_features(&LabeledGraph::from_edges(
                c.num_nodes(),
                &edges,
            )?))
        }
    }
}

struct Inputs {
    c: ComputationGraph,
    labels: Vec<Option<usize>>,
    x: Array2<f64>,
    split: Split,
}

fn load_inputs(run: &mut Run, data: &DataArgs) -> Result<Inputs> {
    run.input(&data.comp)?;
    run.input(&data.labels)?;
    run.input(&data.splits)?;
    let c = ComputationGraph::deserialize(&data.comp)?;
    let labels = read_labels(&data.labels, Some(c.num_nodes()))?;
    let x = features(run, data, &c)?;
    let split = read_split(&data.splits, data.split_index)?;
    Ok(Inputs { c, labels, x, split })
}

fn architecture(m: &ModelArgs) -> Architecture {
    Architecture {
        hidden: m.hidden,
        layers: m.layers,
        shared_attention: m.shared_attention,
    }
}

fn train_config(m: &ModelArgs, split: Split, seed: u64) -> TrainConfig {
    TrainConfig {
        lr: m.lr,
        weight_decay: m.weight_decay,
        max_epochs: m.epochs,
        patience: m.patience,
        dropout: m.dropout,
        seed,
        split,
    }
}

#[derive(Serialize)]
struct TrainReport<'a> {
    cell: Cell,
    model: &'a ModelConfig,
    train: &'a TrainConfig,
    best_epoch: usize,
    test_accuracy: f64,
    test_f1_micro: f64,
    history: &'a [EpochMetrics],
}

fn predictions_csv(nodes: &[mixgraph::wrgnn::NodeOutcome]) -> String {
    let mut out = String::from("node,label,predicted,correct\n");
    for o in nodes {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            o.node,
            o.label,
            o.predicted,
            u8::from(o.correct)
        );
    }
    out
}

fn train_one(cli: &Cli, args: &TrainArgs) -> Result<()> {
    let mut run = Run::start("train", args, cli.seed, &cli.out_dir)?;
    let inputs = load_inputs(&mut run, &args.data)?;
    let seeds = SeedStream::new(cli.seed);
    let cell = Cell {
        variant: args.variant,
        relations: args.relations,
    };
    let c = inputs.c.restricted(cell.relations);
    let model_cfg = architecture(&args.model).model_config(
        &c,
        inputs.x.ncols(),
        num_classes(&inputs.labels),
        cell.variant,
    );
    let model = WrgnnModel::new(model_cfg, &mut seeds.rng("init"))?;
    let cfg = train_config(&args.model, inputs.split, cli.seed);
    let outcome = train(model, &c, &inputs.x, &inputs.labels, &cfg)?;
    let eval = evaluate(&outcome.model, &c, &inputs.x, &inputs.labels, &cfg.split.test)?;
    run.write_json(
        "train_report.json",
        &TrainReport {
            cell,
            model: &outcome.model.config,
            train: &cfg,
            best_epoch: outcome.best_epoch,
            test_accuracy: eval.accuracy,
            test_f1_micro: eval.f1_micro,
            history: &outcome.history,
        },
    )?;
    run.write("predictions.csv", &predictions_csv(&eval.nodes))?;
    if args.save_model {
        run.write("model.json", &outcome.model.to_json()?)?;
    }
    run.finish()?;
    println!(
        "{}: test accuracy {:.4}, F1-micro {:.4}, best epoch {}",
        cell.name(),
        eval.accuracy,
        eval.f1_micro,
        outcome.best_epoch
    );
    Ok(())
}

#[derive(Serialize)]
struct CellSummary {
    cell: Cell,
    test_accuracy: f64,
    test_f1_micro: f64,
    best_epoch: usize,
    epochs_run: usize,
    gain_over_proximity: Option<f64>,
}

#[derive(Serialize)]
struct CellFailure {
    cell: Cell,
    error: String,
}

#[derive(Serialize)]
struct AblationReport<'a> {
    train: &'a TrainConfig,
    architecture: Architecture,
    cells: Vec<CellSummary>,
    failures: Vec<CellFailure>,
}

fn ablate(cli: &Cli, args: &AblateArgs) -> Result<()> {
    if args.bins == 0 {
        return Err(UsageError("--bins must be positive".into()).into());
    }
    let mut run = Run::start("ablate", args, cli.seed, &cli.out_dir)?;
    let inputs = load_inputs(&mut run, &args.data)?;
    let seeds = SeedStream::new(cli.seed);
    let arch = architecture(&args.model);
    let cfg = train_config(&args.model, inputs.split, cli.seed);
    let outcomes = run_grid(
        &inputs.c,
        &inputs.x,
        &inputs.labels,
        &full_grid(),
        &arch,
        &cfg,
        &seeds,
    );

    let mut done: Vec<CellResult> = Vec::new();
    let mut failures = Vec::new();
    let mut first_error = None;
    for (cell, r) in outcomes {
        match r {
            Ok(r) => done.push(r),
            Err(e) => {
                failures.push(CellFailure {
                    cell,
                    error: e.to_string(),
                });
                first_error.get_or_insert(e);
            }
        }
    }
    let gains: Vec<Gain> = gains_over_proximity(&done);
    let cells = done
        .iter()
        .zip(&gains)
        .map(|(r, g)| CellSummary {
            cell: r.cell,
            test_accuracy: r.test_accuracy,
            test_f1_micro: r.test_f1_micro,
            best_epoch: r.best_epoch,
            epochs_run: r.epochs_run,
            gain_over_proximity: g.gain,
        })
        .collect();
    run.write_json(
        "ablation.json",
        &AblationReport {
            train: &cfg,
            architecture: arch,
            cells,
            failures,
        },
    )?;

    let mut gains_csv = String::from("variant,relations,test_accuracy,gain\n");
    for g in &gains {
        let _ = writeln!(
            gains_csv,
            "{},{},{},{}",
            g.cell.variant,
            g.cell.relations.name(),
            g.test_accuracy,
            opt(g.gain)
        );
    }
    run.write("gains.csv", &gains_csv)?;

    let proximity = inputs.c.restricted(RelationSet::Proximity).union_graph();
    let profile = assortativity_profile_on(&proximity, &inputs.labels, Weighting::default())?;
    let mut curves = String::from("variant,relations,bin_lo,bin_hi,count,accuracy\n");
    for r in &done {
        for b in accuracy_by_assortativity(&r.nodes, &profile, args.bins)? {
            let _ = writeln!(
                curves,
                "{},{},{},{},{},{}",
                r.cell.variant,
                r.cell.relations.name(),
                b.lo,
                b.hi,
                b.count,
                opt(b.accuracy)
            );
        }
    }
    run.write("accuracy_by_r_local.csv", &curves)?;
    let mut preds = String::from("variant,relations,node,label,predicted,correct\n");
    for r in &done {
        for line in predictions_csv(&r.nodes).lines().skip(1) {
            let _ = writeln!(preds, "{},{},{line}", r.cell.variant, r.cell.relations.name());
        }
    }
    run.write("predictions.csv", &preds)?;
    run.finish()?;

    for g in &gains {
        println!(
            "{:<16} accuracy {:.4}  gain {}",
            g.cell.name(),
            g.test_accuracy,
            g.gain.map_or("-".into(), |x| format!("{x:+.4}"))
        );
    }
    match first_error {
        Some(e) => Err(anyhow::Error::new(e).context("some grid cells failed; completed cells were written")),
        None => Ok(()),
    }
}

fn make_splits(cli: &Cli, args: &SplitArgs) -> Result<()> {
    if args.count == 0 {
        return Err(UsageError("--count must be positive".into()).into());
    }
    let mut run = Run::start("make-splits", args, cli.seed, &cli.out_dir)?;
    run.input(&args.labels)?;
    let labels = read_labels(&args.labels, args.num_nodes)?;
    let seeds = SeedStream::new(cli.seed);
    let splits = (0..args.count)
        .map(|i| {
            stratified_split(
                &labels,
                args.train_frac,
                args.val_frac,
                &mut seeds.rng(&format!("splits/{i}")),
            )
        })
        .collect::<mixgraph::Result<Vec<_>>>()?;
    run.write_json("splits.json", &splits)?;
    run.finish()?;
    println!(
        "{} splits over {} labeled nodes",
        splits.len(),
        labels.iter().flatten().count()
    );
    Ok(())
}

fn preset(p: Preset) -> Generator {
    match p {
        Preset::Planted => Generator::PlantedPartition(PlantedPartition {
            nodes: 150,
            blocks: 3,
            p_intra: 0.1,
            p_inter: 0.01,
            feature_noise: 1.0,
        }),
        Preset::Twins => Generator::StructuralTwins(StructuralTwins {
            hubs: 20,
            fan: 4,
            background: 50,
            background_degree: 4.0,
            background_classes: 3,
            feature_noise: 1.0,
        }),
        Preset::Barbell => Generator::BarbellFamily(BarbellFamily {
            clique_size: 5,
            path_len: 2,
        }),
        Preset::DegreeLabel => Generator::DegreeLabel(DegreeLabel {
            nodes_per_class: 50,
            degrees: vec![2, 4, 8],
            feature_noise: 1.0,
        }),
    }
}

fn gen_synthetic(cli: &Cli, args: &SynthArgs) -> Result<()> {
    let generator = match (&args.preset, &args.spec) {
        (Some(p), _) => preset(*p),
        (None, Some(spec)) => {
            let text = if Path::new(spec).is_file() {
                std::fs::read_to_string(spec).with_context(|| format!("cannot read {spec}"))?
            } else {
                spec.clone()
            };
            serde_json::from_str(&text).map_err(|e| UsageError(format!("invalid generator spec: {e}")))?
        }
        (None, None) => return Err(UsageError("give --preset or --spec".into()).into()),
    };
    let spec = SyntheticSpec {
        seed: cli.seed,
        generator,
    };
    let g = spec.generate()?;
    let mut run = Run::start("gen-synthetic", args, cli.seed, &cli.out_dir)?;
    run.write_json("spec.json", &spec)?;
    let mut edges = String::new();
    for &(u, v) in g.edges() {
        let _ = writeln!(edges, "{u} {v}");
    }
    run.write("edges.txt", &edges)?;
    let mut labels = String::new();
    for (u, l) in g.labels().iter().enumerate() {
        if let Some(l) = l {
            let _ = writeln!(labels, "{u} {l}");
        }
    }
    run.write("labels.txt", &labels)?;
    if let Some(x) = g.features() {
        let mut feats = String::new();
        for (u, row) in x.rows().into_iter().enumerate() {
            let _ = write!(feats, "{u}");
            for v in row {
                let _ = write!(feats, " {v}");
            }
            feats.push('\n');
        }
        run.write("features.txt", &feats)?;
    }
    run.finish()?;
    println!(
        "{} nodes, {} edges, {} classes",
        g.num_nodes(),
        g.num_edges(),
        g.num_classes()
    );
    Ok(())
}
