//! The {WRGCN, WRGAT} x {proximity, structure, all} grid and its summaries.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::compgraph::{ComputationGraph, RelationSet};
use crate::error::{Error, Result};
use crate::mixing::AssortativityProfile;
use crate::par;
use crate::seed::SeedStream;
use crate::wrgnn::{evaluate, train, ModelConfig, NodeOutcome, TrainConfig, Variant, WrgnnModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub variant: Variant,
    pub relations: RelationSet,
}

impl Cell {
    pub fn name(&self) -> String {
        format!("{}-{}", self.variant, self.relations.name())
    }
}

/// All six cells, WRGCN first, proximity before structure before all.
pub fn full_grid() -> Vec<Cell> {
    let mut out = Vec::with_capacity(6);
    for variant in [Variant::Wrgcn, Variant::Wrgat] {
        for relations in [RelationSet::Proximity, RelationSet::Structure, RelationSet::All] {
            out.push(Cell { variant, relations });
        }
    }
    out
}

/// Layer widths and attention sharing, independent of the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub hidden: usize,
    pub layers: usize,
    pub shared_attention: bool,
}

impl Architecture {
    /// Two message-passing layers and a head, all of width `hidden`.
    pub fn new(hidden: usize) -> Self {
        Self {
            hidden,
            layers: 2,
            shared_attention: false,
        }
    }

    pub fn model_config(
        &self,
        c: &ComputationGraph,
        input_dim: usize,
        num_classes: usize,
        variant: Variant,
    ) -> ModelConfig {
        let mut cfg = ModelConfig::for_graph(c, input_dim, self.hidden, num_classes, variant);
        cfg.hidden_dims = vec![self.hidden; self.layers];
        cfg.shared_attention = self.shared_attention;
        cfg
    }
}

pub fn num_classes(labels: &[Option<usize>]) -> usize {
    labels.iter().flatten().max().map_or(0, |&m| m + 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub cell: Cell,
    pub test_accuracy: f64,
    pub test_f1_micro: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub nodes: Vec<NodeOutcome>,
}

/// Trains one cell. Initial weights come from the `"init"` stream of `seeds`,
/// so every cell of a grid starts from the same generator state.
pub fn run_cell(
    c: &ComputationGraph,
    x: &Array2<f64>,
    labels: &[Option<usize>],
    cell: Cell,
    arch: &Architecture,
    cfg: &TrainConfig,
    seeds: &SeedStream,
) -> Result<CellResult> {
    let restricted = c.restricted(cell.relations);
    let model_cfg = arch.model_config(&restricted, x.ncols(), num_classes(labels), cell.variant);
    let model = WrgnnModel::new(model_cfg, &mut seeds.rng("init"))?;
    let outcome = train(model, &restricted, x, labels, cfg)?;
    let eval = evaluate(&outcome.model, &restricted, x, labels, &cfg.split.test)?;
    Ok(CellResult {
        cell,
        test_accuracy: eval.accuracy,
        test_f1_micro: eval.f1_micro,
        best_epoch: outcome.best_epoch,
        epochs_run: outcome.history.len(),
        nodes: eval.nodes,
    })
}

/// Runs `cells` concurrently. A failing cell does not discard the others.
pub fn run_grid(
    c: &ComputationGraph,
    x: &Array2<f64>,
    labels: &[Option<usize>],
    cells: &[Cell],
    arch: &Architecture,
    cfg: &TrainConfig,
    seeds: &SeedStream,
) -> Vec<(Cell, Result<CellResult>)> {
    let results = par::map_slice(cells, |&cell| run_cell(c, x, labels, cell, arch, cfg, seeds));
    cells.iter().copied().zip(results).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gain {
    pub cell: Cell,
    pub test_accuracy: f64,
    /// Accuracy minus the proximity-only cell of the same variant.
    pub gain: Option<f64>,
}

pub fn gains_over_proximity(results: &[CellResult]) -> Vec<Gain> {
    results
        .iter()
        .map(|r| {
            let base = results
                .iter()
                .find(|b| b.cell.variant == r.cell.variant && b.cell.relations == RelationSet::Proximity);
            Gain {
                cell: r.cell,
                test_accuracy: r.test_accuracy,
                gain: base.map(|b| r.test_accuracy - b.test_accuracy),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub accuracy: Option<f64>,
}

/// Test accuracy grouped by the node's `r_local`, `bins` equal-width bins on
/// `[-1, 1]`. Nodes without a defined value are skipped.
pub fn accuracy_by_assortativity(
    nodes: &[NodeOutcome],
    profile: &AssortativityProfile,
    bins: usize,
) -> Result<Vec<AccuracyBin>> {
    if bins == 0 {
        return Err(Error::InvalidArgument("bin count must be positive".into()));
    }
    let width = 2.0 / bins as f64;
    let mut hits = vec![(0usize, 0usize); bins];
    for o in nodes {
        if let Some(r) = profile.get(o.node) {
            let idx = (((r + 1.0) / width).floor().max(0.0) as usize).min(bins - 1);
            hits[idx].0 += 1;
            hits[idx].1 += usize::from(o.correct);
        }
    }
    Ok(hits
        .into_iter()
        .enumerate()
        .map(|(i, (count, correct))| AccuracyBin {
            lo: -1.0 + width * i as f64,
            hi: -1.0 + width * (i + 1) as f64,
            count,
            accuracy: (count > 0).then(|| correct as f64 / count as f64),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixing::{Histogram, NodeAssortativity};

    fn outcome(node: usize, correct: bool) -> NodeOutcome {
        NodeOutcome {
            node,
            label: 0,
            predicted: if correct { 0 } else { 1 },
            correct,
        }
    }

    #[test]
    fn grid_has_six_distinct_cells() {
        let g = full_grid();
        assert_eq!(g.len(), 6);
        let names: std::collections::BTreeSet<_> = g.iter().map(Cell::name).collect();
        assert_eq!(names.len(), 6);
        assert!(names.contains("wrgat-all"));
    }

    #[test]
    fn gains_are_relative_to_same_variant() {
        let mk = |variant, relations, acc| CellResult {
            cell: Cell { variant, relations },
            test_accuracy: acc,
            test_f1_micro: acc,
            best_epoch: 0,
            epochs_run: 1,
            nodes: vec![],
        };
        let rs = vec![
            mk(Variant::Wrgcn, RelationSet::Proximity, 0.5),
            mk(Variant::Wrgcn, RelationSet::All, 0.75),
            mk(Variant::Wrgat, RelationSet::Structure, 0.4),
        ];
        let gains = gains_over_proximity(&rs);
        assert_eq!(gains[0].gain, Some(0.0));
        assert_eq!(gains[1].gain, Some(0.25));
        assert_eq!(gains[2].gain, None);
    }

    #[test]
    fn binned_accuracy() {
        let profile = AssortativityProfile {
            r_global: None,
            nodes: vec![
                NodeAssortativity {
                    node: 0,
                    r_local: Some(-1.0),
                },
                NodeAssortativity {
                    node: 1,
                    r_local: Some(-0.2),
                },
                NodeAssortativity {
                    node: 2,
                    r_local: Some(1.0),
                },
                NodeAssortativity {
                    node: 3,
                    r_local: None,
                },
                NodeAssortativity {
                    node: 4,
                    r_local: Some(0.9),
                },
            ],
            histogram: Histogram::new(-1.0, 1.0, 1, []),
        };
        let nodes = [
            outcome(0, true),
            outcome(1, false),
            outcome(2, true),
            outcome(3, true),
            outcome(4, false),
        ];
        let bins = accuracy_by_assortativity(&nodes, &profile, 2).unwrap();
        assert_eq!(bins[0].count, 2);
        assert_eq!(bins[0].accuracy, Some(0.5));
        assert_eq!(bins[1].count, 2);
        assert_eq!(bins[1].accuracy, Some(0.5));
        assert!(accuracy_by_assortativity(&nodes, &profile, 0).is_err());
    }
}
