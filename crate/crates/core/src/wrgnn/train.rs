use std::collections::BTreeSet;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::pass::{check_mask, cross_entropy, softmax_rows};
use super::{Params, WrgnnModel};
use crate::compgraph::ComputationGraph;
use crate::error::{Error, Result};
use crate::graph::LabeledGraph;
use crate::seed::SeedStream;

/// Train/validation/test node ids.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// Disjoint, in range, labeled, non-empty training set.
    pub fn validate(&self, labels: &[Option<usize>]) -> Result<()> {
        if self.train.is_empty() {
            return Err(Error::InvalidArgument("split has no training nodes".into()));
        }
        let mut seen = BTreeSet::new();
        for (part, ids) in [("train", &self.train), ("val", &self.val), ("test", &self.test)] {
            for &u in ids {
                if u >= labels.len() {
                    return Err(Error::NodeOutOfRange {
                        node: u,
                        num_nodes: labels.len(),
                    });
                }
                if labels[u].is_none() {
                    return Err(Error::InvalidArgument(format!("{part} node {u} has no label")));
                }
                if !seen.insert(u) {
                    return Err(Error::InvalidArgument(format!(
                        "node {u} appears in more than one split part"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?).map_err(|e| Error::io(path, e))
    }
}

/// Random per-class split: `round(train_frac * n_c)` training and
/// `round(val_frac * n_c)` validation nodes per class, the rest test.
/// Each non-empty class keeps at least one training node.
pub fn stratified_split<R: Rng>(
    labels: &[Option<usize>],
    train_frac: f64,
    val_frac: f64,
    rng: &mut R,
) -> Result<Split> {
    if !(train_frac > 0.0 && val_frac >= 0.0 && train_frac + val_frac <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "invalid split fractions train={train_frac} val={val_frac}"
        )));
    }
    let num_classes = labels.iter().flatten().max().map_or(0, |&c| c + 1);
    let mut split = Split::default();
    for class in 0..num_classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&u| labels[u] == Some(class)).collect();
        if members.is_empty() {
            continue;
        }
        members.shuffle(rng);
        let n = members.len();
        let n_train = ((train_frac * n as f64).round() as usize).clamp(1, n);
        let n_val = ((val_frac * n as f64).round() as usize).min(n - n_train);
        split.train.extend_from_slice(&members[..n_train]);
        split.val.extend_from_slice(&members[n_train..n_train + n_val]);
        split.test.extend_from_slice(&members[n_train + n_val..]);
    }
    split.train.sort_unstable();
    split.val.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}

pub const DEGREE_BUCKETS: usize = 32;

/// One-hot log-spaced degree buckets, `min(31, floor(4 log2(1 + d)))`.
pub fn degree_bucket_features(g: &LabeledGraph) -> Array2<f64> {
    let mut x = Array2::zeros((g.num_nodes(), DEGREE_BUCKETS));
    for (u, d) in g.degrees().into_iter().enumerate() {
        let b = ((4.0 * (1.0 + d as f64).log2()).floor() as usize).min(DEGREE_BUCKETS - 1);
        x[[u, b]] = 1.0;
    }
    x
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub dropout: f64,
    pub seed: u64,
    pub split: Split,
}

impl TrainConfig {
    pub fn new(split: Split) -> Self {
        Self {
            lr: 0.005,
            weight_decay: 5e-4,
            max_epochs: 500,
            patience: 100,
            dropout: 0.5,
            seed: 0,
            split,
        }
    }

    fn validate(&self, labels: &[Option<usize>]) -> Result<()> {
        if !(self.lr > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidArgument(
                "lr must be > 0 and weight decay >= 0".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidArgument(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout
            )));
        }
        self.split.validate(labels)
    }
}

/// Adam with `beta = (0.9, 0.999)`, `eps = 1e-8`.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Params,
    v: Params,
    t: i32,
}

impl Adam {
    pub fn new(params: &Params, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut Params, grads: &Params) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for (((mut p, (_, g)), mut m), mut v) in params
            .tensors_mut()
            .into_iter()
            .zip(grads.named_tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
        {
            ndarray::Zip::from(&mut p)
                .and(&g)
                .and(&mut m)
                .and(&mut v)
                .for_each(|p, &g, m, v| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                });
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: Option<f64>,
    pub val_acc: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub model: WrgnnModel,
    pub history: Vec<EpochMetrics>,
    pub best_epoch: usize,
}

fn accuracy(probs: &Array2<f64>, labels: &[Option<usize>], nodes: &[usize]) -> f64 {
    let correct = nodes
        .iter()
        .filter(|&&u| Some(argmax(probs.row(u))) == labels[u])
        .count();
    correct as f64 / nodes.len() as f64
}

fn argmax(row: ndarray::ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &p) in row.iter().enumerate() {
        if p > row[best] {
            best = i;
        }
    }
    best
}

fn dropout_masks<R: Rng>(model: &WrgnnModel, n: usize, p: f64, rng: &mut R) -> Vec<Array2<f64>> {
    let keep = 1.0 - p;
    model
        .config
        .hidden_dims
        .iter()
        .map(|&d| {
            Array2::from_shape_simple_fn((n, d), || {
                if rng.random::<f64>() < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            })
        })
        .collect()
}

/// Adam training with early stopping on validation accuracy (ties broken
/// by lower validation loss). Returns the best epoch's parameters. With an
/// empty validation set the training nodes are used for selection.
pub fn train(
    mut model: WrgnnModel,
    c: &ComputationGraph,
    x: &Array2<f64>,
    labels: &[Option<usize>],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate(labels)?;
    check_mask(labels, &cfg.split.train, x.nrows())?;
    let selection = if cfg.split.val.is_empty() {
        &cfg.split.train
    } else {
        &cfg.split.val
    };
    let mut rng = SeedStream::new(cfg.seed).rng("dropout");
    let mut adam = Adam::new(&model.params, cfg.lr);
    let mut history = Vec::new();
    let mut best: Option<(f64, f64, usize, Params)> = None;
    for epoch in 0..cfg.max_epochs {
        let masks = (cfg.dropout > 0.0).then(|| dropout_masks(&model, x.nrows(), cfg.dropout, &mut rng));
        let (loss, grads) = model.loss_and_gradients_with_dropout(
            c,
            x,
            labels,
            &cfg.split.train,
            cfg.weight_decay,
            masks.as_deref(),
        )?;
        if !loss.is_finite() {
            return Err(Error::Numerical(format!("loss is {loss} at epoch {epoch}")));
        }
        adam.step(&mut model.params, &grads);
        if !model.params.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite parameters after epoch {epoch}"
            )));
        }
        let pass = model.forward_pass(c, x, None)?;
        let probs = softmax_rows(&pass.logits);
        let (val_loss, val_acc) = if cfg.split.val.is_empty() {
            (None, None)
        } else {
            (
                Some(cross_entropy(&pass.logits, labels, &cfg.split.val)),
                Some(accuracy(&probs, labels, &cfg.split.val)),
            )
        };
        let sel_acc = accuracy(&probs, labels, selection);
        let sel_loss = cross_entropy(&pass.logits, labels, selection);
        history.push(EpochMetrics {
            epoch,
            train_loss: loss,
            train_acc: accuracy(&probs, labels, &cfg.split.train),
            val_loss,
            val_acc,
        });
        let improved = match &best {
            None => true,
            Some((acc, l, _, _)) => sel_acc > *acc || (sel_acc == *acc && sel_loss < *l),
        };
        if improved {
            best = Some((sel_acc, sel_loss, epoch, model.params.clone()));
        } else if epoch - best.as_ref().map_or(0, |b| b.2) >= cfg.patience {
            log::debug!("early stop at epoch {epoch}");
            break;
        }
    }
    let best_epoch = match best {
        Some((_, _, epoch, params)) => {
            model.params = params;
            epoch
        }
        None => 0,
    };
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeOutcome {
    pub node: usize,
    pub label: usize,
    pub predicted: usize,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub f1_micro: f64,
    pub nodes: Vec<NodeOutcome>,
}

/// Argmax accuracy and micro-averaged F1 over `mask`.
pub fn evaluate(
    model: &WrgnnModel,
    c: &ComputationGraph,
    x: &Array2<f64>,
    labels: &[Option<usize>],
    mask: &[usize],
) -> Result<Evaluation> {
    check_mask(labels, mask, x.nrows())?;
    let probs = model.forward(c, x)?;
    let nodes: Vec<NodeOutcome> = mask
        .iter()
        .map(|&u| {
            let label = labels[u].expect("checked");
            let predicted = argmax(probs.row(u));
            NodeOutcome {
                node: u,
                label,
                predicted,
                correct: label == predicted,
            }
        })
        .collect();
    let tp = nodes.iter().filter(|o| o.correct).count() as f64;
    // every wrong prediction is one false positive and one false negative
    let wrong = nodes.len() as f64 - tp;
    Ok(Evaluation {
        accuracy: tp / nodes.len() as f64,
        f1_micro: 2.0 * tp / (2.0 * tp + 2.0 * wrong),
        nodes,
    })
}
