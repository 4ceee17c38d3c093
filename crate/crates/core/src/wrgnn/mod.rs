//! Relation-aware message passing on a computation graph.
//!
//! Each layer transforms hidden states per relation (`Z_r = H W_r`), sums
//! neighbor messages scaled by the edge weight and, for the attention
//! variant, by a per-node softmax over relation neighbors, then updates
//! `h' = normalize(relu(H W_self + M W_neig))`. A two-layer perceptron head
//! maps the last hidden state to class probabilities.
//!
//! Gradients are derived by hand; [`gradient_check`] compares them with
//! central finite differences.

mod pass;
mod train;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayViewD, ArrayViewMutD};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::compgraph::ComputationGraph;
use crate::error::{Error, Result};

pub use pass::{gradient_check, neighbor_softmax, GradCheck, Trace};
pub use train::{
    degree_bucket_features, evaluate, stratified_split, train, Adam, EpochMetrics, Evaluation, NodeOutcome,
    Split, TrainConfig, TrainOutcome, DEGREE_BUCKETS,
};

/// Attention off (`Wrgcn`) or on (`Wrgat`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Wrgcn,
    Wrgat,
}

impl Variant {
    pub fn attention(&self) -> bool {
        matches!(self, Variant::Wrgat)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Wrgcn => "wrgcn",
            Variant::Wrgat => "wrgat",
        })
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "wrgcn" => Ok(Variant::Wrgcn),
            "wrgat" => Ok(Variant::Wrgat),
            _ => Err(format!("unknown variant '{s}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_dim: usize,
    /// Output width of each message-passing layer; its length is `K`.
    pub hidden_dims: Vec<usize>,
    pub head_hidden: usize,
    pub num_classes: usize,
    pub num_relations: usize,
    pub variant: Variant,
    /// One attention vector for all relations instead of one per relation.
    pub shared_attention: bool,
    pub leaky_slope: f64,
}

impl ModelConfig {
    /// Two layers of width `hidden`, head of width `hidden`.
    pub fn new(
        input_dim: usize,
        hidden: usize,
        num_classes: usize,
        num_relations: usize,
        variant: Variant,
    ) -> Self {
        Self {
            input_dim,
            hidden_dims: vec![hidden, hidden],
            head_hidden: hidden,
            num_classes,
            num_relations,
            variant,
            shared_attention: false,
            leaky_slope: 0.2,
        }
    }

    pub fn for_graph(
        c: &ComputationGraph,
        input_dim: usize,
        hidden: usize,
        num_classes: usize,
        variant: Variant,
    ) -> Self {
        Self::new(input_dim, hidden, num_classes, c.num_relations(), variant)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.input_dim == 0 || self.head_hidden == 0 || self.hidden_dims.contains(&0) {
            return bad("layer widths must be positive");
        }
        if self.hidden_dims.is_empty() {
            return bad("at least one message-passing layer is required");
        }
        if self.num_classes < 2 {
            return bad("at least two classes are required");
        }
        if self.num_relations == 0 {
            return bad("at least one relation is required");
        }
        if !(self.leaky_slope >= 0.0) {
            return bad("leaky slope must be >= 0");
        }
        Ok(())
    }

    fn num_attention_vectors(&self) -> usize {
        match (self.variant.attention(), self.shared_attention) {
            (false, _) => 0,
            (true, true) => 1,
            (true, false) => self.num_relations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    /// `d_in x d_out`, one per relation.
    pub w_rel: Vec<Array2<f64>>,
    /// `d_in x d_out`.
    pub w_self: Array2<f64>,
    /// `d_out x d_out`.
    pub w_neig: Array2<f64>,
    /// Length `2 d_out`: source half then neighbor half. Empty without attention.
    pub att: Vec<Array1<f64>>,
}

impl LayerParams {
    pub fn d_in(&self) -> usize {
        self.w_self.nrows()
    }

    pub fn d_out(&self) -> usize {
        self.w_self.ncols()
    }

    /// Attention vector used by relation `r`.
    pub fn att_index(&self, r: usize) -> Option<usize> {
        match self.att.len() {
            0 => None,
            1 => Some(0),
            _ => Some(r),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadParams {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

/// All trainable tensors. Gradients and optimizer moments share this shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub layers: Vec<LayerParams>,
    pub head: HeadParams,
}

impl Params {
    /// Tensors in a fixed order, paired with readable names.
    pub fn named_tensors(&self) -> Vec<(String, ArrayViewD<'_, f64>)> {
        let mut out = Vec::new();
        for (k, l) in self.layers.iter().enumerate() {
            for (r, w) in l.w_rel.iter().enumerate() {
                out.push((format!("layer{k}.w_rel{r}"), w.view().into_dyn()));
            }
            out.push((format!("layer{k}.w_self"), l.w_self.view().into_dyn()));
            out.push((format!("layer{k}.w_neig"), l.w_neig.view().into_dyn()));
            for (r, a) in l.att.iter().enumerate() {
                out.push((format!("layer{k}.att{r}"), a.view().into_dyn()));
            }
        }
        out.push(("head.w1".into(), self.head.w1.view().into_dyn()));
        out.push(("head.b1".into(), self.head.b1.view().into_dyn()));
        out.push(("head.w2".into(), self.head.w2.view().into_dyn()));
        out.push(("head.b2".into(), self.head.b2.view().into_dyn()));
        out
    }

    /// Same order as [`Params::named_tensors`].
    pub fn tensors_mut(&mut self) -> Vec<ArrayViewMutD<'_, f64>> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            for w in &mut l.w_rel {
                out.push(w.view_mut().into_dyn());
            }
            out.push(l.w_self.view_mut().into_dyn());
            out.push(l.w_neig.view_mut().into_dyn());
            for a in &mut l.att {
                out.push(a.view_mut().into_dyn());
            }
        }
        out.push(self.head.w1.view_mut().into_dyn());
        out.push(self.head.b1.view_mut().into_dyn());
        out.push(self.head.w2.view_mut().into_dyn());
        out.push(self.head.b2.view_mut().into_dyn());
        out
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for mut t in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    pub fn num_scalars(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn squared_norm(&self) -> f64 {
        self.named_tensors()
            .iter()
            .map(|(_, t)| t.iter().map(|x| x * x).sum::<f64>())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.named_tensors()
            .iter()
            .all(|(_, t)| t.iter().all(|x| x.is_finite()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WrgnnModel {
    pub config: ModelConfig,
    pub params: Params,
}

fn uniform_matrix<R: Rng>(rows: usize, cols: usize, fan_in: usize, rng: &mut R) -> Array2<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-bound..=bound))
}

fn uniform_vector<R: Rng>(len: usize, fan_in: usize, rng: &mut R) -> Array1<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Array1::from_shape_simple_fn(len, || rng.random_range(-bound..=bound))
}

impl WrgnnModel {
    /// Every tensor, biases included, uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn new<R: Rng>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut layers = Vec::with_capacity(config.hidden_dims.len());
        let mut d_in = config.input_dim;
        for &d_out in &config.hidden_dims {
            let w_rel = (0..config.num_relations)
                .map(|_| uniform_matrix(d_in, d_out, d_in, rng))
                .collect();
            let w_self = uniform_matrix(d_in, d_out, d_in, rng);
            let w_neig = uniform_matrix(d_out, d_out, d_out, rng);
            let att = (0..config.num_attention_vectors())
                .map(|_| uniform_vector(2 * d_out, 2 * d_out, rng))
                .collect();
            layers.push(LayerParams {
                w_rel,
                w_self,
                w_neig,
                att,
            });
            d_in = d_out;
        }
        let head = HeadParams {
            w1: uniform_matrix(d_in, config.head_hidden, d_in, rng),
            b1: uniform_vector(config.head_hidden, d_in, rng),
            w2: uniform_matrix(config.head_hidden, config.num_classes, config.head_hidden, rng),
            b2: uniform_vector(config.num_classes, config.head_hidden, rng),
        };
        Ok(Self {
            config,
            params: Params { layers, head },
        })
    }

    pub fn num_layers(&self) -> usize {
        self.params.layers.len()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}
