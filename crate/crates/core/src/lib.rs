//! Local assortativity measurement, structural computation graphs and
//! weighted relational graph neural networks for node classification.
//!
//! The pipeline: measure node-level mixing of a labeled graph ([`mixing`]),
//! transform it into a multi-relational computation graph whose structural
//! relations connect nodes with similar multi-hop degree profiles
//! ([`structdist`], [`compgraph`]), then train a relation-aware
//! message-passing classifier on it ([`wrgnn`]).

#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::needless_range_loop,
    clippy::too_many_arguments
)]

pub mod ablation;
pub mod compgraph;
pub mod datasets;
pub mod error;
pub mod graph;
pub mod mixing;
pub mod par;
pub mod seed;
pub mod structdist;
pub mod wrgnn;

pub use error::{Error, Result};
pub use graph::{load_graph, read_features, read_labels, HopRing, LabeledGraph, WalkGraph, WeightedGraph};
