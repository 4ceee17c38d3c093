use std::collections::VecDeque;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::LabeledGraph;
use crate::seed::SeedStream;

/// A generator and its parameters, as read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    #[serde(default)]
    pub seed: u64,
    #[serde(flatten)]
    pub generator: Generator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "kebab-case")]
pub enum Generator {
    PlantedPartition(PlantedPartition),
    #[serde(alias = "hub-spoke")]
    StructuralTwins(StructuralTwins),
    BarbellFamily(BarbellFamily),
    DegreeLabel(DegreeLabel),
}

impl SyntheticSpec {
    pub fn generate(&self) -> Result<LabeledGraph> {
        let seeds = SeedStream::new(self.seed);
        match &self.generator {
            Generator::PlantedPartition(p) => planted_partition(p, &seeds),
            Generator::StructuralTwins(p) => structural_twins(p, &seeds),
            Generator::BarbellFamily(p) => barbell_family(p),
            Generator::DegreeLabel(p) => degree_label(p, &seeds),
        }
    }
}

/// Blocks of (nearly) equal size; nodes are assigned round-robin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedPartition {
    pub nodes: usize,
    pub blocks: usize,
    pub p_intra: f64,
    pub p_inter: f64,
    #[serde(default = "default_noise")]
    pub feature_noise: f64,
}

/// Hubs with `fan` leaves each, every hub attached to one node of a random
/// background graph. Background nodes are labeled by degree quantile into
/// `background_classes` classes; leaves and hubs get one class each (hubs last).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuralTwins {
    pub hubs: usize,
    pub fan: usize,
    pub background: usize,
    pub background_degree: f64,
    pub background_classes: usize,
    #[serde(default = "default_noise")]
    pub feature_noise: f64,
}

/// Two cliques joined by a path; clique nodes are class 0, path nodes class 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarbellFamily {
    pub clique_size: usize,
    pub path_len: usize,
}

/// Class `c` nodes get target degree `degrees[c]`; stubs are paired at random.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeLabel {
    pub nodes_per_class: usize,
    pub degrees: Vec<usize>,
    #[serde(default = "default_noise")]
    pub feature_noise: f64,
}

fn default_noise() -> f64 {
    1.0
}

fn check_prob(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "{name} must be in [0, 1], got {p}"
        )))
    }
}

fn check_noise(noise: f64) -> Result<()> {
    if noise >= 0.0 && noise.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "feature noise must be >= 0, got {noise}"
        )))
    }
}

/// One-hot labels plus `N(0, noise^2)` in every coordinate.
pub fn noisy_label_features(
    labels: &[Option<usize>],
    num_classes: usize,
    noise: f64,
    rng: &mut ChaCha8Rng,
) -> Array2<f64> {
    let mut x = Array2::zeros((labels.len(), num_classes));
    if noise > 0.0 {
        let normal = Normal::new(0.0, noise).expect("noise is finite and positive");
        x.mapv_inplace(|_| normal.sample(rng));
    }
    for (u, l) in labels.iter().enumerate() {
        if let Some(c) = l {
            x[[u, *c]] += 1.0;
        }
    }
    x
}

fn erdos_renyi(n: usize, p: f64, offset: usize, rng: &mut ChaCha8Rng, edges: &mut Vec<(usize, usize)>) {
    for u in 0..n {
        for v in u + 1..n {
            if rng.random::<f64>() < p {
                edges.push((offset + u, offset + v));
            }
        }
    }
}

pub fn planted_partition(p: &PlantedPartition, seeds: &SeedStream) -> Result<LabeledGraph> {
    check_prob("p_intra", p.p_intra)?;
    check_prob("p_inter", p.p_inter)?;
    check_noise(p.feature_noise)?;
    if p.blocks < 2 || p.nodes < p.blocks {
        return Err(Error::InvalidArgument(
            "planted partition needs >= 2 blocks and at least one node per block".into(),
        ));
    }
    let mut rng = seeds.rng("edges");
    let block = |u: usize| u % p.blocks;
    let mut edges = Vec::new();
    for u in 0..p.nodes {
        for v in u + 1..p.nodes {
            let prob = if block(u) == block(v) {
                p.p_intra
            } else {
                p.p_inter
            };
            if rng.random::<f64>() < prob {
                edges.push((u, v));
            }
        }
    }
    let labels: Vec<Option<usize>> = (0..p.nodes).map(|u| Some(block(u))).collect();
    let x = noisy_label_features(&labels, p.blocks, p.feature_noise, &mut seeds.rng("features"));
    LabeledGraph::from_edges(p.nodes, &edges)?
        .with_labels(labels)?
        .with_features(x)
}

/// Background nodes pairwise at distance >= 3 where possible, in random order.
fn spread_anchors(g: &LabeledGraph, count: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..g.num_nodes()).collect();
    order.shuffle(rng);
    let mut blocked = vec![false; g.num_nodes()];
    let mut anchors = Vec::with_capacity(count);
    for &u in &order {
        if anchors.len() == count {
            break;
        }
        if blocked[u] {
            continue;
        }
        anchors.push(u);
        let mut queue = VecDeque::from([(u, 0usize)]);
        blocked[u] = true;
        while let Some((x, d)) = queue.pop_front() {
            if d == 2 {
                continue;
            }
            for &y in g.neighbors(x) {
                if !blocked[y] {
                    blocked[y] = true;
                    queue.push_back((y, d + 1));
                }
            }
        }
    }
    // not enough distant nodes: reuse the rest in order
    for &u in &order {
        if anchors.len() == count {
            break;
        }
        if !anchors.contains(&u) {
            anchors.push(u);
        }
    }
    anchors
}

/// Node ids: background `0..B`, then each hub followed by its leaves.
pub fn structural_twins(p: &StructuralTwins, seeds: &SeedStream) -> Result<LabeledGraph> {
    check_noise(p.feature_noise)?;
    if p.background == 0 || p.hubs == 0 || p.hubs > p.background {
        return Err(Error::InvalidArgument(
            "structural twins need 0 < hubs <= background nodes".into(),
        ));
    }
    if p.background_classes == 0 {
        return Err(Error::InvalidArgument("background_classes must be >= 1".into()));
    }
    let mut rng = seeds.rng("edges");
    let b = p.background;
    let prob = if b > 1 {
        (p.background_degree / (b - 1) as f64).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let mut edges = Vec::new();
    erdos_renyi(b, prob, 0, &mut rng, &mut edges);
    let background = LabeledGraph::from_edges(b, &edges)?;
    let anchors = spread_anchors(&background, p.hubs, &mut rng);
    let n = b + p.hubs * (1 + p.fan);
    let leaf_class = p.background_classes;
    let hub_class = leaf_class + 1;
    let mut labels = vec![Some(leaf_class); n];
    for (i, &anchor) in anchors.iter().enumerate() {
        let hub = b + i * (1 + p.fan);
        labels[hub] = Some(hub_class);
        edges.push((hub, anchor));
        for leaf in hub + 1..=hub + p.fan {
            edges.push((hub, leaf));
        }
    }
    // equal degrees always share a class: bucket by the first rank of the degree
    let mut degree = vec![0usize; b];
    for &(u, v) in &edges {
        for w in [u, v] {
            if w < b {
                degree[w] += 1;
            }
        }
    }
    let mut sorted = degree.clone();
    sorted.sort_unstable();
    for u in 0..b {
        let rank = sorted.partition_point(|&d| d < degree[u]);
        labels[u] = Some(rank * p.background_classes / b);
    }
    let x = noisy_label_features(
        &labels,
        hub_class + 1,
        p.feature_noise,
        &mut seeds.rng("features"),
    );
    LabeledGraph::from_edges(n, &edges)?
        .with_labels(labels)?
        .with_features(x)
}

/// Hub ids of a graph built by [`structural_twins`].
pub fn twin_hubs(p: &StructuralTwins) -> Vec<usize> {
    (0..p.hubs).map(|i| p.background + i * (1 + p.fan)).collect()
}

pub fn barbell_family(p: &BarbellFamily) -> Result<LabeledGraph> {
    if p.clique_size < 2 {
        return Err(Error::InvalidArgument("clique_size must be >= 2".into()));
    }
    let k = p.clique_size;
    let n = 2 * k + p.path_len;
    let mut edges = Vec::new();
    for base in [0, k + p.path_len] {
        for i in 0..k {
            for j in i + 1..k {
                edges.push((base + i, base + j));
            }
        }
    }
    // last node of the first clique, the path, first node of the second clique
    let chain: Vec<usize> = std::iter::once(k - 1)
        .chain(k..k + p.path_len)
        .chain(std::iter::once(k + p.path_len))
        .collect();
    for w in chain.windows(2) {
        edges.push((w[0], w[1]));
    }
    let labels = (0..n)
        .map(|u| Some(usize::from((k..k + p.path_len).contains(&u))))
        .collect();
    LabeledGraph::from_edges(n, &edges)?.with_labels(labels)
}

/// Configuration-model pairing; self-loops and repeated pairs are dropped.
pub fn degree_label(p: &DegreeLabel, seeds: &SeedStream) -> Result<LabeledGraph> {
    check_noise(p.feature_noise)?;
    if p.degrees.len() < 2 || p.nodes_per_class == 0 {
        return Err(Error::InvalidArgument(
            "degree-label needs >= 2 classes and >= 1 node per class".into(),
        ));
    }
    let n = p.nodes_per_class * p.degrees.len();
    let labels: Vec<Option<usize>> = (0..n).map(|u| Some(u / p.nodes_per_class)).collect();
    let mut stubs: Vec<usize> = (0..n)
        .flat_map(|u| std::iter::repeat_n(u, p.degrees[u / p.nodes_per_class]))
        .collect();
    let mut rng = seeds.rng("edges");
    stubs.shuffle(&mut rng);
    let edges: Vec<(usize, usize)> = stubs
        .chunks_exact(2)
        .filter(|c| c[0] != c[1])
        .map(|c| (c[0], c[1]))
        .collect();
    let x = noisy_label_features(
        &labels,
        p.degrees.len(),
        p.feature_noise,
        &mut seeds.rng("features"),
    );
    LabeledGraph::from_edges(n, &edges)?
        .with_labels(labels)?
        .with_features(x)
}
