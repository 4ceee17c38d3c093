//! Global and node-local assortativity, smoothness diagnostics and profiles.
//!
//! Local assortativity of a node `l` reweights every half-edge `(i, j)` by a
//! random-walk distribution `w(i; l)` centred on `l` instead of the stationary
//! distribution. The default weighting is TotalRank: personalized PageRank
//! averaged over all restart probabilities, evaluated as the series
//! `sum_k (e_l P^k) / ((k + 1)(k + 2))`.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::digamma;

use crate::error::{Error, Result};
use crate::graph::{component_of, LabeledGraph, WalkGraph};
use crate::par;

/// Default truncation tolerance of the TotalRank series.
pub const DEFAULT_TOTALRANK_TOL: f64 = 1e-6;
/// Power iteration stops once the L1 change drops below this.
pub const PPR_RESIDUAL: f64 = 1e-10;
/// Bins of the `[-1, 1]` local assortativity histogram.
pub const HISTOGRAM_BINS: usize = 41;

/// `C x C` matrix of half-edge fractions between label pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix {
    classes: usize,
    entries: Vec<f64>,
}

impl MixingMatrix {
    pub fn zeros(classes: usize) -> Self {
        Self {
            classes,
            entries: vec![0.0; classes * classes],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let classes = rows.len();
        let entries = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self { classes, entries }
    }

    pub fn num_classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, g: usize, h: usize) -> f64 {
        self.entries[g * self.classes + h]
    }

    fn add(&mut self, g: usize, h: usize, v: f64) {
        self.entries[g * self.classes + h] += v;
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries
            .chunks(self.classes.max(1))
            .map(<[f64]>::to_vec)
            .collect()
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().sum()
    }

    pub fn trace(&self) -> f64 {
        (0..self.classes).map(|g| self.get(g, g)).sum()
    }

    /// `a_g = sum_h M[g][h]`.
    pub fn row_marginals(&self) -> Vec<f64> {
        (0..self.classes)
            .map(|g| (0..self.classes).map(|h| self.get(g, h)).sum())
            .collect()
    }

    /// `b_g = sum_h M[h][g]`.
    pub fn col_marginals(&self) -> Vec<f64> {
        (0..self.classes)
            .map(|g| (0..self.classes).map(|h| self.get(h, g)).sum())
            .collect()
    }

    /// `(M + M^T) / 2`.
    pub fn symmetrized(&self) -> Self {
        let mut out = Self::zeros(self.classes);
        for g in 0..self.classes {
            for h in 0..self.classes {
                out.entries[g * self.classes + h] = 0.5 * (self.get(g, h) + self.get(h, g));
            }
        }
        out
    }

    fn scale(&mut self, s: f64) {
        for e in &mut self.entries {
            *e *= s;
        }
    }
}

/// Walk distribution over nodes centred at `center`.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeWeightVector {
    pub center: usize,
    pub weights: Vec<f64>,
}

impl NodeWeightVector {
    pub fn indicator(center: usize, n: usize) -> Self {
        let mut weights = vec![0.0; n];
        weights[center] = 1.0;
        Self { center, weights }
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn l1_distance(&self, other: &Self) -> f64 {
        self.weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| (a - b).abs())
            .sum()
    }
}

/// Which walk distribution local assortativity uses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Weighting {
    TotalRank {
        tol: f64,
    },
    Ppr {
        alpha: f64,
    },
    /// `alpha = 1`: the stationary distribution of the walk.
    Stationary,
}

impl Default for Weighting {
    fn default() -> Self {
        Weighting::TotalRank {
            tol: DEFAULT_TOTALRANK_TOL,
        }
    }
}

fn check_labels<G: WalkGraph>(graph: &G, labels: &[Option<usize>]) -> Result<()> {
    if labels.len() != graph.node_count() {
        return Err(Error::DimensionMismatch {
            expected: graph.node_count(),
            got: labels.len(),
        });
    }
    Ok(())
}

fn check_center<G: WalkGraph>(graph: &G, l: usize) -> Result<()> {
    if l >= graph.node_count() {
        return Err(Error::NodeOutOfRange {
            node: l,
            num_nodes: graph.node_count(),
        });
    }
    Ok(())
}

/// Mixing matrix over half-edges whose endpoints are both labeled, weighted by
/// edge weight and normalized to total mass 1.
pub fn weighted_mixing_matrix<G: WalkGraph>(
    graph: &G,
    labels: &[Option<usize>],
    classes: usize,
) -> Result<MixingMatrix> {
    check_labels(graph, labels)?;
    let mut m = MixingMatrix::zeros(classes);
    for i in 0..graph.node_count() {
        let Some(g) = labels[i] else { continue };
        for (j, w) in graph.walk_neighbors(i) {
            if let Some(h) = labels[j] {
                m.add(g, h, w);
            }
        }
    }
    let total = m.total();
    if total <= 0.0 {
        return Err(Error::EmptyMixing);
    }
    m.scale(1.0 / total);
    Ok(m)
}

/// `M[g][h] = (1 / 2m') * sum_{i: y_i = g} sum_{j: y_j = h} A_ij` over the `m'`
/// edges with both endpoints labeled.
pub fn global_mixing_matrix(g: &LabeledGraph) -> Result<MixingMatrix> {
    weighted_mixing_matrix(g, g.labels(), g.num_classes())
}

/// Newman's assortativity coefficient
/// `r = (sum_g M_gg - sum_g a_g b_g) / (1 - sum_g a_g b_g)`.
pub fn global_assortativity(m: &MixingMatrix) -> Result<f64> {
    let a = m.row_marginals();
    let b = m.col_marginals();
    let ab: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
    let denom = 1.0 - ab;
    if denom <= 1e-12 {
        return Err(Error::Undefined(
            "assortativity undefined: a single label carries all edges".into(),
        ));
    }
    Ok((m.trace() - ab) / denom)
}

/// `r = (sum_g M_gg - sum_g a_g^2) / (1 - sum_g a_g^2)` with externally supplied marginals.
pub fn assortativity_with_marginals(m: &MixingMatrix, marginals: &[f64]) -> Result<f64> {
    if marginals.len() != m.num_classes() {
        return Err(Error::DimensionMismatch {
            expected: m.num_classes(),
            got: marginals.len(),
        });
    }
    let aa: f64 = marginals.iter().map(|a| a * a).sum();
    let denom = 1.0 - aa;
    if denom <= 1e-12 {
        return Err(Error::Undefined(
            "assortativity undefined: a single label carries all edges".into(),
        ));
    }
    Ok((m.trace() - aa) / denom)
}

/// Trace of a power-iteration run: final weights and the L1 change of every step.
#[derive(Debug, Clone)]
pub struct PprRun {
    pub weights: NodeWeightVector,
    pub residuals: Vec<f64>,
}

/// Personalized PageRank with restart probability `1 - alpha`:
/// the fixed point of `w = (1 - alpha) e_l + alpha w P`.
pub fn ppr_weights<G: WalkGraph>(graph: &G, l: usize, alpha: f64) -> Result<NodeWeightVector> {
    ppr_run(graph, l, alpha).map(|r| r.weights)
}

pub fn ppr_run<G: WalkGraph>(graph: &G, l: usize, alpha: f64) -> Result<PprRun> {
    check_center(graph, l)?;
    if !(0.0..=1.0).contains(&alpha) || alpha.is_nan() {
        return Err(Error::InvalidArgument(format!(
            "alpha must lie in [0, 1], got {alpha}"
        )));
    }
    let n = graph.node_count();
    if alpha == 0.0 || graph.strength(l) <= 0.0 {
        return Ok(PprRun {
            weights: NodeWeightVector::indicator(l, n),
            residuals: Vec::new(),
        });
    }
    let comp = component_of(graph, l);
    if alpha == 1.0 {
        // No restarts: the walk's stationary distribution on the component.
        let total: f64 = comp.iter().map(|&i| graph.strength(i)).sum();
        let mut weights = vec![0.0; n];
        for &i in &comp {
            weights[i] = graph.strength(i) / total;
        }
        return Ok(PprRun {
            weights: NodeWeightVector { center: l, weights },
            residuals: Vec::new(),
        });
    }

    let max_iter = ((PPR_RESIDUAL.ln() / alpha.ln()).ceil() as usize).saturating_add(1000);
    let mut x = vec![0.0; n];
    x[l] = 1.0;
    let mut next = vec![0.0; n];
    let mut residuals = Vec::new();
    for _ in 0..max_iter {
        walk_step(graph, &comp, &x, &mut next);
        for &i in &comp {
            next[i] *= alpha;
        }
        next[l] += 1.0 - alpha;
        let res: f64 = comp.iter().map(|&i| (next[i] - x[i]).abs()).sum();
        std::mem::swap(&mut x, &mut next);
        residuals.push(res);
        if res < PPR_RESIDUAL {
            return Ok(PprRun {
                weights: NodeWeightVector {
                    center: l,
                    weights: x,
                },
                residuals,
            });
        }
    }
    Err(Error::Numerical(format!(
        "personalized PageRank did not converge in {max_iter} iterations"
    )))
}

/// `out = x P` restricted to `comp`, with `P_ij = W_ij / s_i`.
fn walk_step<G: WalkGraph>(graph: &G, comp: &[usize], x: &[f64], out: &mut [f64]) {
    for &i in comp {
        out[i] = 0.0;
    }
    for &i in comp {
        let xi = x[i];
        if xi == 0.0 {
            continue;
        }
        let s = graph.strength(i);
        for (j, w) in graph.walk_neighbors(i) {
            out[j] += xi * w / s;
        }
    }
}

/// Series coefficient `1 / ((k + 1)(k + 2))`.
pub fn totalrank_coefficient(k: usize) -> f64 {
    let k = k as f64;
    1.0 / ((k + 1.0) * (k + 2.0))
}

/// Smallest `K` with `1 / (K + 2) < tol`: the series mass left after term `K`.
pub fn totalrank_terms(tol: f64) -> usize {
    let k = (1.0 / tol).floor() - 1.0;
    if k <= 0.0 {
        0
    } else {
        k as usize
    }
}

/// `sum_{i >= 0} c_{j + 2i}`: series mass of the terms sharing `j`'s parity.
fn parity_tail(j: usize) -> f64 {
    let j = j as f64;
    0.5 * (digamma((j + 2.0) / 2.0) - digamma((j + 1.0) / 2.0))
}

/// TotalRank walk weights: personalized PageRank integrated over `alpha` in `[0, 1]`.
///
/// The series is truncated after `K` terms with tail mass `1 / (K + 2) < tol`.
/// When the walk iterates settle earlier (they converge per parity class, so
/// bipartite components are handled), the remaining tail is closed in form
/// from the settled iterates. The result is renormalized to sum 1.
pub fn totalrank_weights<G: WalkGraph>(graph: &G, l: usize, tol: f64) -> Result<NodeWeightVector> {
    check_center(graph, l)?;
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "TotalRank tolerance must be positive, got {tol}"
        )));
    }
    let n = graph.node_count();
    if graph.strength(l) <= 0.0 {
        return Ok(NodeWeightVector::indicator(l, n));
    }
    let comp = component_of(graph, l);
    let max_k = totalrank_terms(tol);
    let settle = tol * 1e-2;

    let mut acc = vec![0.0; n];
    let mut prev2 = vec![0.0; n]; // x_{k-2}
    let mut prev1 = vec![0.0; n]; // x_{k-1}
    let mut x = vec![0.0; n];
    x[l] = 1.0;
    let mut next = vec![0.0; n];
    let mut diffs: Vec<f64> = Vec::new();

    for k in 0..=max_k {
        let c = totalrank_coefficient(k);
        for &i in &comp {
            acc[i] += c * x[i];
        }
        if k == max_k {
            break;
        }
        if k >= 2 {
            let d: f64 = comp.iter().map(|&i| (x[i] - prev2[i]).abs()).sum();
            diffs.push(d);
            if let Some(err) = tail_error_estimate(&diffs, k) {
                if err < settle {
                    walk_step(graph, &comp, &x, &mut next);
                    let odd = parity_tail(k + 1);
                    let even = parity_tail(k + 2);
                    for &i in &comp {
                        acc[i] += odd * next[i] + even * x[i];
                    }
                    break;
                }
            }
        }
        walk_step(graph, &comp, &x, &mut next);
        std::mem::swap(&mut prev2, &mut prev1);
        std::mem::swap(&mut prev1, &mut x);
        std::mem::swap(&mut x, &mut next);
    }

    let total: f64 = comp.iter().map(|&i| acc[i]).sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::Numerical("TotalRank weights vanished".into()));
    }
    for &i in &comp {
        acc[i] /= total;
    }
    Ok(NodeWeightVector {
        center: l,
        weights: acc,
    })
}

/// Bound on the L1 error of replacing every later iterate by the current one of
/// the same parity, scaled by the remaining series mass. `None` while the
/// contraction rate is not yet observable.
fn tail_error_estimate(diffs: &[f64], k: usize) -> Option<f64> {
    let m = diffs.len();
    let d = diffs[m - 1];
    if d == 0.0 {
        return Some(0.0);
    }
    if m < 4 {
        return None;
    }
    let rate = diffs[m - 4..]
        .windows(2)
        .map(|w| if w[0] > 0.0 { w[1] / w[0] } else { 0.0 })
        .fold(0.0, f64::max);
    if rate >= 1.0 {
        return None;
    }
    Some(d / (1.0 - rate) / (k as f64 + 2.0))
}

/// `M_gh(l) = sum_{i: y_i = g} sum_{j: y_j = h} w(i; l) W_ij / s_i`, before symmetrization.
///
/// Mass carried by half-edges with an unlabeled endpoint is dropped and the
/// rest renormalized to 1.
pub fn local_mixing_matrix<G: WalkGraph>(
    graph: &G,
    labels: &[Option<usize>],
    classes: usize,
    w: &NodeWeightVector,
) -> Result<MixingMatrix> {
    check_labels(graph, labels)?;
    if w.weights.len() != graph.node_count() {
        return Err(Error::DimensionMismatch {
            expected: graph.node_count(),
            got: w.weights.len(),
        });
    }
    let mut m = MixingMatrix::zeros(classes);
    for (i, &wi) in w.weights.iter().enumerate() {
        if wi == 0.0 {
            continue;
        }
        let Some(g) = labels[i] else { continue };
        let s = graph.strength(i);
        if s <= 0.0 {
            continue;
        }
        for (j, a) in graph.walk_neighbors(i) {
            if let Some(h) = labels[j] {
                m.add(g, h, wi * a / s);
            }
        }
    }
    let total = m.total();
    if !(total > 0.0) {
        return Err(Error::Undefined(format!(
            "no labeled edges reachable from node {}",
            w.center
        )));
    }
    m.scale(1.0 / total);
    Ok(m)
}

/// Computes local assortativity for many nodes of one graph with shared
/// global marginals.
#[derive(Debug, Clone)]
pub struct LocalMixing<'a, G: WalkGraph> {
    graph: &'a G,
    labels: &'a [Option<usize>],
    classes: usize,
    marginals: Vec<f64>,
    weighting: Weighting,
}

impl<'a, G: WalkGraph> LocalMixing<'a, G> {
    /// Marginals are taken from the graph's global (weighted) mixing matrix.
    pub fn new(graph: &'a G, labels: &'a [Option<usize>], weighting: Weighting) -> Result<Self> {
        check_labels(graph, labels)?;
        let classes = labels.iter().flatten().max().map_or(0, |&m| m + 1);
        let global = weighted_mixing_matrix(graph, labels, classes)?;
        Ok(Self {
            graph,
            labels,
            classes,
            marginals: global.row_marginals(),
            weighting,
        })
    }

    pub fn marginals(&self) -> &[f64] {
        &self.marginals
    }

    pub fn weights(&self, l: usize) -> Result<NodeWeightVector> {
        match self.weighting {
            Weighting::TotalRank { tol } => totalrank_weights(self.graph, l, tol),
            Weighting::Ppr { alpha } => ppr_weights(self.graph, l, alpha),
            Weighting::Stationary => ppr_weights(self.graph, l, 1.0),
        }
    }

    /// `r_local(l)`; `Undefined` for unlabeled or isolated nodes and when no
    /// labeled edge is reachable.
    pub fn local_assortativity(&self, l: usize) -> Result<f64> {
        check_center(self.graph, l)?;
        if self.labels[l].is_none() {
            return Err(Error::Undefined(format!("node {l} is unlabeled")));
        }
        if self.graph.strength(l) <= 0.0 {
            return Err(Error::Undefined(format!("node {l} has no edges")));
        }
        let w = self.weights(l)?;
        let m = local_mixing_matrix(self.graph, self.labels, self.classes, &w)?.symmetrized();
        assortativity_with_marginals(&m, &self.marginals)
    }

    /// Per-node values for every labeled node, undefined ones as `None`.
    pub fn profile_values(&self) -> Result<Vec<NodeAssortativity>> {
        let nodes: Vec<usize> = (0..self.graph.node_count())
            .filter(|&u| self.labels[u].is_some())
            .collect();
        let results = par::map_slice(&nodes, |&u| match self.local_assortativity(u) {
            Ok(r) => Ok(Some(r)),
            Err(e) if e.is_numerical() => Err(e),
            Err(_) => Ok(None),
        });
        nodes
            .into_iter()
            .zip(results)
            .map(|(node, r)| r.map(|r_local| NodeAssortativity { node, r_local }))
            .collect()
    }
}

/// `r_local(l)` with TotalRank weights and global marginals.
pub fn local_assortativity(g: &LabeledGraph, l: usize) -> Result<f64> {
    g.check_node(l)?;
    LocalMixing::new(g, g.labels(), Weighting::default())?.local_assortativity(l)
}

/// Fraction of labeled neighbours of `u` sharing its label.
pub fn label_smoothness(g: &LabeledGraph, u: usize) -> Result<f64> {
    if g.degree(u)? == 0 {
        return Err(Error::Undefined(format!("node {u} has degree 0")));
    }
    let Some(y) = g.label(u) else {
        return Err(Error::Undefined(format!("node {u} is unlabeled")));
    };
    let mut same = 0usize;
    let mut total = 0usize;
    for &v in g.neighbors(u) {
        if let Some(yv) = g.label(v) {
            total += 1;
            if yv == y {
                same += 1;
            }
        }
    }
    if total == 0 {
        return Err(Error::Undefined(format!("node {u} has no labeled neighbours")));
    }
    Ok(same as f64 / total as f64)
}

/// `||x_u - mean_{v in N(u)} x_v||^2`.
pub fn feature_smoothness(g: &LabeledGraph, u: usize) -> Result<f64> {
    let deg = g.degree(u)?;
    if deg == 0 {
        return Err(Error::Undefined(format!("node {u} has degree 0")));
    }
    let Some(x) = g.features() else {
        return Err(Error::Undefined("graph has no features".into()));
    };
    let mut mean = vec![0.0; x.ncols()];
    for &v in g.neighbors(u) {
        for (m, xv) in mean.iter_mut().zip(x.row(v)) {
            *m += xv;
        }
    }
    Ok(mean
        .iter()
        .zip(x.row(u))
        .map(|(m, xu)| {
            let d = xu - m / deg as f64;
            d * d
        })
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeAssortativity {
    pub node: usize,
    pub r_local: Option<f64>,
}

/// Fixed-width histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// Values outside `[lo, hi]` are clamped into the edge bins.
    pub fn new(lo: f64, hi: f64, bins: usize, values: impl IntoIterator<Item = f64>) -> Self {
        let mut counts = vec![0usize; bins];
        let width = (hi - lo) / bins as f64;
        for v in values {
            let idx = ((v - lo) / width).floor();
            let idx = if idx < 0.0 {
                0
            } else {
                (idx as usize).min(bins - 1)
            };
            counts[idx] += 1;
        }
        Self { lo, hi, counts }
    }

    /// `(bin_lo, bin_hi, count)` per bin.
    pub fn bins(&self) -> Vec<(f64, f64, usize)> {
        let width = (self.hi - self.lo) / self.counts.len() as f64;
        self.counts
            .iter()
            .enumerate()
            .map(|(i, &c)| (self.lo + width * i as f64, self.lo + width * (i + 1) as f64, c))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssortativityProfile {
    pub r_global: Option<f64>,
    pub nodes: Vec<NodeAssortativity>,
    pub histogram: Histogram,
}

impl AssortativityProfile {
    pub fn defined_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.nodes.iter().filter_map(|n| n.r_local)
    }

    pub fn get(&self, node: usize) -> Option<f64> {
        self.nodes
            .binary_search_by_key(&node, |n| n.node)
            .ok()
            .and_then(|i| self.nodes[i].r_local)
    }
}

/// `r_local` for every labeled node, `r_global`, and a 41-bin histogram over `[-1, 1]`.
pub fn assortativity_profile(g: &LabeledGraph) -> Result<AssortativityProfile> {
    assortativity_profile_on(g, g.labels(), Weighting::default())
}

pub fn assortativity_profile_on<G: WalkGraph>(
    graph: &G,
    labels: &[Option<usize>],
    weighting: Weighting,
) -> Result<AssortativityProfile> {
    let classes = labels.iter().flatten().max().map_or(0, |&m| m + 1);
    let global = weighted_mixing_matrix(graph, labels, classes)?;
    let r_global = global_assortativity(&global).ok();
    let lm = LocalMixing::new(graph, labels, weighting)?;
    let nodes = lm.profile_values()?;
    let histogram = Histogram::new(-1.0, 1.0, HISTOGRAM_BINS, nodes.iter().filter_map(|n| n.r_local));
    Ok(AssortativityProfile {
        r_global,
        nodes,
        histogram,
    })
}

/// Label-homogeneity and feature-smoothness diagnostics of one node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Smoothness {
    pub node: usize,
    pub epsilon: Option<f64>,
    pub lambda: Option<f64>,
}

pub fn smoothness_table(g: &LabeledGraph) -> Vec<Smoothness> {
    (0..g.num_nodes())
        .map(|u| Smoothness {
            node: u,
            epsilon: label_smoothness(g, u).ok(),
            lambda: feature_smoothness(g, u).ok(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn labeled(n: usize, edges: &[(usize, usize)], labels: &[usize]) -> LabeledGraph {
        LabeledGraph::from_edges(n, edges)
            .unwrap()
            .with_labels(labels.iter().map(|&l| Some(l)).collect())
            .unwrap()
    }

    fn two_triangles() -> LabeledGraph {
        labeled(
            6,
            &[(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)],
            &[0, 0, 0, 1, 1, 1],
        )
    }

    fn k22() -> LabeledGraph {
        labeled(4, &[(0, 2), (0, 3), (1, 2), (1, 3)], &[0, 0, 1, 1])
    }

    #[test]
    fn disjoint_same_label_triangles() {
        let g = two_triangles();
        let m = global_mixing_matrix(&g).unwrap();
        assert_eq!(m.rows(), vec![vec![0.5, 0.0], vec![0.0, 0.5]]);
        assert_eq!(global_assortativity(&m).unwrap(), 1.0);
    }

    #[test]
    fn bipartite_by_label() {
        let g = k22();
        let m = global_mixing_matrix(&g).unwrap();
        assert_eq!(m.rows(), vec![vec![0.0, 0.5], vec![0.5, 0.0]]);
        assert_eq!(global_assortativity(&m).unwrap(), -1.0);
    }

    #[test]
    fn five_node_mixed_matches_half_edge_enumeration() {
        // edges: 0-1 (A,A) 1-2 (A,B) 2-3 (B,B) 3-4 (B,C) 4-0 (C,A) 1-3 (A,B)
        let g = labeled(
            5,
            &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (1, 3)],
            &[0, 0, 1, 1, 2],
        );
        // 12 half-edges: AA x2, AB x2 (1-2, 1-3), BA x2, BB x2, BC, CB, CA, AC
        let m = global_mixing_matrix(&g).unwrap();
        let e = 1.0 / 12.0;
        let expected = [[2.0 * e, 2.0 * e, e], [2.0 * e, 2.0 * e, e], [e, e, 0.0]];
        for g_ in 0..3 {
            for h in 0..3 {
                assert_abs_diff_eq!(m.get(g_, h), expected[g_][h], epsilon = 1e-15);
            }
        }
        // a = (5/12, 5/12, 2/12); r = (4/12 - (25+25+4)/144) / (1 - 54/144)
        let r = global_assortativity(&m).unwrap();
        assert_abs_diff_eq!(r, (48.0 - 54.0) / (144.0 - 54.0), epsilon = 1e-14);
    }

    #[test]
    fn empty_and_single_label_errors() {
        let g = LabeledGraph::from_edges(3, &[(0, 1)]).unwrap();
        assert!(matches!(global_mixing_matrix(&g), Err(Error::EmptyMixing)));
        let g = labeled(3, &[(0, 1), (1, 2)], &[0, 0, 0]);
        let m = global_mixing_matrix(&g).unwrap();
        assert!(matches!(global_assortativity(&m), Err(Error::Undefined(_))));
    }

    #[test]
    fn ppr_extremes() {
        let g = labeled(4, &[(0, 1), (1, 2), (2, 0), (2, 3)], &[0, 0, 1, 1]);
        let w = ppr_weights(&g, 1, 0.0).unwrap();
        assert_eq!(w.weights, vec![0.0, 1.0, 0.0, 0.0]);
        let w = ppr_weights(&g, 1, 1.0).unwrap();
        for u in 0..4 {
            assert_abs_diff_eq!(w.weights[u], g.degree(u).unwrap() as f64 / 8.0, epsilon = 1e-12);
        }
        assert!(matches!(ppr_weights(&g, 0, 1.5), Err(Error::InvalidArgument(_))));
        assert!(matches!(ppr_weights(&g, 0, -0.1), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn ppr_path_matches_direct_solve() {
        // w = (1-a) e_0 (I - a P)^{-1}; solve the 3x3 system by Gaussian elimination.
        let g = labeled(3, &[(0, 1), (1, 2)], &[0, 0, 0]);
        let a = 0.5;
        let p = [[0.0, 1.0, 0.0], [0.5, 0.0, 0.5], [0.0, 1.0, 0.0]];
        // row-vector system w (I - aP) = (1-a) e_0  <=>  (I - aP)^T w^T = (1-a) e_0^T
        let mut m = [[0.0f64; 4]; 3];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = if i == j { 1.0 } else { 0.0 } - a * p[j][i];
            }
        }
        m[0][3] = 1.0 - a;
        for c in 0..3 {
            let piv = m[c][c];
            for j in c..4 {
                m[c][j] /= piv;
            }
            for r in 0..3 {
                if r != c {
                    let f = m[r][c];
                    for j in c..4 {
                        m[r][j] -= f * m[c][j];
                    }
                }
            }
        }
        let w = ppr_weights(&g, 0, a).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(w.weights[i], m[i][3], epsilon = 1e-9);
        }
        // frozen: (7/12, 4/12, 1/12)
        assert_abs_diff_eq!(w.weights[0], 7.0 / 12.0, epsilon = 1e-9);
        assert_abs_diff_eq!(w.weights[1], 4.0 / 12.0, epsilon = 1e-9);
        assert_abs_diff_eq!(w.weights[2], 1.0 / 12.0, epsilon = 1e-9);
    }

    #[test]
    fn ppr_residual_contracts() {
        let g = two_triangles();
        let run = ppr_run(&g, 0, 0.85).unwrap();
        assert!(run.residuals.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9)));
        assert!(*run.residuals.last().unwrap() < PPR_RESIDUAL);
        assert_abs_diff_eq!(run.weights.sum(), 1.0, epsilon = 1e-6);
        assert_eq!(&run.weights.weights[3..], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn totalrank_terms_bound() {
        assert_eq!(totalrank_terms(0.6), 0);
        assert_eq!(totalrank_terms(0.5), 1);
        assert_eq!(totalrank_terms(0.3), 2);
        assert_eq!(totalrank_coefficient(0), 0.5);
        for tol in [0.3, 0.01, 1e-4] {
            let k = totalrank_terms(tol);
            assert!(1.0 / (k as f64 + 2.0) < tol);
            if k > 0 {
                assert!(1.0 / (k as f64 + 1.0) >= tol);
            }
        }
    }

    #[test]
    fn parity_tail_splits_total_tail() {
        for j in [1usize, 2, 7, 50, 1000] {
            let both = parity_tail(j) + parity_tail(j + 1);
            assert_abs_diff_eq!(both, 1.0 / (j as f64 + 1.0), epsilon = 1e-12);
            let brute: f64 = (0..200_000).map(|i| totalrank_coefficient(j + 2 * i)).sum();
            // truncated brute sum misses about 1 / (2 (j + 400_000))
            assert_abs_diff_eq!(parity_tail(j), brute, epsilon = 2e-6);
            assert_abs_diff_eq!(
                parity_tail(j) - parity_tail(j + 2),
                totalrank_coefficient(j),
                epsilon = 1e-14
            );
        }
    }

    #[test]
    fn totalrank_single_node_and_first_term() {
        let g = labeled(3, &[(0, 1)], &[0, 0, 1]);
        assert_eq!(
            totalrank_weights(&g, 2, 1e-6).unwrap().weights,
            vec![0.0, 0.0, 1.0]
        );
        // only the k = 0 term (e_l / 2), renormalized
        assert_eq!(
            totalrank_weights(&g, 0, 0.6).unwrap().weights,
            vec![1.0, 0.0, 0.0]
        );
        assert!(matches!(
            totalrank_weights(&g, 0, 0.0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn totalrank_triangle_matches_series_oracle() {
        // On a triangle (e_0 P^k)_0 = 1/3 + (2/3)(-1/2)^k and the others are
        // 1/3 - (1/3)(-1/2)^k; sum 1000 terms of the geometric part.
        let g = labeled(3, &[(0, 1), (1, 2), (0, 2)], &[0, 0, 0]);
        let s: f64 = (0..1000)
            .map(|k| (-0.5f64).powi(k as i32) * totalrank_coefficient(k))
            .sum();
        let own = 1.0 / 3.0 + 2.0 / 3.0 * s;
        let other = 1.0 / 3.0 - s / 3.0;
        let w = totalrank_weights(&g, 0, 1e-12).unwrap();
        assert_abs_diff_eq!(w.weights[0], own, epsilon = 1e-10);
        assert_abs_diff_eq!(w.weights[1], other, epsilon = 1e-10);
        assert_abs_diff_eq!(w.weights[2], other, epsilon = 1e-10);
        // frozen value of the oracle
        assert_abs_diff_eq!(own, 0.621_860_432_432_657_5, epsilon = 1e-12);
    }

    #[test]
    fn totalrank_on_bipartite_path_matches_plain_series() {
        // Bipartite, so iterates oscillate; compare against a long plain series.
        let g = labeled(4, &[(0, 1), (1, 2), (2, 3)], &[0, 0, 0, 0]);
        let w = totalrank_weights(&g, 0, 1e-9).unwrap();
        let p = [
            [0.0, 1.0, 0.0, 0.0],
            [0.5, 0.0, 0.5, 0.0],
            [0.0, 0.5, 0.0, 0.5],
            [0.0, 0.0, 1.0, 0.0],
        ];
        let mut x = [1.0, 0.0, 0.0, 0.0];
        let mut acc = [0.0; 4];
        let terms = 2_000_000usize;
        for k in 0..terms {
            let c = totalrank_coefficient(k);
            for i in 0..4 {
                acc[i] += c * x[i];
            }
            let mut nx = [0.0; 4];
            for i in 0..4 {
                for j in 0..4 {
                    nx[j] += x[i] * p[i][j];
                }
            }
            x = nx;
        }
        let total: f64 = acc.iter().sum();
        for i in 0..4 {
            assert_abs_diff_eq!(w.weights[i], acc[i] / total, epsilon = 1e-6);
        }
    }

    #[test]
    fn local_mixing_indicator_weights() {
        // node 0 labeled 0, all neighbours labeled 1
        let g = labeled(4, &[(0, 1), (0, 2), (1, 3)], &[0, 1, 1, 0]);
        let w = NodeWeightVector::indicator(0, 4);
        let m = local_mixing_matrix(&g, g.labels(), 2, &w).unwrap();
        assert_eq!(m.rows(), vec![vec![0.0, 1.0], vec![0.0, 0.0]]);
        let s = m.symmetrized();
        assert_eq!(s.rows(), vec![vec![0.0, 0.5], vec![0.5, 0.0]]);
    }

    #[test]
    fn stationary_weights_recover_global() {
        let g = labeled(
            5,
            &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (1, 3)],
            &[0, 0, 1, 1, 2],
        );
        let global = global_assortativity(&global_mixing_matrix(&g).unwrap()).unwrap();
        let lm = LocalMixing::new(&g, g.labels(), Weighting::Stationary).unwrap();
        for l in 0..5 {
            assert_abs_diff_eq!(lm.local_assortativity(l).unwrap(), global, epsilon = 1e-12);
        }
    }

    #[test]
    fn two_community_local_mixing_hand_values() {
        // triangle {0,1,2} label 0, triangle {3,4,5} label 1, bridge 2-3
        let g = labeled(
            6,
            &[(0, 1), (1, 2), (0, 2), (2, 3), (3, 4), (4, 5), (3, 5)],
            &[0, 0, 0, 1, 1, 1],
        );
        // uniform weights: each node contributes 1/6 split evenly over its edges
        let w = NodeWeightVector {
            center: 0,
            weights: vec![1.0 / 6.0; 6],
        };
        let m = local_mixing_matrix(&g, g.labels(), 2, &w).unwrap();
        // M_00 = (1/6)(1 + 1 + 2/3), M_01 = (1/6)(1/3), symmetric by construction
        assert_abs_diff_eq!(m.get(0, 0), (8.0 / 3.0) / 6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.get(0, 1), (1.0 / 3.0) / 6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.get(1, 0), (1.0 / 3.0) / 6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.get(1, 1), (8.0 / 3.0) / 6.0, epsilon = 1e-15);
    }

    #[test]
    fn local_assortativity_extremes() {
        let g = two_triangles();
        for l in 0..6 {
            assert_abs_diff_eq!(local_assortativity(&g, l).unwrap(), 1.0, epsilon = 1e-12);
        }
        let g = k22();
        for l in 0..4 {
            assert_abs_diff_eq!(local_assortativity(&g, l).unwrap(), -1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn local_assortativity_undefined_cases() {
        let g = labeled(4, &[(0, 1), (1, 2)], &[0, 0, 0, 1]);
        // single label carries every edge
        assert!(matches!(
            LocalMixing::new(&g, g.labels(), Weighting::default())
                .unwrap()
                .local_assortativity(0),
            Err(Error::Undefined(_))
        ));
        let g = labeled(4, &[(0, 1), (1, 2)], &[0, 1, 0, 1]);
        assert!(matches!(local_assortativity(&g, 3), Err(Error::Undefined(_))));
    }

    #[test]
    fn planted_disassortative_node_is_negative() {
        // Two label-0 triangles joined through node 6 (label 1), whose
        // neighbours are all label 0; node 7 hangs off node 6 with label 1.
        let g = labeled(
            8,
            &[
                (0, 1),
                (1, 2),
                (0, 2),
                (3, 4),
                (4, 5),
                (3, 5),
                (6, 2),
                (6, 3),
                (6, 0),
                (6, 7),
            ],
            &[0, 0, 0, 0, 0, 0, 1, 1],
        );
        let lm = LocalMixing::new(&g, g.labels(), Weighting::default()).unwrap();
        let r6 = lm.local_assortativity(6).unwrap();
        let r1 = lm.local_assortativity(1).unwrap();
        // independent oracle: long plain series, weighted sum by hand
        let n = 8;
        let mut x = vec![0.0; n];
        x[6] = 1.0;
        let mut acc = vec![0.0; n];
        for k in 0..200_000 {
            let c = totalrank_coefficient(k);
            for i in 0..n {
                acc[i] += c * x[i];
            }
            let mut nx = vec![0.0; n];
            for i in 0..n {
                let d = g.neighbors(i).len() as f64;
                for &j in g.neighbors(i) {
                    nx[j] += x[i] / d;
                }
            }
            x = nx;
        }
        let total: f64 = acc.iter().sum();
        let mut m = [[0.0; 2]; 2];
        for i in 0..n {
            let d = g.neighbors(i).len() as f64;
            for &j in g.neighbors(i) {
                m[g.label(i).unwrap()][g.label(j).unwrap()] += acc[i] / total / d;
            }
        }
        let diag = m[0][0] + m[1][1];
        // global: 20 half-edges; label-1 half-edges: 3 (6->0/2/3) + 1 (6->7) + 1 (7->6)
        let a1 = 5.0 / 20.0;
        let a0 = 15.0 / 20.0;
        let aa = a0 * a0 + a1 * a1;
        let oracle = (diag - aa) / (1.0 - aa);
        assert_abs_diff_eq!(r6, oracle, epsilon = 1e-5);
        assert!(r6 < 0.0, "r6 = {r6}");
        assert!(r1 > 0.0, "r1 = {r1}");
    }

    #[test]
    fn smoothness() {
        let star = labeled(6, &[(0, 1), (0, 2), (0, 3), (0, 4), (0, 5)], &[0, 0, 0, 0, 1, 1]);
        assert_abs_diff_eq!(label_smoothness(&star, 0).unwrap(), 0.6, epsilon = 1e-15);
        assert_eq!(label_smoothness(&star, 1).unwrap(), 1.0);
        assert_eq!(label_smoothness(&star, 4).unwrap(), 0.0);
        let iso = labeled(2, &[], &[0, 1]);
        assert!(matches!(label_smoothness(&iso, 0), Err(Error::Undefined(_))));
    }

    #[test]
    fn feature_smoothness_values() {
        let g = LabeledGraph::from_edges(2, &[(0, 1)])
            .unwrap()
            .with_features(array![[1.0, 0.0], [0.0, 0.0]])
            .unwrap();
        assert_eq!(feature_smoothness(&g, 0).unwrap(), 1.0);
        // node 0 with 4 neighbours; mean of neighbours = (1, 0.5), x_0 = (1, 0.5)
        let g = LabeledGraph::from_edges(5, &[(0, 1), (0, 2), (0, 3), (0, 4)])
            .unwrap()
            .with_features(array![[1.0, 0.5], [0.0, 0.0], [2.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
            .unwrap();
        assert_eq!(feature_smoothness(&g, 0).unwrap(), 0.0);
        // x_1 = (0,0), single neighbour 0 at (1, 0.5): 1 + 0.25
        assert_abs_diff_eq!(feature_smoothness(&g, 1).unwrap(), 1.25, epsilon = 1e-15);
        // x_0 moved to (3, -1): (3-1)^2 + (-1-0.5)^2 = 4 + 2.25
        let g2 = LabeledGraph::from_edges(5, &[(0, 1), (0, 2), (0, 3), (0, 4)])
            .unwrap()
            .with_features(array![
                [3.0, -1.0],
                [0.0, 0.0],
                [2.0, 1.0],
                [1.0, 0.0],
                [1.0, 1.0]
            ])
            .unwrap();
        assert_abs_diff_eq!(feature_smoothness(&g2, 0).unwrap(), 6.25, epsilon = 1e-14);
        let nofeat = LabeledGraph::from_edges(2, &[(0, 1)]).unwrap();
        assert!(matches!(feature_smoothness(&nofeat, 0), Err(Error::Undefined(_))));
    }

    #[test]
    fn profiles_of_extremes() {
        let p = assortativity_profile(&two_triangles()).unwrap();
        assert_eq!(p.r_global, Some(1.0));
        assert!(p.defined_values().all(|r| (r - 1.0).abs() < 1e-12));
        assert_eq!(p.histogram.counts[HISTOGRAM_BINS - 1], 6);

        let p = assortativity_profile(&k22()).unwrap();
        assert_eq!(p.histogram.counts[0], 4);
        assert_eq!(p.histogram.counts.iter().sum::<usize>(), 4);
    }

    #[test]
    fn histogram_bins_cover_range() {
        let h = Histogram::new(-1.0, 1.0, 41, [-1.0, 1.0, 0.0, -3.0, 2.0]);
        assert_eq!(h.counts[0], 2);
        assert_eq!(h.counts[40], 2);
        assert_eq!(h.counts[20], 1);
        let bins = h.bins();
        assert_abs_diff_eq!(bins[0].0, -1.0);
        assert_abs_diff_eq!(bins[40].1, 1.0, epsilon = 1e-12);
    }
}
