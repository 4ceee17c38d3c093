//! Weighted multi-relational computation graphs.
//!
//! Structural relations `0..=T` connect node pairs with weight
//! `exp(-f_tau(u, v))`; the proximity relation `p` copies the input edges with
//! weight 1. The naive builder scores every pair, the practical builder only
//! pairs whose positions in the degree-sorted node order are at most
//! `budget_per_side` apart.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{LabeledGraph, WeightedGraph};
use crate::mixing::{LocalMixing, Weighting};
use crate::par;
use crate::structdist::{DtwConfig, RingProfiles};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Relation {
    Structural(usize),
    Proximity,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Relation::Structural(t) => write!(f, "{t}"),
            Relation::Proximity => f.write_str("p"),
        }
    }
}

impl FromStr for Relation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "p" {
            return Ok(Relation::Proximity);
        }
        s.parse()
            .map(Relation::Structural)
            .map_err(|_| format!("unknown relation '{s}'"))
    }
}

/// Which relations a model sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationSet {
    All,
    Proximity,
    Structure,
}

impl RelationSet {
    pub fn includes(&self, rel: Relation) -> bool {
        matches!(
            (self, rel),
            (RelationSet::All, _)
                | (RelationSet::Proximity, Relation::Proximity)
                | (RelationSet::Structure, Relation::Structural(_))
        )
    }

    pub fn name(&self) -> &'static str {
        match self {
            RelationSet::All => "all",
            RelationSet::Proximity => "proximity",
            RelationSet::Structure => "structure",
        }
    }
}

impl FromStr for RelationSet {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "all" | "both" => Ok(RelationSet::All),
            "proximity" => Ok(RelationSet::Proximity),
            "structure" => Ok(RelationSet::Structure),
            _ => Err(format!("unknown relation set '{s}'")),
        }
    }
}

/// Directed edges of one relation in CSR layout, sorted by `(src, dst)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RelationEdges {
    offsets: Vec<usize>,
    targets: Vec<usize>,
    weights: Vec<f64>,
}

impl RelationEdges {
    pub fn from_triples(num_nodes: usize, mut triples: Vec<(usize, usize, f64)>) -> Self {
        triples.sort_by_key(|t| (t.0, t.1));
        triples.dedup_by(|a, b| a.0 == b.0 && a.1 == b.1);
        let mut offsets = vec![0usize; num_nodes + 1];
        for &(s, _, _) in &triples {
            offsets[s + 1] += 1;
        }
        for i in 0..num_nodes {
            offsets[i + 1] += offsets[i];
        }
        let (targets, weights) = triples.into_iter().map(|(_, d, w)| (d, w)).unzip();
        Self {
            offsets,
            targets,
            weights,
        }
    }

    fn empty(num_nodes: usize) -> Self {
        Self::from_triples(num_nodes, Vec::new())
    }

    pub fn num_edges(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn neighbors(&self, u: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.offsets[u]..self.offsets[u + 1];
        self.targets[r.clone()]
            .iter()
            .copied()
            .zip(self.weights[r].iter().copied())
    }

    pub fn out_degree(&self, u: usize) -> usize {
        self.offsets[u + 1] - self.offsets[u]
    }

    /// `(src, dst, weight)` in sorted order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.offsets.len().saturating_sub(1))
            .flat_map(move |u| self.neighbors(u).map(move |(v, w)| (u, v, w)))
    }

    pub fn weight(&self, u: usize, v: usize) -> Option<f64> {
        let r = self.offsets[u]..self.offsets[u + 1];
        self.targets[r.clone()]
            .binary_search(&v)
            .ok()
            .map(|i| self.weights[r.start + i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuildMode {
    Naive,
    Practical,
}

impl FromStr for BuildMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "naive" => Ok(BuildMode::Naive),
            "practical" => Ok(BuildMode::Practical),
            _ => Err(format!("unknown build mode '{s}'")),
        }
    }
}

impl fmt::Display for BuildMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BuildMode::Naive => "naive",
            BuildMode::Practical => "practical",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildConfig {
    /// Highest structural relation `T`.
    pub max_tau: usize,
    pub mode: BuildMode,
    /// Practical mode only; `ceil(log2 n)` when unset.
    pub budget_per_side: Option<usize>,
    /// Structural edges lighter than this are dropped (0 disables).
    pub weight_floor: f64,
    pub dtw: DtwConfig,
}

impl BuildConfig {
    pub fn naive(max_tau: usize) -> Self {
        Self {
            max_tau,
            mode: BuildMode::Naive,
            budget_per_side: None,
            weight_floor: 0.0,
            dtw: DtwConfig::default(),
        }
    }

    pub fn practical(max_tau: usize) -> Self {
        Self {
            mode: BuildMode::Practical,
            ..Self::naive(max_tau)
        }
    }
}

/// Metadata recorded in the serialized header.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GraphMeta {
    pub mode: Option<BuildMode>,
    pub budget_per_side: Option<usize>,
    pub weight_floor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComputationGraph {
    num_nodes: usize,
    structural: Vec<RelationEdges>,
    proximity: RelationEdges,
    meta: GraphMeta,
}

/// `ceil(log2 n)`, at least 1.
pub fn default_budget(num_nodes: usize) -> usize {
    if num_nodes <= 2 {
        1
    } else {
        (usize::BITS - (num_nodes - 1).leading_zeros()) as usize
    }
}

/// Unordered candidate pairs `(u, v)`, `u < v`, whose positions in the
/// `(degree, id)`-sorted order differ by at most `budget`.
pub fn practical_candidates(g: &LabeledGraph, budget: usize) -> Vec<(usize, usize)> {
    let degrees = g.degrees();
    let mut sorted: Vec<(usize, usize)> = (0..g.num_nodes()).map(|u| (degrees[u], u)).collect();
    sorted.sort_unstable();
    let mut pairs = Vec::new();
    for u in 0..g.num_nodes() {
        let pos = sorted
            .binary_search(&(degrees[u], u))
            .expect("every node is in the sorted order");
        let lo = pos.saturating_sub(budget);
        let hi = (pos + budget).min(sorted.len() - 1);
        for &(_, v) in &sorted[lo..=hi] {
            if v != u {
                pairs.push((u.min(v), u.max(v)));
            }
        }
    }
    pairs.sort_unstable();
    pairs.dedup();
    pairs
}

impl ComputationGraph {
    /// Naive construction: every unordered pair at every defined level.
    pub fn build_naive(g: &LabeledGraph, max_tau: usize) -> Result<Self> {
        Self::build(g, &BuildConfig::naive(max_tau))
    }

    /// Degree-sorted candidate pruning with `budget_per_side` positions each way.
    pub fn build_practical(g: &LabeledGraph, max_tau: usize, budget_per_side: usize) -> Result<Self> {
        Self::build(
            g,
            &BuildConfig {
                budget_per_side: Some(budget_per_side),
                ..BuildConfig::practical(max_tau)
            },
        )
    }

    pub fn build(g: &LabeledGraph, cfg: &BuildConfig) -> Result<Self> {
        let n = g.num_nodes();
        if !(cfg.weight_floor >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "weight floor must be >= 0, got {}",
                cfg.weight_floor
            )));
        }
        let (pairs, budget) = match cfg.mode {
            BuildMode::Naive => {
                let pairs = (0..n)
                    .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
                    .collect::<Vec<_>>();
                (pairs, None)
            }
            BuildMode::Practical => {
                let b = cfg.budget_per_side.unwrap_or_else(|| default_budget(n));
                if b == 0 {
                    return Err(Error::InvalidArgument("budget_per_side must be >= 1".into()));
                }
                (practical_candidates(g, b), Some(b))
            }
        };
        let profiles = RingProfiles::build(g, cfg.max_tau, &cfg.dtw);
        let distances = par::map_slice(&pairs, |&(u, v)| profiles.distances(u, v, &cfg.dtw));

        let mut triples: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); cfg.max_tau + 1];
        for (&(u, v), d) in pairs.iter().zip(&distances) {
            for (tau, &f) in d.levels.iter().enumerate() {
                let w = (-f).exp();
                if w > 0.0 && w >= cfg.weight_floor {
                    triples[tau].push((u, v, w));
                    triples[tau].push((v, u, w));
                }
            }
        }
        let structural = triples
            .into_iter()
            .map(|t| RelationEdges::from_triples(n, t))
            .collect();
        let proximity = RelationEdges::from_triples(
            n,
            g.edges()
                .iter()
                .flat_map(|&(u, v)| [(u, v, 1.0), (v, u, 1.0)])
                .collect(),
        );
        Ok(Self {
            num_nodes: n,
            structural,
            proximity,
            meta: GraphMeta {
                mode: Some(cfg.mode),
                budget_per_side: budget,
                weight_floor: cfg.weight_floor,
            },
        })
    }

    pub fn from_parts(
        num_nodes: usize,
        structural: Vec<RelationEdges>,
        proximity: RelationEdges,
        meta: GraphMeta,
    ) -> Self {
        Self {
            num_nodes,
            structural,
            proximity,
            meta,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn max_tau(&self) -> usize {
        self.structural.len().saturating_sub(1)
    }

    pub fn meta(&self) -> &GraphMeta {
        &self.meta
    }

    /// Structural relations `0..=T`, then `p`.
    pub fn relations(&self) -> Vec<Relation> {
        (0..self.structural.len())
            .map(Relation::Structural)
            .chain(std::iter::once(Relation::Proximity))
            .collect()
    }

    pub fn num_relations(&self) -> usize {
        self.structural.len() + 1
    }

    pub fn edges(&self, rel: Relation) -> &RelationEdges {
        match rel {
            Relation::Structural(t) => &self.structural[t],
            Relation::Proximity => &self.proximity,
        }
    }

    /// Relation edges in `relations()` order.
    pub fn relation_edges(&self) -> impl Iterator<Item = &RelationEdges> {
        self.structural.iter().chain(std::iter::once(&self.proximity))
    }

    pub fn num_edges(&self) -> usize {
        self.relation_edges().map(RelationEdges::num_edges).sum()
    }

    /// Same relation slots with the excluded relations emptied.
    pub fn restricted(&self, set: RelationSet) -> Self {
        let keep = |rel: Relation, e: &RelationEdges| {
            if set.includes(rel) {
                e.clone()
            } else {
                RelationEdges::empty(self.num_nodes)
            }
        };
        Self {
            num_nodes: self.num_nodes,
            structural: self
                .structural
                .iter()
                .enumerate()
                .map(|(t, e)| keep(Relation::Structural(t), e))
                .collect(),
            proximity: keep(Relation::Proximity, &self.proximity),
            meta: self.meta.clone(),
        }
    }

    /// Copy with every weight replaced by `f(relation, weight)`.
    pub fn map_weights(&self, f: impl Fn(Relation, f64) -> f64) -> Self {
        let map = |rel: Relation, e: &RelationEdges| RelationEdges {
            offsets: e.offsets.clone(),
            targets: e.targets.clone(),
            weights: e.weights.iter().map(|&w| f(rel, w)).collect(),
        };
        Self {
            num_nodes: self.num_nodes,
            structural: self
                .structural
                .iter()
                .enumerate()
                .map(|(t, e)| map(Relation::Structural(t), e))
                .collect(),
            proximity: map(Relation::Proximity, &self.proximity),
            meta: self.meta.clone(),
        }
    }

    /// All relations collapsed into one weighted graph, parallel weights summed.
    pub fn union_graph(&self) -> WeightedGraph {
        let triples = self
            .relation_edges()
            .flat_map(RelationEdges::iter)
            .filter(|&(_, _, w)| w > 0.0)
            .collect();
        WeightedGraph::from_directed(self.num_nodes, triples)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        out.push_str("# mixgraph computation graph\n");
        out.push_str(&format!("# num_nodes={}\n", self.num_nodes));
        out.push_str(&format!("# T={}\n", self.max_tau()));
        if let Some(mode) = self.meta.mode {
            out.push_str(&format!("# mode={mode}\n"));
        }
        if let Some(b) = self.meta.budget_per_side {
            out.push_str(&format!("# budget={b}\n"));
        }
        out.push_str(&format!("# floor={}\n", format_weight(self.meta.weight_floor)));
        out.push_str("src\tdst\trel\tweight\n");
        for rel in self.relations() {
            for (u, v, w) in self.edges(rel).iter() {
                out.push_str(&format!("{u}\t{v}\t{rel}\t{}\n", format_weight(w)));
            }
        }
        out
    }

    pub fn serialize(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        std::io::Write::write_all(&mut f, self.to_tsv().as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn deserialize(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_tsv(&text, path)
    }

    pub fn from_tsv(text: &str, origin: &Path) -> Result<Self> {
        let mut meta_kv: BTreeMap<String, String> = BTreeMap::new();
        let mut seen_header = false;
        let mut rows: Vec<(Relation, usize, usize, f64)> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let no = i + 1;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            if let Some(c) = line.strip_prefix('#') {
                if let Some((k, v)) = c.trim().split_once('=') {
                    meta_kv.insert(k.trim().to_string(), v.trim().to_string());
                }
                continue;
            }
            if !seen_header {
                if line != "src\tdst\trel\tweight" {
                    return Err(Error::parse(
                        origin,
                        no,
                        "expected header 'src\\tdst\\trel\\tweight'",
                    ));
                }
                seen_header = true;
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 4 {
                return Err(Error::parse(origin, no, "expected 4 tab-separated columns"));
            }
            let node = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| Error::parse(origin, no, format!("invalid node id '{s}'")))
            };
            let (u, v) = (node(cols[0])?, node(cols[1])?);
            let rel: Relation = cols[2].parse().map_err(|e: String| Error::parse(origin, no, e))?;
            let w: f64 = cols[3]
                .parse()
                .map_err(|_| Error::parse(origin, no, format!("invalid weight '{}'", cols[3])))?;
            if !(w > 0.0 && w <= 1.0) {
                return Err(Error::parse(origin, no, format!("weight {w} outside (0, 1]")));
            }
            rows.push((rel, u, v, w));
        }
        if !seen_header {
            return Err(Error::parse(origin, 1, "missing header row"));
        }
        let meta_num = |key: &str| -> Result<Option<usize>> {
            meta_kv
                .get(key)
                .map(|v| {
                    v.parse::<usize>()
                        .map_err(|_| Error::parse(origin, 0, format!("invalid metadata {key}={v}")))
                })
                .transpose()
        };
        let max_id = rows.iter().map(|&(_, u, v, _)| u.max(v) + 1).max().unwrap_or(0);
        let num_nodes = meta_num("num_nodes")?.unwrap_or(0).max(max_id);
        let max_rel = rows
            .iter()
            .filter_map(|r| match r.0 {
                Relation::Structural(t) => Some(t),
                Relation::Proximity => None,
            })
            .max();
        let max_tau = match (meta_num("T")?, max_rel) {
            (Some(t), Some(r)) if r > t => {
                return Err(Error::parse(origin, 0, format!("relation {r} exceeds T={t}")))
            }
            (Some(t), _) => t,
            (None, Some(r)) => r,
            (None, None) => 0,
        };
        let mut structural: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); max_tau + 1];
        let mut proximity = Vec::new();
        for (rel, u, v, w) in rows {
            match rel {
                Relation::Structural(t) => structural[t].push((u, v, w)),
                Relation::Proximity => proximity.push((u, v, w)),
            }
        }
        let meta = GraphMeta {
            mode: meta_kv.get("mode").and_then(|m| m.parse().ok()),
            budget_per_side: meta_num("budget")?,
            weight_floor: meta_kv.get("floor").and_then(|f| f.parse().ok()).unwrap_or(0.0),
        };
        Ok(Self {
            num_nodes,
            structural: structural
                .into_iter()
                .map(|t| RelationEdges::from_triples(num_nodes, t))
                .collect(),
            proximity: RelationEdges::from_triples(num_nodes, proximity),
            meta,
        })
    }
}

/// Shortest decimal form with 12 significant digits.
pub fn format_weight(w: f64) -> String {
    if w == 0.0 || !w.is_finite() {
        return w.to_string();
    }
    let sci = format!("{w:.11e}");
    let (_, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        let s = format!("{w:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        let (mant, _) = sci.split_once('e').unwrap();
        let mant = if mant.contains('.') {
            mant.trim_end_matches('0').trim_end_matches('.')
        } else {
            mant
        };
        format!("{mant}e{exp}")
    }
}

/// Local assortativity before and after the transformation for the nodes
/// that were disassortative (`r_local < 0`) in the input graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftReport {
    pub nodes: Vec<ShiftEntry>,
    pub mean_before: Option<f64>,
    pub mean_after: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftEntry {
    pub node: usize,
    pub r_before: f64,
    pub r_after: Option<f64>,
}

impl ShiftReport {
    pub fn mean_delta(&self) -> Option<f64> {
        Some(self.mean_after? - self.mean_before?)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("node,r_before,r_after\n");
        for e in &self.nodes {
            let after = e.r_after.map_or(String::new(), |r| r.to_string());
            out.push_str(&format!("{},{},{}\n", e.node, e.r_before, after));
        }
        out
    }
}

/// Recomputes `r_local` on the union of all relations of `c` (weighted
/// degrees, weighted global marginals) for every node with `r_local < 0` in `g`.
pub fn distribution_shift(
    g: &LabeledGraph,
    c: &ComputationGraph,
    weighting: Weighting,
) -> Result<ShiftReport> {
    if c.num_nodes() != g.num_nodes() {
        return Err(Error::DimensionMismatch {
            expected: g.num_nodes(),
            got: c.num_nodes(),
        });
    }
    let before = LocalMixing::new(g, g.labels(), weighting)?.profile_values()?;
    let targets: Vec<(usize, f64)> = before
        .iter()
        .filter_map(|n| n.r_local.filter(|&r| r < 0.0).map(|r| (n.node, r)))
        .collect();
    let union = c.union_graph();
    let after_lm = LocalMixing::new(&union, g.labels(), weighting)?;
    let after = par::map_slice(&targets, |&(u, _)| match after_lm.local_assortativity(u) {
        Ok(r) => Ok(Some(r)),
        Err(e) if e.is_numerical() => Err(e),
        Err(_) => Ok(None),
    });
    let mut nodes = Vec::with_capacity(targets.len());
    for (&(node, r_before), r_after) in targets.iter().zip(after) {
        nodes.push(ShiftEntry {
            node,
            r_before,
            r_after: r_after?,
        });
    }
    let mean = |vals: Vec<f64>| {
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    };
    let paired: Vec<&ShiftEntry> = nodes.iter().filter(|e| e.r_after.is_some()).collect();
    Ok(ShiftReport {
        mean_before: mean(paired.iter().map(|e| e.r_before).collect()),
        mean_after: mean(paired.iter().map(|e| e.r_after.unwrap()).collect()),
        nodes,
    })
}
