//! Labeled undirected graphs, file ingestion and neighborhood queries.

use std::collections::{BTreeSet, VecDeque};
use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

/// Undirected simple graph with optional per-node class labels and dense features.
///
/// Immutable after construction. Node ids are `0..num_nodes`; adjacency lists
/// are sorted and free of duplicates and self-loops.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledGraph {
    adjacency: Vec<Vec<usize>>,
    edges: Vec<(usize, usize)>,
    labels: Vec<Option<usize>>,
    features: Option<Array2<f64>>,
}

impl LabeledGraph {
    /// Builds a graph from raw edge pairs. Pairs are symmetrized and deduplicated;
    /// self-loops are dropped with a warning.
    pub fn from_edges(num_nodes: usize, raw_edges: &[(usize, usize)]) -> Result<Self> {
        let mut set = BTreeSet::new();
        let mut loops = 0usize;
        for &(u, v) in raw_edges {
            for x in [u, v] {
                if x >= num_nodes {
                    return Err(Error::NodeOutOfRange { node: x, num_nodes });
                }
            }
            if u == v {
                loops += 1;
                continue;
            }
            set.insert((u.min(v), u.max(v)));
        }
        if loops > 0 {
            log::warn!("dropped {loops} self-loop(s)");
        }
        let edges: Vec<(usize, usize)> = set.into_iter().collect();
        let mut adjacency = vec![Vec::new(); num_nodes];
        for &(u, v) in &edges {
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(Self {
            adjacency,
            edges,
            labels: vec![None; num_nodes],
            features: None,
        })
    }

    pub fn with_labels(mut self, labels: Vec<Option<usize>>) -> Result<Self> {
        if labels.len() != self.num_nodes() {
            return Err(Error::DimensionMismatch {
                expected: self.num_nodes(),
                got: labels.len(),
            });
        }
        self.labels = labels;
        Ok(self)
    }

    pub fn with_features(mut self, features: Array2<f64>) -> Result<Self> {
        if features.nrows() != self.num_nodes() {
            return Err(Error::DimensionMismatch {
                expected: self.num_nodes(),
                got: features.nrows(),
            });
        }
        self.features = Some(features);
        Ok(self)
    }

    pub fn num_nodes(&self) -> usize {
        self.adjacency.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Undirected edges as `(u, v)` with `u < v`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.adjacency[u]
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    pub fn label(&self, u: usize) -> Option<usize> {
        self.labels[u]
    }

    /// One more than the largest label present (0 when unlabeled).
    pub fn num_classes(&self) -> usize {
        self.labels.iter().flatten().max().map_or(0, |&m| m + 1)
    }

    pub fn features(&self) -> Option<&Array2<f64>> {
        self.features.as_ref()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.as_ref().map_or(0, |f| f.ncols())
    }

    pub fn check_node(&self, u: usize) -> Result<()> {
        if u < self.num_nodes() {
            Ok(())
        } else {
            Err(Error::NodeOutOfRange {
                node: u,
                num_nodes: self.num_nodes(),
            })
        }
    }

    pub fn degree(&self, u: usize) -> Result<usize> {
        self.check_node(u)?;
        Ok(self.adjacency[u].len())
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adjacency.iter().map(Vec::len).collect()
    }

    /// Nodes at exactly `tau` hops from `center`.
    pub fn hop_ring(&self, center: usize, tau: usize) -> Result<HopRing> {
        self.check_node(center)?;
        let mut rings = self.bfs_rings(center, tau);
        let members = if rings.len() > tau {
            rings.swap_remove(tau)
        } else {
            Vec::new()
        };
        Ok(HopRing { center, tau, members })
    }

    /// BFS shells `0..=max_tau` around `center`. Stops early once a shell is empty,
    /// so the result may be shorter than `max_tau + 1`. Members are sorted.
    pub fn bfs_rings(&self, center: usize, max_tau: usize) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.num_nodes()];
        seen[center] = true;
        let mut rings = vec![vec![center]];
        while rings.len() <= max_tau {
            let mut next = Vec::new();
            for &u in rings.last().unwrap() {
                for &v in &self.adjacency[u] {
                    if !seen[v] {
                        seen[v] = true;
                        next.push(v);
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            next.sort_unstable();
            rings.push(next);
        }
        rings
    }

    /// All nodes reachable from `u`, including `u`, sorted.
    pub fn connected_component(&self, u: usize) -> Result<Vec<usize>> {
        self.check_node(u)?;
        Ok(component_of(self, u))
    }

    /// Writes the edge list in the same format `load_graph` reads.
    pub fn write_edge_list(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for &(u, v) in &self.edges {
            out.push_str(&format!("{u} {v}\n"));
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn write_labels(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for (u, l) in self.labels.iter().enumerate() {
            if let Some(l) = l {
                out.push_str(&format!("{u} {l}\n"));
            }
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn write_features(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        if let Some(x) = &self.features {
            for (u, row) in x.rows().into_iter().enumerate() {
                let mut line = u.to_string();
                for v in row {
                    line.push(' ');
                    line.push_str(&v.to_string());
                }
                writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// BFS shell at an exact hop distance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HopRing {
    pub center: usize,
    pub tau: usize,
    pub members: Vec<usize>,
}

/// A graph a random walker can traverse: weighted, undirected adjacency.
pub trait WalkGraph: Sync {
    fn node_count(&self) -> usize;

    fn walk_neighbors(&self, u: usize) -> impl Iterator<Item = (usize, f64)> + '_;

    /// Sum of incident edge weights (degree for unweighted graphs).
    fn strength(&self, u: usize) -> f64;
}

impl WalkGraph for LabeledGraph {
    fn node_count(&self) -> usize {
        self.num_nodes()
    }

    fn walk_neighbors(&self, u: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.adjacency[u].iter().map(|&v| (v, 1.0))
    }

    fn strength(&self, u: usize) -> f64 {
        self.adjacency[u].len() as f64
    }
}

/// Symmetric weighted graph in CSR layout.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    offsets: Vec<usize>,
    targets: Vec<usize>,
    weights: Vec<f64>,
    strengths: Vec<f64>,
}

impl WeightedGraph {
    /// Builds from directed `(src, dst, weight)` triples. Parallel triples are summed;
    /// the caller supplies both directions of every undirected edge.
    pub fn from_directed(num_nodes: usize, mut triples: Vec<(usize, usize, f64)>) -> Self {
        triples.sort_by_key(|t| (t.0, t.1));
        let mut offsets = vec![0usize; num_nodes + 1];
        let mut targets = Vec::with_capacity(triples.len());
        let mut weights: Vec<f64> = Vec::with_capacity(triples.len());
        let mut last: Option<(usize, usize)> = None;
        for (s, d, w) in triples {
            if last == Some((s, d)) {
                *weights.last_mut().unwrap() += w;
                continue;
            }
            last = Some((s, d));
            offsets[s + 1] += 1;
            targets.push(d);
            weights.push(w);
        }
        for i in 0..num_nodes {
            offsets[i + 1] += offsets[i];
        }
        let strengths = (0..num_nodes)
            .map(|u| weights[offsets[u]..offsets[u + 1]].iter().sum())
            .collect();
        Self {
            offsets,
            targets,
            weights,
            strengths,
        }
    }

    pub fn num_entries(&self) -> usize {
        self.targets.len()
    }
}

impl WalkGraph for WeightedGraph {
    fn node_count(&self) -> usize {
        self.strengths.len()
    }

    fn walk_neighbors(&self, u: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.offsets[u]..self.offsets[u + 1];
        self.targets[range.clone()]
            .iter()
            .copied()
            .zip(self.weights[range].iter().copied())
    }

    fn strength(&self, u: usize) -> f64 {
        self.strengths[u]
    }
}

/// Reachable set over positive-weight edges, sorted.
pub fn component_of<G: WalkGraph>(graph: &G, start: usize) -> Vec<usize> {
    let mut seen = vec![false; graph.node_count()];
    seen[start] = true;
    let mut queue = VecDeque::from([start]);
    let mut out = vec![start];
    while let Some(u) = queue.pop_front() {
        for (v, w) in graph.walk_neighbors(u) {
            if w > 0.0 && !seen[v] {
                seen[v] = true;
                out.push(v);
                queue.push_back(v);
            }
        }
    }
    out.sort_unstable();
    out
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_id(path: &Path, line: usize, tok: &str) -> Result<usize> {
    let id: i64 = tok
        .parse()
        .map_err(|_| Error::parse(path, line, format!("invalid node id '{tok}'")))?;
    if id < 0 {
        return Err(Error::parse(path, line, format!("negative node id {id}")));
    }
    Ok(id as usize)
}

/// Content lines with 1-based line numbers; blank and `#` lines skipped.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

pub(crate) fn parse_edge_file(path: &Path) -> Result<Vec<(usize, usize)>> {
    let text = read_text(path)?;
    let mut edges = Vec::new();
    for (no, line) in content_lines(&text) {
        let mut toks = line.split_whitespace();
        let (Some(a), Some(b)) = (toks.next(), toks.next()) else {
            return Err(Error::parse(path, no, "expected 'u v'"));
        };
        if toks.next().is_some() {
            return Err(Error::parse(path, no, "expected exactly two ids"));
        }
        edges.push((parse_id(path, no, a)?, parse_id(path, no, b)?));
    }
    Ok(edges)
}

pub(crate) fn parse_label_file(path: &Path) -> Result<Vec<(usize, usize)>> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (no, line) in content_lines(&text) {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 2 {
            return Err(Error::parse(path, no, "expected 'u label_id'"));
        }
        let u = parse_id(path, no, toks[0])?;
        let l: usize = toks[1]
            .parse()
            .map_err(|_| Error::parse(path, no, format!("invalid label '{}'", toks[1])))?;
        out.push((u, l));
    }
    Ok(out)
}

pub(crate) fn parse_feature_file(path: &Path) -> Result<Vec<(usize, Vec<f64>)>> {
    let text = read_text(path)?;
    let mut out: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut dim = None;
    for (no, line) in content_lines(&text) {
        let mut toks = line.split_whitespace();
        let u = parse_id(path, no, toks.next().unwrap())?;
        let row = toks
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| Error::parse(path, no, format!("invalid feature value '{t}'")))
            })
            .collect::<Result<Vec<f64>>>()?;
        match dim {
            None => dim = Some(row.len()),
            Some(d) if d != row.len() => {
                return Err(Error::parse(
                    path,
                    no,
                    format!("expected {d} feature values, found {}", row.len()),
                ))
            }
            _ => {}
        }
        out.push((u, row));
    }
    Ok(out)
}

/// Loads an edge list plus optional label and feature files.
///
/// Ids seen only in the label or feature file extend the node set. Nodes
/// without a feature row get a zero vector.
pub fn load_graph(
    edge_path: &Path,
    label_path: Option<&Path>,
    feature_path: Option<&Path>,
) -> Result<LabeledGraph> {
    let edges = parse_edge_file(edge_path)?;
    let labels = label_path.map(parse_label_file).transpose()?;
    let features = feature_path.map(parse_feature_file).transpose()?;

    let mut num_nodes = edges.iter().map(|&(u, v)| u.max(v) + 1).max().unwrap_or(0);
    if let Some(ls) = &labels {
        num_nodes = num_nodes.max(ls.iter().map(|&(u, _)| u + 1).max().unwrap_or(0));
    }
    if let Some(fs) = &features {
        num_nodes = num_nodes.max(fs.iter().map(|(u, _)| u + 1).max().unwrap_or(0));
    }

    let mut graph = LabeledGraph::from_edges(num_nodes, &edges)?;
    if let Some(ls) = labels {
        let mut per_node = vec![None; num_nodes];
        for (u, l) in ls {
            per_node[u] = Some(l);
        }
        graph = graph.with_labels(per_node)?;
    }
    if let Some(fs) = features {
        let dim = fs.first().map_or(0, |(_, r)| r.len());
        let mut x = Array2::zeros((num_nodes, dim));
        for (u, row) in fs {
            for (j, v) in row.into_iter().enumerate() {
                x[[u, j]] = v;
            }
        }
        graph = graph.with_features(x)?;
    }
    Ok(graph)
}

/// Per-node labels; absent rows stay `None`. Without `num_nodes` the length
/// is one past the largest id in the file.
pub fn read_labels(path: &Path, num_nodes: Option<usize>) -> Result<Vec<Option<usize>>> {
    let rows = parse_label_file(path)?;
    let num_nodes = num_nodes.unwrap_or_else(|| rows.iter().map(|&(u, _)| u + 1).max().unwrap_or(0));
    let mut out = vec![None; num_nodes];
    for (u, l) in rows {
        if u >= num_nodes {
            return Err(Error::NodeOutOfRange { node: u, num_nodes });
        }
        out[u] = Some(l);
    }
    Ok(out)
}

/// Feature matrix with `num_nodes` rows; absent rows stay zero.
pub fn read_features(path: &Path, num_nodes: usize) -> Result<Array2<f64>> {
    let rows = parse_feature_file(path)?;
    let dim = rows.first().map_or(0, |(_, r)| r.len());
    let mut x = Array2::zeros((num_nodes, dim));
    for (u, row) in rows {
        if u >= num_nodes {
            return Err(Error::NodeOutOfRange { node: u, num_nodes });
        }
        for (j, v) in row.into_iter().enumerate() {
            x[[u, j]] = v;
        }
    }
    Ok(x)
}
