//! Loaders for public benchmark layouts. Nothing is downloaded; files are
//! expected under a root directory:
//!
//! ```text
//! <root>/<name>/out1_graph_edges.txt          web-page graphs (cornell, texas, ...)
//! <root>/<name>/out1_node_feature_label.txt
//! <root>/<name>/splits/<name>_split_0.6_0.2_<i>.npz   optional, i = 0..9
//! <root>/<name>/<name>.edgelist                air-traffic graphs (brazil-airports, ...)
//! <root>/<name>/labels-<name>.txt
//! <root>/<name>/<name>.content                 citation graphs (cora, citeseer)
//! <root>/<name>/<name>.cites
//! ```

use std::collections::{BTreeMap, HashMap};
use std::io::Read;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::LabeledGraph;
use crate::wrgnn::Split;

/// Environment variable naming the default data root.
pub const DATA_ROOT_ENV: &str = "MIXGRAPH_DATA";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Layout {
    WebPages,
    AirTraffic,
    Citation,
}

/// Published node/edge/class counts and global assortativity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceStats {
    pub nodes: usize,
    pub edges: usize,
    pub classes: usize,
    pub r_global: f64,
}

const KNOWN: &[(&str, Layout, ReferenceStats)] = &[
    (
        "chameleon",
        Layout::WebPages,
        ReferenceStats {
            nodes: 2277,
            edges: 31421,
            classes: 5,
            r_global: 0.0331,
        },
    ),
    (
        "squirrel",
        Layout::WebPages,
        ReferenceStats {
            nodes: 5201,
            edges: 198493,
            classes: 5,
            r_global: 0.0070,
        },
    ),
    (
        "film",
        Layout::WebPages,
        ReferenceStats {
            nodes: 7600,
            edges: 26752,
            classes: 5,
            r_global: 0.0047,
        },
    ),
    (
        "cornell",
        Layout::WebPages,
        ReferenceStats {
            nodes: 183,
            edges: 280,
            classes: 5,
            r_global: -0.0706,
        },
    ),
    (
        "texas",
        Layout::WebPages,
        ReferenceStats {
            nodes: 183,
            edges: 295,
            classes: 5,
            r_global: -0.2587,
        },
    ),
    (
        "wisconsin",
        Layout::WebPages,
        ReferenceStats {
            nodes: 251,
            edges: 466,
            classes: 5,
            r_global: -0.1524,
        },
    ),
    (
        "cora",
        Layout::Citation,
        ReferenceStats {
            nodes: 2708,
            edges: 5429,
            classes: 7,
            r_global: 0.7710,
        },
    ),
    (
        "citeseer",
        Layout::Citation,
        ReferenceStats {
            nodes: 3327,
            edges: 4732,
            classes: 6,
            r_global: 0.6713,
        },
    ),
    (
        "brazil-airports",
        Layout::AirTraffic,
        ReferenceStats {
            nodes: 131,
            edges: 1038,
            classes: 4,
            r_global: 0.0116,
        },
    ),
    (
        "europe-airports",
        Layout::AirTraffic,
        ReferenceStats {
            nodes: 399,
            edges: 5995,
            classes: 4,
            r_global: -0.0737,
        },
    ),
    (
        "usa-airports",
        Layout::AirTraffic,
        ReferenceStats {
            nodes: 1190,
            edges: 13599,
            classes: 4,
            r_global: 0.2629,
        },
    ),
];

pub fn known_benchmarks() -> impl Iterator<Item = &'static str> {
    KNOWN.iter().map(|k| k.0)
}

pub fn layout_of(name: &str) -> Option<Layout> {
    KNOWN.iter().find(|k| k.0 == name).map(|k| k.1)
}

pub fn reference_stats(name: &str) -> Option<ReferenceStats> {
    KNOWN.iter().find(|k| k.0 == name).map(|k| k.2)
}

/// `$MIXGRAPH_DATA` if set.
pub fn default_root() -> Option<PathBuf> {
    std::env::var_os(DATA_ROOT_ENV).map(PathBuf::from)
}

#[derive(Debug, Clone)]
pub struct Benchmark {
    pub name: String,
    pub graph: LabeledGraph,
    /// Published fixed splits; empty when the source has none.
    pub splits: Vec<Split>,
    /// Non-comment edge rows in the source file, before deduplication.
    pub raw_edge_rows: usize,
}

/// True when the files `load_benchmark` needs are present.
pub fn is_available(name: &str, root: &Path) -> bool {
    required_files(name, root).is_some_and(|files| files.iter().all(|f| f.is_file()))
}

fn required_files(name: &str, root: &Path) -> Option<Vec<PathBuf>> {
    let dir = root.join(name);
    Some(match layout_of(name)? {
        Layout::WebPages => vec![
            dir.join("out1_graph_edges.txt"),
            dir.join("out1_node_feature_label.txt"),
        ],
        Layout::AirTraffic => vec![
            dir.join(format!("{name}.edgelist")),
            dir.join(format!("labels-{name}.txt")),
        ],
        Layout::Citation => vec![
            dir.join(format!("{name}.content")),
            dir.join(format!("{name}.cites")),
        ],
    })
}

pub fn load_benchmark(name: &str, root: &Path) -> Result<Benchmark> {
    let layout = layout_of(name).ok_or_else(|| {
        Error::Dataset(format!(
            "unknown benchmark '{name}'; known: {}",
            known_benchmarks().collect::<Vec<_>>().join(", ")
        ))
    })?;
    let files = required_files(name, root).expect("known name");
    if let Some(missing) = files.iter().find(|f| !f.is_file()) {
        return Err(Error::Dataset(format!(
            "missing {}; expected layout for '{name}': {}",
            missing.display(),
            files
                .iter()
                .map(|f| f.display().to_string())
                .collect::<Vec<_>>()
                .join(", ")
        )));
    }
    match layout {
        Layout::WebPages => load_web_pages(name, &files[0], &files[1], &root.join(name).join("splits")),
        Layout::AirTraffic => load_air_traffic(name, &files[0], &files[1]),
        Layout::Citation => load_citation(name, &files[0], &files[1]),
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn rows(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn int(path: &Path, line: usize, tok: Option<&str>) -> Result<usize> {
    let tok = tok.ok_or_else(|| Error::parse(path, line, "missing field"))?;
    tok.parse().map_err(|_| {
        Error::parse(
            path,
            line,
            format!("expected a non-negative integer, got '{tok}'"),
        )
    })
}

fn load_web_pages(name: &str, edge_path: &Path, node_path: &Path, split_dir: &Path) -> Result<Benchmark> {
    let node_text = read(node_path)?;
    let mut nodes: Vec<(usize, Vec<f64>, usize)> = Vec::new();
    for (no, line) in rows(&node_text) {
        if line.starts_with("node_id") {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(Error::parse(
                node_path,
                no,
                "expected 'id<TAB>f1,f2,...<TAB>label'",
            ));
        }
        let id = int(node_path, no, Some(cols[0]))?;
        let feats = cols[1]
            .split(',')
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::parse(node_path, no, format!("bad feature '{f}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        let label = int(node_path, no, Some(cols[2]))?;
        nodes.push((id, feats, label));
    }
    let n = nodes.iter().map(|r| r.0 + 1).max().unwrap_or(0);
    let dim = nodes.first().map_or(0, |r| r.1.len());
    let mut x = Array2::zeros((n, dim));
    let mut labels = vec![None; n];
    for (id, feats, label) in nodes {
        if feats.len() != dim {
            return Err(Error::Dataset(format!(
                "{}: node {id} has {} features, expected {dim}",
                node_path.display(),
                feats.len()
            )));
        }
        x.row_mut(id).assign(&ndarray::Array1::from(feats));
        labels[id] = Some(label);
    }
    let edge_text = read(edge_path)?;
    let mut edges = Vec::new();
    for (no, line) in rows(&edge_text) {
        if line.starts_with("node_id") {
            continue;
        }
        let mut t = line.split_whitespace();
        edges.push((int(edge_path, no, t.next())?, int(edge_path, no, t.next())?));
    }
    let raw_edge_rows = edges.len();
    let n = n.max(edges.iter().map(|&(u, v)| u.max(v) + 1).max().unwrap_or(0));
    labels.resize(n, None);
    if x.nrows() < n {
        let mut grown = Array2::zeros((n, dim));
        grown.slice_mut(ndarray::s![..x.nrows(), ..]).assign(&x);
        x = grown;
    }
    let graph = LabeledGraph::from_edges(n, &edges)?
        .with_labels(labels)?
        .with_features(x)?;
    let splits = load_npz_splits(name, split_dir, n)?;
    Ok(Benchmark {
        name: name.to_string(),
        graph,
        splits,
        raw_edge_rows,
    })
}

fn load_npz_splits(name: &str, dir: &Path, n: usize) -> Result<Vec<Split>> {
    let mut splits = Vec::new();
    for i in 0.. {
        let path = dir.join(format!("{name}_split_0.6_0.2_{i}.npz"));
        if !path.is_file() {
            break;
        }
        let arrays = read_npz(&path)?;
        let mask = |key: &str| -> Result<Vec<usize>> {
            let m = arrays
                .get(key)
                .ok_or_else(|| Error::Dataset(format!("{}: no array '{key}'", path.display())))?;
            if m.len() != n {
                return Err(Error::Dataset(format!(
                    "{}: '{key}' has length {}, graph has {n} nodes",
                    path.display(),
                    m.len()
                )));
            }
            Ok(m.iter()
                .enumerate()
                .filter(|(_, &b)| b != 0.0)
                .map(|(u, _)| u)
                .collect())
        };
        splits.push(Split {
            train: mask("train_mask")?,
            val: mask("val_mask")?,
            test: mask("test_mask")?,
        });
    }
    Ok(splits)
}

/// Reads every 1-d array of a `.npz` archive as `f64`.
pub fn read_npz(path: &Path) -> Result<BTreeMap<String, Vec<f64>>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut archive = zip::ZipArchive::new(file)
        .map_err(|e| Error::Dataset(format!("{}: not a zip archive: {e}", path.display())))?;
    let mut out = BTreeMap::new();
    for i in 0..archive.len() {
        let mut entry = archive
            .by_index(i)
            .map_err(|e| Error::Dataset(format!("{}: {e}", path.display())))?;
        let key = entry.name().trim_end_matches(".npy").to_string();
        let mut bytes = Vec::new();
        entry.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
        let values =
            parse_npy(&bytes).map_err(|m| Error::Dataset(format!("{}: {key}: {m}", path.display())))?;
        out.insert(key, values);
    }
    Ok(out)
}

/// Minimal `.npy` reader: C-order 1-d arrays of bool, (u)int8/32/64 or float32/64.
pub fn parse_npy(bytes: &[u8]) -> std::result::Result<Vec<f64>, String> {
    if bytes.len() < 10 || &bytes[..6] != b"\x93NUMPY" {
        return Err("missing npy magic".into());
    }
    let (header_len, start) = match bytes[6] {
        1 => (u16::from_le_bytes([bytes[8], bytes[9]]) as usize, 10),
        2 | 3 => {
            if bytes.len() < 12 {
                return Err("truncated header".into());
            }
            (
                u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize,
                12,
            )
        }
        v => return Err(format!("unsupported npy version {v}")),
    };
    let header = std::str::from_utf8(bytes.get(start..start + header_len).ok_or("truncated header")?)
        .map_err(|_| "header is not utf-8")?;
    let field = |key: &str| -> std::result::Result<&str, String> {
        let at = header.find(key).ok_or(format!("header lacks {key}"))?;
        Ok(header[at + key.len()..].trim_start_matches([':', ' ']))
    };
    let descr = field("'descr'")?;
    let descr = descr
        .strip_prefix('\'')
        .and_then(|d| d.split('\'').next())
        .ok_or("bad descr")?;
    if field("'fortran_order'")?.starts_with("True") {
        return Err("fortran-order arrays are not supported".into());
    }
    let shape = field("'shape'")?;
    let shape = &shape[1..shape.find(')').ok_or("bad shape")?];
    let dims: Vec<usize> = shape
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| format!("bad shape entry '{s}'")))
        .collect::<std::result::Result<_, _>>()?;
    let count: usize = dims.iter().product();
    let data = &bytes[start + header_len..];
    let (width, conv): (usize, fn(&[u8]) -> f64) = match descr {
        "|b1" | "|u1" => (1, |b| b[0] as f64),
        "|i1" => (1, |b| b[0] as i8 as f64),
        "<i4" => (4, |b| i32::from_le_bytes(b.try_into().unwrap()) as f64),
        "<u4" => (4, |b| u32::from_le_bytes(b.try_into().unwrap()) as f64),
        "<i8" => (8, |b| i64::from_le_bytes(b.try_into().unwrap()) as f64),
        "<u8" => (8, |b| u64::from_le_bytes(b.try_into().unwrap()) as f64),
        "<f4" => (4, |b| f32::from_le_bytes(b.try_into().unwrap()) as f64),
        "<f8" => (8, |b| f64::from_le_bytes(b.try_into().unwrap())),
        other => return Err(format!("unsupported dtype {other}")),
    };
    if data.len() < count * width {
        return Err("truncated data".into());
    }
    Ok(data[..count * width].chunks_exact(width).map(conv).collect())
}

/// Node ids are remapped to `0..n` in increasing original order.
fn load_air_traffic(name: &str, edge_path: &Path, label_path: &Path) -> Result<Benchmark> {
    let label_text = read(label_path)?;
    let mut raw_labels: BTreeMap<u64, usize> = BTreeMap::new();
    for (no, line) in rows(&label_text) {
        let mut t = line.split_whitespace();
        let (Some(a), Some(b)) = (t.next(), t.next()) else {
            return Err(Error::parse(label_path, no, "expected 'node label'"));
        };
        if a == "node" {
            continue;
        }
        let id: u64 = a
            .parse()
            .map_err(|_| Error::parse(label_path, no, format!("bad node id '{a}'")))?;
        let label: usize = b
            .parse()
            .map_err(|_| Error::parse(label_path, no, format!("bad label '{b}'")))?;
        raw_labels.insert(id, label);
    }
    let edge_text = read(edge_path)?;
    let mut raw_edges = Vec::new();
    for (no, line) in rows(&edge_text) {
        let mut t = line.split_whitespace();
        let mut next = || -> Result<u64> {
            let tok = t
                .next()
                .ok_or_else(|| Error::parse(edge_path, no, "expected 'u v'"))?;
            tok.parse()
                .map_err(|_| Error::parse(edge_path, no, format!("bad node id '{tok}'")))
        };
        raw_edges.push((next()?, next()?));
    }
    let mut ids: Vec<u64> = raw_labels.keys().copied().collect();
    ids.extend(raw_edges.iter().flat_map(|&(u, v)| [u, v]));
    ids.sort_unstable();
    ids.dedup();
    let index: HashMap<u64, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let edges: Vec<(usize, usize)> = raw_edges.iter().map(|(u, v)| (index[u], index[v])).collect();
    let labels = ids.iter().map(|id| raw_labels.get(id).copied()).collect();
    let graph = LabeledGraph::from_edges(ids.len(), &edges)?.with_labels(labels)?;
    Ok(Benchmark {
        name: name.to_string(),
        graph,
        splits: Vec::new(),
        raw_edge_rows: raw_edges.len(),
    })
}

/// `.content` rows are `paper_id f_1 ... f_d class`; `.cites` rows are
/// `cited citing`. Citations to papers missing from `.content` are skipped.
fn load_citation(name: &str, content_path: &Path, cites_path: &Path) -> Result<Benchmark> {
    let content = read(content_path)?;
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut feats: Vec<Vec<f64>> = Vec::new();
    let mut class_names: Vec<String> = Vec::new();
    let mut raw_labels = Vec::new();
    for (no, line) in rows(&content) {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() < 2 {
            return Err(Error::parse(content_path, no, "expected 'id features... class'"));
        }
        let f = toks[1..toks.len() - 1]
            .iter()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| Error::parse(content_path, no, format!("bad feature '{t}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        if feats.first().is_some_and(|first| first.len() != f.len()) {
            return Err(Error::parse(content_path, no, "ragged feature row"));
        }
        let class = toks[toks.len() - 1].to_string();
        if !class_names.contains(&class) {
            class_names.push(class.clone());
        }
        if index.insert(toks[0].to_string(), feats.len()).is_some() {
            return Err(Error::parse(
                content_path,
                no,
                format!("duplicate id '{}'", toks[0]),
            ));
        }
        feats.push(f);
        raw_labels.push(class);
    }
    class_names.sort();
    let labels = raw_labels
        .iter()
        .map(|c| class_names.binary_search(c).ok())
        .collect();
    let cites = read(cites_path)?;
    let mut edges = Vec::new();
    let mut raw_edge_rows = 0;
    let mut skipped = 0;
    for (no, line) in rows(&cites) {
        let mut t = line.split_whitespace();
        let (Some(a), Some(b)) = (t.next(), t.next()) else {
            return Err(Error::parse(cites_path, no, "expected 'cited citing'"));
        };
        raw_edge_rows += 1;
        match (index.get(a), index.get(b)) {
            (Some(&u), Some(&v)) => edges.push((u, v)),
            _ => skipped += 1,
        }
    }
    if skipped > 0 {
        log::warn!("{name}: skipped {skipped} citations to unknown papers");
    }
    let n = feats.len();
    let dim = feats.first().map_or(0, Vec::len);
    let x = Array2::from_shape_vec((n, dim), feats.into_iter().flatten().collect())
        .expect("rows checked for equal length");
    let graph = LabeledGraph::from_edges(n, &edges)?
        .with_labels(labels)?
        .with_features(x)?;
    Ok(Benchmark {
        name: name.to_string(),
        graph,
        splits: Vec::new(),
        raw_edge_rows,
    })
}
