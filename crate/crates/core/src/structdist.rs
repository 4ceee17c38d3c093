//! Ordered degree sequences of hop rings and the cumulative structural
//! distance `f_tau(g, h) = f_{tau-1}(g, h) + D(s(N_tau(g)), s(N_tau(h)))`,
//! with `D` a dynamic-time-warping alignment cost.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::LabeledGraph;
use crate::par;

/// Non-increasing sequence of node degrees.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DegreeSequence(Vec<usize>);

impl DegreeSequence {
    pub fn from_degrees(mut degrees: Vec<usize>) -> Self {
        degrees.sort_unstable_by(|a, b| b.cmp(a));
        Self(degrees)
    }

    pub fn values(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Keeps the `max_len` largest degrees.
    pub fn truncated(mut self, max_len: usize) -> Self {
        self.0.truncate(max_len);
        self
    }

    fn as_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&d| d as f64).collect()
    }
}

/// DTW settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DtwConfig {
    /// Sequences shorter than this (both of them) use the exact dynamic program.
    pub exact_below: usize,
    /// FastDTW search radius for longer sequences.
    pub radius: usize,
    /// Ring sequences keep at most this many of their largest degrees.
    pub max_sequence_len: usize,
}

impl Default for DtwConfig {
    fn default() -> Self {
        Self {
            exact_below: 64,
            radius: 1,
            max_sequence_len: 128,
        }
    }
}

/// `max(a, b) / max(1, min(a, b)) - 1`, with the numerator also floored at 1
/// so two isolated nodes (degree 0) cost 0 rather than -1.
pub fn element_cost(a: f64, b: f64) -> f64 {
    a.max(b).max(1.0) / a.min(b).max(1.0) - 1.0
}

/// Degrees (in `g`) of the nodes exactly `tau` hops from `center`, non-increasing.
pub fn degree_sequence(g: &LabeledGraph, center: usize, tau: usize) -> Result<DegreeSequence> {
    let ring = g.hop_ring(center, tau)?;
    Ok(DegreeSequence::from_degrees(
        ring.members.iter().map(|&v| g.neighbors(v).len()).collect(),
    ))
}

/// Full `O(n m)` DTW cost.
pub fn exact_dtw(a: &[f64], b: &[f64]) -> f64 {
    let m = b.len();
    let mut prev = vec![f64::INFINITY; m];
    let mut cur = vec![f64::INFINITY; m];
    for (i, &x) in a.iter().enumerate() {
        for j in 0..m {
            let best = if i == 0 && j == 0 {
                0.0
            } else {
                let up = if i > 0 { prev[j] } else { f64::INFINITY };
                let left = if j > 0 { cur[j - 1] } else { f64::INFINITY };
                let diag = if i > 0 && j > 0 {
                    prev[j - 1]
                } else {
                    f64::INFINITY
                };
                up.min(left).min(diag)
            };
            cur[j] = element_cost(x, b[j]) + best;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m - 1]
}

/// DTW restricted to `window` (inclusive column range per row), returning the
/// cost and the optimal warp path.
fn windowed_dtw(a: &[f64], b: &[f64], window: Option<&[(usize, usize)]>) -> (f64, Vec<(usize, usize)>) {
    let (n, m) = (a.len(), b.len());
    let mut dp = vec![f64::INFINITY; n * m];
    for i in 0..n {
        let (lo, hi) = window.map_or((0, m - 1), |w| w[i]);
        for j in lo..=hi {
            let best = if i == 0 && j == 0 {
                0.0
            } else {
                let up = if i > 0 { dp[(i - 1) * m + j] } else { f64::INFINITY };
                let left = if j > 0 { dp[i * m + j - 1] } else { f64::INFINITY };
                let diag = if i > 0 && j > 0 {
                    dp[(i - 1) * m + j - 1]
                } else {
                    f64::INFINITY
                };
                up.min(left).min(diag)
            };
            dp[i * m + j] = element_cost(a[i], b[j]) + best;
        }
    }
    let cost = dp[n * m - 1];
    let mut path = vec![(n - 1, m - 1)];
    let (mut i, mut j) = (n - 1, m - 1);
    while i > 0 || j > 0 {
        let diag = if i > 0 && j > 0 {
            dp[(i - 1) * m + j - 1]
        } else {
            f64::INFINITY
        };
        let up = if i > 0 { dp[(i - 1) * m + j] } else { f64::INFINITY };
        let left = if j > 0 { dp[i * m + j - 1] } else { f64::INFINITY };
        if diag <= up && diag <= left {
            i -= 1;
            j -= 1;
        } else if up <= left {
            i -= 1;
        } else {
            j -= 1;
        }
        path.push((i, j));
    }
    path.reverse();
    (cost, path)
}

/// Halves resolution by averaging adjacent pairs; an odd tail element is kept.
fn coarsen(x: &[f64]) -> Vec<f64> {
    x.chunks(2)
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect()
}

/// Projects a coarse warp path to the finer grid, widened by `radius` coarse cells.
fn expand_window(
    coarse_path: &[(usize, usize)],
    coarse_n: usize,
    coarse_m: usize,
    n: usize,
    m: usize,
    radius: usize,
) -> Vec<(usize, usize)> {
    let mut window = vec![(usize::MAX, 0usize); n];
    let r = radius as isize;
    for &(ci, cj) in coarse_path {
        for di in -r..=r {
            let i = ci as isize + di;
            if i < 0 || i as usize >= coarse_n {
                continue;
            }
            let (jlo, jhi) = (
                (cj as isize - r).max(0) as usize,
                ((cj as isize + r) as usize).min(coarse_m - 1),
            );
            let (flo, fhi) = (2 * jlo, (2 * jhi + 1).min(m - 1));
            for fi in [2 * i as usize, 2 * i as usize + 1] {
                if fi < n {
                    window[fi].0 = window[fi].0.min(flo);
                    window[fi].1 = window[fi].1.max(fhi);
                }
            }
        }
    }
    window
}

fn fast_dtw_path(a: &[f64], b: &[f64], radius: usize) -> (f64, Vec<(usize, usize)>) {
    let min_size = radius + 2;
    if a.len() <= min_size || b.len() <= min_size {
        return windowed_dtw(a, b, None);
    }
    let (ca, cb) = (coarsen(a), coarsen(b));
    let (_, coarse_path) = fast_dtw_path(&ca, &cb, radius);
    let window = expand_window(&coarse_path, ca.len(), cb.len(), a.len(), b.len(), radius);
    windowed_dtw(a, b, Some(&window))
}

/// FastDTW: multi-resolution approximation of the DTW cost. Never below the
/// exact cost; equal to it once `radius + 2` covers either sequence.
pub fn fast_dtw(a: &[f64], b: &[f64], radius: usize) -> f64 {
    fast_dtw_path(a, b, radius).0
}

/// Alignment cost between two degree sequences. Exact below
/// `cfg.exact_below`, FastDTW otherwise. Symmetric in its arguments.
pub fn dtw_cost(s1: &DegreeSequence, s2: &DegreeSequence, cfg: &DtwConfig) -> Result<f64> {
    if s1.is_empty() || s2.is_empty() {
        return Err(Error::InvalidArgument("DTW needs two non-empty sequences".into()));
    }
    // canonical argument order keeps FastDTW's tie-breaking symmetric
    let (s1, s2) = if s1 <= s2 { (s1, s2) } else { (s2, s1) };
    let (a, b) = (s1.as_f64(), s2.as_f64());
    if a.len() < cfg.exact_below && b.len() < cfg.exact_below {
        Ok(exact_dtw(&a, &b))
    } else {
        Ok(fast_dtw(&a, &b, cfg.radius))
    }
}

/// Ordered degree sequences of every nonempty ring `0..=max_tau` of every node.
#[derive(Debug, Clone)]
pub struct RingProfiles {
    max_tau: usize,
    per_node: Vec<Vec<DegreeSequence>>,
}

impl RingProfiles {
    pub fn build(g: &LabeledGraph, max_tau: usize, cfg: &DtwConfig) -> Self {
        let degrees = g.degrees();
        let max_len = cfg.max_sequence_len;
        let per_node = par::map_range(g.num_nodes(), |u| {
            g.bfs_rings(u, max_tau)
                .into_iter()
                .enumerate()
                .map(|(tau, ring)| {
                    let seq = DegreeSequence::from_degrees(ring.iter().map(|&v| degrees[v]).collect());
                    if seq.len() > max_len {
                        log::debug!(
                            "ring of node {u} at tau {tau} truncated from {} to {max_len}",
                            seq.len()
                        );
                        seq.truncated(max_len)
                    } else {
                        seq
                    }
                })
                .collect()
        });
        Self { max_tau, per_node }
    }

    pub fn max_tau(&self) -> usize {
        self.max_tau
    }

    /// Sequences of the nonempty rings of `u`.
    pub fn rings(&self, u: usize) -> &[DegreeSequence] {
        &self.per_node[u]
    }

    pub fn distances(&self, u: usize, v: usize, cfg: &DtwConfig) -> StructuralDistances {
        let (ru, rv) = (self.rings(u), self.rings(v));
        let mut levels = Vec::new();
        let mut f = 0.0;
        for (su, sv) in ru.iter().zip(rv).take(self.max_tau + 1) {
            f += dtw_cost(su, sv, cfg).expect("ring sequences are non-empty");
            levels.push(f);
        }
        StructuralDistances {
            max_tau: self.max_tau,
            levels,
        }
    }
}

/// `f_tau` for `tau = 0..=max_tau`; levels past the first empty ring are absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuralDistances {
    pub max_tau: usize,
    /// Defined prefix `f_0, f_1, ...`.
    pub levels: Vec<f64>,
}

impl StructuralDistances {
    pub fn get(&self, tau: usize) -> Option<f64> {
        self.levels.get(tau).copied()
    }

    pub fn defined_levels(&self) -> usize {
        self.levels.len()
    }
}

/// Cumulative structural distance of one node pair.
pub fn structural_distances(
    g: &LabeledGraph,
    pair: (usize, usize),
    max_tau: usize,
    cfg: &DtwConfig,
) -> Result<StructuralDistances> {
    g.check_node(pair.0)?;
    g.check_node(pair.1)?;
    let profile = |u: usize| -> Vec<DegreeSequence> {
        g.bfs_rings(u, max_tau)
            .into_iter()
            .map(|ring| {
                DegreeSequence::from_degrees(ring.iter().map(|&v| g.neighbors(v).len()).collect())
                    .truncated(cfg.max_sequence_len)
            })
            .collect()
    };
    let (pu, pv) = (profile(pair.0), profile(pair.1));
    let mut levels = Vec::new();
    let mut f = 0.0;
    for (su, sv) in pu.iter().zip(&pv) {
        f += dtw_cost(su, sv, cfg)?;
        levels.push(f);
    }
    Ok(StructuralDistances { max_tau, levels })
}

/// Distances for a set of pairs, for auditing.
#[derive(Debug, Clone, Default)]
pub struct StructuralDistanceTable {
    pub rows: Vec<(usize, usize, StructuralDistances)>,
}

impl StructuralDistanceTable {
    /// CSV with header `g,h,tau,f_tau`, one line per defined level.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("g,h,tau,f_tau\n");
        for (g, h, d) in &self.rows {
            for (tau, f) in d.levels.iter().enumerate() {
                let _ = writeln!(out, "{g},{h},{tau},{f}");
            }
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// Textbook DTW over the whole grid with explicit recursion-free table.
    fn oracle_dtw(a: &[f64], b: &[f64]) -> f64 {
        let (n, m) = (a.len(), b.len());
        let mut d = vec![vec![f64::INFINITY; m + 1]; n + 1];
        d[0][0] = 0.0;
        for i in 1..=n {
            for j in 1..=m {
                let c = a[i - 1].max(b[j - 1]).max(1.0) / a[i - 1].min(b[j - 1]).max(1.0) - 1.0;
                d[i][j] = c + d[i - 1][j].min(d[i][j - 1]).min(d[i - 1][j - 1]);
            }
        }
        d[n][m]
    }

    fn seq(v: &[usize]) -> DegreeSequence {
        DegreeSequence::from_degrees(v.to_vec())
    }

    fn barbell() -> LabeledGraph {
        LabeledGraph::from_edges(6, &[(0, 1), (1, 2), (0, 2), (2, 3), (3, 4), (4, 5), (3, 5)]).unwrap()
    }

    #[test]
    fn degree_sequences() {
        let star: Vec<_> = (1..6).map(|i| (0, i)).collect();
        let star = LabeledGraph::from_edges(6, &star).unwrap();
        assert_eq!(degree_sequence(&star, 0, 0).unwrap().values(), &[5]);
        assert_eq!(degree_sequence(&star, 0, 1).unwrap().values(), &[1, 1, 1, 1, 1]);
        assert!(degree_sequence(&star, 0, 2).unwrap().is_empty());

        // degree-5 node whose neighbours have degrees {1, 5}
        let mut edges: Vec<_> = (1..6).map(|i| (0, i)).collect();
        edges.extend((6..10).map(|i| (1, i)));
        let g = LabeledGraph::from_edges(10, &edges).unwrap();
        assert_eq!(degree_sequence(&g, 0, 1).unwrap().values(), &[5, 1, 1, 1, 1]);
    }

    #[test]
    fn element_costs() {
        assert_eq!(element_cost(2.0, 1.0), 1.0);
        assert_eq!(element_cost(3.0, 3.0), 0.0);
        assert_eq!(element_cost(0.0, 0.0), 0.0);
        assert_eq!(element_cost(0.0, 4.0), 3.0);
    }

    #[test]
    fn dtw_basics() {
        let cfg = DtwConfig::default();
        assert_eq!(dtw_cost(&seq(&[3, 2, 2]), &seq(&[3, 2, 2]), &cfg).unwrap(), 0.0);
        assert_eq!(dtw_cost(&seq(&[2]), &seq(&[1]), &cfg).unwrap(), 1.0);
        let a = seq(&[5, 1, 1]);
        let b = seq(&[5, 5, 1]);
        let expected = oracle_dtw(&[5.0, 1.0, 1.0], &[5.0, 5.0, 1.0]);
        assert_eq!(dtw_cost(&a, &b, &cfg).unwrap(), expected);
        // 5-5 (0), 1-5 (4) or 5-5,5-5 (0) then 1-1, 1-1 -> optimal 0 + 0 + 0 + 0
        assert_eq!(expected, 0.0);
        let expected = oracle_dtw(&[4.0, 2.0], &[6.0, 3.0, 1.0]);
        // (4,6) 0.5, (4,3) 1/3, (2,1) 1
        assert_abs_diff_eq!(expected, 0.5 + 1.0 / 3.0 + 1.0, epsilon = 1e-15);
        assert_eq!(dtw_cost(&seq(&[4, 2]), &seq(&[6, 3, 1]), &cfg).unwrap(), expected);
        assert!(dtw_cost(&seq(&[]), &seq(&[1]), &cfg).is_err());
    }

    #[test]
    fn fast_dtw_long_sequences_bound_exact() {
        let a: Vec<f64> = (0..150).map(|i| ((i * 37) % 11) as f64).collect();
        let b: Vec<f64> = (0..97).map(|i| ((i * 13) % 7) as f64).collect();
        let exact = oracle_dtw(&a, &b);
        let fast = fast_dtw(&a, &b, 1);
        assert!(fast >= exact - 1e-9);
        assert_eq!(fast_dtw(&a, &b, 200), exact_dtw(&a, &b));
    }

    #[test]
    fn pair_with_itself_is_zero() {
        let g = barbell();
        let d = structural_distances(&g, (2, 2), 3, &DtwConfig::default()).unwrap();
        assert_eq!(d.levels, vec![0.0; 3]);
        assert_eq!(d.get(3), None);
    }

    #[test]
    fn barbell_pair_table() {
        // node 0: rings {0} [2], {1,2} [3,2], {3} [3], {4,5} [2,2]
        // node 2: rings {2} [3], {0,1,3} [3,2,2], {4,5} [2,2]
        let g = barbell();
        let d = structural_distances(&g, (0, 2), 3, &DtwConfig::default()).unwrap();
        let f0 = oracle_dtw(&[2.0], &[3.0]);
        let f1 = f0 + oracle_dtw(&[3.0, 2.0], &[3.0, 2.0, 2.0]);
        let f2 = f1 + oracle_dtw(&[3.0], &[2.0, 2.0]);
        assert_eq!(d.levels, vec![f0, f1, f2]);
        assert_abs_diff_eq!(f0, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(f2, 0.5 + 0.0 + 1.0, epsilon = 1e-15);
        // node 0 vs node 5 (mirror images): identical profiles
        let d = structural_distances(&g, (0, 5), 3, &DtwConfig::default()).unwrap();
        assert_eq!(d.levels, vec![0.0; 4]);
    }

    #[test]
    fn same_degree_pair_level_zero() {
        let g = barbell();
        let d = structural_distances(&g, (0, 1), 2, &DtwConfig::default()).unwrap();
        assert_eq!(d.get(0), Some(0.0));
    }

    #[test]
    fn ring_profiles_agree_with_direct() {
        let g = barbell();
        let cfg = DtwConfig::default();
        let p = RingProfiles::build(&g, 3, &cfg);
        for u in 0..6 {
            for v in 0..6 {
                assert_eq!(
                    p.distances(u, v, &cfg),
                    structural_distances(&g, (u, v), 3, &cfg).unwrap()
                );
            }
        }
    }

    #[test]
    fn table_csv() {
        let g = barbell();
        let cfg = DtwConfig::default();
        let table = StructuralDistanceTable {
            rows: vec![(0, 2, structural_distances(&g, (0, 2), 1, &cfg).unwrap())],
        };
        assert_eq!(table.to_csv(), "g,h,tau,f_tau\n0,2,0,0.5\n0,2,1,0.5\n");
    }

    proptest! {
        #[test]
        fn exact_matches_oracle(
            a in prop::collection::vec(0usize..12, 1..20),
            b in prop::collection::vec(0usize..12, 1..20),
        ) {
            let (a, b) = (seq(&a).as_f64(), seq(&b).as_f64());
            prop_assert!((exact_dtw(&a, &b) - oracle_dtw(&a, &b)).abs() < 1e-12);
        }

        #[test]
        fn fast_dtw_is_upper_bound_and_symmetric_cost(
            a in prop::collection::vec(0usize..30, 1..90),
            b in prop::collection::vec(0usize..30, 1..90),
        ) {
            let (sa, sb) = (seq(&a), seq(&b));
            let cfg = DtwConfig { exact_below: 0, ..DtwConfig::default() };
            let fast = dtw_cost(&sa, &sb, &cfg).unwrap();
            prop_assert!(fast >= oracle_dtw(&sa.as_f64(), &sb.as_f64()) - 1e-9);
            prop_assert_eq!(fast, dtw_cost(&sb, &sa, &cfg).unwrap());
        }
    }
}
