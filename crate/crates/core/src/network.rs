//! Correlation distances, minimal spanning trees and tree topology metrics.

use std::collections::VecDeque;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::fluctuation::{Direction, SegmentationConfig};
use crate::rho::{check_segment_floor, rho_matrices, RhoMatrix};
use crate::series::{compensated_sum, Panel};
use crate::window::{Flags, RollingWindow};

/// Tolerance for ρ slightly outside `[-1, 1]` before the distance transform.
pub const RHO_CLAMP_TOL: f64 = 1e-9;

/// `d = sqrt(2 (1 − ρ))` for every asset pair.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub assets: Vec<String>,
    pub q: f64,
    pub s: usize,
    values: Vec<f64>,
}

impl DistanceMatrix {
    /// Full row-major distances; must be symmetric with a zero diagonal.
    pub fn from_entries(assets: Vec<String>, values: Vec<f64>) -> Result<Self> {
        let n = assets.len();
        if values.len() != n * n {
            return Err(invalid("distance entries do not match the asset count"));
        }
        for i in 0..n {
            for j in 0..n {
                let v = values[i * n + j];
                if !v.is_finite() {
                    return Err(invalid(format!("non-finite distance between {} and {}", assets[i], assets[j])));
                }
                if v != values[j * n + i] {
                    return Err(invalid(format!("asymmetric distance between {} and {}", assets[i], assets[j])));
                }
            }
        }
        Ok(Self { assets, q: f64::NAN, s: 0, values })
    }

    pub fn n(&self) -> usize {
        self.assets.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n() + j]
    }
}

/// The distance transform of one ρ value, clamped within [`RHO_CLAMP_TOL`].
pub fn rho_to_distance(rho: f64) -> Option<f64> {
    if !(rho.abs() <= 1.0 + RHO_CLAMP_TOL) {
        return None;
    }
    let r = rho.clamp(-1.0, 1.0);
    Some((2.0 * (1.0 - r)).sqrt())
}

pub fn distance_matrix(rho: &RhoMatrix) -> Result<DistanceMatrix> {
    let n = rho.n();
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let r = rho.get(i, j);
            let d = rho_to_distance(r)
                .ok_or_else(|| invalid(format!("ρ({}, {}) = {r} outside [-1, 1]", rho.assets[i], rho.assets[j])))?;
            values[i * n + j] = d;
            values[j * n + i] = d;
        }
    }
    Ok(DistanceMatrix { assets: rho.assets.clone(), q: rho.q, s: rho.s, values })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub parent: usize,
    pub child: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MstResult {
    pub assets: Vec<String>,
    /// In the order Prim's algorithm added them.
    pub edges: Vec<Edge>,
    pub degrees: Vec<usize>,
    pub total_weight: f64,
}

impl MstResult {
    /// Tree from explicit edges, e.g. to evaluate metrics on a known shape.
    pub fn from_edges(assets: Vec<String>, edges: Vec<Edge>) -> Result<Self> {
        let n = assets.len();
        if edges.len() + 1 != n {
            return Err(invalid(format!("{} edges cannot span {n} nodes", edges.len())));
        }
        let mut degrees = vec![0; n];
        for e in &edges {
            if e.parent >= n || e.child >= n {
                return Err(invalid("edge endpoint out of range"));
            }
            degrees[e.parent] += 1;
            degrees[e.child] += 1;
        }
        let tree = Self { total_weight: edges.iter().map(|e| e.weight).sum(), assets, edges, degrees };
        if tree.hop_counts_from(0).iter().any(|d| d.is_none()) {
            return Err(invalid("edges do not connect every node"));
        }
        Ok(tree)
    }

    fn adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.assets.len()];
        for e in &self.edges {
            adj[e.parent].push((e.child, e.weight));
            adj[e.child].push((e.parent, e.weight));
        }
        adj
    }

    fn hop_counts_from(&self, root: usize) -> Vec<Option<usize>> {
        let adj = self.adjacency();
        bfs(&adj, root).into_iter().map(|d| d.map(|(h, _)| h)).collect()
    }

    pub fn write_edges_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["parent", "child", "weight"])?;
        for e in &self.edges {
            w.write_record([self.assets[e.parent].as_str(), self.assets[e.child].as_str(), &e.weight.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Pajek `.net`: a `*Vertices` list followed by an `*Edges` list.
    pub fn write_pajek<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "*Vertices {}", self.assets.len())?;
        for (i, a) in self.assets.iter().enumerate() {
            writeln!(out, "{} \"{}\"", i + 1, a.replace('"', "'"))?;
        }
        writeln!(out, "*Edges")?;
        for e in &self.edges {
            writeln!(out, "{} {} {}", e.parent + 1, e.child + 1, e.weight)?;
        }
        Ok(())
    }
}

// (hops, weighted length) from root, None if unreachable
fn bfs(adj: &[Vec<(usize, f64)>], root: usize) -> Vec<Option<(usize, f64)>> {
    let mut dist = vec![None; adj.len()];
    dist[root] = Some((0, 0.0));
    let mut queue = VecDeque::from([root]);
    while let Some(u) = queue.pop_front() {
        let (h, w) = dist[u].unwrap_or((0, 0.0));
        for &(v, wt) in &adj[u] {
            if dist[v].is_none() {
                dist[v] = Some((h + 1, w + wt));
                queue.push_back(v);
            }
        }
    }
    dist
}

/// Prim's algorithm on the complete graph of `d`.
///
/// Growth starts at the lexicographically first asset id. Among equally
/// light candidate edges the node with the smaller index joins first, and a
/// node keeps the earliest tree node that offered its lightest edge.
pub fn mst(d: &DistanceMatrix) -> Result<MstResult> {
    let n = d.n();
    if n < 2 {
        return Err(invalid("a spanning tree needs at least two nodes"));
    }
    if let Some(v) = d.values.iter().find(|v| !v.is_finite()) {
        return Err(invalid(format!("non-finite distance {v}")));
    }
    let root = (0..n).min_by(|&a, &b| d.assets[a].cmp(&d.assets[b]).then(a.cmp(&b))).unwrap_or(0);
    let mut in_tree = vec![false; n];
    let mut key = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    in_tree[root] = true;
    for v in 0..n {
        if v != root {
            key[v] = d.get(root, v);
            parent[v] = root;
        }
    }
    let mut edges = Vec::with_capacity(n - 1);
    let mut degrees = vec![0; n];
    for _ in 1..n {
        let mut best = usize::MAX;
        for v in 0..n {
            if !in_tree[v] && (best == usize::MAX || key[v] < key[best]) {
                best = v;
            }
        }
        in_tree[best] = true;
        edges.push(Edge { parent: parent[best], child: best, weight: key[best] });
        degrees[parent[best]] += 1;
        degrees[best] += 1;
        for v in 0..n {
            if !in_tree[v] {
                let w = d.get(best, v);
                if w < key[v] {
                    key[v] = w;
                    parent[v] = best;
                }
            }
        }
    }
    let total_weight = edges.iter().map(|e| e.weight).sum();
    Ok(MstResult { assets: d.assets.clone(), edges, degrees, total_weight })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathMetric {
    /// Edge count along the tree path.
    #[default]
    Hops,
    /// Sum of edge distances along the tree path.
    Weighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhoAverage {
    /// All `N(N−1)/2` asset pairs.
    #[default]
    AllPairs,
    /// Only the pairs joined by a tree edge.
    TreeEdges,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricOptions {
    #[serde(default)]
    pub path: PathMetric,
    #[serde(default)]
    pub rho_average: RhoAverage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkMetrics {
    pub mean_path_length: f64,
    pub mean_rho: f64,
    pub k_max: usize,
    pub hub_id: String,
}

/// Mean path length over all node pairs, in hops or edge weights.
pub fn mean_path_length(tree: &MstResult, metric: PathMetric) -> f64 {
    let n = tree.assets.len();
    let adj = tree.adjacency();
    let pairs = (n * (n - 1) / 2) as f64;
    match metric {
        PathMetric::Hops => {
            let mut total: u64 = 0;
            for root in 0..n {
                for (v, d) in bfs(&adj, root).into_iter().enumerate() {
                    if v > root {
                        total += d.map(|(h, _)| h as u64).unwrap_or(0);
                    }
                }
            }
            total as f64 / pairs
        }
        PathMetric::Weighted => {
            let dists = (0..n).flat_map(|root| {
                bfs(&adj, root)
                    .into_iter()
                    .enumerate()
                    .filter(move |(v, _)| *v > root)
                    .map(|(_, d)| d.map(|(_, w)| w).unwrap_or(f64::NAN))
                    .collect::<Vec<_>>()
            });
            compensated_sum(dists) / pairs
        }
    }
}

/// ⟨L⟩, ⟨ρ⟩ and the largest node degree of a tree.
pub fn mst_metrics(tree: &MstResult, rho: &RhoMatrix, options: MetricOptions) -> Result<NetworkMetrics> {
    if tree.assets != rho.assets {
        return Err(invalid("tree and ρ matrix cover different assets"));
    }
    let n = tree.assets.len();
    let mean_rho = match options.rho_average {
        RhoAverage::AllPairs => compensated_sum(rho.upper_triangle().into_iter()) / (n * (n - 1) / 2) as f64,
        RhoAverage::TreeEdges => {
            compensated_sum(tree.edges.iter().map(|e| rho.get(e.parent, e.child))) / tree.edges.len() as f64
        }
    };
    let k_max = tree.degrees.iter().copied().max().unwrap_or(0);
    let hub =
        (0..n).filter(|&i| tree.degrees[i] == k_max).min_by(|&a, &b| tree.assets[a].cmp(&tree.assets[b])).unwrap_or(0);
    Ok(NetworkMetrics {
        mean_path_length: mean_path_length(tree, options.path),
        mean_rho,
        k_max,
        hub_id: tree.assets[hub].clone(),
    })
}

/// Settings for the rolling matrix → tree → metrics chain.
#[derive(Debug, Clone, PartialEq)]
pub struct MstParams {
    pub qs: Vec<f64>,
    /// Scales in samples.
    pub scales: Vec<usize>,
    pub poly_degree: usize,
    pub direction: Direction,
    pub options: MetricOptions,
    pub keep_edges: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MstRecord {
    pub window_end: i64,
    pub q: f64,
    pub s: usize,
    pub metrics: Option<NetworkMetrics>,
    pub tree: Option<MstResult>,
    pub flags: Flags,
}

/// Tree metrics for every window and `(q, s)`; ordered by window, scale, q.
pub fn rolling_mst(panel: &Panel, window: RollingWindow, params: &MstParams) -> Result<Vec<MstRecord>> {
    if panel.n_assets() < 2 {
        return Err(invalid("MST needs at least two assets"));
    }
    check_segment_floor(window.len, &params.scales)?;
    let ranges: Vec<_> = window.ranges(panel.len()).collect();
    let per_window = ranges
        .into_par_iter()
        .map(|r| {
            let end = panel.grid()[r.end - 1];
            let cols: Vec<&[f64]> = panel.columns().iter().map(|c| &c[r.clone()]).collect();
            let mut out = Vec::new();
            for &s in &params.scales {
                let cfg = SegmentationConfig { scale: s, poly_degree: params.poly_degree, direction: params.direction };
                let mats = rho_matrices(panel.assets(), &cols, &params.qs, &cfg)?;
                for m in mats {
                    out.push(window_tree(end, &m, params));
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_window.into_iter().flatten().collect())
}

fn window_tree(window_end: i64, rho: &RhoMatrix, params: &MstParams) -> MstRecord {
    let mut rec = MstRecord { window_end, q: rho.q, s: rho.s, metrics: None, tree: None, flags: Flags::default() };
    if !rho.degenerate.is_empty() {
        rec.flags.set("degenerate");
        return rec;
    }
    let tree = match distance_matrix(rho).and_then(|d| mst(&d)) {
        Ok(t) => t,
        Err(_) => {
            rec.flags.set("failed");
            return rec;
        }
    };
    rec.metrics = mst_metrics(&tree, rho, params.options).ok();
    if params.keep_edges {
        rec.tree = Some(tree);
    }
    rec
}

pub fn write_mst_metrics<W: Write>(records: &[MstRecord], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["window_end", "q", "s", "mean_L", "mean_rho", "k_max", "hub_id", "flags"])?;
    for r in records {
        let (l, rho, k, hub) = match &r.metrics {
            Some(m) => (m.mean_path_length.to_string(), m.mean_rho.to_string(), m.k_max.to_string(), m.hub_id.clone()),
            None => ("NaN".into(), "NaN".into(), "0".into(), String::new()),
        };
        w.write_record([
            r.window_end.to_string(),
            r.q.to_string(),
            r.s.to_string(),
            l,
            rho,
            k,
            hub,
            r.flags.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
