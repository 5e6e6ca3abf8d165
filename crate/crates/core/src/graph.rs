//! Neighborhood graphs, Gaussian edge weights and the unnormalized Laplacian.

use std::cmp::Ordering;
use std::collections::VecDeque;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::PointCloud;
use crate::error::{Error, Result};
use crate::sparse::{CsrMatrix, SparseSymmetric};

/// How the adjacency was built.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphConstruction {
    Knn { k: usize },
    Epsilon { radius: f64 },
}

/// Symmetric neighborhood graph without self-edges.
///
/// Neighbor lists are sorted by index; `distances` and `weights` are
/// parallel to them.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborGraph {
    neighbors: Vec<Vec<usize>>,
    distances: Vec<Vec<f64>>,
    weights: Vec<Vec<f64>>,
    mean_neighbor_distance: f64,
    bandwidth: Option<f64>,
    construction: GraphConstruction,
}

/// Row-major copy of the ambient coordinates for cache-friendly distance loops.
struct Rows {
    data: Vec<f64>,
    d: usize,
}

impl Rows {
    fn new(pc: &PointCloud) -> Self {
        let (n, d) = (pc.n(), pc.dim());
        let mut data = Vec::with_capacity(n * d);
        for i in 0..n {
            data.extend(pc.points.row(i).iter());
        }
        Rows { data, d }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    // (a - b)^2 is symmetric in a and b, so dist(i, j) == dist(j, i) bitwise.
    fn dist(&self, i: usize, j: usize) -> f64 {
        self.row(i)
            .iter()
            .zip(self.row(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

fn by_distance_then_index(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// Exact k-nearest-neighbor graph, union-symmetrized.
///
/// Distance ties are broken by the smaller index. The mean neighbor distance
/// is averaged over the `n * k` directed pairs before symmetrization.
pub fn knn_graph(pc: &PointCloud, k: usize) -> Result<NeighborGraph> {
    let n = pc.n();
    if k == 0 || k >= n {
        return Err(Error::parameter(format!("k must satisfy 1 <= k < n, got k = {k}, n = {n}")));
    }
    let rows = Rows::new(pc);
    let directed: Vec<Vec<(f64, usize)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut cand: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (rows.dist(i, j), j))
                .collect();
            if k < cand.len() {
                cand.select_nth_unstable_by(k - 1, by_distance_then_index);
                cand.truncate(k);
            }
            cand.sort_by(by_distance_then_index);
            cand
        })
        .collect();

    let total: f64 = directed.iter().flatten().map(|(d, _)| d).sum();
    let mean = total / (n * k) as f64;

    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, list) in directed.iter().enumerate() {
        for &(_, j) in list {
            adj[i].push(j);
            adj[j].push(i);
        }
    }
    Ok(NeighborGraph::from_adjacency(
        adj,
        &rows,
        mean,
        GraphConstruction::Knn { k },
    ))
}

/// Epsilon-neighborhood graph: every pair closer than `radius` (inclusive).
pub fn epsilon_graph(pc: &PointCloud, radius: f64) -> Result<NeighborGraph> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::parameter(format!("radius must be positive, got {radius}")));
    }
    let n = pc.n();
    let rows = Rows::new(pc);
    let adj: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|i| (0..n).filter(|&j| j != i && rows.dist(i, j) <= radius).collect())
        .collect();
    let pairs: usize = adj.iter().map(Vec::len).sum();
    let total: f64 = adj
        .iter()
        .enumerate()
        .flat_map(|(i, l)| l.iter().map(move |&j| (i, j)))
        .map(|(i, j)| rows.dist(i, j))
        .sum();
    let mean = if pairs > 0 { total / pairs as f64 } else { 0.0 };
    let g = NeighborGraph::from_adjacency(adj, &rows, mean, GraphConstruction::Epsilon { radius });
    let isolated = g.neighbors.iter().filter(|l| l.is_empty()).count();
    if isolated > 0 {
        log::warn!("epsilon graph with radius {radius} leaves {isolated} isolated points");
    }
    Ok(g)
}

impl NeighborGraph {
    fn from_adjacency(
        mut adj: Vec<Vec<usize>>,
        rows: &Rows,
        mean_neighbor_distance: f64,
        construction: GraphConstruction,
    ) -> Self {
        for (i, list) in adj.iter_mut().enumerate() {
            list.sort_unstable();
            list.dedup();
            list.retain(|&j| j != i);
        }
        let distances: Vec<Vec<f64>> = adj
            .iter()
            .enumerate()
            .map(|(i, l)| l.iter().map(|&j| rows.dist(i, j)).collect())
            .collect();
        let weights = adj.iter().map(|l| vec![1.0; l.len()]).collect();
        NeighborGraph {
            neighbors: adj,
            distances,
            weights,
            mean_neighbor_distance,
            bandwidth: None,
            construction,
        }
    }

    /// Union symmetrization of the current adjacency; a no-op on symmetric graphs.
    pub fn symmetrized(&self) -> NeighborGraph {
        let n = self.n();
        let mut edges: Vec<Vec<(usize, f64, f64)>> = vec![Vec::new(); n];
        for i in 0..n {
            for ((&j, &d), &w) in self.neighbors[i].iter().zip(&self.distances[i]).zip(&self.weights[i]) {
                edges[i].push((j, d, w));
                edges[j].push((i, d, w));
            }
        }
        let mut out = self.clone();
        for (i, mut list) in edges.into_iter().enumerate() {
            list.sort_by(|a, b| a.0.cmp(&b.0));
            list.dedup_by_key(|e| e.0);
            out.neighbors[i] = list.iter().map(|e| e.0).collect();
            out.distances[i] = list.iter().map(|e| e.1).collect();
            out.weights[i] = list.iter().map(|e| e.2).collect();
        }
        out
    }

    pub fn n(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn distances(&self, i: usize) -> &[f64] {
        &self.distances[i]
    }

    pub fn weights(&self, i: usize) -> &[f64] {
        &self.weights[i]
    }

    pub fn mean_neighbor_distance(&self) -> f64 {
        self.mean_neighbor_distance
    }

    /// Kernel bandwidth sigma, once [`gaussian_weights`] has been applied.
    pub fn bandwidth(&self) -> Option<f64> {
        self.bandwidth
    }

    pub fn construction(&self) -> GraphConstruction {
        self.construction
    }

    pub fn num_edges(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].binary_search(&j).is_ok()
    }

    /// `N(i)` with `i` itself merged in, sorted.
    pub fn closed_neighborhood(&self, i: usize) -> Vec<usize> {
        let nb = &self.neighbors[i];
        let pos = nb.partition_point(|&j| j < i);
        let mut out = Vec::with_capacity(nb.len() + 1);
        out.extend_from_slice(&nb[..pos]);
        out.push(i);
        out.extend_from_slice(&nb[pos..]);
        out
    }

    /// Hop distance between `i` and `j` is at most two.
    pub fn within_two_hops(&self, i: usize, j: usize) -> bool {
        i == j
            || self.has_edge(i, j)
            || self.neighbors[i].iter().any(|&k| self.has_edge(k, j))
    }

    /// Connected-component label per node, and the number of components.
    pub fn components(&self) -> (Vec<usize>, usize) {
        let n = self.n();
        let mut label = vec![usize::MAX; n];
        let mut count = 0;
        let mut queue = VecDeque::new();
        for s in 0..n {
            if label[s] != usize::MAX {
                continue;
            }
            label[s] = count;
            queue.push_back(s);
            while let Some(u) = queue.pop_front() {
                for &v in &self.neighbors[u] {
                    if label[v] == usize::MAX {
                        label[v] = count;
                        queue.push_back(v);
                    }
                }
            }
            count += 1;
        }
        (label, count)
    }

    /// Edge list `i,j,distance,weight` with each undirected edge once (`i < j`).
    pub fn write_edges_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        let mut write = || -> std::io::Result<()> {
            writeln!(out, "i,j,distance,weight")?;
            for i in 0..self.n() {
                for ((&j, d), w) in self.neighbors[i].iter().zip(&self.distances[i]).zip(&self.weights[i]) {
                    if i < j {
                        writeln!(out, "{i},{j},{d:?},{w:?}")?;
                    }
                }
            }
            out.flush()
        };
        write().map_err(|e| Error::io(path, e))
    }
}

/// Sets `weight(i, j) = exp(-d(i, j)^2 / sigma^2)` with
/// `sigma = bandwidth_multiplier * mean_neighbor_distance`.
///
/// If every distance is zero the graph is degenerate and all weights are 1.
pub fn gaussian_weights(g: &NeighborGraph, bandwidth_multiplier: f64) -> Result<NeighborGraph> {
    if !(bandwidth_multiplier > 0.0 && bandwidth_multiplier.is_finite()) {
        return Err(Error::parameter(format!(
            "bandwidth multiplier must be positive, got {bandwidth_multiplier}"
        )));
    }
    let sigma = bandwidth_multiplier * g.mean_neighbor_distance;
    let mut out = g.clone();
    for (ws, ds) in out.weights.iter_mut().zip(&g.distances) {
        for (w, d) in ws.iter_mut().zip(ds) {
            *w = gaussian_kernel(*d, sigma);
        }
    }
    out.bandwidth = Some(sigma);
    Ok(out)
}

/// `exp(-d^2 / sigma^2)`, floored at the smallest positive normal so weights stay positive.
pub fn gaussian_kernel(d: f64, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 1.0;
    }
    let r = d / sigma;
    (-r * r).exp().max(f64::MIN_POSITIVE)
}

/// Unnormalized Laplacian `L = D - W`.
pub fn laplacian(g: &NeighborGraph) -> SparseSymmetric {
    let rows = (0..g.n())
        .map(|i| {
            let nb = g.neighbors(i);
            let ws = g.weights(i);
            let degree: f64 = ws.iter().sum();
            let pos = nb.partition_point(|&j| j < i);
            let mut row = Vec::with_capacity(nb.len() + 1);
            row.extend(nb[..pos].iter().zip(&ws[..pos]).map(|(&j, &w)| (j, -w)));
            row.push((i, degree));
            row.extend(nb[pos..].iter().zip(&ws[pos..]).map(|(&j, &w)| (j, -w)));
            row
        })
        .collect();
    SparseSymmetric::from_csr_unchecked(CsrMatrix::from_sorted_rows(g.n(), rows))
}
