//! The weighted undirected graph underlying a feedforward network.
//!
//! Vertices are units (inputs first, then hidden layers in order, then
//! outputs; units keep their index order inside a layer). Each nonzero
//! weight `W^(l)[r][c]` becomes an edge of weight `|W^(l)[r][c]|`.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::network::MlpModel;

/// Default vertex cap for exhaustive subset enumeration.
pub const DEFAULT_BRUTE_FORCE_CAP: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

/// Finite, simple, undirected graph with non-negative edge weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    num_vertices: usize,
    edges: Vec<Edge>,
    vertex_layer: Vec<usize>,
}

/// A set of vertices of a host graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VertexSubset {
    pub members: BTreeSet<usize>,
}

impl VertexSubset {
    pub fn new(members: impl IntoIterator<Item = usize>) -> Self {
        VertexSubset { members: members.into_iter().collect() }
    }

    pub fn cardinality(&self) -> usize {
        self.members.len()
    }

    /// Characteristic vector `1_S` of length `n`.
    pub fn indicator(&self, n: usize) -> Vec<f64> {
        let mut z = vec![0.0; n];
        for &v in &self.members {
            z[v] = 1.0;
        }
        z
    }

    pub fn contains(&self, v: usize) -> bool {
        self.members.contains(&v)
    }
}

impl WeightedGraph {
    /// Validating constructor. Rejects negative or non-finite weights,
    /// self-loops, repeated pairs, and out-of-range vertex ids.
    pub fn new(num_vertices: usize, edges: Vec<Edge>, vertex_layer: Vec<usize>) -> Result<Self> {
        if vertex_layer.len() != num_vertices {
            return Err(Error::DimensionMismatch {
                expected: num_vertices,
                actual: vertex_layer.len(),
            });
        }
        let mut seen = std::collections::HashSet::with_capacity(edges.len());
        for e in &edges {
            if e.a >= num_vertices || e.b >= num_vertices {
                return Err(Error::InvalidGraph(format!(
                    "edge ({}, {}) out of range for {num_vertices} vertices",
                    e.a, e.b
                )));
            }
            if e.a == e.b {
                return Err(Error::InvalidGraph(format!("self-loop at vertex {}", e.a)));
            }
            if !(e.weight.is_finite() && e.weight >= 0.0) {
                return Err(Error::InvalidGraph(format!(
                    "edge ({}, {}) has invalid weight {}",
                    e.a, e.b, e.weight
                )));
            }
            if !seen.insert((e.a.min(e.b), e.a.max(e.b))) {
                return Err(Error::InvalidGraph(format!("repeated edge ({}, {})", e.a, e.b)));
            }
        }
        Ok(WeightedGraph { num_vertices, edges, vertex_layer })
    }

    /// Graph with every vertex in layer 0.
    pub fn from_edges(num_vertices: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let edges = edges.iter().map(|&(a, b, weight)| Edge { a, b, weight }).collect();
        Self::new(num_vertices, edges, vec![0; num_vertices])
    }

    pub fn num_vertices(&self) -> usize {
        self.num_vertices
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn vertex_layer(&self) -> &[usize] {
        &self.vertex_layer
    }

    /// Weighted degree of every vertex.
    pub fn degrees(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.num_vertices];
        for e in &self.edges {
            d[e.a] += e.weight;
            d[e.b] += e.weight;
        }
        d
    }

    pub fn max_degree(&self) -> f64 {
        self.degrees().into_iter().fold(0.0, f64::max)
    }

    /// Same edge set with different weights (in edge order).
    pub fn with_weights(&self, weights: &[f64]) -> Result<Self> {
        if weights.len() != self.edges.len() {
            return Err(Error::DimensionMismatch {
                expected: self.edges.len(),
                actual: weights.len(),
            });
        }
        let edges = self
            .edges
            .iter()
            .zip(weights)
            .map(|(e, &weight)| Edge { weight, ..*e })
            .collect();
        Self::new(self.num_vertices, edges, self.vertex_layer.clone())
    }

    /// Copy of the graph without the edge at position `index`.
    pub fn without_edge(&self, index: usize) -> Self {
        let mut g = self.clone();
        g.edges.remove(index);
        g
    }

    /// `sum_{(i,j) in E} w_ij (z_i - z_j)^2`.
    pub fn quadratic_form(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.num_vertices {
            return Err(Error::DimensionMismatch { expected: self.num_vertices, actual: z.len() });
        }
        Ok(self
            .edges
            .iter()
            .map(|e| {
                let d = z[e.a] - z[e.b];
                e.weight * d * d
            })
            .sum())
    }

    /// Total weight of edges with exactly one endpoint in `subset`.
    pub fn cut_size(&self, subset: &VertexSubset) -> f64 {
        self.edges
            .iter()
            .filter(|e| subset.contains(e.a) != subset.contains(e.b))
            .map(|e| e.weight)
            .sum()
    }

    /// Components of the graph restricted to edges with weight `> 0`.
    /// Each component is sorted; components are ordered by their lowest id.
    pub fn connected_components(&self) -> Vec<Vec<usize>> {
        let mut uf = UnionFind::new(self.num_vertices);
        for e in &self.edges {
            if e.weight > 0.0 {
                uf.union(e.a, e.b);
            }
        }
        uf.groups()
    }

    pub fn is_connected(&self) -> bool {
        self.num_vertices > 0 && self.connected_components().len() == 1
    }

    /// Exact edge expansion `min cut(S)/|S|` over nonempty `S` with
    /// `|S| <= n/2`, by enumeration. Capped at [`DEFAULT_BRUTE_FORCE_CAP`].
    pub fn edge_expansion_bruteforce(&self) -> Result<(f64, VertexSubset)> {
        self.edge_expansion_bruteforce_capped(DEFAULT_BRUTE_FORCE_CAP)
    }

    pub fn edge_expansion_bruteforce_capped(&self, cap: usize) -> Result<(f64, VertexSubset)> {
        let n = self.num_vertices;
        if n > cap || n >= 63 {
            return Err(Error::VertexCapExceeded { n, cap });
        }
        if n < 2 {
            return Err(Error::InvalidGraph("edge expansion needs at least 2 vertices".into()));
        }
        if !self.is_connected() {
            return Err(Error::Disconnected);
        }
        let mut adj = vec![0.0; n * n];
        for e in &self.edges {
            adj[e.a * n + e.b] += e.weight;
            adj[e.b * n + e.a] += e.weight;
        }
        let degree = self.degrees();

        // Gray-code walk: consecutive subsets differ in one vertex.
        let mut in_set = vec![false; n];
        let mut size = 0usize;
        let mut cut = 0.0;
        let mut best = (f64::INFINITY, 0u64);
        for k in 1u64..(1u64 << n) {
            let v = k.trailing_zeros() as usize;
            let to_set: f64 = (0..n).filter(|&u| in_set[u] && u != v).map(|u| adj[v * n + u]).sum();
            if in_set[v] {
                in_set[v] = false;
                size -= 1;
                cut -= degree[v] - 2.0 * to_set;
            } else {
                in_set[v] = true;
                size += 1;
                cut += degree[v] - 2.0 * to_set;
            }
            if size * 2 <= n {
                let ratio = cut / size as f64;
                if ratio < best.0 {
                    best = (ratio, k ^ (k >> 1));
                }
            }
        }
        let subset = VertexSubset::new((0..n).filter(|&v| best.1 >> v & 1 == 1));
        // recompute exactly for the minimizer to shed walk round-off
        let phi = self.cut_size(&subset) / subset.cardinality() as f64;
        Ok((phi, subset))
    }

    /// Writes the edge-list format: `n m` header, then `a b w` per edge.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{} {}", self.num_vertices, self.edges.len())?;
        for e in &self.edges {
            writeln!(out, "{} {} {:e}", e.a, e.b, e.weight)?;
        }
        Ok(())
    }

    /// Parses the edge-list format. Vertex layers are not stored in the
    /// format and come back as 0.
    pub fn read_edge_list<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input
            .lines()
            .filter(|l| l.as_ref().map_or(true, |s| !s.trim().is_empty()));
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty edge list".into()))??;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 2 {
            return Err(Error::Parse(format!("bad header '{header}'")));
        }
        let n: usize = h[0].parse().map_err(|_| Error::Parse(format!("bad vertex count '{}'", h[0])))?;
        let m: usize = h[1].parse().map_err(|_| Error::Parse(format!("bad edge count '{}'", h[1])))?;
        let mut edges = Vec::with_capacity(m);
        for _ in 0..m {
            let line = lines
                .next()
                .ok_or_else(|| Error::Parse(format!("expected {m} edges")))??;
            let t: Vec<&str> = line.split_whitespace().collect();
            if t.len() != 3 {
                return Err(Error::Parse(format!("bad edge line '{line}'")));
            }
            let bad = || Error::Parse(format!("bad edge line '{line}'"));
            edges.push(Edge {
                a: t[0].parse().map_err(|_| bad())?,
                b: t[1].parse().map_err(|_| bad())?,
                weight: t[2].parse().map_err(|_| bad())?,
            });
        }
        if lines.next().is_some() {
            return Err(Error::Parse(format!("more than {m} edge lines")));
        }
        Self::new(n, edges, vec![0; n])
    }
}

/// Graph of a network: one vertex per unit, one edge per nonzero weight.
///
/// With `include_biases`, every weight layer `l` gets an extra constant-input
/// vertex (numbered after all units, in layer order, assigned layer `l - 1`)
/// wired to each unit of layer `l` with weight `|b|`.
pub fn build_graph(model: &MlpModel, include_biases: bool) -> Result<WeightedGraph> {
    let dims = model.layer_dims();
    let offsets = model.layer_offsets();
    let units = model.num_units();
    let mut vertex_layer = Vec::with_capacity(units + dims.len());
    for (l, &d) in dims.iter().enumerate() {
        vertex_layer.extend(std::iter::repeat_n(l, d));
    }
    let mut edges = Vec::with_capacity(model.num_weights());
    for (l, w) in model.weights().iter().enumerate() {
        for ((r, c), &v) in w.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::NonFiniteWeight { layer: l + 1, row: r, col: c });
            }
            if v != 0.0 {
                edges.push(Edge { a: offsets[l] + c, b: offsets[l + 1] + r, weight: v.abs() });
            }
        }
    }
    let mut n = units;
    if include_biases {
        if let Some(bs) = model.biases() {
            for (l, b) in bs.iter().enumerate() {
                let bias_vertex = n;
                n += 1;
                vertex_layer.push(l);
                for (r, &v) in b.iter().enumerate() {
                    if v != 0.0 {
                        edges.push(Edge { a: bias_vertex, b: offsets[l + 1] + r, weight: v.abs() });
                    }
                }
            }
        }
    }
    WeightedGraph::new(n, edges, vertex_layer)
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub(crate) fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // keep the smaller id as root so groups are labeled by their lowest member
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }

    pub(crate) fn groups(&mut self) -> Vec<Vec<usize>> {
        let n = self.parent.len();
        let mut slot = vec![usize::MAX; n];
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for v in 0..n {
            let r = self.find(v);
            if slot[r] == usize::MAX {
                slot[r] = groups.len();
                groups.push(Vec::new());
            }
            groups[slot[r]].push(v);
        }
        groups
    }
}
