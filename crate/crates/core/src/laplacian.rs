//! Sparse graph Laplacian `L = D - |W|` in CSR form.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::{UnionFind, WeightedGraph};
use crate::network::MlpModel;

/// Symmetric Laplacian stored row-compressed. Every row holds its diagonal
/// entry; off-diagonal entries may be explicit zeros (pruned weights).
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    diag_pos: Vec<usize>,
}

/// CSR positions of one undirected edge.
#[derive(Debug, Clone, Copy)]
struct EdgeSlots {
    ab: usize,
    ba: usize,
    a_diag: usize,
    b_diag: usize,
}

impl LaplacianMatrix {
    fn assemble(n: usize, edges: impl Iterator<Item = (usize, usize, f64)>) -> (Self, Vec<EdgeSlots>) {
        let edges: Vec<(usize, usize, f64)> = edges.collect();
        // entry = (row, col, edge index or usize::MAX for the diagonal)
        let mut entries: Vec<(usize, usize, usize)> = Vec::with_capacity(2 * edges.len() + n);
        for i in 0..n {
            entries.push((i, i, usize::MAX));
        }
        for (k, &(a, b, _)) in edges.iter().enumerate() {
            entries.push((a, b, k));
            entries.push((b, a, k));
        }
        entries.sort_unstable_by_key(|&(r, c, _)| (r, c));

        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut values = vec![0.0; entries.len()];
        let mut diag_pos = vec![0usize; n];
        let mut slots = vec![EdgeSlots { ab: 0, ba: 0, a_diag: 0, b_diag: 0 }; edges.len()];
        for (pos, &(r, c, k)) in entries.iter().enumerate() {
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            if k == usize::MAX {
                diag_pos[r] = pos;
            } else if r == edges[k].0 {
                slots[k].ab = pos;
            } else {
                slots[k].ba = pos;
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        for (k, &(a, b, w)) in edges.iter().enumerate() {
            let s = &mut slots[k];
            s.a_diag = diag_pos[a];
            s.b_diag = diag_pos[b];
            values[s.ab] = -w;
            values[s.ba] = -w;
            values[s.a_diag] += w;
            values[s.b_diag] += w;
        }
        (LaplacianMatrix { n, row_ptr, col_idx, values, diag_pos }, slots)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of stored off-diagonal pairs (explicit zeros included).
    pub fn num_edges(&self) -> usize {
        (self.values.len() - self.n) / 2
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let row = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
        match row.binary_search(&j) {
            Ok(k) => self.values[self.row_ptr[i] + k],
            Err(_) => 0.0,
        }
    }

    pub fn degree(&self, i: usize) -> f64 {
        self.values[self.diag_pos[i]]
    }

    pub fn max_degree(&self) -> f64 {
        (0..self.n).map(|i| self.degree(i)).fold(0.0, f64::max)
    }

    /// Iterates `(row, col, value)` over stored entries.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |p| (i, self.col_idx[p], self.values[p]))
        })
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.values[self.row_ptr[i]..self.row_ptr[i + 1]].iter().sum())
            .collect()
    }

    /// `y = L x`.
    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[p] * x[self.col_idx[p]];
            }
            *yi = s;
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y);
        y
    }

    /// `z^T L z`, evaluated as the edge sum `sum w_ij (z_i - z_j)^2` so the
    /// result is non-negative even under round-off.
    pub fn quadratic_form(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, actual: z.len() });
        }
        let mut s = 0.0;
        for i in 0..self.n {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[p];
                if j > i {
                    let d = z[i] - z[j];
                    s -= self.values[p] * d * d;
                }
            }
        }
        Ok(s)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for (i, j, v) in self.entries() {
            m[(i, j)] = v;
        }
        m
    }

    /// Components over off-diagonal entries with weight `> 0`, ordered by
    /// lowest vertex id.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut uf = UnionFind::new(self.n);
        for (i, j, v) in self.entries() {
            if j > i && -v > 0.0 {
                uf.union(i, j);
            }
        }
        uf.groups()
    }

    /// Principal submatrix on `kept` (sorted ids), with degrees recomputed
    /// from the surviving off-diagonal entries.
    pub fn restrict(&self, kept: &[usize]) -> LaplacianMatrix {
        let mut index = vec![usize::MAX; self.n];
        for (new, &old) in kept.iter().enumerate() {
            index[old] = new;
        }
        let edges = self
            .entries()
            .filter(|&(i, j, _)| j > i && index[i] != usize::MAX && index[j] != usize::MAX)
            .map(|(i, j, v)| (index[i], index[j], -v));
        LaplacianMatrix::assemble(kept.len(), edges).0
    }
}

/// Laplacian of a weighted graph.
pub fn laplacian(graph: &WeightedGraph) -> LaplacianMatrix {
    LaplacianMatrix::assemble(
        graph.num_vertices(),
        graph.edges().iter().map(|e| (e.a, e.b, e.weight)),
    )
    .0
}

/// Drops every vertex outside the largest component (ties go to the
/// component holding the lowest vertex id). Returns the reduced Laplacian
/// and the kept ids; a connected input comes back unchanged.
pub fn restrict_to_largest_component(lap: &LaplacianMatrix) -> (LaplacianMatrix, Vec<usize>) {
    let comps = lap.components();
    if comps.len() <= 1 {
        return (lap.clone(), (0..lap.dim()).collect());
    }
    let mut best = &comps[0];
    for c in &comps[1..] {
        if c.len() > best.len() {
            best = c;
        }
    }
    (lap.restrict(best), best.clone())
}

/// Laplacian of a network's full connection pattern, kept in sync with the
/// weights through O(|E|) incremental updates.
///
/// Every weight owns one off-diagonal pair, including weights that are
/// currently zero, so the sparsity pattern never changes during training.
#[derive(Debug, Clone)]
pub struct NetworkLaplacian {
    matrix: LaplacianMatrix,
    slots: Vec<EdgeSlots>,
}

impl NetworkLaplacian {
    pub fn from_model(model: &MlpModel) -> Self {
        let offsets = model.layer_offsets();
        let edges = model.weights().iter().enumerate().flat_map(|(l, w)| {
            let (a0, b0) = (offsets[l], offsets[l + 1]);
            w.indexed_iter().map(move |((r, c), &v)| (a0 + c, b0 + r, v.abs()))
        });
        let (matrix, slots) = LaplacianMatrix::assemble(model.num_units(), edges);
        NetworkLaplacian { matrix, slots }
    }

    pub fn matrix(&self) -> &LaplacianMatrix {
        &self.matrix
    }

    /// Applies the change from the stored weights to `model`'s weights.
    pub fn update(&mut self, model: &MlpModel) {
        let values = &mut self.matrix.values;
        let flat = model.weights().iter().flat_map(|w| w.iter());
        for (s, &w) in self.slots.iter().zip(flat) {
            let new = w.abs();
            let delta = new + values[s.ab];
            if delta != 0.0 {
                values[s.ab] = -new;
                values[s.ba] = -new;
                values[s.a_diag] += delta;
                values[s.b_diag] += delta;
            }
        }
    }

    /// Recomputes every diagonal from its row's off-diagonal entries,
    /// removing drift accumulated by incremental updates.
    pub fn resync_diagonal(&mut self) {
        let m = &mut self.matrix;
        for i in 0..m.n {
            let mut deg = 0.0;
            for p in m.row_ptr[i]..m.row_ptr[i + 1] {
                if m.col_idx[p] != i {
                    deg -= m.values[p];
                }
            }
            m.values[m.diag_pos[i]] = deg;
        }
    }
}
