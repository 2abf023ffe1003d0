//! Algebraic connectivity and its companions.
//!
//! `lambda2` is the smallest eigenvalue of `L` on the subspace orthogonal to
//! the constant vector. Small problems go to a dense symmetric solver; larger
//! ones to a restarted Lanczos iteration that deflates the constant vector
//! from every basis vector.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::laplacian::LaplacianMatrix;

/// Below this `lambda2` the graph is treated as disconnected.
pub const DISCONNECT_TOL: f64 = 1e-9;
/// Eigenvalues closer than this are treated as repeated.
pub const GAP_TOL: f64 = 1e-8;
/// Largest dimension handled by the dense solver.
pub const DENSE_LIMIT: usize = 64;

/// Second Laplacian eigenpair.
#[derive(Debug, Clone, PartialEq)]
pub struct FiedlerPair {
    pub lambda2: f64,
    /// Unit vector orthogonal to the constant vector. Sign fixed so the
    /// largest-magnitude entry is positive.
    pub v2: Vec<f64>,
    /// `||L v2 - lambda2 v2||`.
    pub residual: f64,
    /// `lambda3 - lambda2` (a Ritz estimate for the Lanczos path);
    /// infinite for two-vertex graphs.
    pub gap: f64,
}

impl FiedlerPair {
    pub fn is_simple(&self) -> bool {
        self.gap > GAP_TOL
    }

    pub fn gradient(&self, i: usize, j: usize) -> Result<EigenGradient> {
        eigenvalue_gradient(&self.v2, self.gap, i, j)
    }
}

#[derive(Debug, Clone)]
pub struct LanczosOptions {
    pub tol: f64,
    /// Basis size before a restart.
    pub max_basis: usize,
    /// Ritz vectors carried across a restart.
    pub keep: usize,
    pub max_restarts: usize,
    pub seed: u64,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        LanczosOptions { tol: 1e-9, max_basis: 64, keep: 12, max_restarts: 2000, seed: 0x5eed }
    }
}

impl LanczosOptions {
    pub fn with_tol(tol: f64) -> Self {
        LanczosOptions { tol, ..Default::default() }
    }
}

/// Fiedler pair with the solver chosen by size. Fails with
/// [`Error::DisconnectedSpectrum`] when `lambda2 < DISCONNECT_TOL`.
pub fn fiedler_pair(lap: &LaplacianMatrix, tol: f64) -> Result<FiedlerPair> {
    check_connected(fiedler_pair_unchecked(lap, tol)?)
}

/// As [`fiedler_pair`] but returns the pair even for (near) disconnected graphs.
pub fn fiedler_pair_unchecked(lap: &LaplacianMatrix, tol: f64) -> Result<FiedlerPair> {
    if lap.dim() <= DENSE_LIMIT {
        dense_fiedler(lap)
    } else {
        lanczos_fiedler(lap, &LanczosOptions::with_tol(tol))
    }
}

/// Dense route, with the disconnection check.
pub fn fiedler_pair_dense(lap: &LaplacianMatrix) -> Result<FiedlerPair> {
    check_connected(dense_fiedler(lap)?)
}

/// Lanczos route regardless of size, with the disconnection check.
pub fn fiedler_pair_lanczos(lap: &LaplacianMatrix, opts: &LanczosOptions) -> Result<FiedlerPair> {
    check_connected(lanczos_fiedler(lap, opts)?)
}

fn check_connected(pair: FiedlerPair) -> Result<FiedlerPair> {
    if pair.lambda2 < DISCONNECT_TOL {
        Err(Error::DisconnectedSpectrum { lambda2: pair.lambda2 })
    } else {
        Ok(pair)
    }
}

fn require_two(lap: &LaplacianMatrix) -> Result<()> {
    if lap.dim() < 2 {
        return Err(Error::InvalidArgument(
            "the Fiedler pair needs at least two vertices".into(),
        ));
    }
    Ok(())
}

/// All eigenpairs of `L`, ascending. Dense; meant for small graphs and tests.
pub fn dense_eigenpairs(lap: &LaplacianMatrix) -> Vec<(f64, Vec<f64>)> {
    let eig = SymmetricEigen::new(lap.to_dense());
    let mut pairs: Vec<(f64, Vec<f64>)> = eig
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(k, &val)| (val, eig.eigenvectors.column(k).iter().copied().collect()))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs
}

fn dense_fiedler(lap: &LaplacianMatrix) -> Result<FiedlerPair> {
    require_two(lap)?;
    let n = lap.dim();
    // lift the constant eigenvector above the spectrum (lambda_max <= 2 d_max)
    let shift = 4.0 * lap.max_degree() + 1.0;
    let mut m = lap.to_dense();
    m.add_scalar_mut(shift / n as f64);
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let v: Vec<f64> = eig.eigenvectors.column(order[0]).iter().copied().collect();
    let gap = if n > 2 {
        eig.eigenvalues[order[1]] - eig.eigenvalues[order[0]]
    } else {
        f64::INFINITY
    };
    finish_pair(lap, v, gap)
}

/// Projects, normalizes, fixes the sign, and evaluates `lambda2` and the residual.
fn finish_pair(lap: &LaplacianMatrix, v: Vec<f64>, gap: f64) -> Result<FiedlerPair> {
    let mut v = project_test_vector(&v)?;
    // first entry within round-off of the largest magnitude decides the sign
    let max = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let idx = v.iter().position(|x| x.abs() >= max * (1.0 - 1e-9)).unwrap_or(0);
    if v[idx] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    let lambda2 = lap.quadratic_form(&v)?;
    let lv = lap.matvec(&v);
    let residual = lv.iter().zip(&v).map(|(a, b)| (a - lambda2 * b).powi(2)).sum::<f64>().sqrt();
    Ok(FiedlerPair { lambda2, v2: v, residual, gap })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn remove_mean(x: &mut [f64]) {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    x.iter_mut().for_each(|v| *v -= mean);
}

/// Orthogonalizes `w` against the constant vector and `basis` (two passes).
fn orthogonalize(w: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        remove_mean(w);
        for q in basis {
            let c = dot(w, q);
            w.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
        }
    }
}

fn lanczos_fiedler(lap: &LaplacianMatrix, opts: &LanczosOptions) -> Result<FiedlerPair> {
    require_two(lap)?;
    let n = lap.dim();
    let space = n - 1;
    let max_basis = opts.max_basis.clamp(2, space.max(2)).min(space);
    let keep = opts.keep.clamp(1, max_basis.saturating_sub(1).max(1));
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let scale = lap.max_degree().max(f64::MIN_POSITIVE);

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(max_basis);
    let mut images: Vec<Vec<f64>> = Vec::with_capacity(max_basis);
    let mut candidate: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    let mut last_residual = f64::INFINITY;

    for restart in 0..=opts.max_restarts {
        while basis.len() < max_basis {
            let mut w = std::mem::take(&mut candidate);
            let before = norm(&w);
            orthogonalize(&mut w, &basis);
            let mut len = norm(&w);
            if len <= 1e-10 * before.max(f64::MIN_POSITIVE) {
                // invariant subspace reached; continue from a fresh direction
                w = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
                orthogonalize(&mut w, &basis);
                len = norm(&w);
                if len <= 1e-10 {
                    break;
                }
            }
            w.iter_mut().for_each(|x| *x /= len);
            let image = lap.matvec(&w);
            candidate = image.clone();
            basis.push(w);
            images.push(image);
        }

        let k = basis.len();
        let mut h = DMatrix::zeros(k, k);
        for a in 0..k {
            for b in a..k {
                let v = 0.5 * (dot(&basis[a], &images[b]) + dot(&basis[b], &images[a]));
                h[(a, b)] = v;
                h[(b, a)] = v;
            }
        }
        let eig = SymmetricEigen::new(h);
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

        let combine = |vectors: &[Vec<f64>], col: usize| -> Vec<f64> {
            let mut out = vec![0.0; n];
            for (q, &c) in vectors.iter().zip(eig.eigenvectors.column(col).iter()) {
                out.iter_mut().zip(q).for_each(|(o, x)| *o += c * x);
            }
            out
        };
        let x = combine(&basis, order[0]);
        let ax = combine(&images, order[0]);
        let theta = eig.eigenvalues[order[0]];
        let residual_vec: Vec<f64> = ax.iter().zip(&x).map(|(a, b)| a - theta * b).collect();
        last_residual = norm(&residual_vec);
        let exhausted = k == space;

        if last_residual <= opts.tol || exhausted {
            let gap = if k > 1 {
                eig.eigenvalues[order[1]] - theta
            } else {
                f64::INFINITY
            };
            let pair = finish_pair(lap, x, if space == 1 { f64::INFINITY } else { gap })?;
            if pair.residual <= opts.tol.max(1e-13 * scale) || exhausted {
                return Ok(pair);
            }
        }
        if restart == opts.max_restarts {
            break;
        }

        // thick restart: keep the lowest Ritz vectors and continue the Krylov
        // sequence from the residual of the lowest one
        let kept = keep.min(k);
        let new_basis: Vec<Vec<f64>> = order[..kept].iter().map(|&c| combine(&basis, c)).collect();
        let new_images: Vec<Vec<f64>> = order[..kept].iter().map(|&c| combine(&images, c)).collect();
        basis = new_basis;
        images = new_images;
        candidate = residual_vec;
    }
    Err(Error::NotConverged { iterations: opts.max_restarts, residual: last_residual })
}

/// Re-projects `u` against the constant vector and scales it to unit length.
pub fn project_test_vector(u: &[f64]) -> Result<Vec<f64>> {
    let mut v = u.to_vec();
    if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
        return Err(Error::DegenerateTestVector);
    }
    remove_mean(&mut v);
    let len = norm(&v);
    let scale = u.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if len == 0.0 || len <= 1e-14 * scale * (u.len() as f64).sqrt() {
        return Err(Error::DegenerateTestVector);
    }
    v.iter_mut().for_each(|x| *x /= len);
    Ok(v)
}

/// `u^T L u` for the test vector `u` (re-projected and normalized first).
/// Always `>= lambda2`, with equality at the Fiedler vector.
pub fn test_vector_bound(lap: &LaplacianMatrix, u: &[f64]) -> Result<f64> {
    if u.len() != lap.dim() {
        return Err(Error::DimensionMismatch { expected: lap.dim(), actual: u.len() });
    }
    lap.quadratic_form(&project_test_vector(u)?)
}

/// Sensitivities of a simple eigenvalue with unit eigenvector `v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenGradient {
    /// `d lambda / d L_ij = v(i) v(j)`, the single-entry partial.
    pub wrt_laplacian_entry: f64,
    /// `d lambda / d |W|_ij = -v(i) v(j)`, the partial through the
    /// off-diagonal entry `L_ij = -|W|_ij` alone.
    pub wrt_adjacency_entry: f64,
    /// `(v(i) - v(j))^2`, the total derivative when the edge weight moves
    /// both off-diagonal entries and both degrees of `L = D - |W|`.
    pub wrt_edge_weight: f64,
    /// Set when the eigenvalue gap is below [`GAP_TOL`]; the values are
    /// still returned for the computed eigenvector.
    pub degenerate: bool,
}

pub fn eigenvalue_gradient(v: &[f64], gap: f64, i: usize, j: usize) -> Result<EigenGradient> {
    if i == j {
        return Err(Error::InvalidArgument("eigenvalue gradient needs i != j".into()));
    }
    if i >= v.len() || j >= v.len() {
        return Err(Error::DimensionMismatch { expected: v.len(), actual: i.max(j) + 1 });
    }
    let prod = v[i] * v[j];
    Ok(EigenGradient {
        wrt_laplacian_entry: prod,
        wrt_adjacency_entry: -prod,
        wrt_edge_weight: (v[i] - v[j]).powi(2),
        degenerate: !(gap > GAP_TOL),
    })
}

/// `||H||_op`, which bounds `|lambda_i(L + H) - lambda_i(L)|` for every `i`.
pub fn weyl_change_bound(h: &DMatrix<f64>) -> Result<f64> {
    if !h.is_square() {
        return Err(Error::InvalidArgument("perturbation must be square".into()));
    }
    let scale = h.amax();
    let asym = (h - h.transpose()).amax();
    if asym > 1e-12 * scale.max(1.0) {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    if h.nrows() == 0 {
        return Ok(0.0);
    }
    let sym = (h + h.transpose()) * 0.5;
    Ok(SymmetricEigen::new(sym).eigenvalues.amax())
}

/// Cheeger sandwich `(lambda2 / 2, sqrt(2 d_max lambda2))` for the edge expansion.
pub fn cheeger_bounds(lambda2: f64, d_max: f64) -> Result<(f64, f64)> {
    if !(lambda2 >= 0.0 && d_max >= 0.0) || !lambda2.is_finite() || !d_max.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "Cheeger bounds need lambda2 >= 0 and d_max >= 0 (got {lambda2}, {d_max})"
        )));
    }
    Ok((lambda2 / 2.0, (2.0 * d_max * lambda2).sqrt()))
}
