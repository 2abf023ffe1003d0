//! Rademacher-complexity and generalization bounds for networks whose
//! layers satisfy row-wise weighted-L1 budgets.
//!
//! Layer `l` (1-based) maps `V_{l-1}` to `V_l` through `W^l`; its budget
//! `B_{l-1}` caps `sum_b c^{l-1}(b) |W^l_ab|` for every row `a`. Bounds that
//! would divide by a zero weighting entry fail with [`Error::Unbounded`].

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::MlpModel;

/// `U_ab = (u(a) - u(b))^2`, evaluated on demand.
#[derive(Debug, Clone, PartialEq)]
pub struct UMatrix {
    u: Vec<f64>,
}

pub fn u_matrix(u: &[f64]) -> Result<UMatrix> {
    if u.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("test vector has non-finite entries".into()));
    }
    Ok(UMatrix { u: u.to_vec() })
}

impl UMatrix {
    pub fn dim(&self) -> usize {
        self.u.len()
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        (self.u[a] - self.u[b]).powi(2)
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let n = self.dim();
        Array2::from_shape_fn((n, n), |(a, b)| self.get(a, b))
    }
}

/// `c^{l-1}(b) = max_{a in V_l} U_ab` for every fully connected layer of
/// an architecture with widths `dims` (vertices numbered layer by layer).
pub fn weighting_vectors(u: &UMatrix, dims: &[usize]) -> Result<Vec<Vec<f64>>> {
    if dims.len() < 2 {
        return Err(Error::InvalidArgument("architecture needs at least two layers".into()));
    }
    if let Some(l) = dims.iter().position(|&d| d == 0) {
        return Err(Error::InvalidArgument(format!("layer {l} has zero width")));
    }
    let total: usize = dims.iter().sum();
    if total != u.dim() {
        return Err(Error::DimensionMismatch { expected: total, actual: u.dim() });
    }
    let mut offsets = vec![0];
    for &d in dims {
        offsets.push(offsets.last().unwrap() + d);
    }
    Ok((1..dims.len())
        .map(|l| {
            (offsets[l - 1]..offsets[l])
                .map(|b| (offsets[l]..offsets[l + 1]).map(|a| u.get(a, b)).fold(0.0, f64::max))
                .collect()
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    /// Lipschitz constant of the activation.
    pub gamma: f64,
    /// `B_0 .. B_{L-1}`; its length is the number of weight layers.
    pub budgets: Vec<f64>,
    /// `c^0 .. c^{L-1}`.
    pub weightings: Vec<Vec<f64>>,
    /// Sup-norm bound on the inputs.
    pub input_bound: f64,
    pub input_dim: usize,
    pub samples: usize,
    /// Failure probability of the high-probability statement.
    pub confidence: f64,
}

impl BoundInputs {
    pub fn layers(&self) -> usize {
        self.budgets.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.budgets.is_empty() {
            return bad("at least one layer budget is required".into());
        }
        if self.weightings.len() != self.budgets.len() {
            return Err(Error::DimensionMismatch { expected: self.budgets.len(), actual: self.weightings.len() });
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad(format!("Lipschitz constant {} must be >= 0", self.gamma));
        }
        if self.budgets.iter().any(|b| !(*b >= 0.0 && b.is_finite())) {
            return bad("budgets must be finite and >= 0".into());
        }
        for (l, c) in self.weightings.iter().enumerate() {
            if c.is_empty() || c.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
                return bad(format!("weighting vector {l} must be nonempty with entries >= 0"));
            }
        }
        check_linear_args(self.input_bound, self.input_dim, self.samples)?;
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return bad(format!("confidence {} must be in (0, 1)", self.confidence));
        }
        Ok(())
    }
}

fn check_linear_args(input_bound: f64, input_dim: usize, samples: usize) -> Result<()> {
    if !(input_bound >= 0.0 && input_bound.is_finite()) {
        return Err(Error::InvalidArgument(format!("input bound {input_bound} must be >= 0")));
    }
    if input_dim == 0 || samples == 0 {
        return Err(Error::InvalidArgument("input dimension and sample count must be >= 1".into()));
    }
    Ok(())
}

/// `C * sqrt(2 ln(2d) / N)`.
fn base_term(input_bound: f64, input_dim: usize, samples: usize) -> f64 {
    input_bound * (2.0 * (2.0 * input_dim as f64).ln() / samples as f64).sqrt()
}

/// `B / min(c)`, or `B` without weighting.
fn budget_ratio(budget: f64, weighting: Option<&[f64]>, layer: usize) -> Result<f64> {
    match weighting {
        None => Ok(budget),
        Some(c) => {
            let min = c.iter().copied().fold(f64::INFINITY, f64::min);
            if min <= 0.0 {
                return Err(Error::Unbounded(format!("weighting vector {layer} has a zero entry")));
            }
            Ok(budget / min)
        }
    }
}

/// Rademacher bound for `{x -> w.x : ||w||_1 <= B}` (or the weighted
/// budget `sum c_i |w_i| <= B`) on inputs with `||x||_inf <= C`.
pub fn linear_class_bound(
    budget: f64,
    input_bound: f64,
    input_dim: usize,
    samples: usize,
    weighting: Option<&[f64]>,
) -> Result<f64> {
    if !(budget >= 0.0 && budget.is_finite()) {
        return Err(Error::InvalidArgument(format!("budget {budget} must be >= 0")));
    }
    check_linear_args(input_bound, input_dim, samples)?;
    Ok(budget_ratio(budget, weighting, 0)? * base_term(input_bound, input_dim, samples))
}

/// `(2 gamma)^(L-1) * prod_l B_{l-1} / min(c^{l-1}) * C sqrt(2 ln(2d)/N)`.
pub fn network_rademacher_bound(inputs: &BoundInputs) -> Result<f64> {
    inputs.validate()?;
    let mut scale = (2.0 * inputs.gamma).powi(inputs.layers() as i32 - 1);
    for (l, (b, c)) in inputs.budgets.iter().zip(&inputs.weightings).enumerate() {
        scale *= budget_ratio(*b, Some(c), l)?;
    }
    Ok(scale * base_term(inputs.input_bound, inputs.input_dim, inputs.samples))
}

/// `2 R + sqrt(ln(1/confidence) / (2N))`.
pub fn generalization_bound(inputs: &BoundInputs, rademacher: f64) -> Result<f64> {
    if !(inputs.confidence > 0.0 && inputs.confidence < 1.0) {
        return Err(Error::InvalidArgument(format!("confidence {} must be in (0, 1)", inputs.confidence)));
    }
    if inputs.samples == 0 {
        return Err(Error::InvalidArgument("sample count must be >= 1".into()));
    }
    Ok(2.0 * rademacher + ((1.0 / inputs.confidence).ln() / (2.0 * inputs.samples as f64)).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
}

/// Monte-Carlo empirical Rademacher complexity of a finite class whose
/// member `h` has outputs `outputs[h, i]` on the `N` sample points.
pub fn empirical_rademacher_mc(outputs: &Array2<f64>, trials: usize, seed: u64) -> Result<McEstimate> {
    let (classes, n) = outputs.dim();
    if classes == 0 || n == 0 {
        return Err(Error::InvalidArgument("function class and sample must be nonempty".into()));
    }
    if trials < 2 {
        return Err(Error::InvalidArgument("at least two trials are needed".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut signs = vec![0.0; n];
    let draws: Vec<f64> = (0..trials)
        .map(|_| {
            for s in signs.iter_mut() {
                *s = if rng.random::<bool>() { 1.0 } else { -1.0 };
            }
            outputs
                .rows()
                .into_iter()
                .map(|h| h.iter().zip(&signs).map(|(v, s)| v * s).sum::<f64>() / n as f64)
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let t = trials as f64;
    let mean = draws.iter().sum::<f64>() / t;
    let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (t - 1.0);
    Ok(McEstimate { estimate: mean, std_error: (var / t).sqrt() })
}

/// Smallest budgets a trained model satisfies: for each layer, the largest
/// row-wise `sum_b c(b) |W_ab|`. Biases are not part of the constraint.
pub fn measured_budgets(model: &MlpModel, weightings: &[Vec<f64>]) -> Result<Vec<f64>> {
    if weightings.len() != model.depth() {
        return Err(Error::DimensionMismatch { expected: model.depth(), actual: weightings.len() });
    }
    model
        .weights()
        .iter()
        .zip(weightings)
        .map(|(w, c)| {
            if c.len() != w.ncols() {
                return Err(Error::DimensionMismatch { expected: w.ncols(), actual: c.len() });
            }
            Ok(w.rows()
                .into_iter()
                .map(|row| row.iter().zip(c).map(|(x, ci)| ci * x.abs()).sum::<f64>())
                .fold(0.0, f64::max))
        })
        .collect()
}

/// Bound inputs for a trained model under the Fiedler weighting built from
/// test vector `u` (one entry per unit), with budgets measured from the weights.
pub fn fiedler_bound_inputs(
    model: &MlpModel,
    u: &[f64],
    input_bound: f64,
    samples: usize,
    confidence: f64,
) -> Result<BoundInputs> {
    let weightings = weighting_vectors(&u_matrix(u)?, model.layer_dims())?;
    let budgets = measured_budgets(model, &weightings)?;
    Ok(BoundInputs {
        gamma: model.activation().lipschitz(),
        budgets,
        weightings,
        input_bound,
        input_dim: model.input_dim(),
        samples,
        confidence,
    })
}
