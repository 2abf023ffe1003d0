//! Penalty terms and their weight gradients.
//!
//! The Fiedler penalty in its variational form is the Laplacian quadratic
//! form of a fixed test vector `u`, which is a weighted L1 norm of the
//! weights with per-edge factors `(u(i) - u(j))^2`. It upper-bounds
//! `delta * lambda2` and costs one pass over the edges.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laplacian::NetworkLaplacian;
use crate::network::MlpModel;
use crate::spectral::{self, DENSE_LIMIT};

pub const DEFAULT_FIEDLER_DELTA: f64 = 0.01;
pub const DEFAULT_L1_COEFF: f64 = 0.001;
pub const DEFAULT_WEIGHT_DECAY: f64 = 0.01;
pub const DEFAULT_DROPOUT: f64 = 0.5;
pub const DEFAULT_REFRESH_PERIOD: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyMode {
    /// `delta * u^T L u` for the stored test vector.
    Variational,
    /// `delta * lambda2`, solved densely on every evaluation.
    Exact,
}

/// Test vector and schedule for the Fiedler penalty.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyState {
    pub u: Vec<f64>,
    /// Iterations completed.
    pub counter: usize,
    /// Refresh period `T`.
    pub period: usize,
    pub delta: f64,
    pub mode: PenaltyMode,
}

impl PenaltyState {
    /// `u` is re-projected against the constant vector and normalized.
    pub fn new(u: &[f64], period: usize, delta: f64, mode: PenaltyMode) -> Result<Self> {
        if period == 0 {
            return Err(Error::InvalidArgument("refresh period must be >= 1".into()));
        }
        if !(delta >= 0.0) || !delta.is_finite() {
            return Err(Error::InvalidArgument(format!("penalty coefficient {delta} must be >= 0")));
        }
        Ok(PenaltyState {
            u: spectral::project_test_vector(u)?,
            counter: 0,
            period,
            delta,
            mode,
        })
    }

    /// Whether the iteration just counted is a refresh point.
    pub fn refresh_due(&self) -> bool {
        self.counter.is_multiple_of(self.period)
    }
}

/// Penalty value, gradient w.r.t. each signed weight, and the number of
/// edges visited while computing them.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyEval {
    pub value: f64,
    pub weight_grads: Vec<Array2<f64>>,
    pub edges_visited: usize,
}

fn sign(w: f64) -> f64 {
    if w > 0.0 {
        1.0
    } else if w < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Sums `|W_ab| * factor(a, b)` over the network's edges (nonzero weights)
/// and returns `scale * factor * sign(W)` as the gradient.
fn edge_weighted_l1(
    model: &MlpModel,
    scale: f64,
    factor: impl Fn(usize, usize) -> f64,
) -> PenaltyEval {
    let offsets = model.layer_offsets();
    let mut value = 0.0;
    let mut visited = 0;
    let mut grads = Vec::with_capacity(model.depth());
    for (l, w) in model.weights().iter().enumerate() {
        let mut g = Array2::zeros(w.raw_dim());
        for ((r, c), &v) in w.indexed_iter() {
            if v == 0.0 {
                continue;
            }
            visited += 1;
            let f = factor(offsets[l] + c, offsets[l + 1] + r);
            value += v.abs() * f;
            g[[r, c]] = scale * f * sign(v);
        }
        grads.push(g);
    }
    PenaltyEval { value: scale * value, weight_grads: grads, edges_visited: visited }
}

/// Fiedler penalty for the current weights.
///
/// Variational: `delta * sum |W_ij| (u(i) - u(j))^2` with gradient
/// `delta (u(i) - u(j))^2 sign(W_ij)`. Exact: `delta * lambda2(|W|)` with
/// gradient `delta (v2(i) - v2(j))^2 sign(W_ij)`, restricted to networks
/// with at most 64 units.
pub fn fiedler_penalty(model: &MlpModel, state: &PenaltyState) -> Result<PenaltyEval> {
    let n = model.num_units();
    match state.mode {
        PenaltyMode::Variational => {
            if state.u.len() != n {
                return Err(Error::DimensionMismatch { expected: n, actual: state.u.len() });
            }
            let u = &state.u;
            Ok(edge_weighted_l1(model, state.delta, |a, b| (u[a] - u[b]).powi(2)))
        }
        PenaltyMode::Exact => {
            if n > DENSE_LIMIT {
                return Err(Error::InvalidArgument(format!(
                    "exact Fiedler penalty limited to {DENSE_LIMIT} units (network has {n})"
                )));
            }
            let lap = NetworkLaplacian::from_model(model);
            let pair = spectral::fiedler_pair_dense(lap.matrix())?;
            let v = &pair.v2;
            let mut eval = edge_weighted_l1(model, state.delta, |a, b| (v[a] - v[b]).powi(2));
            eval.value = state.delta * pair.lambda2;
            Ok(eval)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    L1,
    WeightDecay,
}

impl std::str::FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l1" => Ok(BaselineKind::L1),
            "weight_decay" | "weight-decay" => Ok(BaselineKind::WeightDecay),
            other => Err(Error::InvalidArgument(format!("unknown penalty kind '{other}'"))),
        }
    }
}

/// `coeff * sum |W|` (sign subgradient) or `coeff * sum W^2` (gradient `2 coeff W`).
pub fn baseline_penalty(model: &MlpModel, kind: BaselineKind, coeff: f64) -> Result<PenaltyEval> {
    if !(coeff >= 0.0) || !coeff.is_finite() {
        return Err(Error::InvalidArgument(format!("penalty coefficient {coeff} must be >= 0")));
    }
    match kind {
        BaselineKind::L1 => Ok(edge_weighted_l1(model, coeff, |_, _| 1.0)),
        BaselineKind::WeightDecay => {
            let mut value = 0.0;
            let grads = model
                .weights()
                .iter()
                .map(|w| {
                    value += w.iter().map(|v| v * v).sum::<f64>();
                    w.mapv(|v| 2.0 * coeff * v)
                })
                .collect();
            Ok(PenaltyEval {
                value: coeff * value,
                weight_grads: grads,
                edges_visited: model.num_weights(),
            })
        }
    }
}

/// Inverted-dropout mask: each entry is 0 with probability `p`, else `1/(1-p)`.
pub fn dropout_mask<R: Rng + ?Sized>(shape: (usize, usize), p: f64, rng: &mut R) -> Result<Array2<f64>> {
    check_dropout(p)?;
    let keep = 1.0 / (1.0 - p);
    Ok(Array2::from_shape_simple_fn(shape, || if rng.random::<f64>() < p { 0.0 } else { keep }))
}

fn check_dropout(p: f64) -> Result<()> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("dropout probability {p} must be in [0, 1)")));
    }
    Ok(())
}

/// Applies inverted dropout to layer outputs. At inference (`training =
/// false`) the outputs pass through unchanged.
pub fn apply_dropout<R: Rng + ?Sized>(
    outputs: &Array2<f64>,
    p: f64,
    rng: &mut R,
    training: bool,
) -> Result<Array2<f64>> {
    check_dropout(p)?;
    if !training || p == 0.0 {
        return Ok(outputs.clone());
    }
    Ok(outputs * &dropout_mask(outputs.dim(), p, rng)?)
}
