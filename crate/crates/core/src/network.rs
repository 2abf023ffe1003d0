//! Minimal fully connected feedforward network.
//!
//! A model with dims `[d_0, ..., d_L]` has `L` weight layers. Layer `l`
//! (1-based) holds a `d_l x d_{l-1}` matrix and an optional bias vector.
//! Hidden layers apply the activation; the last affine map is returned as
//! logits with no activation on top.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use ndarray::{Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    /// Lipschitz constant of the activation (both are 1-Lipschitz).
    pub fn lipschitz(self) -> f64 {
        1.0
    }

    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative given pre-activation `z` and output `h`. `relu'(0) = 0`.
    fn derivative(self, z: f64, h: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - h * h,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::Parse(format!("unknown activation '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layer_dims: Vec<usize>,
    weights: Vec<Array2<f64>>,
    biases: Option<Vec<Array1<f64>>>,
    activation: Activation,
}

/// Labeled minibatch: `inputs` is `N x d_0`, one class id per row.
#[derive(Debug, Clone)]
pub struct Batch {
    pub inputs: Array2<f64>,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn new(inputs: Array2<f64>, labels: Vec<usize>) -> Result<Self> {
        if inputs.nrows() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: inputs.nrows(),
                actual: labels.len(),
            });
        }
        if inputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("batch has non-finite inputs".into()));
        }
        Ok(Batch { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Intermediate values kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `pre[l]` is the affine output of weight layer `l + 1`.
    pub pre: Vec<Array2<f64>>,
    /// `hidden[l]` is `h^(l)` after activation (and dropout mask); `hidden[0]` is the input.
    pub hidden: Vec<Array2<f64>>,
}

/// Parameter-shaped gradient (or update) buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Option<Vec<Array1<f64>>>,
}

impl Gradients {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Gradients {
            weights: model.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            biases: model
                .biases
                .as_ref()
                .map(|bs| bs.iter().map(|b| Array1::zeros(b.len())).collect()),
        }
    }

    /// `self += scale * other`, layer by layer.
    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.scaled_add(scale, b);
        }
        if let (Some(mine), Some(theirs)) = (self.biases.as_mut(), other.biases.as_ref()) {
            for (a, b) in mine.iter_mut().zip(theirs) {
                a.scaled_add(scale, b);
            }
        }
    }

    /// Adds `scale * g` to the weight part only.
    pub fn add_weights_scaled(&mut self, weights: &[Array2<f64>], scale: f64) {
        for (a, b) in self.weights.iter_mut().zip(weights) {
            a.scaled_add(scale, b);
        }
    }
}

impl MlpModel {
    /// Assemble a model from explicit parameters, checking that shapes chain.
    pub fn from_parts(
        layer_dims: Vec<usize>,
        weights: Vec<Array2<f64>>,
        biases: Option<Vec<Array1<f64>>>,
        activation: Activation,
    ) -> Result<Self> {
        if layer_dims.len() < 2 {
            return Err(Error::InvalidArgument(
                "architecture needs at least one weight layer".into(),
            ));
        }
        if layer_dims.contains(&0) {
            return Err(Error::InvalidArgument("layer widths must be >= 1".into()));
        }
        if weights.len() != layer_dims.len() - 1 {
            return Err(Error::DimensionMismatch {
                expected: layer_dims.len() - 1,
                actual: weights.len(),
            });
        }
        for (l, w) in weights.iter().enumerate() {
            if w.dim() != (layer_dims[l + 1], layer_dims[l]) {
                return Err(Error::InvalidArgument(format!(
                    "layer {} weight shape {:?}, expected {:?}",
                    l + 1,
                    w.dim(),
                    (layer_dims[l + 1], layer_dims[l])
                )));
            }
            if let Some(((r, c), _)) = w.indexed_iter().find(|(_, v)| !v.is_finite()) {
                return Err(Error::NonFiniteWeight { layer: l + 1, row: r, col: c });
            }
        }
        if let Some(bs) = &biases {
            if bs.len() != weights.len() {
                return Err(Error::DimensionMismatch {
                    expected: weights.len(),
                    actual: bs.len(),
                });
            }
            for (l, b) in bs.iter().enumerate() {
                if b.len() != layer_dims[l + 1] {
                    return Err(Error::DimensionMismatch {
                        expected: layer_dims[l + 1],
                        actual: b.len(),
                    });
                }
                if b.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidArgument(format!(
                        "non-finite bias in layer {}",
                        l + 1
                    )));
                }
            }
        }
        Ok(MlpModel { layer_dims, weights, biases, activation })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    /// Number of weight layers.
    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.weights
    }

    pub fn biases(&self) -> Option<&[Array1<f64>]> {
        self.biases.as_deref()
    }

    pub fn biases_mut(&mut self) -> Option<&mut [Array1<f64>]> {
        self.biases.as_deref_mut()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn num_weights(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum()
    }

    pub fn num_biases(&self) -> usize {
        self.biases.as_ref().map_or(0, |bs| bs.iter().map(|b| b.len()).sum())
    }

    /// Total number of units, input and output included.
    pub fn num_units(&self) -> usize {
        self.layer_dims.iter().sum()
    }

    /// Vertex id of the first unit of each layer (inputs first).
    pub fn layer_offsets(&self) -> Vec<usize> {
        layer_offsets(&self.layer_dims)
    }

    /// Fraction of weights with magnitude below `threshold`.
    pub fn sparsity(&self, threshold: f64) -> f64 {
        let small = self
            .weights
            .iter()
            .flat_map(|w| w.iter())
            .filter(|v| v.abs() < threshold)
            .count();
        small as f64 / self.num_weights() as f64
    }

    /// `W <- W - step * update` for every parameter.
    pub fn apply_update(&mut self, update: &Gradients, step: f64) {
        for (w, g) in self.weights.iter_mut().zip(&update.weights) {
            w.scaled_add(-step, g);
        }
        if let (Some(bs), Some(gs)) = (self.biases.as_mut(), update.biases.as_ref()) {
            for (b, g) in bs.iter_mut().zip(gs) {
                b.scaled_add(-step, g);
            }
        }
    }

    /// Forward pass. Returns logits (`N x d_L`) and the cache used by backprop.
    pub fn forward(&self, inputs: &Array2<f64>) -> Result<(Array2<f64>, ForwardCache)> {
        self.forward_masked(inputs, None)
    }

    /// Forward pass with optional multiplicative masks on each hidden layer
    /// (`masks[l - 1]` multiplies `h^(l)`), used for dropout.
    pub fn forward_masked(
        &self,
        inputs: &Array2<f64>,
        masks: Option<&[Array2<f64>]>,
    ) -> Result<(Array2<f64>, ForwardCache)> {
        if inputs.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: inputs.ncols(),
            });
        }
        let depth = self.depth();
        if let Some(ms) = masks {
            if ms.len() != depth - 1 {
                return Err(Error::DimensionMismatch { expected: depth - 1, actual: ms.len() });
            }
        }
        let mut pre = Vec::with_capacity(depth);
        let mut hidden = Vec::with_capacity(depth);
        hidden.push(inputs.to_owned());
        for l in 0..depth {
            let mut z = hidden[l].dot(&self.weights[l].t());
            if let Some(bs) = &self.biases {
                z += &bs[l];
            }
            if l + 1 < depth {
                let act = self.activation;
                let mut h = z.mapv(|v| act.apply(v));
                if let Some(ms) = masks {
                    if ms[l].dim() != h.dim() {
                        return Err(Error::InvalidArgument(format!(
                            "dropout mask shape {:?} does not match layer output {:?}",
                            ms[l].dim(),
                            h.dim()
                        )));
                    }
                    h *= &ms[l];
                }
                pre.push(z);
                hidden.push(h);
            } else {
                pre.push(z);
            }
        }
        let logits = pre.last().unwrap().clone();
        Ok((logits, ForwardCache { pre, hidden }))
    }

    pub fn predict(&self, inputs: &Array2<f64>) -> Result<Vec<usize>> {
        let (logits, _) = self.forward(inputs)?;
        Ok(logits.rows().into_iter().map(|r| argmax(r.iter().copied())).collect())
    }
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

pub(crate) fn layer_offsets(dims: &[usize]) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(dims.len());
    let mut acc = 0;
    for &d in dims {
        offsets.push(acc);
        acc += d;
    }
    offsets
}

/// Uniform weights `U(-s, s)` with `s = sqrt(6 / d_in)` (He) for ReLU and
/// `s = sqrt(6 / (d_in + d_out))` (Glorot) for tanh; zero biases.
pub fn init_model(
    layer_dims: &[usize],
    activation: Activation,
    with_biases: bool,
    seed: u64,
) -> Result<MlpModel> {
    if layer_dims.len() < 2 || layer_dims.contains(&0) {
        return Err(Error::InvalidArgument(format!(
            "invalid architecture {layer_dims:?}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = Vec::with_capacity(layer_dims.len() - 1);
    for pair in layer_dims.windows(2) {
        let (d_in, d_out) = (pair[0], pair[1]);
        let fan = match activation {
            Activation::Relu => d_in,
            Activation::Tanh => d_in + d_out,
        };
        let s = (6.0 / fan as f64).sqrt();
        let dist = Uniform::new(-s, s).expect("positive range");
        weights.push(Array2::from_shape_fn((d_out, d_in), |_| dist.sample(&mut rng)));
    }
    let biases = with_biases.then(|| layer_dims[1..].iter().map(|&d| Array1::zeros(d)).collect());
    MlpModel::from_parts(layer_dims.to_vec(), weights, biases, activation)
}

/// Row-wise log-softmax, numerically stabilized.
fn log_softmax(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    out
}

/// Mean softmax cross-entropy of `logits` against `labels`.
pub fn cross_entropy(logits: &Array2<f64>, labels: &[usize]) -> Result<f64> {
    let logp = log_softmax(logits);
    let mut total = 0.0;
    for (row, &y) in logp.rows().into_iter().zip(labels) {
        if y >= row.len() {
            return Err(Error::InvalidArgument(format!(
                "label {y} out of range for {} classes",
                row.len()
            )));
        }
        total -= row[y];
    }
    Ok(total / labels.len() as f64)
}

/// Mean cross-entropy over the batch and its gradient w.r.t. every parameter.
pub fn loss_and_grad(model: &MlpModel, batch: &Batch) -> Result<(f64, Gradients)> {
    loss_and_grad_masked(model, batch, None)
}

/// As [`loss_and_grad`], with dropout masks applied to the hidden layers.
pub fn loss_and_grad_masked(
    model: &MlpModel,
    batch: &Batch,
    masks: Option<&[Array2<f64>]>,
) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let (logits, cache) = model.forward_masked(&batch.inputs, masks)?;
    let loss = cross_entropy(&logits, &batch.labels)?;

    let n = batch.len() as f64;
    // dL/dlogits = (softmax - onehot) / N
    let mut delta = log_softmax(&logits).mapv(f64::exp);
    for (mut row, &y) in delta.rows_mut().into_iter().zip(&batch.labels) {
        row[y] -= 1.0;
    }
    delta /= n;

    let depth = model.depth();
    let mut grads = Gradients::zeros_like(model);
    for l in (0..depth).rev() {
        grads.weights[l] = delta.t().dot(&cache.hidden[l]);
        if let Some(gb) = grads.biases.as_mut() {
            gb[l] = delta.sum_axis(Axis(0));
        }
        if l == 0 {
            break;
        }
        let mut upstream = delta.dot(&model.weights[l]);
        let act = model.activation;
        // h = act(z) * mask, so dz = dh * act'(z) * mask
        ndarray::Zip::from(&mut upstream)
            .and(&cache.pre[l - 1])
            .for_each(|g, &z| *g *= act.derivative(z, act.apply(z)));
        if let Some(ms) = masks {
            upstream *= &ms[l - 1];
        }
        delta = upstream;
    }
    Ok((loss, grads))
}

/// Fraction of rows whose argmax logit equals the label.
pub fn accuracy(model: &MlpModel, inputs: &Array2<f64>, labels: &[usize]) -> Result<f64> {
    let preds = model.predict(inputs)?;
    let hits = preds.iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / labels.len().max(1) as f64)
}

const CHECKPOINT_MAGIC: &str = "fiedler-mlp";
const CHECKPOINT_VERSION: u32 = 1;

/// Writes the plain-text checkpoint format (see README).
pub fn write_checkpoint<W: Write>(model: &MlpModel, mut out: W) -> Result<()> {
    let mut s = String::new();
    writeln!(s, "{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}").unwrap();
    writeln!(s, "activation {}", model.activation.name()).unwrap();
    let dims: Vec<String> = model.layer_dims.iter().map(|d| d.to_string()).collect();
    writeln!(s, "dims {}", dims.join(" ")).unwrap();
    writeln!(s, "biases {}", model.biases.is_some()).unwrap();
    for (l, w) in model.weights.iter().enumerate() {
        writeln!(s, "weights {} {} {}", l + 1, w.nrows(), w.ncols()).unwrap();
        for row in w.rows() {
            let vals: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            writeln!(s, "{}", vals.join(" ")).unwrap();
        }
        if let Some(bs) = &model.biases {
            writeln!(s, "bias {} {}", l + 1, bs[l].len()).unwrap();
            let vals: Vec<String> = bs[l].iter().map(|v| format!("{v:e}")).collect();
            writeln!(s, "{}", vals.join(" ")).unwrap();
        }
    }
    out.write_all(s.as_bytes())?;
    Ok(())
}

pub fn read_checkpoint<R: BufRead>(input: R) -> Result<MlpModel> {
    let mut lines = input.lines();
    let mut next = || -> Result<String> {
        lines
            .next()
            .ok_or_else(|| Error::Parse("unexpected end of checkpoint".into()))?
            .map_err(Error::from)
    };
    let header = next()?;
    let mut parts = header.split_whitespace();
    if parts.next() != Some(CHECKPOINT_MAGIC) {
        return Err(Error::Parse("not a fiedler-mlp checkpoint".into()));
    }
    let version: u32 = parse_token(parts.next())?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Parse(format!("unsupported checkpoint version {version}")));
    }
    let activation: Activation = keyed(&next()?, "activation")?.parse()?;
    let dims: Vec<usize> = keyed(&next()?, "dims")?
        .split_whitespace()
        .map(|t| parse_token(Some(t)))
        .collect::<Result<_>>()?;
    let has_biases: bool = parse_token(Some(keyed(&next()?, "biases")?))?;
    if dims.len() < 2 {
        return Err(Error::Parse("checkpoint needs at least two layer dims".into()));
    }
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for l in 1..dims.len() {
        let head = next()?;
        let h: Vec<&str> = head.split_whitespace().collect();
        if h.len() != 4 || h[0] != "weights" || h[1] != l.to_string() {
            return Err(Error::Parse(format!("expected weights header for layer {l}")));
        }
        let (rows, cols): (usize, usize) = (parse_token(Some(h[2]))?, parse_token(Some(h[3]))?);
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let line = next()?;
            let row = parse_floats(&line)?;
            if row.len() != cols {
                return Err(Error::Parse(format!("layer {l}: ragged weight row")));
            }
            data.extend(row);
        }
        weights.push(
            Array2::from_shape_vec((rows, cols), data)
                .map_err(|e| Error::Parse(e.to_string()))?,
        );
        if has_biases {
            let head = next()?;
            let h: Vec<&str> = head.split_whitespace().collect();
            if h.len() != 3 || h[0] != "bias" || h[1] != l.to_string() {
                return Err(Error::Parse(format!("expected bias header for layer {l}")));
            }
            let len: usize = parse_token(Some(h[2]))?;
            let vals = parse_floats(&next()?)?;
            if vals.len() != len {
                return Err(Error::Parse(format!("layer {l}: bias length mismatch")));
            }
            biases.push(Array1::from(vals));
        }
    }
    MlpModel::from_parts(dims, weights, has_biases.then_some(biases), activation)
}

fn keyed<'a>(line: &'a str, key: &str) -> Result<&'a str> {
    line.strip_prefix(key)
        .map(str::trim)
        .ok_or_else(|| Error::Parse(format!("expected '{key}' line, got '{line}'")))
}

fn parse_token<T: std::str::FromStr>(tok: Option<&str>) -> Result<T> {
    let tok = tok.ok_or_else(|| Error::Parse("missing token".into()))?;
    tok.parse().map_err(|_| Error::Parse(format!("bad token '{tok}'")))
}

fn parse_floats(line: &str) -> Result<Vec<f64>> {
    line.split_whitespace().map(|t| parse_token(Some(t))).collect()
}
