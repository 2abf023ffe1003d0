//! Minibatch SGD with heavy-ball momentum and a periodically refreshed
//! Fiedler test vector.
//!
//! Every iteration adds the penalty gradient to the loss gradient, applies
//! `velocity <- momentum * velocity + grad; W <- W - lr * velocity`, and
//! folds the weight change into an incrementally maintained Laplacian. When
//! the iteration counter hits a multiple of the refresh period the Fiedler
//! vector is recomputed from that Laplacian and becomes the test vector for
//! the following iterations.

use std::io::Write;
use std::time::Instant;

use nalgebra::DMatrix;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::laplacian::{restrict_to_largest_component, LaplacianMatrix, NetworkLaplacian};
use crate::network::{self, Gradients, MlpModel};
use crate::regularization::{
    self, BaselineKind, PenaltyMode, PenaltyState, DEFAULT_DROPOUT, DEFAULT_FIEDLER_DELTA,
    DEFAULT_L1_COEFF, DEFAULT_REFRESH_PERIOD, DEFAULT_WEIGHT_DECAY,
};
use crate::spectral::{self, DENSE_LIMIT, DISCONNECT_TOL};

/// Weights with magnitude below this count as zero in the sparsity report.
pub const SPARSITY_THRESHOLD: f64 = 1e-6;

const EVAL_CHUNK: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Regularizer {
    None,
    L1 { coeff: f64 },
    WeightDecay { coeff: f64 },
    Dropout { p: f64 },
    Fiedler {
        delta: f64,
        #[serde(default = "default_mode")]
        mode: PenaltyMode,
    },
}

fn default_mode() -> PenaltyMode {
    PenaltyMode::Variational
}

impl Regularizer {
    /// The regularizer called `name` with its default coefficient.
    pub fn with_default_coeff(name: &str) -> Result<Self> {
        Ok(match name {
            "none" => Regularizer::None,
            "l1" => Regularizer::L1 { coeff: DEFAULT_L1_COEFF },
            "weight_decay" | "weight-decay" => Regularizer::WeightDecay { coeff: DEFAULT_WEIGHT_DECAY },
            "dropout" => Regularizer::Dropout { p: DEFAULT_DROPOUT },
            "fiedler" => Regularizer::Fiedler { delta: DEFAULT_FIEDLER_DELTA, mode: PenaltyMode::Variational },
            other => return Err(Error::InvalidArgument(format!("unknown regularizer '{other}'"))),
        })
    }

    /// Same kind with a different coefficient (dropout probability for dropout).
    pub fn with_coeff(self, c: f64) -> Self {
        match self {
            Regularizer::None => Regularizer::None,
            Regularizer::L1 { .. } => Regularizer::L1 { coeff: c },
            Regularizer::WeightDecay { .. } => Regularizer::WeightDecay { coeff: c },
            Regularizer::Dropout { .. } => Regularizer::Dropout { p: c },
            Regularizer::Fiedler { mode, .. } => Regularizer::Fiedler { delta: c, mode },
        }
    }

    /// Display name used in reports.
    pub fn label(&self) -> &'static str {
        match self {
            Regularizer::None => "None",
            Regularizer::L1 { .. } => "L1",
            Regularizer::WeightDecay { .. } => "Weight Decay",
            Regularizer::Dropout { .. } => "Dropout",
            Regularizer::Fiedler { .. } => "Fiedler",
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| {
            Err(Error::InvalidArgument(format!("{what} {v} is out of range")))
        };
        match *self {
            Regularizer::L1 { coeff } | Regularizer::WeightDecay { coeff } if !(coeff >= 0.0 && coeff.is_finite()) => {
                bad("penalty coefficient", coeff)
            }
            Regularizer::Fiedler { delta, .. } if !(delta >= 0.0 && delta.is_finite()) => bad("Fiedler delta", delta),
            Regularizer::Dropout { p } if !(0.0..1.0).contains(&p) => bad("dropout probability", p),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub regularizer: Regularizer,
    /// Iterations between Fiedler-vector refreshes.
    pub refresh_period: usize,
    pub seed: u64,
    pub dataset: String,
    /// Residual tolerance for the eigensolver.
    pub eigen_tol: f64,
    /// Record `lambda2` at refresh points even when not penalizing it.
    pub track_connectivity: bool,
    /// Check Weyl's bound between refreshes (networks of at most 64 units).
    pub weyl_diagnostics: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            momentum: 0.9,
            batch_size: 100,
            epochs: 10,
            regularizer: Regularizer::None,
            refresh_period: DEFAULT_REFRESH_PERIOD,
            seed: 0,
            dataset: String::new(),
            eigen_tol: 1e-8,
            track_connectivity: true,
            weyl_diagnostics: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning rate {} must be > 0", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidArgument(format!("momentum {} must be in [0, 1)", self.momentum)));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be >= 1".into()));
        }
        if self.refresh_period == 0 {
            return Err(Error::InvalidArgument("refresh period must be >= 1".into()));
        }
        if !(self.eigen_tol > 0.0) {
            return Err(Error::InvalidArgument("eigensolver tolerance must be > 0".into()));
        }
        self.regularizer.validate()
    }

    fn spectrum_needed(&self) -> bool {
        self.track_connectivity || matches!(self.regularizer, Regularizer::Fiedler { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub test_loss: Option<f64>,
    pub test_accuracy: Option<f64>,
    /// Mean penalty value over the epoch's minibatches.
    pub mean_penalty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lambda2Sample {
    pub iteration: usize,
    /// `lambda2` of the largest connected component.
    pub lambda2: f64,
    pub components: usize,
}

/// One Weyl check: eigenvalue movement against the operator norm of the
/// accumulated Laplacian change since the previous refresh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeylRecord {
    pub iteration: usize,
    pub lambda2_change: f64,
    pub bound: f64,
}

impl WeylRecord {
    pub fn holds(&self, slack: f64) -> bool {
        self.lambda2_change <= self.bound + slack
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Divergence {
    pub epoch: usize,
    pub iteration: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub regularizer: String,
    pub epochs: Vec<EpochMetrics>,
    /// Entry 0 is the initial network; then one entry per refresh.
    pub lambda2_history: Vec<Lambda2Sample>,
    pub iterations: usize,
    pub refreshes: usize,
    /// `lambda2` of the whole final network (0 when disconnected).
    pub final_lambda2: Option<f64>,
    pub final_sparsity: f64,
    pub weyl: Vec<WeylRecord>,
    pub diverged: Option<Divergence>,
    pub wall_clock_secs: f64,
}

impl TrainReport {
    /// Equality of everything except timing.
    pub fn same_run(&self, other: &TrainReport) -> bool {
        let mut a = self.clone();
        a.wall_clock_secs = other.wall_clock_secs;
        &a == other
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_epoch_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epoch", "train_loss", "train_accuracy", "test_loss", "test_accuracy", "mean_penalty"])?;
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        for e in &self.epochs {
            w.write_record([
                e.epoch.to_string(),
                e.train_loss.to_string(),
                e.train_accuracy.to_string(),
                opt(e.test_loss),
                opt(e.test_accuracy),
                e.mean_penalty.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Spectrum of the current Laplacian as seen by the refresh step.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub lambda2: f64,
    /// Unit test vector orthogonal to the constant vector; zero off the
    /// solved component.
    pub u: Vec<f64>,
    pub components: usize,
}

/// Fiedler pair of `lap`, or of its largest component when `lap` is
/// disconnected (the vector is embedded back with zeros).
pub fn connectivity_snapshot(lap: &LaplacianMatrix, tol: f64) -> Result<Snapshot> {
    let components = lap.components().len();
    if components == 1 {
        let pair = spectral::fiedler_pair_unchecked(lap, tol)?;
        if pair.lambda2 >= DISCONNECT_TOL {
            return Ok(Snapshot { lambda2: pair.lambda2, u: pair.v2, components });
        }
    }
    let (sub, kept) = restrict_to_largest_component(lap);
    if kept.len() < 2 {
        return Err(Error::InvalidGraph("no connected component with two or more vertices".into()));
    }
    let pair = spectral::fiedler_pair_unchecked(&sub, tol)?;
    let mut u = vec![0.0; lap.dim()];
    for (&k, &x) in kept.iter().zip(&pair.v2) {
        u[k] = x;
    }
    // v2 is already orthogonal to the constant vector on the component, so
    // only the norm is restored; dropped vertices stay exactly zero
    let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    u.iter_mut().for_each(|x| *x /= norm);
    Ok(Snapshot { lambda2: pair.lambda2, u, components })
}

/// Replaces the test vector with the Fiedler vector of `lap`.
pub fn refresh_test_vector(state: &PenaltyState, lap: &LaplacianMatrix, tol: f64) -> Result<PenaltyState> {
    let snap = connectivity_snapshot(lap, tol).map_err(|e| Error::Refresh {
        iteration: state.counter,
        source: Box::new(e),
    })?;
    Ok(PenaltyState { u: snap.u, ..state.clone() })
}

fn dropout_masks(model: &MlpModel, rows: usize, p: f64, rng: &mut ChaCha8Rng) -> Result<Vec<Array2<f64>>> {
    let dims = model.layer_dims();
    dims[1..dims.len() - 1]
        .iter()
        .map(|&d| regularization::dropout_mask((rows, d), p, rng))
        .collect()
}

fn momentum_step(velocity: &mut Gradients, grads: &Gradients, momentum: f64) {
    for (v, g) in velocity.weights.iter_mut().zip(&grads.weights) {
        v.zip_mut_with(g, |v, &g| *v = momentum * *v + g);
    }
    if let (Some(vb), Some(gb)) = (velocity.biases.as_mut(), grads.biases.as_ref()) {
        for (v, g) in vb.iter_mut().zip(gb) {
            v.zip_mut_with(g, |v, &g| *v = momentum * *v + g);
        }
    }
}

/// Mean cross-entropy and accuracy over the whole dataset.
pub fn evaluate(model: &MlpModel, data: &Dataset) -> Result<(f64, f64)> {
    let n = data.len();
    if n == 0 {
        return Err(Error::InvalidArgument("cannot evaluate on an empty dataset".into()));
    }
    let (mut loss, mut hits) = (0.0, 0.0);
    let idx: Vec<usize> = (0..n).collect();
    for chunk in idx.chunks(EVAL_CHUNK) {
        let batch = data.batch(chunk);
        let (logits, _) = model.forward(&batch.inputs)?;
        loss += network::cross_entropy(&logits, &batch.labels)? * chunk.len() as f64;
        hits += network::accuracy(model, &batch.inputs, &batch.labels)? * chunk.len() as f64;
    }
    Ok((loss / n as f64, hits / n as f64))
}

struct WeylMonitor {
    previous: Option<(DMatrix<f64>, f64)>,
}

impl WeylMonitor {
    fn observe(&mut self, lap: &LaplacianMatrix, iteration: usize) -> Result<Option<WeylRecord>> {
        let dense = lap.to_dense();
        let lambda2 = spectral::dense_eigenpairs(lap)[1].0;
        let record = match self.previous.take() {
            Some((prev, prev_lambda2)) => Some(WeylRecord {
                iteration,
                lambda2_change: (lambda2 - prev_lambda2).abs(),
                bound: spectral::weyl_change_bound(&(&dense - &prev))?,
            }),
            None => None,
        };
        self.previous = Some((dense, lambda2));
        Ok(record)
    }
}

/// Trains `model` on `train`, evaluating on `test` after every epoch.
///
/// A non-finite objective stops training; the report then carries
/// [`Divergence`] and the model is returned as it was at that point.
pub fn train(
    mut model: MlpModel,
    train: &Dataset,
    test: Option<&Dataset>,
    config: &TrainConfig,
) -> Result<(MlpModel, TrainReport)> {
    let start = Instant::now();
    config.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    for ds in std::iter::once(train).chain(test) {
        if ds.dim() != model.input_dim() {
            return Err(Error::DimensionMismatch { expected: model.input_dim(), actual: ds.dim() });
        }
        if ds.class_count() > model.output_dim() {
            return Err(Error::DimensionMismatch { expected: model.output_dim(), actual: ds.class_count() });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut lap = NetworkLaplacian::from_model(&model);
    let period = config.refresh_period;
    let tol = config.eigen_tol;
    let spectrum = config.spectrum_needed();
    let mut weyl = (config.weyl_diagnostics && model.num_units() <= DENSE_LIMIT)
        .then_some(WeylMonitor { previous: None });

    let mut history = Vec::new();
    let mut weyl_records = Vec::new();
    let mut state = None;
    if spectrum {
        let snap = connectivity_snapshot(lap.matrix(), tol)
            .map_err(|e| Error::Refresh { iteration: 0, source: Box::new(e) })?;
        history.push(Lambda2Sample { iteration: 0, lambda2: snap.lambda2, components: snap.components });
        if let Regularizer::Fiedler { delta, mode } = config.regularizer {
            state = Some(PenaltyState::new(&snap.u, period, delta, mode)?);
        }
        if let Some(m) = weyl.as_mut() {
            m.observe(lap.matrix(), 0)?;
        }
    }

    let mut velocity = Gradients::zeros_like(&model);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epochs = Vec::with_capacity(config.epochs);
    let mut iteration = 0;
    let mut refreshes = 0;
    let mut diverged = None;

    'epochs: for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut penalty_sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(config.batch_size) {
            let batch = train.batch(chunk);
            let (loss, mut grads) = match config.regularizer {
                Regularizer::Dropout { p } if p > 0.0 => {
                    let masks = dropout_masks(&model, chunk.len(), p, &mut rng)?;
                    network::loss_and_grad_masked(&model, &batch, Some(&masks))?
                }
                _ => network::loss_and_grad(&model, &batch)?,
            };
            let penalty = match (config.regularizer, state.as_ref()) {
                (Regularizer::L1 { coeff }, _) if coeff > 0.0 => {
                    Some(regularization::baseline_penalty(&model, BaselineKind::L1, coeff)?)
                }
                (Regularizer::WeightDecay { coeff }, _) if coeff > 0.0 => {
                    Some(regularization::baseline_penalty(&model, BaselineKind::WeightDecay, coeff)?)
                }
                (Regularizer::Fiedler { delta, .. }, Some(st)) if delta > 0.0 => {
                    Some(regularization::fiedler_penalty(&model, st)?)
                }
                _ => None,
            };
            let mut objective = loss;
            if let Some(p) = penalty {
                grads.add_weights_scaled(&p.weight_grads, 1.0);
                objective += p.value;
                penalty_sum += p.value;
            }
            if !objective.is_finite() {
                diverged = Some(Divergence { epoch, iteration });
                break 'epochs;
            }
            momentum_step(&mut velocity, &grads, config.momentum);
            model.apply_update(&velocity, config.learning_rate);
            lap.update(&model);
            iteration += 1;
            batches += 1;
            if let Some(st) = state.as_mut() {
                st.counter += 1;
            }

            if spectrum && iteration % period == 0 {
                lap.resync_diagonal();
                let snap = connectivity_snapshot(lap.matrix(), tol)
                    .map_err(|e| Error::Refresh { iteration, source: Box::new(e) })?;
                history.push(Lambda2Sample { iteration, lambda2: snap.lambda2, components: snap.components });
                if let Some(st) = state.as_mut() {
                    st.u = snap.u;
                }
                if let Some(m) = weyl.as_mut() {
                    weyl_records.extend(m.observe(lap.matrix(), iteration)?);
                }
                refreshes += 1;
            }
        }

        let (train_loss, train_accuracy) = evaluate(&model, train)?;
        let (test_loss, test_accuracy) = match test {
            Some(t) => {
                let (l, a) = evaluate(&model, t)?;
                (Some(l), Some(a))
            }
            None => (None, None),
        };
        if !train_loss.is_finite() {
            diverged = Some(Divergence { epoch, iteration });
            break;
        }
        epochs.push(EpochMetrics {
            epoch,
            train_loss,
            train_accuracy,
            test_loss,
            test_accuracy,
            mean_penalty: if batches > 0 { penalty_sum / batches as f64 } else { 0.0 },
        });
    }

    let final_lambda2 = if spectrum && diverged.is_none() {
        lap.resync_diagonal();
        let m = lap.matrix();
        if m.components().len() > 1 {
            Some(0.0)
        } else {
            Some(spectral::fiedler_pair_unchecked(m, tol)?.lambda2)
        }
    } else {
        None
    };

    let report = TrainReport {
        regularizer: config.regularizer.label().to_string(),
        epochs,
        lambda2_history: history,
        iterations: iteration,
        refreshes,
        final_lambda2,
        final_sparsity: model.sparsity(SPARSITY_THRESHOLD),
        weyl: weyl_records,
        diverged,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    };
    Ok((model, report))
}
