//! Multi-seed comparison of regularizers on one dataset and architecture.
//!
//! Every (regularizer, seed) pair trains one model from `init_model(seed)`
//! with the same seed driving shuffling and dropout. A failed run is
//! recorded and the experiment continues. The report contains no timing
//! data, so repeated runs of one spec serialize identically; timings are
//! returned separately.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{load_dataset, split_and_normalize, DataSource, Dataset, Normalization};
use crate::error::{Error, Result};
use crate::network::{init_model, Activation};
use crate::regularization::DEFAULT_REFRESH_PERIOD;
use crate::trainer::{self, Lambda2Sample, Regularizer, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    pub source: DataSource,
    /// Held-out set; when absent, `source` is split.
    #[serde(default)]
    pub test: Option<DataSource>,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default)]
    pub split_seed: u64,
    #[serde(default)]
    pub normalization: Normalization,
}

fn default_train_fraction() -> f64 {
    0.8
}

impl DataSpec {
    pub fn load(&self) -> Result<(Dataset, Dataset)> {
        let data = load_dataset(&self.source)?;
        match &self.test {
            Some(t) => {
                if self.normalization != Normalization::None {
                    return Err(Error::InvalidArgument(
                        "normalization applies only when splitting a single source".into(),
                    ));
                }
                Ok((data, load_dataset(t)?))
            }
            None => split_and_normalize(&data, self.train_fraction, self.split_seed, self.normalization),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub data: DataSpec,
    /// Hidden widths; input and output widths come from the data.
    pub hidden_layers: Vec<usize>,
    #[serde(default = "default_activation")]
    pub activation: Activation,
    #[serde(default = "default_true")]
    pub biases: bool,
    pub regularizers: Vec<Regularizer>,
    pub seeds: Vec<u64>,
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "default_period")]
    pub refresh_period: usize,
    #[serde(default = "default_tol")]
    pub eigen_tol: f64,
    #[serde(default = "default_true")]
    pub track_connectivity: bool,
    /// Where the CLI writes reports; not used by the library.
    #[serde(default)]
    pub output_dir: Option<std::path::PathBuf>,
}

fn default_activation() -> Activation {
    Activation::Relu
}
fn default_true() -> bool {
    true
}
fn default_batch() -> usize {
    TrainConfig::default().batch_size
}
fn default_lr() -> f64 {
    TrainConfig::default().learning_rate
}
fn default_momentum() -> f64 {
    TrainConfig::default().momentum
}
fn default_period() -> usize {
    DEFAULT_REFRESH_PERIOD
}
fn default_tol() -> f64 {
    TrainConfig::default().eigen_tol
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::InvalidArgument("experiment needs at least one seed".into()));
        }
        if self.regularizers.is_empty() {
            return Err(Error::InvalidArgument("experiment needs at least one regularizer".into()));
        }
        if self.hidden_layers.contains(&0) {
            return Err(Error::InvalidArgument("hidden layers must have positive width".into()));
        }
        for r in &self.regularizers {
            self.train_config(*r, 0).validate()?;
        }
        Ok(())
    }

    pub fn train_config(&self, regularizer: Regularizer, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            batch_size: self.batch_size,
            epochs: self.epochs,
            regularizer,
            refresh_period: self.refresh_period,
            seed,
            dataset: self.name.clone(),
            eigen_tol: self.eigen_tol,
            track_connectivity: self.track_connectivity,
            weyl_diagnostics: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub final_lambda2: Option<f64>,
    pub sparsity: f64,
    pub lambda2_history: Vec<Lambda2Sample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub regularizer: Regularizer,
    pub seed: u64,
    pub result: Option<RunResult>,
    pub error: Option<String>,
}

/// Median and sample standard deviation of one metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub median: f64,
    pub std: f64,
}

impl Spread {
    pub fn of(values: &[f64]) -> Option<Spread> {
        if values.is_empty() {
            return None;
        }
        Some(Spread { median: median(values), std: sample_std(values) })
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Standard deviation with the `n - 1` divisor; 0 for a single value.
pub fn sample_std(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    (values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub regularizer: Regularizer,
    pub label: String,
    pub runs_ok: usize,
    pub runs_failed: usize,
    pub train_accuracy: Option<Spread>,
    pub test_accuracy: Option<Spread>,
    pub final_lambda2: Option<Spread>,
    pub sparsity: Option<Spread>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub rows: Vec<SummaryRow>,
    pub runs: Vec<RunRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTiming {
    pub regularizer: String,
    pub seed: u64,
    pub wall_clock_secs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub report: ExperimentReport,
    pub timings: Vec<RunTiming>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    AllOk,
    SomeFailed,
    AllFailed,
}

impl ExperimentReport {
    pub fn status(&self) -> RunStatus {
        let failed = self.runs.iter().filter(|r| r.result.is_none()).count();
        match failed {
            0 => RunStatus::AllOk,
            f if f == self.runs.len() => RunStatus::AllFailed,
            _ => RunStatus::SomeFailed,
        }
    }

    pub fn row(&self, label: &str) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One line per regularizer with medians and standard deviations.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "regularizer", "runs_ok", "runs_failed", "train_median", "train_std", "test_median", "test_std",
            "lambda2_median", "lambda2_std", "sparsity_median", "sparsity_std",
        ])?;
        let pair = |s: &Option<Spread>| match s {
            Some(s) => [s.median.to_string(), s.std.to_string()],
            None => [String::new(), String::new()],
        };
        for r in &self.rows {
            let mut rec = vec![r.label.clone(), r.runs_ok.to_string(), r.runs_failed.to_string()];
            for s in [&r.train_accuracy, &r.test_accuracy, &r.final_lambda2, &r.sparsity] {
                rec.extend(pair(s));
            }
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Accuracy table in percent, `median ± std`.
    pub fn to_table(&self) -> String {
        let pct = |s: &Option<Spread>| match s {
            Some(s) => format!("{:.2} ± {:.2}", 100.0 * s.median, 100.0 * s.std),
            None => "failed".to_string(),
        };
        let plain = |s: &Option<Spread>| match s {
            Some(s) => format!("{:.4}", s.median),
            None => "-".to_string(),
        };
        let mut out = format!(
            "{}\n{:<28} {:>18} {:>18} {:>14} {:>10} {:>6}\n",
            self.name, "Regularizer", "Train accuracy", "Test accuracy", "Final lambda2", "Sparsity", "Runs"
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:<28} {:>18} {:>18} {:>14} {:>10} {:>6}\n",
                r.label,
                pct(&r.train_accuracy),
                pct(&r.test_accuracy),
                plain(&r.final_lambda2),
                plain(&r.sparsity),
                format!("{}/{}", r.runs_ok, r.runs_ok + r.runs_failed),
            ));
        }
        out
    }

    /// Writes `report.json`, `summary.csv` and `table.txt` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.json"), self.to_json()?)?;
        fs::write(dir.join("summary.csv"), self.to_csv()?)?;
        fs::write(dir.join("table.txt"), self.to_table())?;
        Ok(())
    }
}

fn row_label(r: &Regularizer, grid: &[Regularizer]) -> String {
    let same_kind = grid.iter().filter(|g| g.label() == r.label()).count();
    let coeff = match *r {
        Regularizer::None => return r.label().to_string(),
        Regularizer::L1 { coeff } | Regularizer::WeightDecay { coeff } => coeff,
        Regularizer::Dropout { p } => p,
        Regularizer::Fiedler { delta, .. } => delta,
    };
    if same_kind > 1 {
        format!("{} ({coeff})", r.label())
    } else {
        r.label().to_string()
    }
}

fn summarize(reg: Regularizer, label: String, runs: &[&RunRecord]) -> SummaryRow {
    let ok: Vec<&RunResult> = runs.iter().filter_map(|r| r.result.as_ref()).collect();
    let collect = |f: &dyn Fn(&RunResult) -> Option<f64>| ok.iter().filter_map(|r| f(r)).collect::<Vec<_>>();
    SummaryRow {
        regularizer: reg,
        label,
        runs_ok: ok.len(),
        runs_failed: runs.len() - ok.len(),
        train_accuracy: Spread::of(&collect(&|r| Some(r.train_accuracy))),
        test_accuracy: Spread::of(&collect(&|r| Some(r.test_accuracy))),
        final_lambda2: Spread::of(&collect(&|r| r.final_lambda2)),
        sparsity: Spread::of(&collect(&|r| Some(r.sparsity))),
    }
}

/// Trains every (regularizer, seed) pair on pre-loaded data.
pub fn run_on(spec: &ExperimentSpec, train: &Dataset, test: &Dataset) -> Result<ExperimentOutcome> {
    spec.validate()?;
    let mut dims = vec![train.dim()];
    dims.extend(&spec.hidden_layers);
    dims.push(train.class_count().max(test.class_count()));

    let mut runs = Vec::new();
    let mut timings = Vec::new();
    for &reg in &spec.regularizers {
        for &seed in &spec.seeds {
            let config = spec.train_config(reg, seed);
            let outcome = init_model(&dims, spec.activation, spec.biases, seed)
                .and_then(|model| trainer::train(model, train, Some(test), &config));
            let (result, error) = match outcome {
                Ok((_, report)) => {
                    timings.push(RunTiming {
                        regularizer: reg.label().to_string(),
                        seed,
                        wall_clock_secs: report.wall_clock_secs,
                    });
                    match (&report.diverged, report.epochs.last()) {
                        (Some(d), _) => (None, Some(format!("diverged at epoch {} iteration {}", d.epoch, d.iteration))),
                        (None, None) => (None, Some("no epochs were run".to_string())),
                        (None, Some(last)) => (
                            Some(RunResult {
                                train_accuracy: last.train_accuracy,
                                test_accuracy: last.test_accuracy.unwrap_or(f64::NAN),
                                final_lambda2: report.final_lambda2,
                                sparsity: report.final_sparsity,
                                lambda2_history: report.lambda2_history,
                            }),
                            None,
                        ),
                    }
                }
                Err(e) => (None, Some(e.to_string())),
            };
            runs.push(RunRecord { regularizer: reg, seed, result, error });
        }
    }

    let rows = spec
        .regularizers
        .iter()
        .map(|reg| {
            let mine: Vec<&RunRecord> = runs.iter().filter(|r| r.regularizer == *reg).collect();
            summarize(*reg, row_label(reg, &spec.regularizers), &mine)
        })
        .collect();
    Ok(ExperimentOutcome { report: ExperimentReport { name: spec.name.clone(), rows, runs }, timings })
}

/// Loads the spec's data and runs every (regularizer, seed) pair.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutcome> {
    spec.validate()?;
    let (train, test) = spec.data.load()?;
    run_on(spec, &train, &test)
}
