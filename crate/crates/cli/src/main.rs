//! `fiedler`: train, compare and inspect Fiedler-regularized networks.
//!
//! Exit codes: 0 success, 1 partial failure (some runs failed or training
//! diverged), 2 fatal error.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fiedler_core::bounds::{self, BoundInputs};
use fiedler_core::experiment::{self, DataSpec, ExperimentSpec, RunStatus};
use fiedler_core::laplacian::restrict_to_largest_component;
use fiedler_core::network::{read_checkpoint, write_checkpoint};
use fiedler_core::spectral;
use fiedler_core::trainer::{self, connectivity_snapshot, Regularizer, TrainConfig};
use fiedler_core::{build_graph, init_model, laplacian, Activation, MlpModel};
use serde::{Deserialize, Serialize};
use serde_json::json;

const OUTPUT_ROOT_VAR: &str = "FIEDLER_OUTPUT_ROOT";
const DEFAULT_OUTPUT_ROOT: &str = "runs";

#[derive(Parser)]
#[command(name = "fiedler", version, about = "Fiedler (spectral-gap) regularization for feedforward networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model from a TOML config and write its report and checkpoint.
    Train(TrainArgs),
    /// Run a multi-seed regularizer comparison from a TOML spec.
    Experiment(ExperimentArgs),
    /// Rademacher and generalization bounds for a checkpoint.
    Bounds(BoundsArgs),
    /// Summarize the weighted graph of a checkpoint.
    InspectGraph(InspectArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Config file (TOML).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// none, l1, weight_decay, dropout or fiedler (default coefficient unless --coeff).
    #[arg(long)]
    regularizer: Option<String>,
    /// Penalty coefficient, or dropout probability.
    #[arg(long)]
    coeff: Option<f64>,
    #[arg(long)]
    refresh_period: Option<usize>,
    /// Output directory; defaults to $FIEDLER_OUTPUT_ROOT/train.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Spec file (TOML).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Output directory; defaults to the spec's output_dir, else $FIEDLER_OUTPUT_ROOT/<name>.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Whitespace-separated test vector, one entry per unit. Defaults to the
    /// checkpoint's Fiedler vector.
    #[arg(long)]
    test_vector: Option<PathBuf>,
    /// Sup-norm bound C of the inputs.
    #[arg(long)]
    input_bound: f64,
    /// Sample count N.
    #[arg(long)]
    samples: usize,
    /// Failure probability of the generalization bound.
    #[arg(long, default_value_t = 0.05)]
    confidence: f64,
    /// Comma-separated per-layer budgets; measured from the weights when absent.
    #[arg(long, value_delimiter = ',')]
    budgets: Option<Vec<f64>>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Add one vertex per layer for the biases.
    #[arg(long)]
    biases: bool,
    /// Also write the graph in edge-list format.
    #[arg(long)]
    edge_list: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelSpec {
    hidden_layers: Vec<usize>,
    #[serde(default = "relu")]
    activation: Activation,
    #[serde(default = "yes")]
    biases: bool,
}

fn relu() -> Activation {
    Activation::Relu
}
fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainFile {
    data: DataSpec,
    model: ModelSpec,
    #[serde(default)]
    train: TrainConfig,
    #[serde(default)]
    output_dir: Option<PathBuf>,
}

#[derive(Debug)]
struct Fatal(String);

impl<E: std::fmt::Display> From<E> for Fatal {
    fn from(e: E) -> Self {
        Fatal(e.to_string())
    }
}

type CliResult = std::result::Result<ExitCode, Fatal>;

fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_VAR).map_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT), PathBuf::from)
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Fatal> {
    let text = fs::read_to_string(path).map_err(|e| Fatal(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Fatal(format!("{}: {e}", path.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Fatal> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn load_model(path: &Path) -> Result<MlpModel, Fatal> {
    let file = File::open(path).map_err(|e| Fatal(format!("{}: {e}", path.display())))?;
    Ok(read_checkpoint(BufReader::new(file))?)
}

fn train_cmd(args: TrainArgs) -> CliResult {
    let file: TrainFile = read_toml(&args.config)?;
    let mut cfg = file.train;
    if let Some(e) = args.epochs {
        cfg.epochs = e;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(lr) = args.learning_rate {
        cfg.learning_rate = lr;
    }
    if let Some(b) = args.batch_size {
        cfg.batch_size = b;
    }
    if let Some(t) = args.refresh_period {
        cfg.refresh_period = t;
    }
    if let Some(name) = &args.regularizer {
        cfg.regularizer = Regularizer::with_default_coeff(name)?;
    }
    if let Some(c) = args.coeff {
        cfg.regularizer = cfg.regularizer.with_coeff(c);
    }
    cfg.validate()?;

    let (train, test) = file.data.load()?;
    let mut dims = vec![train.dim()];
    dims.extend(&file.model.hidden_layers);
    dims.push(train.class_count().max(test.class_count()));
    let model = init_model(&dims, file.model.activation, file.model.biases, cfg.seed)?;
    let (model, report) = trainer::train(model, &train, Some(&test), &cfg)?;

    let dir = args.output.or(file.output_dir).unwrap_or_else(|| output_root().join("train"));
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("report.json"), report.to_json()? + "\n")?;
    report.write_epoch_csv(File::create(dir.join("epochs.csv"))?)?;
    write_checkpoint(&model, BufWriter::new(File::create(dir.join("model.ckpt"))?))?;

    if let Some(last) = report.epochs.last() {
        println!(
            "{}: epoch {} train acc {:.4} test acc {:.4} final lambda2 {} sparsity {:.4}",
            report.regularizer,
            last.epoch + 1,
            last.train_accuracy,
            last.test_accuracy.unwrap_or(f64::NAN),
            report.final_lambda2.map_or("-".into(), |l| format!("{l:.6}")),
            report.final_sparsity,
        );
    }
    println!("wrote {}", dir.display());
    if let Some(d) = report.diverged {
        eprintln!("training diverged at epoch {} iteration {}", d.epoch, d.iteration);
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn experiment_cmd(args: ExperimentArgs) -> CliResult {
    let mut spec: ExperimentSpec = read_toml(&args.config)?;
    if let Some(e) = args.epochs {
        spec.epochs = e;
    }
    if let Some(s) = args.seeds {
        spec.seeds = s;
    }
    let dir = args
        .output
        .or_else(|| spec.output_dir.clone())
        .unwrap_or_else(|| output_root().join(&spec.name));
    let outcome = experiment::run_experiment(&spec)?;
    outcome.report.write_to(&dir)?;
    // timings vary between runs, so they live outside the report
    write_json(&dir.join("timings.json"), &outcome.timings)?;
    print!("{}", outcome.report.to_table());
    println!("wrote {}", dir.display());
    Ok(match outcome.report.status() {
        RunStatus::AllOk => ExitCode::SUCCESS,
        RunStatus::SomeFailed => {
            eprintln!("some runs failed; see report.json");
            ExitCode::from(1)
        }
        RunStatus::AllFailed => {
            eprintln!("every run failed; see report.json");
            ExitCode::from(2)
        }
    })
}

fn read_vector(path: &Path) -> Result<Vec<f64>, Fatal> {
    fs::read_to_string(path)?
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| Fatal(format!("{}: bad number '{t}'", path.display()))))
        .collect()
}

fn bounds_cmd(args: BoundsArgs) -> CliResult {
    let model = load_model(&args.checkpoint)?;
    let u = match &args.test_vector {
        Some(p) => read_vector(p)?,
        None => {
            let lap = laplacian(&build_graph(&model, false)?);
            connectivity_snapshot(&lap, 1e-10)?.u
        }
    };
    let mut inputs = bounds::fiedler_bound_inputs(&model, &u, args.input_bound, args.samples, args.confidence)?;
    if let Some(b) = args.budgets {
        if b.len() != inputs.budgets.len() {
            return Err(Fatal(format!("expected {} budgets, got {}", inputs.budgets.len(), b.len())));
        }
        inputs.budgets = b;
    }
    let report = bound_report(&inputs)?;
    let text = serde_json::to_string_pretty(&report)? + "\n";
    match args.output {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn bound_report(inputs: &BoundInputs) -> Result<serde_json::Value, Fatal> {
    let minima: Vec<f64> =
        inputs.weightings.iter().map(|c| c.iter().copied().fold(f64::INFINITY, f64::min)).collect();
    let (rademacher, generalization, unbounded) = match bounds::network_rademacher_bound(inputs) {
        Ok(r) => (Some(r), Some(bounds::generalization_bound(inputs, r)?), None),
        Err(fiedler_core::Error::Unbounded(why)) => (None, None, Some(why)),
        Err(e) => return Err(e.into()),
    };
    Ok(json!({
        "layers": inputs.layers(),
        "gamma": inputs.gamma,
        "budgets": inputs.budgets,
        "weighting_minima": minima,
        "input_bound": inputs.input_bound,
        "input_dim": inputs.input_dim,
        "samples": inputs.samples,
        "confidence": inputs.confidence,
        "rademacher_bound": rademacher,
        "generalization_bound": generalization,
        "unbounded": unbounded,
    }))
}

fn inspect_cmd(args: InspectArgs) -> CliResult {
    let model = load_model(&args.checkpoint)?;
    let graph = build_graph(&model, args.biases)?;
    let lap = laplacian(&graph);
    let components = graph.connected_components();
    let (sub, kept) = restrict_to_largest_component(&lap);
    let lambda2_largest = if kept.len() >= 2 { Some(spectral::fiedler_pair_unchecked(&sub, 1e-10)?.lambda2) } else { None };
    let lambda2 = if components.len() > 1 { Some(0.0) } else { lambda2_largest };
    let d_max = graph.max_degree();
    let cheeger = match lambda2 {
        Some(l) => Some(spectral::cheeger_bounds(l, d_max)?),
        None => None,
    };
    let expansion = if graph.num_vertices() <= 20 { Some(graph.edge_expansion_bruteforce()?.0) } else { None };
    let summary = json!({
        "vertices": graph.num_vertices(),
        "edges": graph.edges().len(),
        "components": components.len(),
        "largest_component": kept.len(),
        "max_degree": d_max,
        "lambda2": lambda2,
        "lambda2_largest_component": lambda2_largest,
        "cheeger_bounds": cheeger,
        "edge_expansion": expansion,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    if let Some(p) = args.edge_list {
        let mut out = BufWriter::new(File::create(&p)?);
        graph.write_edge_list(&mut out)?;
        out.flush()?;
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => train_cmd(a),
        Command::Experiment(a) => experiment_cmd(a),
        Command::Bounds(a) => bounds_cmd(a),
        Command::InspectGraph(a) => inspect_cmd(a),
    };
    match result {
        Ok(code) => code,
        Err(Fatal(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
