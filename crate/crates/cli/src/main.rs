//! `snn`: stacked-network transfer learning from the command line.
//!
//! Reports go to `--out` when given, otherwise to stdout. Exit status is 0 on
//! success, 1 on invalid input and 2 on I/O failure.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{Map, Value};

use snn_core::classifier::{
    accuracy, load_model, predict, save_model, train_linear, LossKind, StackedData, TrainConfig,
};
use snn_core::ensemble::stack_ensemble;
use snn_core::feature_store::{
    complementary_spec, generate_synthetic, load_bundle, save_bundle, DatasetBundle, Split, SynthSpec,
};
use snn_core::joint::{
    finetune_single, joint_train, joint_train_from, run_experiment, transfer_sweep, JointConfig, JointRecipe, TaskData,
    Trunk, TrunkConfig,
};
use snn_core::report::{confusion, degradation_table, emit, AccuracyRecord, Format, Report};
use snn_core::stacking::{accuracy_weights, enumerate_subsets, StackSpec};
use snn_core::sweep::{run_sweep, GridSpec, SweepOptions, SweepResult};
use snn_core::util::{read_json, write_json};

#[derive(Parser)]
#[command(name = "snn", version, about = "Stacked neural network transfer learning")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Base seed for data generation, splits and training.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for sweeps.
    #[arg(long, global = true, default_value_t = 1)]
    parallelism: usize,
    /// Report destination; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Report format.
    #[arg(long, global = true, value_enum, default_value_t = OutFormat::Json)]
    format: OutFormat,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Json,
    Csv,
}

impl From<OutFormat> for Format {
    fn from(f: OutFormat) -> Self {
        match f {
            OutFormat::Json => Format::Json,
            OutFormat::Csv => Format::Csv,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Loss {
    Svm,
    Softmax,
}

impl From<Loss> for LossKind {
    fn from(l: Loss) -> Self {
        match l {
            Loss::Svm => LossKind::Svm,
            Loss::Softmax => LossKind::Softmax,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Dropout {
    On,
    Off,
    Auto,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic bundle and save it as a manifest plus feature files.
    Synth {
        /// Directory receiving the bundle.
        #[arg(long)]
        dir: PathBuf,
        /// JSON generator spec; the complementary two-network fixture when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        samples_per_class: usize,
    },
    /// Load a manifest (binary or CSV features), validate it and save it in binary form.
    Ingest {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        dir: PathBuf,
    },
    /// Train one linear classifier on a stack.
    Train {
        #[command(flatten)]
        stack: StackArgs,
        /// Where to write the model; its JSON sidecar goes next to it.
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 1e-2)]
        lr: f64,
        #[arg(long, default_value_t = 0.01)]
        reg: f64,
        #[arg(long, default_value_t = 300)]
        epochs: usize,
        #[arg(long, default_value_t = 0.98)]
        decay: f64,
        #[arg(long, default_value_t = 128)]
        batch_size: usize,
        #[arg(long, value_enum, default_value_t = Dropout::Auto)]
        dropout: Dropout,
        #[arg(long, default_value_t = 0.5)]
        dropout_p: f64,
        #[arg(long, value_enum, default_value_t = Loss::Svm)]
        loss: Loss,
    },
    /// Grid-search a stack and report every configuration.
    Sweep {
        #[command(flatten)]
        stack: StackArgs,
        #[command(flatten)]
        grid: GridArgs,
        /// Also save the winning model here.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// List every nonempty subset of networks.
    Subsets {
        /// Comma-separated network ids.
        #[arg(long, value_delimiter = ',', required_unless_present = "manifest")]
        networks: Vec<String>,
        /// Take the network ids from this manifest instead.
        #[arg(long, conflicts_with = "networks")]
        manifest: Option<PathBuf>,
    },
    /// Sweep every subset of a stack and average the winners' scores.
    Ensemble {
        #[arg(long)]
        manifest: PathBuf,
        /// Comma-separated network ids; all networks when omitted.
        #[arg(long, value_delimiter = ',')]
        networks: Vec<String>,
        #[command(flatten)]
        grid: GridArgs,
        /// Average softmax probabilities instead of raw scores.
        #[arg(long)]
        probabilities: bool,
    },
    /// Turn per-network accuracies into stacking weights.
    Weights {
        /// `id=accuracy` pairs, comma-separated.
        #[arg(long, value_delimiter = ',', required_unless_present = "manifest")]
        accuracies: Vec<String>,
        /// Measure each network's accuracy with a sweep instead.
        #[arg(long, conflicts_with = "accuracies")]
        manifest: Option<PathBuf>,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Train a shared trunk, or run the specialization experiment from a recipe.
    JointTrain {
        /// Experiment recipe (JSON); runs every seed and reports transfer accuracies.
        #[arg(long, conflicts_with_all = ["manifests", "print_recipe"])]
        recipe: Option<PathBuf>,
        /// Print the reference recipe and exit.
        #[arg(long)]
        print_recipe: bool,
        /// One manifest per task; every task trains its own head.
        #[arg(long = "manifest")]
        manifests: Vec<PathBuf>,
        /// Input network within each manifest.
        #[arg(long, default_value = "input")]
        network: String,
        /// Hidden layer sizes, comma-separated; `0` for no hidden layer.
        #[arg(long, value_delimiter = ',', default_value = "128")]
        hidden: Vec<usize>,
        /// Start from this trunk (JSON) instead of a fresh one.
        #[arg(long)]
        init_trunk: Option<PathBuf>,
        /// Where to save the trained trunk (JSON).
        #[arg(long)]
        trunk: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-2)]
        lr: f64,
        #[arg(long, default_value_t = 1e-3)]
        reg: f64,
        #[arg(long, default_value_t = 10)]
        epochs: usize,
        #[arg(long, default_value_t = 0.98)]
        decay: f64,
        #[arg(long, default_value_t = 4)]
        batch_size: usize,
    },
    /// Sweep a linear head over a frozen trunk's features.
    TransferEval {
        /// Trunk JSON written by `joint-train --trunk`.
        #[arg(long)]
        trunk: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "input")]
        network: String,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Confusion matrix of a saved model on one split.
    Confusion {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitArg::Val)]
        split: SplitArg,
    },
    /// Degradation table from sweep results across datasets.
    Report {
        /// Sweep result JSON files or JSON arrays of accuracy records.
        #[arg(required = true)]
        results: Vec<PathBuf>,
    },
}

#[derive(Args)]
struct StackArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Comma-separated network ids to stack.
    #[arg(long, value_delimiter = ',', required_unless_present = "weights")]
    networks: Vec<String>,
    /// Weighted stack as `id=weight` pairs; replaces --networks.
    #[arg(long, value_delimiter = ',', conflicts_with = "networks")]
    weights: Vec<String>,
    /// Skip per-network L2 row normalization.
    #[arg(long)]
    no_normalize: bool,
}

impl StackArgs {
    fn spec(&self) -> anyhow::Result<StackSpec> {
        if self.weights.is_empty() {
            Ok(StackSpec::new(self.networks.iter().cloned())?)
        } else {
            Ok(StackSpec::weighted(&parse_pairs(&self.weights)?)?)
        }
    }
}

#[derive(Args)]
struct GridArgs {
    /// JSON grid; the default grid when omitted. The global seed replaces its seed.
    #[arg(long)]
    grid: Option<PathBuf>,
}

impl GridArgs {
    fn load(&self, seed: u64) -> anyhow::Result<GridSpec> {
        let mut grid = match &self.grid {
            Some(p) => read_json::<GridSpec>(p)?,
            None => GridSpec::default(),
        };
        grid.seed = seed;
        grid.validate()?;
        Ok(grid)
    }
}

fn parse_pairs(pairs: &[String]) -> anyhow::Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for pair in pairs {
        let Some((id, v)) = pair.split_once('=') else {
            bail!(format!("expected id=value, got {pair:?}"));
        };
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| anyhow::anyhow!("not a number in {pair:?}"))?;
        if out.insert(id.trim().to_string(), v).is_some() {
            bail!(format!("{id} given twice"));
        }
    }
    Ok(out)
}

/// Flat key/value report for commands without a richer result type.
#[derive(Serialize)]
#[serde(transparent)]
struct Summary(Map<String, Value>);

impl Summary {
    fn new() -> Self {
        Summary(Map::new())
    }

    fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.0.insert(key.to_string(), value.into());
        self
    }
}

impl Report for Summary {
    fn to_csv(&self) -> String {
        let mut out = String::from("key,value\n");
        for (k, v) in &self.0 {
            let v = match v {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            if v.contains([',', '"', '\n']) {
                out.push_str(&format!("{k},\"{}\"\n", v.replace('"', "\"\"")));
            } else {
                out.push_str(&format!("{k},{v}\n"));
            }
        }
        out
    }
}

fn output<R: Report + ?Sized>(report: &R, g: &Global) -> anyhow::Result<()> {
    match &g.out {
        Some(path) => emit(report, g.format.into(), path)?,
        None => print!("{}", report.render(g.format.into())?),
    }
    Ok(())
}

fn options(g: &Global, normalize: bool) -> SweepOptions {
    SweepOptions {
        parallelism: g.parallelism,
        normalize,
    }
}

fn bundle_summary(bundle: &DatasetBundle, manifest: &Path) -> anyhow::Result<Summary> {
    let nets: Map<String, Value> = bundle
        .network_ids()
        .into_iter()
        .map(|id| Ok((id.clone(), Value::from(bundle.network(&id)?.d()))))
        .collect::<anyhow::Result<_>>()?;
    Ok(Summary::new()
        .with("manifest", manifest.display().to_string())
        .with("dataset_id", bundle.dataset_id.clone())
        .with("samples", bundle.n())
        .with("classes", bundle.num_classes())
        .with("networks", nets))
}

fn read_records(path: &Path) -> anyhow::Result<Vec<AccuracyRecord>> {
    let value: Value = read_json(path)?;
    if value.is_array() {
        return serde_json::from_value(value).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()));
    }
    let sweep: SweepResult =
        serde_json::from_value(value).map_err(|e| anyhow::anyhow!("{}: not a sweep result: {e}", path.display()))?;
    Ok(vec![AccuracyRecord::from(&sweep)])
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let g = &cli.global;
    match cli.command {
        Command::Synth {
            dir,
            spec,
            samples_per_class,
        } => {
            let spec = match spec {
                Some(p) => read_json::<SynthSpec>(&p)?,
                None => complementary_spec(samples_per_class),
            };
            let bundle = generate_synthetic(&spec, g.seed)?;
            let manifest = save_bundle(&bundle, &dir)?;
            output(&bundle_summary(&bundle, &manifest)?, g)
        }
        Command::Ingest { manifest, dir } => {
            let bundle = load_bundle(&manifest)?;
            let saved = save_bundle(&bundle, &dir)?;
            output(&bundle_summary(&bundle, &saved)?, g)
        }
        Command::Train {
            stack,
            model,
            lr,
            reg,
            epochs,
            decay,
            batch_size,
            dropout,
            dropout_p,
            loss,
        } => {
            let bundle = load_bundle(&stack.manifest)?;
            let spec = stack.spec()?;
            let dropout_enabled = match dropout {
                Dropout::On => true,
                Dropout::Off => false,
                Dropout::Auto => spec.len() > 2,
            };
            let config = TrainConfig {
                lr0: lr,
                reg,
                epochs,
                decay,
                batch_size,
                dropout_p,
                dropout_enabled,
                loss_kind: loss.into(),
                seed: g.seed,
            };
            let data = StackedData::from_bundle(&bundle, &spec, !stack.no_normalize)?;
            let trained = train_linear(&data, &config)?;
            save_model(&trained, &model)?;
            let test = data.part(Split::Test);
            let test_acc = if test.is_empty() {
                Value::Null
            } else {
                Value::from(accuracy(&predict(&trained, &test.x)?.1, &test.y))
            };
            output(
                &Summary::new()
                    .with("model", model.display().to_string())
                    .with("stack_spec", spec.key())
                    .with("best_epoch", trained.best_epoch)
                    .with("val_accuracy", trained.best_val_accuracy())
                    .with("test_accuracy", test_acc),
                g,
            )
        }
        Command::Sweep { stack, grid, model } => {
            let bundle = load_bundle(&stack.manifest)?;
            let result = run_sweep(
                &bundle,
                &stack.spec()?,
                &grid.load(g.seed)?,
                &options(g, !stack.no_normalize),
            )?;
            if let Some(path) = model {
                save_model(&result.winner_model, &path)?;
            }
            output(&result, g)
        }
        Command::Subsets { networks, manifest } => {
            let ids = match manifest {
                Some(p) => load_bundle(&p)?.network_ids(),
                None => networks,
            };
            output(&enumerate_subsets(&ids)?, g)
        }
        Command::Ensemble {
            manifest,
            networks,
            grid,
            probabilities,
        } => {
            let bundle = load_bundle(&manifest)?;
            let ids = if networks.is_empty() {
                bundle.network_ids()
            } else {
                networks
            };
            let report = stack_ensemble(&bundle, &ids, &grid.load(g.seed)?, &options(g, true), probabilities)?;
            output(&report, g)
        }
        Command::Weights {
            accuracies,
            manifest,
            grid,
        } => {
            let accs = match manifest {
                Some(p) => {
                    let bundle = load_bundle(&p)?;
                    let grid = grid.load(g.seed)?;
                    bundle
                        .network_ids()
                        .into_iter()
                        .map(|id| {
                            let r = run_sweep(&bundle, &StackSpec::new([id.clone()])?, &grid, &options(g, true))?;
                            Ok((id, r.best_val_accuracy()))
                        })
                        .collect::<anyhow::Result<BTreeMap<_, _>>>()?
                }
                None => parse_pairs(&accuracies)?,
            };
            output(&accuracy_weights(&accs)?, g)
        }
        Command::JointTrain {
            recipe,
            print_recipe,
            manifests,
            network,
            hidden,
            init_trunk,
            trunk,
            lr,
            reg,
            epochs,
            decay,
            batch_size,
        } => {
            if print_recipe {
                let text = serde_json::to_string_pretty(&JointRecipe::default())?;
                match &g.out {
                    Some(p) => write_json(p, &JointRecipe::default())?,
                    None => println!("{text}"),
                }
                return Ok(());
            }
            if let Some(p) = recipe {
                let recipe: JointRecipe = read_json(&p)?;
                return output(&run_experiment(&recipe, g.parallelism)?, g);
            }
            if manifests.is_empty() {
                bail!("give --recipe or at least one --manifest");
            }
            let mut tasks = Vec::new();
            for m in &manifests {
                let task = TaskData::train_split(&load_bundle(m)?, &network)?;
                if tasks.iter().any(|t: &TaskData| t.id == task.id) {
                    bail!(format!("dataset {} given twice", task.id));
                }
                tasks.push(task);
            }
            let config = JointConfig {
                lr0: lr,
                reg,
                epochs,
                decay,
                batch_size,
                seed: g.seed,
            };
            let model = match init_trunk {
                Some(p) => {
                    let init: Trunk = read_json(&p)?;
                    if tasks.len() == 1 {
                        finetune_single(&init, &tasks[0], &config)?
                    } else {
                        joint_train_from(init, &tasks, &config)?
                    }
                }
                None => {
                    let input_dim = tasks[0].x.cols();
                    let hidden = hidden.into_iter().filter(|&h| h > 0).collect();
                    joint_train(
                        &tasks,
                        &TrunkConfig {
                            input_dim,
                            hidden,
                            seed: g.seed,
                        },
                        &config,
                    )?
                }
            };
            if let Some(p) = &trunk {
                write_json(p, &model.trunk)?;
            }
            let last: Map<String, Value> = model
                .history
                .last()
                .map(|e| {
                    e.task_losses
                        .iter()
                        .map(|(k, v)| (k.clone(), Value::from(*v)))
                        .collect()
                })
                .unwrap_or_default();
            output(
                &Summary::new()
                    .with("trunk", trunk.map(|p| p.display().to_string()))
                    .with("trunk_output_dim", model.trunk.output_dim())
                    .with("epochs", model.history.len())
                    .with("final_task_losses", last),
                g,
            )
        }
        Command::TransferEval {
            trunk,
            manifest,
            network,
            grid,
        } => {
            let trunk: Trunk = read_json(&trunk)?;
            let bundle = load_bundle(&manifest)?;
            output(
                &transfer_sweep(&trunk, &bundle, &network, &grid.load(g.seed)?, &options(g, true))?,
                g,
            )
        }
        Command::Confusion { model, manifest, split } => {
            let trained = load_model(&model)?;
            let bundle = load_bundle(&manifest)?;
            let data = StackedData::from_bundle(&bundle, &trained.stack_spec, trained.normalized)?;
            let part = data.part(split.into());
            let (_, preds) = predict(&trained, &part.x)?;
            output(&confusion(&preds, &part.y, &bundle.class_names)?, g)
        }
        Command::Report { results } => {
            let mut records = Vec::new();
            for p in &results {
                records.extend(read_records(p).with_context(|| format!("reading {}", p.display()))?);
            }
            output(&degradation_table(&records)?, g)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut msg = String::new();
            for cause in e.chain().map(ToString::to_string) {
                if !msg.ends_with(&cause) {
                    if !msg.is_empty() {
                        msg.push_str(": ");
                    }
                    msg.push_str(&cause);
                }
            }
            eprintln!("error: {msg}");
            let io = e.chain().any(|c| {
                c.downcast_ref::<snn_core::Error>().is_some_and(snn_core::Error::is_io)
                    || c.downcast_ref::<std::io::Error>().is_some()
            });
            ExitCode::from(if io { 2 } else { 1 })
        }
    }
}
