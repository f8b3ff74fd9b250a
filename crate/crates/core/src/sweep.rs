//! Grid search over the head's hyperparameters for one stack.
//!
//! Every configuration gets its own seed derived from the grid seed and the
//! configuration's index, so results do not depend on how many workers run
//! the grid or in which order they finish.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{train_linear, LossKind, StackedData, TrainConfig, TrainedModel};
use crate::error::{Error, Result};
use crate::feature_store::DatasetBundle;
use crate::stacking::StackSpec;
use crate::util::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DropoutPolicy {
    On,
    Off,
    /// Dropout only for stacks of more than two networks.
    Auto,
}

/// Hyperparameter grid. Fields missing from a JSON grid take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub lrs: Vec<f64>,
    pub regs: Vec<f64>,
    pub epoch_choices: Vec<usize>,
    pub decay: f64,
    pub dropout: DropoutPolicy,
    pub dropout_p: f64,
    pub batch_size: usize,
    pub loss_kind: LossKind,
    pub seed: u64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            lrs: vec![1e-2, 5e-2, 1e-3, 2e-3],
            regs: vec![0.01, 0.1, 1.0, 10.0],
            epoch_choices: vec![300, 400],
            decay: 0.98,
            dropout: DropoutPolicy::Auto,
            dropout_p: 0.5,
            batch_size: 128,
            loss_kind: LossKind::Svm,
            seed: 0,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.lrs.is_empty() || self.regs.is_empty() || self.epoch_choices.is_empty() {
            return Err(Error::invalid("grid lists must be nonempty"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.lrs.len() * self.regs.len() * self.epoch_choices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Cartesian product of the grid, learning rate outermost, then
/// regularization, then epochs.
pub fn grid_configs(grid: &GridSpec, stack_size: usize) -> Vec<TrainConfig> {
    let dropout_enabled = match grid.dropout {
        DropoutPolicy::On => true,
        DropoutPolicy::Off => false,
        DropoutPolicy::Auto => stack_size > 2,
    };
    let mut out = Vec::with_capacity(grid.len());
    for &lr0 in &grid.lrs {
        for &reg in &grid.regs {
            for &epochs in &grid.epoch_choices {
                let seed = derive_seed(grid.seed, out.len() as u64);
                out.push(TrainConfig {
                    lr0,
                    reg,
                    epochs,
                    decay: grid.decay,
                    batch_size: grid.batch_size,
                    dropout_p: grid.dropout_p,
                    dropout_enabled,
                    loss_kind: grid.loss_kind,
                    seed,
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub index: usize,
    pub config: TrainConfig,
    /// Zero for diverged runs.
    pub val_accuracy: f64,
    pub best_epoch: Option<usize>,
    pub diverged_at: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub dataset_id: String,
    pub stack_spec: StackSpec,
    pub normalized: bool,
    pub entries: Vec<SweepEntry>,
    pub winner: usize,
    pub winner_model: TrainedModel,
}

impl SweepResult {
    pub fn winner_entry(&self) -> &SweepEntry {
        &self.entries[self.winner]
    }

    pub fn best_val_accuracy(&self) -> f64 {
        self.winner_entry().val_accuracy
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepOptions {
    pub parallelism: usize,
    /// Row-normalize each network's features before stacking.
    pub normalize: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            parallelism: 1,
            normalize: true,
        }
    }
}

/// Stacks `spec` from `bundle` and sweeps `grid` over it.
pub fn run_sweep(
    bundle: &DatasetBundle,
    spec: &StackSpec,
    grid: &GridSpec,
    opts: &SweepOptions,
) -> Result<SweepResult> {
    for id in spec.network_ids() {
        bundle.network(id)?;
    }
    let data = StackedData::from_bundle(bundle, spec, opts.normalize)?;
    run_sweep_on(&bundle.dataset_id, &data, grid, opts.parallelism)
}

/// Sweeps `grid` over already stacked data.
pub fn run_sweep_on(dataset_id: &str, data: &StackedData, grid: &GridSpec, parallelism: usize) -> Result<SweepResult> {
    grid.validate()?;
    let configs = grid_configs(grid, data.stack_spec.len());
    let run = |(index, config): (usize, &TrainConfig)| -> Result<(SweepEntry, Option<TrainedModel>)> {
        match train_linear(data, config) {
            Ok(model) => Ok((
                SweepEntry {
                    index,
                    config: config.clone(),
                    val_accuracy: model.best_val_accuracy(),
                    best_epoch: Some(model.best_epoch),
                    diverged_at: None,
                },
                Some(model),
            )),
            Err(Error::Diverged { epoch }) => Ok((
                SweepEntry {
                    index,
                    config: config.clone(),
                    val_accuracy: 0.0,
                    best_epoch: None,
                    diverged_at: Some(epoch),
                },
                None,
            )),
            Err(e) => Err(e),
        }
    };

    let outcomes: Vec<Result<(SweepEntry, Option<TrainedModel>)>> = if parallelism <= 1 {
        configs.iter().enumerate().map(run).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(parallelism)
            .build()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
        pool.install(|| configs.par_iter().enumerate().map(run).collect())
    };

    let mut entries = Vec::with_capacity(outcomes.len());
    let mut models = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        let (entry, model) = o?;
        entries.push(entry);
        models.push(model);
    }

    let mut winner: Option<usize> = None;
    for (i, e) in entries.iter().enumerate() {
        if e.diverged_at.is_some() {
            continue;
        }
        if winner.is_none_or(|w| e.val_accuracy > entries[w].val_accuracy) {
            winner = Some(i);
        }
    }
    let winner = winner.ok_or(Error::NoViableConfig)?;
    let winner_model = models[winner].take().expect("viable entry has a model");
    Ok(SweepResult {
        dataset_id: dataset_id.to_string(),
        stack_spec: data.stack_spec.clone(),
        normalized: data.normalized,
        entries,
        winner,
        winner_model,
    })
}
