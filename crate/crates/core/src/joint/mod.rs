//! One shared trunk, one linear head per task.
//!
//! Training draws mixed minibatches holding an equal share of every task,
//! runs each task's share through the trunk and its own head, and sums the
//! per-task softmax losses. Transfer is measured by freezing a trunk and
//! sweeping a linear SVM head over its features.

mod batches;
mod experiment;
mod trunk;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::classifier::softmax_loss_grad;
use crate::error::{Error, Result};
use crate::feature_store::{DatasetBundle, FeatureMatrix, Split};
use crate::matrix::Matrix;
use crate::stacking::StackSpec;
use crate::sweep::{run_sweep, GridSpec, SweepOptions, SweepResult};
use crate::util;

pub use batches::{interleave_batches, MixedBatcher};
pub use experiment::{run_experiment, JointRecipe, TaskRecipe, TransferReport, TransferRow};
pub use trunk::{trunk_forward, Dense, Trunk, TrunkCache, TrunkConfig};

/// Network id of trunk features in bundles built by [`transfer_eval`].
pub const TRUNK_NETWORK: &str = "trunk";

/// SGD settings for joint training. Unlike the linear head, zero epochs is
/// allowed and leaves the initial trunk untouched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JointConfig {
    pub lr0: f64,
    pub reg: f64,
    pub epochs: usize,
    pub decay: f64,
    /// Total batch size; must be divisible by the number of tasks.
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for JointConfig {
    fn default() -> Self {
        JointConfig {
            lr0: 1e-2,
            reg: 1e-3,
            epochs: 10,
            decay: 0.98,
            batch_size: 4,
            seed: 0,
        }
    }
}

impl JointConfig {
    fn validate(&self) -> Result<()> {
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(Error::invalid("lr0 must be > 0"));
        }
        if !(self.reg >= 0.0 && self.reg.is_finite()) {
            return Err(Error::invalid("reg must be >= 0"));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::invalid("decay must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Training samples of one task.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskData {
    pub id: String,
    pub num_classes: usize,
    pub x: Matrix,
    pub y: Vec<usize>,
}

impl TaskData {
    /// The train split of `network` in `bundle`, named after the dataset.
    pub fn train_split(bundle: &DatasetBundle, network: &str) -> Result<Self> {
        let idx = bundle.indices(Split::Train);
        Ok(TaskData {
            id: bundle.dataset_id.clone(),
            num_classes: bundle.num_classes(),
            x: bundle.network(network)?.select_rows(&idx),
            y: bundle.labels_of(&idx),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointEpoch {
    pub lr: f64,
    /// Mean softmax loss of each task's sub-batches, without regularization.
    pub task_losses: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointModel {
    pub trunk: Trunk,
    pub heads: BTreeMap<String, Dense>,
    pub history: Vec<JointEpoch>,
}

impl JointModel {
    /// Test-time scores of `task`'s head.
    pub fn scores(&self, task: &str, x: &Matrix) -> Result<Matrix> {
        let head = self
            .heads
            .get(task)
            .ok_or_else(|| Error::invalid(format!("no head for task {task}")))?;
        Ok(head.forward(&trunk_forward(&self.trunk, x)?))
    }
}

/// Loss and gradients of one mixed batch.
#[derive(Debug, Clone)]
pub struct JointGrad {
    /// Sum of task losses plus `0.5·reg·(‖trunk W‖² + Σ‖head W‖²)`.
    pub total: f64,
    pub task_losses: Vec<f64>,
    /// Includes weight decay.
    pub trunk: Vec<Dense>,
    pub heads: Vec<Dense>,
}

/// Evaluates the joint objective on a batch of `(inputs, labels)` pairs, one
/// per head, and its gradient with respect to every parameter.
pub fn joint_loss_grad(trunk: &Trunk, heads: &[&Dense], batch: &[(Matrix, Vec<usize>)], reg: f64) -> Result<JointGrad> {
    if heads.len() != batch.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} heads for {} sub-batches",
            heads.len(),
            batch.len()
        )));
    }
    let mut trunk_grad: Vec<Dense> = trunk
        .layers
        .iter()
        .map(|l| Dense::zeros(l.outputs(), l.inputs()))
        .collect();
    let mut head_grads = Vec::with_capacity(heads.len());
    let mut task_losses = Vec::with_capacity(heads.len());
    let mut reg_norm = trunk.weight_norm_sq();
    for (head, (x, y)) in heads.iter().zip(batch) {
        if head.inputs() != trunk.output_dim() {
            return Err(Error::ShapeMismatch("head width differs from trunk output".into()));
        }
        if let Some(&label) = y.iter().find(|&&l| l >= head.outputs()) {
            return Err(Error::LabelOutOfRange {
                label,
                classes: head.outputs(),
            });
        }
        let cache = trunk.forward_cached(x)?;
        let features = cache.activations.last().expect("output cached");
        let scores = head.forward(features);
        let (loss, dscores) = softmax_loss_grad(&scores, y);
        task_losses.push(loss);
        reg_norm += head.weights.squared_norm();

        let mut dw = dscores.t_matmul(features);
        dw.axpy(reg, &head.weights);
        head_grads.push(Dense {
            weights: dw,
            bias: dscores.sum_rows(),
        });
        let d_features = dscores.matmul(&head.weights);
        for (acc, g) in trunk_grad.iter_mut().zip(trunk.backward(&cache, &d_features)) {
            acc.weights.axpy(1.0, &g.weights);
            acc.bias.iter_mut().zip(&g.bias).for_each(|(a, b)| *a += b);
        }
    }
    for (g, l) in trunk_grad.iter_mut().zip(&trunk.layers) {
        g.weights.axpy(reg, &l.weights);
    }
    Ok(JointGrad {
        total: task_losses.iter().sum::<f64>() + 0.5 * reg * reg_norm,
        task_losses,
        trunk: trunk_grad,
        heads: head_grads,
    })
}

/// Trains a fresh trunk built from `trunk_config` jointly on `tasks`.
pub fn joint_train(tasks: &[TaskData], trunk_config: &TrunkConfig, config: &JointConfig) -> Result<JointModel> {
    joint_train_from(Trunk::init(trunk_config)?, tasks, config)
}

/// Fine-tunes an existing trunk on a single task.
pub fn finetune_single(trunk_init: &Trunk, task: &TaskData, config: &JointConfig) -> Result<JointModel> {
    joint_train_from(trunk_init.clone(), std::slice::from_ref(task), config)
}

/// Joint training starting from `trunk`. Heads start at zero.
pub fn joint_train_from(mut trunk: Trunk, tasks: &[TaskData], config: &JointConfig) -> Result<JointModel> {
    config.validate()?;
    if tasks.is_empty() {
        return Err(Error::invalid("joint training needs at least one task"));
    }
    let mut ids: Vec<&str> = tasks.iter().map(|t| t.id.as_str()).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::invalid("task ids must be unique"));
    }
    for t in tasks {
        if t.x.cols() != trunk.input_dim {
            return Err(Error::ShapeMismatch(format!(
                "task {} has {} inputs, trunk expects {}",
                t.id,
                t.x.cols(),
                trunk.input_dim
            )));
        }
        if t.y.len() != t.x.rows() {
            return Err(Error::ShapeMismatch(format!("task {} labels do not match rows", t.id)));
        }
    }

    let mut heads: Vec<Dense> = tasks
        .iter()
        .map(|t| Dense::zeros(t.num_classes, trunk.output_dim()))
        .collect();
    let mut rng = util::rng(config.seed);
    let sizes: Vec<usize> = tasks.iter().map(|t| t.y.len()).collect();
    let mut batcher = interleave_batches(&sizes, config.batch_size, &mut rng)?;
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let lr = config.lr0 * config.decay.powi(epoch as i32);
        let mut sums = vec![0.0; tasks.len()];
        let batches = batcher.batches_per_epoch();
        for _ in 0..batches {
            let idx = batcher.next_batch(&mut rng);
            let batch: Vec<(Matrix, Vec<usize>)> = tasks
                .iter()
                .zip(&idx)
                .map(|(t, ix)| (t.x.select_rows(ix), ix.iter().map(|&i| t.y[i]).collect()))
                .collect();
            let head_refs: Vec<&Dense> = heads.iter().collect();
            let g = joint_loss_grad(&trunk, &head_refs, &batch, config.reg)?;
            if !g.total.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            for (s, l) in sums.iter_mut().zip(&g.task_losses) {
                *s += l;
            }
            for (layer, d) in trunk.layers.iter_mut().zip(&g.trunk) {
                layer.step(lr, d);
            }
            for (head, d) in heads.iter_mut().zip(&g.heads) {
                head.step(lr, d);
            }
        }
        if !trunk.layers.iter().all(Dense::is_finite) || !heads.iter().all(Dense::is_finite) {
            return Err(Error::Diverged { epoch });
        }
        history.push(JointEpoch {
            lr,
            task_losses: tasks
                .iter()
                .zip(&sums)
                .map(|(t, s)| (t.id.clone(), s / batches as f64))
                .collect(),
        });
    }
    Ok(JointModel {
        trunk,
        heads: tasks.iter().map(|t| t.id.clone()).zip(heads).collect(),
        history,
    })
}

/// Replaces `network`'s features in `bundle` by the frozen trunk's output.
pub fn trunk_features(trunk: &Trunk, bundle: &DatasetBundle, network: &str) -> Result<DatasetBundle> {
    let x = bundle.network(network)?.to_matrix();
    let f = trunk_forward(trunk, &x)?;
    bundle.with_features([FeatureMatrix::from_matrix(
        TRUNK_NETWORK,
        bundle.dataset_id.clone(),
        &f,
    )?])
}

/// Sweeps a linear head over the frozen trunk's features of `network`.
pub fn transfer_sweep(
    trunk: &Trunk,
    bundle: &DatasetBundle,
    network: &str,
    grid: &GridSpec,
    opts: &SweepOptions,
) -> Result<SweepResult> {
    let features = trunk_features(trunk, bundle, network)?;
    run_sweep(&features, &StackSpec::new([TRUNK_NETWORK])?, grid, opts)
}

/// Best validation accuracy of a linear head on the frozen trunk's features.
pub fn transfer_eval(
    trunk: &Trunk,
    bundle: &DatasetBundle,
    network: &str,
    grid: &GridSpec,
    opts: &SweepOptions,
) -> Result<f64> {
    Ok(transfer_sweep(trunk, bundle, network, grid, opts)?.best_val_accuracy())
}
