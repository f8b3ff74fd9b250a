//! The stacked-feature head: optional dropout, an affine layer and an SVM
//! (or softmax) loss, trained by minibatch SGD with L2 regularization and
//! per-epoch exponential learning-rate decay.

mod dropout;
mod gradcheck;
mod loss;
mod model_io;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature_store::{DatasetBundle, Split};
use crate::matrix::Matrix;
use crate::stacking::{self, StackSpec};

pub use dropout::{dropout_apply, Mode};
pub use gradcheck::grad_check;
pub use loss::{softmax_loss_grad, softmax_rows, svm_loss_grad};
pub use model_io::{load_model, save_model, sidecar_path, MODEL_MAGIC};
pub use train::train_linear;

pub const SVM_MARGIN: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Svm,
    Softmax,
}

impl LossKind {
    pub fn loss_grad(self, scores: &Matrix, labels: &[usize]) -> (f64, Matrix) {
        match self {
            LossKind::Svm => svm_loss_grad(scores, labels, SVM_MARGIN),
            LossKind::Softmax => softmax_loss_grad(scores, labels),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr0: f64,
    pub reg: f64,
    pub epochs: usize,
    pub decay: f64,
    pub batch_size: usize,
    pub dropout_p: f64,
    pub dropout_enabled: bool,
    pub loss_kind: LossKind,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr0: 1e-2,
            reg: 0.01,
            epochs: 300,
            decay: 0.98,
            batch_size: 128,
            dropout_p: 0.5,
            dropout_enabled: false,
            loss_kind: LossKind::Svm,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(Error::invalid(format!("lr0 must be > 0, got {}", self.lr0)));
        }
        if !(self.reg >= 0.0 && self.reg.is_finite()) {
            return Err(Error::invalid(format!("reg must be >= 0, got {}", self.reg)));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be >= 1"));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::invalid(format!("decay must lie in (0, 1], got {}", self.decay)));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::invalid(format!(
                "dropout_p must lie in [0, 1), got {}",
                self.dropout_p
            )));
        }
        Ok(())
    }

    /// Learning rate used throughout epoch `epoch` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr0 * self.decay.powi(epoch as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub train_loss: f64,
    pub val_accuracy: f64,
    pub lr: f64,
}

/// Affine head parameters from the best validation epoch, with provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    /// `C × D`.
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub stack_spec: StackSpec,
    pub normalized: bool,
    pub config: TrainConfig,
    pub history: Vec<EpochRecord>,
    /// 0-based epoch whose parameters were kept.
    pub best_epoch: usize,
}

impl TrainedModel {
    pub fn num_classes(&self) -> usize {
        self.weights.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn best_val_accuracy(&self) -> f64 {
        self.history[self.best_epoch].val_accuracy
    }
}

/// Rows of features and their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Labeled {
    pub x: Matrix,
    pub y: Vec<usize>,
}

impl Labeled {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Stacked features of one bundle, split for training.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedData {
    pub stack_spec: StackSpec,
    pub normalized: bool,
    pub num_classes: usize,
    pub train: Labeled,
    pub val: Labeled,
    pub test: Labeled,
}

impl StackedData {
    pub fn from_bundle(bundle: &DatasetBundle, spec: &StackSpec, normalize: bool) -> Result<Self> {
        let stacked = stacking::stack_bundle(bundle, spec, normalize)?;
        let part = |s: Split| {
            let idx = bundle.indices(s);
            Labeled {
                x: stacked.select_rows(&idx),
                y: bundle.labels_of(&idx),
            }
        };
        Ok(StackedData {
            stack_spec: spec.clone(),
            normalized: normalize,
            num_classes: bundle.num_classes(),
            train: part(Split::Train),
            val: part(Split::Val),
            test: part(Split::Test),
        })
    }

    pub fn part(&self, s: Split) -> &Labeled {
        match s {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

/// `scoresᵢⱼ = Wⱼ · Xᵢ + bⱼ`.
pub fn affine_scores(x: &Matrix, weights: &Matrix, bias: &[f64]) -> Result<Matrix> {
    if x.cols() != weights.cols() || bias.len() != weights.rows() {
        return Err(Error::ShapeMismatch(format!(
            "X is {}x{}, W is {}x{}, b has {}",
            x.rows(),
            x.cols(),
            weights.rows(),
            weights.cols(),
            bias.len()
        )));
    }
    let mut s = x.matmul_t(weights);
    s.add_row_vector(bias);
    Ok(s)
}

/// Test-mode scores and argmax labels (lowest index wins ties).
pub fn predict(model: &TrainedModel, x: &Matrix) -> Result<(Matrix, Vec<usize>)> {
    if x.cols() != model.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "model expects {} features, got {}",
            model.input_dim(),
            x.cols()
        )));
    }
    let scores = affine_scores(x, &model.weights, &model.bias)?;
    let labels = scores.argmax_rows();
    Ok((scores, labels))
}

pub fn accuracy(predicted: &[usize], labels: &[usize]) -> f64 {
    assert_eq!(predicted.len(), labels.len());
    if labels.is_empty() {
        return 0.0;
    }
    let hits = predicted.iter().zip(labels).filter(|(p, y)| p == y).count();
    hits as f64 / labels.len() as f64
}
