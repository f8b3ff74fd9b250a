use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

use super::{accuracy, affine_scores, dropout_apply, EpochRecord, Mode, StackedData, TrainConfig, TrainedModel};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::util;

const INIT_SCALE: f64 = 1e-3;

/// Minibatch SGD on `data.train`, keeping the parameters of the epoch with the
/// best validation accuracy (earliest on ties).
///
/// The objective per batch is the data loss plus `0.5·reg·‖W‖²`; the bias is
/// not regularized. Epoch `e` runs at `lr0·decayᵉ`. The run is a pure
/// function of `data` and `config`.
pub fn train_linear(data: &StackedData, config: &TrainConfig) -> Result<TrainedModel> {
    config.validate()?;
    if data.train.is_empty() || data.val.is_empty() {
        return Err(Error::invalid("train and val splits must be nonempty"));
    }
    let c = data.num_classes;
    let d = data.train.x.cols();
    if data.val.x.cols() != d {
        return Err(Error::ShapeMismatch("train and val feature widths differ".into()));
    }
    if let Some(&label) = data.train.y.iter().chain(&data.val.y).find(|&&y| y >= c) {
        return Err(Error::LabelOutOfRange { label, classes: c });
    }

    let mut rng = util::rng(config.seed);
    let mut weights = Matrix::from_fn(c, d, |_, _| {
        let e: f64 = StandardNormal.sample(&mut rng);
        INIT_SCALE * e
    });
    let mut bias = vec![0.0; c];
    let mut best = (weights.clone(), bias.clone(), 0usize, f64::NEG_INFINITY);
    let mut history = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let dropout = config.dropout_enabled && config.dropout_p > 0.0;

    for epoch in 0..config.epochs {
        let lr = config.lr_at(epoch);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let mut xb = data.train.x.select_rows(chunk);
            if dropout {
                xb = dropout_apply(&xb, config.dropout_p, Mode::Train, &mut rng).0;
            }
            let yb: Vec<usize> = chunk.iter().map(|&i| data.train.y[i]).collect();
            let scores = affine_scores(&xb, &weights, &bias)?;
            let (loss, dscores) = config.loss_kind.loss_grad(&scores, &yb);
            loss_sum += loss + 0.5 * config.reg * weights.squared_norm();
            batches += 1;

            let mut dw = dscores.t_matmul(&xb);
            dw.axpy(config.reg, &weights);
            let db = dscores.sum_rows();
            weights.axpy(-lr, &dw);
            for (b, g) in bias.iter_mut().zip(db) {
                *b -= lr * g;
            }
        }
        let train_loss = loss_sum / batches as f64;
        if !train_loss.is_finite() || !weights.is_finite() || bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::Diverged { epoch });
        }
        let val_pred = affine_scores(&data.val.x, &weights, &bias)?.argmax_rows();
        let val_accuracy = accuracy(&val_pred, &data.val.y);
        if val_accuracy > best.3 {
            best = (weights.clone(), bias.clone(), epoch, val_accuracy);
        }
        history.push(EpochRecord {
            train_loss,
            val_accuracy,
            lr,
        });
    }

    let (weights, bias, best_epoch, _) = best;
    Ok(TrainedModel {
        weights,
        bias,
        stack_spec: data.stack_spec.clone(),
        normalized: data.normalized,
        config: config.clone(),
        history,
        best_epoch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{predict, Labeled, LossKind};
    use crate::stacking::StackSpec;
    use rand::Rng;

    /// Two well separated blobs in 2-D.
    fn separable(seed: u64) -> StackedData {
        let mut rng = util::rng(seed);
        let mut make = |n: usize| {
            let mut rows = Vec::new();
            let mut y = Vec::new();
            for i in 0..n {
                let class = i % 2;
                let cx = if class == 0 { 2.0 } else { -2.0 };
                rows.push(vec![cx + rng.random_range(-0.5..0.5), rng.random_range(-1.0..1.0)]);
                y.push(class);
            }
            Labeled {
                x: Matrix::from_rows(&rows).unwrap(),
                y,
            }
        };
        StackedData {
            stack_spec: StackSpec::new(["toy"]).unwrap(),
            normalized: false,
            num_classes: 2,
            train: make(40),
            val: make(20),
            test: make(20),
        }
    }

    fn quick(seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: 30,
            batch_size: 8,
            lr0: 0.05,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn separable_toy_is_learned() {
        let data = separable(1);
        let model = train_linear(&data, &quick(4)).unwrap();
        let (_, pred) = predict(&model, &data.train.x).unwrap();
        assert_eq!(accuracy(&pred, &data.train.y), 1.0);
        assert_eq!(model.history.len(), 30);
    }

    #[test]
    fn lr_schedule_is_exact() {
        let data = separable(2);
        let cfg = TrainConfig {
            lr0: 0.01,
            decay: 0.98,
            epochs: 12,
            ..quick(0)
        };
        let model = train_linear(&data, &cfg).unwrap();
        assert_eq!(model.history[10].lr, 0.01 * 0.98f64.powi(10));
        for (e, h) in model.history.iter().enumerate() {
            assert_eq!(h.lr, 0.01 * 0.98f64.powi(e as i32));
        }
    }

    #[test]
    fn bit_identical_reruns() {
        let data = separable(3);
        let cfg = TrainConfig {
            dropout_enabled: true,
            ..quick(9)
        };
        assert_eq!(train_linear(&data, &cfg).unwrap(), train_linear(&data, &cfg).unwrap());
    }

    #[test]
    fn best_epoch_is_earliest_maximum() {
        let data = separable(4);
        let model = train_linear(&data, &quick(1)).unwrap();
        let best = model.history.iter().map(|h| h.val_accuracy).fold(f64::MIN, f64::max);
        let first = model.history.iter().position(|h| h.val_accuracy == best).unwrap();
        assert_eq!(model.best_epoch, first);
    }

    #[test]
    fn regularization_shrinks_weights() {
        let data = separable(5);
        let base = TrainConfig {
            epochs: 40,
            lr0: 0.01,
            ..quick(2)
        };
        let w0 = train_linear(
            &data,
            &TrainConfig {
                reg: 0.0,
                ..base.clone()
            },
        )
        .unwrap();
        let w10 = train_linear(&data, &TrainConfig { reg: 10.0, ..base }).unwrap();
        assert!(w10.weights.squared_norm() < w0.weights.squared_norm());
    }

    #[test]
    fn divergence_is_reported() {
        let mut data = separable(6);
        data.train.x.as_mut_slice().iter_mut().for_each(|v| *v *= 1e155);
        let cfg = TrainConfig {
            lr0: 1e10,
            reg: 0.0,
            loss_kind: LossKind::Softmax,
            ..quick(0)
        };
        match train_linear(&data, &cfg) {
            Err(Error::Diverged { epoch }) => assert_eq!(epoch, 0),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
