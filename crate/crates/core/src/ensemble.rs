//! Mean-of-scores ensembles, including the stack ensemble: the best model of
//! a stack averaged with the best model of every nonempty subset of it.

use serde::{Deserialize, Serialize};

use crate::classifier::{accuracy, predict, softmax_rows, StackedData};
use crate::error::{Error, Result};
use crate::feature_store::DatasetBundle;
use crate::matrix::Matrix;
use crate::stacking::{enumerate_subsets, StackSpec};
use crate::sweep::{run_sweep_on, GridSpec, SweepOptions};

/// Scores from one model over a fixed sample order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    pub scores: Matrix,
    pub source: String,
}

impl ScoreMatrix {
    pub fn new(scores: Matrix, source: impl Into<String>) -> Result<Self> {
        if !scores.is_finite() {
            return Err(Error::invalid("score matrix has non-finite entries"));
        }
        Ok(ScoreMatrix {
            scores,
            source: source.into(),
        })
    }
}

/// Elementwise mean of the members.
///
/// Members are accumulated in ascending `source` order with a running mean,
/// so the result does not depend on the order they are passed in and `k`
/// identical members average to exactly that member.
pub fn mean_scores(members: &[ScoreMatrix]) -> Result<ScoreMatrix> {
    let first = members.first().ok_or(Error::EmptyEnsemble)?;
    let shape = first.scores.shape();
    if let Some(m) = members.iter().find(|m| m.scores.shape() != shape) {
        return Err(Error::ShapeMismatch(format!(
            "ensemble member {} is {:?}, expected {shape:?}",
            m.source,
            m.scores.shape()
        )));
    }
    let mut order: Vec<&ScoreMatrix> = members.iter().collect();
    order.sort_by(|a, b| a.source.cmp(&b.source));

    let mut mean = order[0].scores.clone();
    for (k, m) in order.iter().enumerate().skip(1) {
        let inv = 1.0 / (k + 1) as f64;
        for (acc, &x) in mean.as_mut_slice().iter_mut().zip(m.scores.as_slice()) {
            *acc += (x - *acc) * inv;
        }
    }
    let source = format!(
        "mean({})",
        order.iter().map(|m| m.source.as_str()).collect::<Vec<_>>().join(",")
    );
    ScoreMatrix::new(mean, source)
}

/// Same as [`mean_scores`] after a row-wise softmax of every member.
pub fn mean_probabilities(members: &[ScoreMatrix]) -> Result<ScoreMatrix> {
    let probs: Vec<ScoreMatrix> = members
        .iter()
        .map(|m| ScoreMatrix {
            scores: softmax_rows(&m.scores),
            source: m.source.clone(),
        })
        .collect();
    mean_scores(&probs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetOutcome {
    pub stack_spec: StackSpec,
    /// Index of the winning configuration in the subset's sweep.
    pub winner: usize,
    pub val_accuracy: f64,
    /// Best subset accuracy minus this one.
    pub degradation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackEnsembleReport {
    pub dataset_id: String,
    pub stack_spec: StackSpec,
    pub probabilities: bool,
    pub subsets: Vec<SubsetOutcome>,
    pub ensemble_accuracy: f64,
    /// Averaged validation-set scores.
    pub scores: ScoreMatrix,
}

/// Sweeps every nonempty subset of `network_ids`, takes each winner's
/// validation scores and averages them.
///
/// With `probabilities` set, each member's scores go through a row-wise
/// softmax first.
pub fn stack_ensemble(
    bundle: &DatasetBundle,
    network_ids: &[String],
    grid: &GridSpec,
    opts: &SweepOptions,
    probabilities: bool,
) -> Result<StackEnsembleReport> {
    let full = StackSpec::new(network_ids.iter().cloned())?;
    let mut members = Vec::new();
    let mut outcomes = Vec::new();
    for spec in enumerate_subsets(network_ids)? {
        for id in spec.network_ids() {
            bundle.network(id)?;
        }
        let data = StackedData::from_bundle(bundle, &spec, opts.normalize)?;
        let sweep = run_sweep_on(&bundle.dataset_id, &data, grid, opts.parallelism)?;
        let (scores, _) = predict(&sweep.winner_model, &data.val.x)?;
        members.push(ScoreMatrix::new(scores, format!("{}#{}", spec.key(), sweep.winner))?);
        outcomes.push(SubsetOutcome {
            stack_spec: spec,
            winner: sweep.winner,
            val_accuracy: sweep.best_val_accuracy(),
            degradation: 0.0,
        });
    }
    let best = outcomes.iter().map(|o| o.val_accuracy).fold(f64::MIN, f64::max);
    for o in &mut outcomes {
        o.degradation = best - o.val_accuracy;
    }
    let scores = if probabilities {
        mean_probabilities(&members)?
    } else {
        mean_scores(&members)?
    };
    let val_labels = bundle.labels_of(&bundle.indices(crate::feature_store::Split::Val));
    let ensemble_accuracy = accuracy(&scores.scores.argmax_rows(), &val_labels);
    Ok(StackEnsembleReport {
        dataset_id: bundle.dataset_id.clone(),
        stack_spec: full,
        probabilities,
        subsets: outcomes,
        ensemble_accuracy,
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feature_store::{complementary_spec, generate_synthetic};
    use proptest::prelude::*;
    use rand::Rng;

    fn sm(rows: &[Vec<f64>], tag: &str) -> ScoreMatrix {
        ScoreMatrix::new(Matrix::from_rows(rows).unwrap(), tag).unwrap()
    }

    #[test]
    fn single_member_is_identity() {
        let a = sm(&[vec![0.1, 0.7], vec![3.0, -1.0]], "a");
        assert_eq!(mean_scores(std::slice::from_ref(&a)).unwrap().scores, a.scores);
    }

    #[test]
    fn hand_mean() {
        let m = mean_scores(&[sm(&[vec![1.0, 3.0]], "a"), sm(&[vec![3.0, 1.0]], "b")]).unwrap();
        assert_eq!(m.scores.row(0), &[2.0, 2.0]);
    }

    #[test]
    fn rejects_empty_and_mismatched() {
        assert!(matches!(mean_scores(&[]), Err(Error::EmptyEnsemble)));
        let err = mean_scores(&[sm(&[vec![1.0, 3.0]], "a"), sm(&[vec![3.0]], "b")]);
        assert!(matches!(err, Err(Error::ShapeMismatch(_))));
    }

    fn random(seed: u64, tag: String) -> ScoreMatrix {
        let mut rng = crate::util::rng(seed);
        ScoreMatrix::new(Matrix::from_fn(6, 4, |_, _| rng.random_range(-10.0..10.0)), tag).unwrap()
    }

    proptest! {
        #[test]
        fn identical_members_average_to_themselves(seed in any::<u64>(), k in 1usize..12) {
            let m = random(seed, "x".into());
            let members: Vec<ScoreMatrix> = (0..k).map(|i| ScoreMatrix { source: format!("m{i}"), ..m.clone() }).collect();
            prop_assert_eq!(&mean_scores(&members).unwrap().scores, &m.scores);
        }

        #[test]
        fn argmax_survives_uniform_scaling(seed in any::<u64>(), k in 1usize..6, c in 0.01f64..100.0) {
            let members: Vec<ScoreMatrix> = (0..k).map(|i| random(seed.wrapping_add(i as u64), format!("m{i}"))).collect();
            let scaled: Vec<ScoreMatrix> = members
                .iter()
                .map(|m| {
                    let mut s = m.clone();
                    s.scores.scale(c);
                    s
                })
                .collect();
            prop_assert_eq!(
                mean_scores(&members).unwrap().scores.argmax_rows(),
                mean_scores(&scaled).unwrap().scores.argmax_rows()
            );
        }

        #[test]
        fn member_order_is_irrelevant(seed in any::<u64>(), k in 2usize..6) {
            let members: Vec<ScoreMatrix> = (0..k).map(|i| random(seed ^ (i as u64 * 77), format!("m{i}"))).collect();
            let mut rev = members.clone();
            rev.reverse();
            prop_assert_eq!(mean_scores(&members).unwrap(), mean_scores(&rev).unwrap());
        }
    }

    fn tiny_grid() -> GridSpec {
        GridSpec {
            lrs: vec![5e-2],
            regs: vec![0.01],
            epoch_choices: vec![40],
            batch_size: 32,
            ..Default::default()
        }
    }

    #[test]
    fn two_networks_give_three_members() {
        let b = generate_synthetic(&complementary_spec(30), 4).unwrap();
        let ids = vec!["B".to_string(), "A".to_string()];
        let r = stack_ensemble(&b, &ids, &tiny_grid(), &SweepOptions::default(), false).unwrap();
        let keys: Vec<String> = r.subsets.iter().map(|s| s.stack_spec.key()).collect();
        assert_eq!(keys, ["A", "B", "A+B"]);
        assert_eq!(
            r.scores.scores.rows(),
            b.indices(crate::feature_store::Split::Val).len()
        );
        assert!(r.subsets.iter().any(|s| s.degradation == 0.0));
    }

    #[test]
    fn single_network_ensemble_is_its_winner() {
        let b = generate_synthetic(&complementary_spec(30), 4).unwrap();
        let ids = vec!["A".to_string()];
        let r = stack_ensemble(&b, &ids, &tiny_grid(), &SweepOptions::default(), false).unwrap();
        assert_eq!(r.subsets.len(), 1);
        assert_eq!(r.ensemble_accuracy, r.subsets[0].val_accuracy);
    }
}
