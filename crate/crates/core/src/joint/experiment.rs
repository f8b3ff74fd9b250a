//! Specialization versus joint training, measured by transfer accuracy.
//!
//! A broad task D covering every concept produces the base trunk. Copies of
//! it are fine-tuned on task A alone, on task B alone, and jointly on A and
//! B. Each trunk is then frozen and probed with a linear SVM head on the
//! related tasks and on a held-out task C.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{finetune_single, joint_train, joint_train_from, transfer_eval, JointConfig, TaskData, Trunk, TrunkConfig};
use crate::error::{Error, Result};
use crate::feature_store::{generate_concept_task, ConceptSpace, DatasetBundle};
use crate::report::Report;
use crate::sweep::{GridSpec, SweepOptions};
use crate::util::{self, derive_seed};

const INPUT: &str = "input";
const RELATED: &str = "related";
const HELD_OUT: &str = "held-out";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecipe {
    pub concepts: Vec<usize>,
    pub samples_per_class: usize,
}

/// Experiment description. `tasks` must name `A`, `B`, `C` and `D`; missing
/// fields take the reference values of [`JointRecipe::default`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JointRecipe {
    pub space: ConceptSpace,
    pub tasks: BTreeMap<String, TaskRecipe>,
    pub trunk_hidden: Vec<usize>,
    /// Training of the base trunk on task D.
    pub base: JointConfig,
    /// Fine-tuning of A, B and AB from the base trunk.
    pub finetune: JointConfig,
    pub transfer_grid: GridSpec,
    pub seeds: Vec<u64>,
}

impl Default for JointRecipe {
    fn default() -> Self {
        let task = |concepts: &[usize], samples_per_class| TaskRecipe {
            concepts: concepts.to_vec(),
            samples_per_class,
        };
        JointRecipe {
            space: ConceptSpace {
                num_concepts: 5,
                input_dim: 16,
                signal: 1.0,
                noise_sigma: 0.5,
                seed: 0,
            },
            tasks: [
                ("A".to_string(), task(&[0, 1], 100)),
                ("B".to_string(), task(&[2, 3], 100)),
                ("C".to_string(), task(&[1, 2, 4], 50)),
                ("D".to_string(), task(&[0, 1, 2, 3, 4], 25)),
            ]
            .into_iter()
            .collect(),
            trunk_hidden: vec![32],
            base: JointConfig {
                lr0: 0.05,
                reg: 1e-4,
                epochs: 20,
                decay: 0.95,
                batch_size: 16,
                seed: 0,
            },
            finetune: JointConfig {
                lr0: 0.05,
                reg: 5e-2,
                epochs: 30,
                decay: 0.98,
                batch_size: 4,
                seed: 0,
            },
            transfer_grid: GridSpec {
                lrs: vec![5e-2],
                regs: vec![1e-3, 1e-2],
                epoch_choices: vec![150],
                batch_size: 64,
                ..GridSpec::default()
            },
            seeds: vec![0, 1, 2, 3, 4],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferRow {
    /// `related` for A and B probes, `held-out` for C.
    pub group: String,
    pub task: String,
    pub trunk: String,
    /// `None` for medians across seeds.
    pub seed: Option<u64>,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub rows: Vec<TransferRow>,
    pub medians: Vec<TransferRow>,
}

/// (group, task, trunk) probes, in output order.
const PROBES: [(&str, &str, &str); 8] = [
    (RELATED, "A", "A"),
    (RELATED, "B", "B"),
    (RELATED, "B", "A"),
    (RELATED, "A", "AB"),
    (RELATED, "B", "AB"),
    (HELD_OUT, "C", "D"),
    (HELD_OUT, "C", "A"),
    (HELD_OUT, "C", "AB"),
];

impl TransferReport {
    /// Median accuracy of `task` on `trunk` across seeds.
    pub fn median(&self, task: &str, trunk: &str) -> Option<f64> {
        self.medians
            .iter()
            .find(|r| r.task == task && r.trunk == trunk)
            .map(|r| r.accuracy)
    }
}

impl Report for TransferReport {
    fn to_csv(&self) -> String {
        let mut out = String::from("group,task,trunk,seed,accuracy\n");
        for r in self.rows.iter().chain(&self.medians) {
            let seed = r.seed.map_or_else(|| "median".to_string(), |s| s.to_string());
            let _ = writeln!(out, "{},{},{},{},{}", r.group, r.task, r.trunk, seed, r.accuracy);
        }
        out
    }
}

fn task_bundle(recipe: &JointRecipe, space: &ConceptSpace, id: &str, seed: u64, k: u64) -> Result<DatasetBundle> {
    let t = recipe
        .tasks
        .get(id)
        .ok_or_else(|| Error::invalid(format!("recipe is missing task {id}")))?;
    generate_concept_task(space, id, &t.concepts, t.samples_per_class, derive_seed(seed, 10 + k))
}

fn run_seed(recipe: &JointRecipe, seed: u64, parallelism: usize) -> Result<Vec<TransferRow>> {
    let space = ConceptSpace {
        seed: derive_seed(recipe.space.seed, seed),
        ..recipe.space.clone()
    };
    let bundles: BTreeMap<&str, DatasetBundle> = ["A", "B", "C", "D"]
        .into_iter()
        .zip(0u64..)
        .map(|(id, k)| Ok((id, task_bundle(recipe, &space, id, seed, k)?)))
        .collect::<Result<_>>()?;
    let train = |id: &str| TaskData::train_split(&bundles[id], INPUT);
    let (a, b, d) = (train("A")?, train("B")?, train("D")?);

    let trunk_config = TrunkConfig {
        input_dim: space.input_dim,
        hidden: recipe.trunk_hidden.clone(),
        seed: derive_seed(seed, 20),
    };
    let tuned = |cfg: &JointConfig, k: u64| JointConfig {
        seed: derive_seed(seed, 30 + k),
        ..cfg.clone()
    };
    let base = joint_train(std::slice::from_ref(&d), &trunk_config, &tuned(&recipe.base, 0))?.trunk;
    let mut trunks: BTreeMap<&str, Trunk> = BTreeMap::new();
    trunks.insert("A", finetune_single(&base, &a, &tuned(&recipe.finetune, 1))?.trunk);
    trunks.insert("B", finetune_single(&base, &b, &tuned(&recipe.finetune, 2))?.trunk);
    trunks.insert(
        "AB",
        joint_train_from(base.clone(), &[a, b], &tuned(&recipe.finetune, 3))?.trunk,
    );
    trunks.insert("D", base);

    let grid = GridSpec {
        seed: derive_seed(seed, 40),
        ..recipe.transfer_grid.clone()
    };
    let opts = SweepOptions {
        parallelism,
        normalize: true,
    };
    PROBES
        .iter()
        .map(|&(group, task, trunk)| {
            Ok(TransferRow {
                group: group.to_string(),
                task: task.to_string(),
                trunk: trunk.to_string(),
                seed: Some(seed),
                accuracy: transfer_eval(&trunks[trunk], &bundles[task], INPUT, &grid, &opts)?,
            })
        })
        .collect()
}

/// Runs every seed of the recipe and collects per-seed and median accuracies.
pub fn run_experiment(recipe: &JointRecipe, parallelism: usize) -> Result<TransferReport> {
    if recipe.seeds.is_empty() {
        return Err(Error::invalid("recipe has no seeds"));
    }
    let mut rows = Vec::new();
    for &seed in &recipe.seeds {
        rows.extend(run_seed(recipe, seed, parallelism)?);
    }
    let medians = PROBES
        .iter()
        .map(|&(group, task, trunk)| {
            let accs: Vec<f64> = rows
                .iter()
                .filter(|r| r.task == task && r.trunk == trunk)
                .map(|r| r.accuracy)
                .collect();
            TransferRow {
                group: group.to_string(),
                task: task.to_string(),
                trunk: trunk.to_string(),
                seed: None,
                accuracy: util::median(&accs),
            }
        })
        .collect();
    Ok(TransferReport { rows, medians })
}
