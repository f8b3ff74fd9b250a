//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs without the libtest harness so the lines always print.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::Rng as _;

use snn_core::classifier::{
    grad_check, load_model, save_model, softmax_loss_grad, svm_loss_grad, train_linear, StackedData, TrainConfig,
};
use snn_core::ensemble::{mean_scores, stack_ensemble, ScoreMatrix};
use snn_core::feature_store::{
    bayes_accuracy, complementary_spec, generate_synthetic, read_feature_file, write_feature_file, FeatureMatrix, Split,
};
use snn_core::joint::{
    joint_loss_grad, joint_train, run_experiment, Dense, JointConfig, JointRecipe, TaskData, Trunk, TrunkConfig,
};
use snn_core::report::Report;
use snn_core::stacking::{accuracy_weights, enumerate_subsets, StackSpec};
use snn_core::sweep::{grid_configs, run_sweep, GridSpec, SweepOptions};
use snn_core::util::{self, median};
use snn_core::{Error, Matrix};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit_secs: u64, detail: String, cond: bool) -> Outcome {
    let detail = format!("{detail}; {:.1}s (limit {limit_secs}s)", elapsed.as_secs_f64());
    check(cond && elapsed.as_secs() < limit_secs, detail)
}

fn random_matrix(rng: &mut util::Rng, n: usize, d: usize, scale: f64) -> Matrix {
    Matrix::from_fn(n, d, |_, _| rng.random_range(-scale..scale))
}

fn random_dense(rng: &mut util::Rng, outputs: usize, inputs: usize) -> Dense {
    Dense {
        weights: random_matrix(rng, outputs, inputs, 1.0),
        bias: (0..outputs).map(|_| rng.random_range(-0.1..0.1)).collect(),
    }
}

/// Finite-difference step whose stencil stays clear of every ReLU kink the
/// inputs reach, capped at 1e-3.
fn smooth_step(trunk: &Trunk, inputs: &[&Matrix]) -> f64 {
    let closest = inputs
        .iter()
        .flat_map(|x| trunk.layers[0].forward(x).into_vec())
        .fold(f64::MAX, |m, v| m.min(v.abs()));
    (0.25 * closest).min(1e-3)
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let (mut svm, mut soft, mut trunk_err, mut joint_err) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for seed in 0..20 {
        let mut rng = util::rng(seed);
        let s = random_matrix(&mut rng, 8, 5, 3.0);
        let y: Vec<usize> = (0..8).map(|_| rng.random_range(0..5)).collect();
        svm = svm.max(grad_check(
            |t| {
                let (l, g) = svm_loss_grad(&Matrix::from_vec(8, 5, t.to_vec()).unwrap(), &y, 1.0);
                (l, g.into_vec())
            },
            s.as_slice(),
            1e-6,
        ));
        soft = soft.max(grad_check(
            |t| {
                let (l, g) = softmax_loss_grad(&Matrix::from_vec(8, 5, t.to_vec()).unwrap(), &y);
                (l, g.into_vec())
            },
            s.as_slice(),
            1e-5,
        ));

        let trunk = Trunk::init(&TrunkConfig {
            input_dim: 5,
            hidden: vec![6],
            seed,
        })
        .unwrap();
        let x = random_matrix(&mut rng, 8, 5, 1.0);
        let probe = random_matrix(&mut rng, 8, 6, 1.0);
        trunk_err = trunk_err.max(grad_check(
            |theta| {
                let mut t = trunk.clone();
                t.set_params(theta);
                let cache = t.forward_cached(&x).unwrap();
                let f: f64 = cache
                    .activations
                    .last()
                    .unwrap()
                    .as_slice()
                    .iter()
                    .zip(probe.as_slice())
                    .map(|(a, b)| a * b)
                    .sum();
                let mut flat = Vec::new();
                t.backward(&cache, &probe).iter().for_each(|d| d.push_params(&mut flat));
                (f, flat)
            },
            &trunk.params(),
            smooth_step(&trunk, &[&x]),
        ));

        let heads = [random_dense(&mut rng, 3, 6), random_dense(&mut rng, 4, 6)];
        let ya: Vec<usize> = (0..8).map(|_| rng.random_range(0..3)).collect();
        let yb: Vec<usize> = (0..8).map(|_| rng.random_range(0..4)).collect();
        let batch = [(x.clone(), ya), (random_matrix(&mut rng, 8, 5, 1.0), yb)];
        let step = smooth_step(&trunk, &[&batch[0].0, &batch[1].0]);
        let mut theta = trunk.params();
        heads.iter().for_each(|h| h.push_params(&mut theta));
        joint_err = joint_err.max(grad_check(
            |p| {
                let mut t = trunk.clone();
                let mut hs = heads.clone();
                let mut rest = p;
                for l in &mut t.layers {
                    rest = l.pull_params(rest);
                }
                for h in &mut hs {
                    rest = h.pull_params(rest);
                }
                let g = joint_loss_grad(&t, &[&hs[0], &hs[1]], &batch, 0.1).unwrap();
                let mut flat = Vec::new();
                g.trunk.iter().chain(&g.heads).for_each(|d| d.push_params(&mut flat));
                (g.total, flat)
            },
            &theta,
            step,
        ));
    }
    let worst = svm.max(soft).max(trunk_err).max(joint_err);
    within(
        start.elapsed(),
        10,
        format!(
            "max rel err svm {svm:.1e}, softmax {soft:.1e}, trunk {trunk_err:.1e}, joint {joint_err:.1e} (need < 1e-6)"
        ),
        worst < 1e-6,
    )
}

fn stacking_beats_singles() -> Outcome {
    let start = Instant::now();
    let spec = complementary_spec(400);
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let (mut a, mut b, mut ab, mut oracle_single, mut oracle_ab) = (vec![], vec![], vec![], vec![], vec![]);
    for seed in 0..5 {
        let bundle = generate_synthetic(&spec, seed).unwrap();
        let grid = GridSpec {
            seed,
            ..GridSpec::default()
        };
        let opts = SweepOptions {
            parallelism: workers,
            normalize: true,
        };
        let acc = |ids: &[&str]| {
            run_sweep(&bundle, &StackSpec::new(ids.iter().copied()).unwrap(), &grid, &opts)
                .unwrap()
                .best_val_accuracy()
        };
        a.push(acc(&["A"]));
        b.push(acc(&["B"]));
        ab.push(acc(&["A", "B"]));
        for net in ["A", "B"] {
            oracle_single.push(bayes_accuracy(&spec, &bundle, &[net], Split::Val).unwrap());
        }
        oracle_ab.push(bayes_accuracy(&spec, &bundle, &["A", "B"], Split::Val).unwrap());
    }
    let (ma, mb, mab) = (median(&a), median(&b), median(&ab));
    within(
        start.elapsed(),
        60,
        format!(
            "median winners A {ma:.3}, B {mb:.3} (need <= 0.60), A+B {mab:.3} (need >= 0.90); Bayes oracle single {:.3}, stacked {:.3}",
            median(&oracle_single),
            median(&oracle_ab)
        ),
        ma <= 0.60 && mb <= 0.60 && mab >= 0.90,
    )
}

fn table1_grid() -> Outcome {
    let configs = grid_configs(&GridSpec::default(), 2);
    let triple = |lr: f64, reg: f64, ep: usize| {
        configs
            .iter()
            .filter(|c| c.lr0 == lr && c.reg == reg && c.epochs == ep)
            .count()
            == 1
    };
    let mut all = true;
    for lr in [1e-2, 5e-2, 1e-3, 2e-3] {
        for reg in [0.01, 0.1, 1.0, 10.0] {
            for ep in [300, 400] {
                all &= triple(lr, reg, ep);
            }
        }
    }
    let decay = configs.iter().all(|c| c.decay == 0.98);
    check(
        configs.len() == 32 && all && decay,
        format!(
            "{} configs, every lr x reg x epochs triple once: {all}, decay 0.98: {decay}",
            configs.len()
        ),
    )
}

fn subsets() -> Outcome {
    let two = enumerate_subsets(&["NIN", "VGG16"]).unwrap();
    let keys: Vec<String> = two.iter().map(StackSpec::key).collect();
    let five = enumerate_subsets(&["a", "b", "c", "d", "e"]).unwrap();
    check(
        keys == ["NIN", "VGG16", "NIN+VGG16"] && five.len() == 31,
        format!("{{NIN, VGG16}} -> {keys:?}; five networks -> {}", five.len()),
    )
}

fn weights() -> Outcome {
    let accs: BTreeMap<String, f64> = [("NIN".to_string(), 0.3), ("VGG16".to_string(), 0.6)].into();
    let w = accuracy_weights(&accs).unwrap();
    check(
        w["NIN"] == 0.5 && w["VGG16"] == 1.0,
        format!("{{0.3, 0.6}} -> {{{}, {}}}", w["NIN"], w["VGG16"]),
    )
}

fn dropout_policy() -> Outcome {
    let grid = GridSpec::default();
    let two = grid_configs(&grid, 2).iter().all(|c| !c.dropout_enabled);
    let three = grid_configs(&grid, 3).iter().all(|c| c.dropout_enabled);
    check(
        two && three,
        format!("2-network stacks off: {two}, 3-network stacks on: {three}"),
    )
}

fn joint_orderings() -> Outcome {
    let start = Instant::now();
    let report = run_experiment(&JointRecipe::default(), 1).unwrap();
    let m = |task, trunk| report.median(task, trunk).unwrap();
    let (b_a, b_ab, b_b) = (m("B", "A"), m("B", "AB"), m("B", "B"));
    let (c_d, c_ab, c_a) = (m("C", "D"), m("C", "AB"), m("C", "A"));
    let first = b_a < b_ab && (b_ab - b_b).abs() <= 0.05;
    let second = c_d > c_ab && c_ab > c_a;
    within(
        start.elapsed(),
        300,
        format!(
            "B|A {b_a:.3} < B|AB {b_ab:.3} ~ B|B {b_b:.3}: {first}; C|D {c_d:.3} > C|AB {c_ab:.3} > C|A {c_a:.3}: {second}"
        ),
        first && second,
    )
}

fn determinism() -> Outcome {
    let spec = complementary_spec(60);
    let bundle = generate_synthetic(&spec, 9).unwrap();
    let grid = GridSpec {
        lrs: vec![1e-2, 5e-2],
        regs: vec![0.01, 0.1],
        epoch_choices: vec![40],
        seed: 5,
        ..GridSpec::default()
    };
    let ab = StackSpec::new(["A", "B"]).unwrap();
    let sweeps: Vec<String> = [1, 2, 8]
        .iter()
        .map(|&p| {
            run_sweep(
                &bundle,
                &ab,
                &grid,
                &SweepOptions {
                    parallelism: p,
                    normalize: true,
                },
            )
            .unwrap()
            .to_json()
            .unwrap()
        })
        .collect();
    let sweeps_equal = sweeps.iter().all(|s| s == &sweeps[0]);

    let ensembles: Vec<String> = [1, 3]
        .iter()
        .map(|&p| {
            let ids = ["A".to_string(), "B".to_string()];
            stack_ensemble(
                &bundle,
                &ids,
                &grid,
                &SweepOptions {
                    parallelism: p,
                    normalize: true,
                },
                false,
            )
            .unwrap()
            .to_json()
            .unwrap()
        })
        .collect();
    let ensembles_equal = ensembles[0] == ensembles[1];

    let data = StackedData::from_bundle(&bundle, &ab, true).unwrap();
    let cfg = TrainConfig {
        epochs: 30,
        dropout_enabled: true,
        seed: 4,
        ..TrainConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let mut blobs = Vec::new();
    for k in 0..2 {
        let path = dir.path().join(format!("m{k}.snn"));
        save_model(&train_linear(&data, &cfg).unwrap(), &path).unwrap();
        blobs.push(std::fs::read(&path).unwrap());
    }
    let models_equal = blobs[0] == blobs[1];

    let task = TaskData::train_split(&bundle, "A").unwrap();
    let jc = JointConfig {
        epochs: 3,
        batch_size: 8,
        seed: 2,
        ..JointConfig::default()
    };
    let tc = TrunkConfig {
        input_dim: 4,
        hidden: vec![8],
        seed: 3,
    };
    let joint_equal = joint_train(std::slice::from_ref(&task), &tc, &jc).unwrap()
        == joint_train(std::slice::from_ref(&task), &tc, &jc).unwrap();

    let recipe = JointRecipe {
        seeds: vec![1],
        ..JointRecipe::default()
    };
    let experiment_equal = run_experiment(&recipe, 1).unwrap() == run_experiment(&recipe, 4).unwrap();

    check(
        sweeps_equal && ensembles_equal && models_equal && joint_equal && experiment_equal,
        format!(
            "sweep x{{1,2,8}}: {sweeps_equal}, ensemble x{{1,3}}: {ensembles_equal}, model bytes: {models_equal}, joint: {joint_equal}, experiment x{{1,4}}: {experiment_equal}"
        ),
    )
}

fn file_formats() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = util::rng(17);
    let mut values: Vec<f32> = (0..7 * 13).map(|_| rng.random_range(-1e6f32..1e6)).collect();
    values[..4].copy_from_slice(&[0.0, -0.0, f32::MIN_POSITIVE / 3.0, f32::MAX]);
    let m = FeatureMatrix::new("net", "ds", 7, 13, values.clone()).unwrap();
    let fpath = dir.path().join("f.snnf");
    write_feature_file(&m, &fpath).unwrap();
    let back = read_feature_file(&fpath).unwrap();
    let feat_exact = back.data().iter().zip(&values).all(|(a, b)| a.to_bits() == b.to_bits())
        && back.network_id() == "net"
        && back.dataset_id() == "ds";

    let bundle = generate_synthetic(&complementary_spec(20), 3).unwrap();
    let data = StackedData::from_bundle(&bundle, &StackSpec::new(["A", "B"]).unwrap(), true).unwrap();
    let model = train_linear(
        &data,
        &TrainConfig {
            epochs: 10,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    let mpath = dir.path().join("m.snn");
    save_model(&model, &mpath).unwrap();
    let model_exact = load_model(&mpath).unwrap() == model;

    let fbytes = std::fs::read(&fpath).unwrap();
    let mbytes = std::fs::read(&mpath).unwrap();
    let probe = dir.path().join("probe");
    let write = |bytes: &[u8]| std::fs::write(&probe, bytes).unwrap();

    let mut bad = fbytes.clone();
    bad[0] ^= 0xff;
    write(&bad);
    let feat_magic = matches!(read_feature_file(&probe), Err(Error::NotAFeatureFile(_)));
    write(&fbytes[..fbytes.len() - 1]);
    let feat_trunc = matches!(read_feature_file(&probe), Err(Error::Corrupt { .. }));

    let mut bad = mbytes.clone();
    bad[0] ^= 0xff;
    write(&bad);
    std::fs::copy(
        snn_core::classifier::sidecar_path(&mpath),
        snn_core::classifier::sidecar_path(&probe),
    )
    .unwrap();
    let model_magic = matches!(load_model(&probe), Err(Error::NotAModelFile(_)));
    write(&mbytes[..mbytes.len() - 3]);
    let model_trunc = matches!(load_model(&probe), Err(Error::Corrupt { .. }));

    check(
        feat_exact && model_exact && feat_magic && feat_trunc && model_magic && model_trunc,
        format!(
            "feature round trip: {feat_exact}, model round trip: {model_exact}, bad magic rejected: {feat_magic}/{model_magic}, truncation rejected: {feat_trunc}/{model_trunc}"
        ),
    )
}

fn ensemble_properties() -> Outcome {
    let mut identical = true;
    let mut invariant = true;
    for seed in 0..20 {
        let mut rng = util::rng(seed);
        let base = random_matrix(&mut rng, 9, 4, 5.0);
        let k = 1 + seed as usize % 6;
        let copies: Vec<ScoreMatrix> = (0..k)
            .map(|i| ScoreMatrix::new(base.clone(), format!("m{i}")).unwrap())
            .collect();
        identical &= mean_scores(&copies).unwrap().scores == base;

        let members: Vec<ScoreMatrix> = (0..k)
            .map(|i| ScoreMatrix::new(random_matrix(&mut rng, 9, 4, 5.0), format!("m{i}")).unwrap())
            .collect();
        let reference = mean_scores(&members).unwrap().scores.argmax_rows();
        for c in [1e-3, 0.37, 12.5, 1e4] {
            let scaled: Vec<ScoreMatrix> = members
                .iter()
                .map(|m| {
                    let mut s = m.scores.clone();
                    s.scale(c);
                    ScoreMatrix::new(s, m.source.clone()).unwrap()
                })
                .collect();
            invariant &= mean_scores(&scaled).unwrap().scores.argmax_rows() == reference;
        }
    }
    check(
        identical && invariant,
        format!("mean of k identical == input: {identical}; argmax invariant under positive scaling: {invariant}"),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("gradient correctness", gradients),
        ("stacking beats singles", stacking_beats_singles),
        ("default hyperparameter grid", table1_grid),
        ("subset combinatorics", subsets),
        ("weighted stacking worked example", weights),
        ("dropout policy", dropout_policy),
        ("joint-training orderings", joint_orderings),
        ("determinism", determinism),
        ("file formats", file_formats),
        ("ensemble properties", ensemble_properties),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        match run() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
