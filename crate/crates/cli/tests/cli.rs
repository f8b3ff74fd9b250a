use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn snn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_snn")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = snn(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(args: &[&str]) -> Value {
    serde_json::from_str(&ok(args)).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Small bundle plus a one-config grid.
fn setup(dir: &Path) -> (String, String) {
    ok(&[
        "synth",
        "--dir",
        p(&dir.join("b")),
        "--samples-per-class",
        "30",
        "--seed",
        "1",
    ]);
    let grid = dir.join("grid.json");
    std::fs::write(&grid, r#"{"lrs":[0.01],"regs":[0.01],"epoch_choices":[60]}"#).unwrap();
    (p(&dir.join("b/manifest.json")).to_string(), p(&grid).to_string())
}

#[test]
fn synth_writes_a_loadable_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, _) = setup(dir.path());
    let again = json(&["ingest", "--manifest", &manifest, "--dir", p(&dir.path().join("c"))]);
    assert_eq!(again["samples"], 120);
    assert_eq!(again["networks"]["A"], 4);
    assert!(dir.path().join("c/A.snnf").exists());
}

#[test]
fn sweep_is_deterministic_across_parallelism() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, _) = setup(dir.path());
    let grid = dir.path().join("g4.json");
    std::fs::write(&grid, r#"{"lrs":[0.01,0.05],"regs":[0.01,0.1],"epoch_choices":[30]}"#).unwrap();
    let args = |par: &'static str| {
        ok(&[
            "sweep",
            "--manifest",
            &manifest,
            "--networks",
            "A,B",
            "--grid",
            p(&grid),
            "--parallelism",
            par,
        ])
    };
    let one = args("1");
    assert_eq!(one, args("4"));
    let v: Value = serde_json::from_str(&one).unwrap();
    assert_eq!(v["entries"].as_array().unwrap().len(), 4);
    assert_eq!(v["stack_spec"]["networks"], serde_json::json!(["A", "B"]));
}

#[test]
fn train_then_confusion() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, _) = setup(dir.path());
    let model = dir.path().join("m.snn");
    let s = json(&[
        "train",
        "--manifest",
        &manifest,
        "--networks",
        "B,A",
        "--epochs",
        "50",
        "--model",
        p(&model),
    ]);
    assert_eq!(s["stack_spec"], "A+B");
    assert!(model.exists() && dir.path().join("m.snn.json").exists());
    let csv = ok(&[
        "confusion",
        "--model",
        p(&model),
        "--manifest",
        &manifest,
        "--format",
        "csv",
    ]);
    assert_eq!(csv.lines().count(), 5);
    let c = json(&[
        "confusion",
        "--model",
        p(&model),
        "--manifest",
        &manifest,
        "--split",
        "test",
    ]);
    let total: u64 = c["counts"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|r| r.as_array().unwrap())
        .map(|v| v.as_u64().unwrap())
        .sum();
    assert_eq!(total, 24);
}

#[test]
fn weighted_stack_flags() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, grid) = setup(dir.path());
    let v = json(&[
        "sweep",
        "--manifest",
        &manifest,
        "--weights",
        "A=0.5,B=1",
        "--grid",
        &grid,
    ]);
    assert_eq!(v["stack_spec"]["weights"], serde_json::json!([0.5, 1.0]));
    let w = json(&["weights", "--accuracies", "A=0.3,B=0.6"]);
    assert_eq!(w, serde_json::json!({"A": 0.5, "B": 1.0}));
    let measured = json(&["weights", "--manifest", &manifest, "--grid", &grid]);
    assert_eq!(measured.as_object().unwrap().len(), 2);
}

#[test]
fn subsets_lists_all_combinations() {
    let v = json(&["subsets", "--networks", "NIN,VGG16"]);
    assert_eq!(v.as_array().unwrap().len(), 3);
    let csv = ok(&["subsets", "--networks", "a,b,c,d,e", "--format", "csv"]);
    assert_eq!(csv.lines().count(), 32);
}

#[test]
fn ensemble_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, grid) = setup(dir.path());
    let e = json(&["ensemble", "--manifest", &manifest, "--grid", &grid]);
    assert_eq!(e["subsets"].as_array().unwrap().len(), 3);
    let a = dir.path().join("a.json");
    let ab = dir.path().join("ab.json");
    ok(&[
        "sweep",
        "--manifest",
        &manifest,
        "--networks",
        "A",
        "--grid",
        &grid,
        "--out",
        p(&a),
    ]);
    ok(&[
        "sweep",
        "--manifest",
        &manifest,
        "--networks",
        "A,B",
        "--grid",
        &grid,
        "--out",
        p(&ab),
    ]);
    let t = json(&["report", p(&a), p(&ab)]);
    let rows = t["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows.iter().filter(|r| r["degradation"] == 0.0).count(), 1);
}

#[test]
fn joint_train_and_transfer_eval() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, grid) = setup(dir.path());
    let trunk = dir.path().join("trunk.json");
    let s = json(&[
        "joint-train",
        "--manifest",
        &manifest,
        "--network",
        "A",
        "--hidden",
        "8",
        "--epochs",
        "3",
        "--trunk",
        p(&trunk),
    ]);
    assert_eq!(s["trunk_output_dim"], 8);
    assert_eq!(s["epochs"], 3);
    let r = json(&[
        "transfer-eval",
        "--trunk",
        p(&trunk),
        "--manifest",
        &manifest,
        "--network",
        "B",
        "--grid",
        &grid,
    ]);
    assert_eq!(r["stack_spec"]["networks"], serde_json::json!(["trunk"]));
    let again = json(&[
        "joint-train",
        "--manifest",
        &manifest,
        "--network",
        "B",
        "--init-trunk",
        p(&trunk),
        "--epochs",
        "0",
    ]);
    assert_eq!(again["epochs"], 0);
}

#[test]
fn joint_recipe_runs() {
    let dir = tempfile::tempdir().unwrap();
    let recipe = dir.path().join("recipe.json");
    ok(&["joint-train", "--print-recipe", "--out", p(&recipe)]);
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(&recipe).unwrap()).unwrap();
    v["seeds"] = serde_json::json!([3]);
    std::fs::write(&recipe, v.to_string()).unwrap();
    let csv = ok(&["joint-train", "--recipe", p(&recipe), "--format", "csv"]);
    assert!(csv.starts_with("group,task,trunk,seed,accuracy\n"));
    assert_eq!(csv.lines().count(), 17);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, grid) = setup(dir.path());
    let missing = p(&dir.path().join("missing.json")).to_string();
    assert_eq!(
        snn(&["sweep", "--manifest", &missing, "--networks", "A"]).status.code(),
        Some(2)
    );
    assert_eq!(
        snn(&["sweep", "--manifest", &manifest, "--networks", "Z", "--grid", &grid])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(snn(&["weights", "--accuracies", "A=0"]).status.code(), Some(1));
    assert_eq!(snn(&["weights", "--accuracies", "A"]).status.code(), Some(1));
    assert_eq!(snn(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(snn(&["--help"]).status.code(), Some(0));

    let bad = dir.path().join("bad.snnf");
    std::fs::write(&bad, b"NOTAFEATUREFILE").unwrap();
    let m = dir.path().join("bad_manifest.json");
    std::fs::write(
        &m,
        format!(
            r#"{{"dataset_id":"x","class_names":["a","b"],"labels":"{}","splits":"{}","features":{{"A":"{}"}}}}"#,
            p(&dir.path().join("b/labels.csv")),
            p(&dir.path().join("b/splits.csv")),
            p(&bad)
        ),
    )
    .unwrap();
    let out = snn(&["subsets", "--manifest", p(&m)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not a feature file"));
}

#[test]
fn writes_report_files_atomically() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("w.csv");
    ok(&[
        "weights",
        "--accuracies",
        "A=0.3,B=0.6",
        "--format",
        "csv",
        "--out",
        p(&out),
    ]);
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.lines().count() == 3, "{text}");
    let leftovers = std::fs::read_dir(dir.path()).unwrap().count();
    assert_eq!(leftovers, 1);
}
