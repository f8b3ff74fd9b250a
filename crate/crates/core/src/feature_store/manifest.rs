//! Manifest JSON plus the label and split CSV files it references.
//!
//! ```json
//! {
//!   "dataset_id": "scenes",
//!   "class_names": ["a", "b"],
//!   "labels": "labels.csv",
//!   "splits": "splits.csv",
//!   "features": { "vgg16": "vgg16.snnf", "nin": "nin.csv" }
//! }
//! ```
//!
//! Relative paths resolve against the manifest's directory. Feature paths
//! ending in `.csv` are ingested as CSV, anything else as a binary feature file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{read_feature_csv, read_feature_file, write_feature_file, DatasetBundle, Split};
use crate::error::{Error, Result};
use crate::util;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub dataset_id: String,
    pub class_names: Vec<String>,
    pub labels: PathBuf,
    pub splits: PathBuf,
    pub features: BTreeMap<String, PathBuf>,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn read_column(path: &Path, header: &str) -> Result<Vec<String>> {
    let ctx = || path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|source| Error::Csv { context: ctx(), source })?;
    let headers = rdr.headers().map_err(|source| Error::Csv { context: ctx(), source })?;
    if headers.len() != 1 || headers.get(0).map(str::trim) != Some(header) {
        return Err(Error::invalid(format!(
            "{}: expected a single `{header}` column",
            path.display()
        )));
    }
    rdr.records()
        .map(|r| {
            r.map(|rec| rec.get(0).unwrap_or("").trim().to_string())
                .map_err(|source| Error::Csv { context: ctx(), source })
        })
        .collect()
}

fn write_column(path: &Path, header: &str, values: impl Iterator<Item = String>) -> Result<()> {
    let mut out = String::from(header);
    out.push('\n');
    for v in values {
        out.push_str(&v);
        out.push('\n');
    }
    util::write_atomic(path, out.as_bytes())
}

pub fn load_bundle(manifest_path: impl AsRef<Path>) -> Result<DatasetBundle> {
    let manifest_path = manifest_path.as_ref();
    let manifest: Manifest = util::read_json(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));

    let labels_path = resolve(base, &manifest.labels);
    let labels = read_column(&labels_path, "label")?
        .iter()
        .enumerate()
        .map(|(i, s)| {
            s.parse::<usize>()
                .map_err(|_| Error::invalid(format!("{}: bad label {s:?} in row {i}", labels_path.display())))
        })
        .collect::<Result<Vec<_>>>()?;
    let split = read_column(&resolve(base, &manifest.splits), "split")?
        .iter()
        .map(|s| s.parse::<Split>())
        .collect::<Result<Vec<_>>>()?;

    let mut features = Vec::with_capacity(manifest.features.len());
    for (id, rel) in &manifest.features {
        let p = resolve(base, rel);
        let m = if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
            read_feature_csv(&p, id, &manifest.dataset_id)?
        } else {
            read_feature_file(&p)?
        };
        if let Some(first) = features.first().map(|f: &super::FeatureMatrix| f.n()) {
            if m.n() != first {
                return Err(Error::InconsistentSampleCount {
                    network: id.clone(),
                    expected: first,
                    found: m.n(),
                });
            }
        }
        // The manifest key names the network, whatever the file header says.
        features.push(m.with_network_id(id.clone()));
    }
    DatasetBundle::new(manifest.dataset_id, manifest.class_names, labels, split, features)
}

/// Writes `manifest.json`, `labels.csv`, `splits.csv` and one `<network>.snnf`
/// per network into `dir`, returning the manifest path.
pub fn save_bundle(bundle: &DatasetBundle, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_column(
        &dir.join("labels.csv"),
        "label",
        bundle.labels.iter().map(|l| l.to_string()),
    )?;
    write_column(
        &dir.join("splits.csv"),
        "split",
        bundle.split.iter().map(|s| s.to_string()),
    )?;
    let mut features = BTreeMap::new();
    for (id, m) in &bundle.features {
        let file = PathBuf::from(format!("{id}.snnf"));
        write_feature_file(m, dir.join(&file))?;
        features.insert(id.clone(), file);
    }
    let manifest = Manifest {
        dataset_id: bundle.dataset_id.clone(),
        class_names: bundle.class_names.clone(),
        labels: "labels.csv".into(),
        splits: "splits.csv".into(),
        features,
    };
    let path = dir.join("manifest.json");
    util::write_json(&path, &manifest)?;
    Ok(path)
}
