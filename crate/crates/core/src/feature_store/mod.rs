//! Per-network feature matrices, dataset bundles, and their on-disk forms.
//!
//! A [`DatasetBundle`] links one label vector and one split vector to any
//! number of [`FeatureMatrix`] values, one per feature-producing network.
//! Every matrix in a bundle has one row per sample, in the same order.

mod format;
mod manifest;
mod split;
mod synth;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub use format::{read_feature_csv, read_feature_file, write_feature_file, FEATURE_MAGIC};
pub use manifest::{load_bundle, save_bundle, Manifest};
pub use split::stratified_split;
pub use synth::{
    bayes_accuracy, bayes_predict, complementary_spec, concept_embedding, generate_concept_task, generate_synthetic,
    ConceptSpace, SynthSpec,
};

/// Dense `n × d` features produced by one network for one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    network_id: String,
    dataset_id: String,
    n: usize,
    d: usize,
    data: Vec<f32>,
}

impl FeatureMatrix {
    pub fn new(
        network_id: impl Into<String>,
        dataset_id: impl Into<String>,
        n: usize,
        d: usize,
        data: Vec<f32>,
    ) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::invalid(format!("feature matrix must be non-empty, got {n}x{d}")));
        }
        if data.len() != n * d {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {n}x{d} feature matrix",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite feature at row {}, column {}",
                i / d,
                i % d
            )));
        }
        Ok(FeatureMatrix {
            network_id: network_id.into(),
            dataset_id: dataset_id.into(),
            n,
            d,
            data,
        })
    }

    /// Narrows a 64-bit matrix to stored precision.
    pub fn from_matrix(network_id: impl Into<String>, dataset_id: impl Into<String>, m: &Matrix) -> Result<Self> {
        let data = m.as_slice().iter().map(|&x| x as f32).collect();
        Self::new(network_id, dataset_id, m.rows(), m.cols(), data)
    }

    pub fn network_id(&self) -> &str {
        &self.network_id
    }

    pub fn dataset_id(&self) -> &str {
        &self.dataset_id
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn with_network_id(mut self, id: impl Into<String>) -> Self {
        self.network_id = id.into();
        self
    }

    pub fn to_matrix(&self) -> Matrix {
        let data = self.data.iter().map(|&x| f64::from(x)).collect();
        Matrix::from_vec(self.n, self.d, data).expect("shape checked at construction")
    }

    /// Widened copy of the listed rows.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.d);
        for &i in idx {
            data.extend(self.row(i).iter().map(|&x| f64::from(x)));
        }
        Matrix::from_vec(idx.len(), self.d, data).expect("row selection keeps width")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::invalid(format!("unknown split tag {other:?}"))),
        }
    }
}

/// Labels, split tags and per-network features for one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub dataset_id: String,
    pub class_names: Vec<String>,
    pub labels: Vec<usize>,
    pub split: Vec<Split>,
    pub features: BTreeMap<String, FeatureMatrix>,
}

impl DatasetBundle {
    /// Builds and validates a bundle.
    pub fn new(
        dataset_id: impl Into<String>,
        class_names: Vec<String>,
        labels: Vec<usize>,
        split: Vec<Split>,
        features: impl IntoIterator<Item = FeatureMatrix>,
    ) -> Result<Self> {
        let features = features.into_iter().map(|m| (m.network_id().to_string(), m)).collect();
        let b = DatasetBundle {
            dataset_id: dataset_id.into(),
            class_names,
            labels,
            split,
            features,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.class_names.len();
        if c == 0 {
            return Err(Error::invalid("bundle has no classes"));
        }
        let n = self.labels.len();
        if self.split.len() != n {
            return Err(Error::InconsistentSampleCount {
                network: "<splits>".into(),
                expected: n,
                found: self.split.len(),
            });
        }
        for (id, m) in &self.features {
            if m.n() != n {
                return Err(Error::InconsistentSampleCount {
                    network: id.clone(),
                    expected: n,
                    found: m.n(),
                });
            }
        }
        if let Some(&label) = self.labels.iter().find(|&&l| l >= c) {
            return Err(Error::LabelOutOfRange { label, classes: c });
        }
        for s in [Split::Train, Split::Val] {
            if !self.split.contains(&s) {
                return Err(Error::invalid(format!("split {s} is empty")));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn network_ids(&self) -> Vec<String> {
        self.features.keys().cloned().collect()
    }

    pub fn network(&self, id: &str) -> Result<&FeatureMatrix> {
        self.features
            .get(id)
            .ok_or_else(|| Error::UnknownNetwork(id.to_string()))
    }

    /// Sample indices tagged `s`, ascending.
    pub fn indices(&self, s: Split) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.split[i] == s).collect()
    }

    pub fn labels_of(&self, idx: &[usize]) -> Vec<usize> {
        idx.iter().map(|&i| self.labels[i]).collect()
    }

    /// Same labels and splits with a different feature set.
    pub fn with_features(&self, features: impl IntoIterator<Item = FeatureMatrix>) -> Result<Self> {
        DatasetBundle::new(
            self.dataset_id.clone(),
            self.class_names.clone(),
            self.labels.clone(),
            self.split.clone(),
            features,
        )
    }
}

pub(crate) fn default_class_names(c: usize) -> Vec<String> {
    (0..c).map(|i| format!("class{i}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fm(id: &str, n: usize) -> FeatureMatrix {
        FeatureMatrix::new(id, "ds", n, 2, vec![1.0; n * 2]).unwrap()
    }

    #[test]
    fn rejects_non_finite_values() {
        let err = FeatureMatrix::new("a", "ds", 1, 2, vec![1.0, f32::NAN]).unwrap_err();
        assert!(err.to_string().contains("non-finite"));
    }

    #[test]
    fn bundle_checks_sample_counts() {
        let labels = vec![0, 1, 0];
        let split = vec![Split::Train, Split::Val, Split::Test];
        let err =
            DatasetBundle::new("ds", default_class_names(2), labels, split, [fm("a", 3), fm("b", 2)]).unwrap_err();
        assert!(err.to_string().contains("inconsistent sample count"));
    }

    #[test]
    fn bundle_requires_train_and_val() {
        let err = DatasetBundle::new(
            "ds",
            default_class_names(2),
            vec![0, 1],
            vec![Split::Train, Split::Test],
            [fm("a", 2)],
        )
        .unwrap_err();
        assert!(err.to_string().contains("val"));
    }

    #[test]
    fn split_tags_parse() {
        for s in Split::ALL {
            assert_eq!(s.as_str().parse::<Split>().unwrap(), s);
        }
        assert!("dev".parse::<Split>().is_err());
    }
}
