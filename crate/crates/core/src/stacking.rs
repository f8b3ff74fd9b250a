//! Stacked feature vectors: per-network row normalization, weighted
//! concatenation in canonical network order, and subset enumeration.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature_store::{DatasetBundle, FeatureMatrix};

pub const MAX_SUBSET_NETWORKS: usize = 16;

/// An ordered set of networks, optionally with one weight per network.
///
/// Ids are kept sorted; weights are aligned with the sorted ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackSpec {
    #[serde(rename = "networks")]
    network_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<f64>>,
}

impl StackSpec {
    pub fn new<I, S>(ids: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut network_ids: Vec<String> = ids.into_iter().map(Into::into).collect();
        if network_ids.is_empty() {
            return Err(Error::NoNetworks);
        }
        network_ids.sort();
        if let Some(w) = network_ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::invalid(format!("duplicate network {}", w[0])));
        }
        Ok(StackSpec {
            network_ids,
            weights: None,
        })
    }

    /// Spec over the keys of `weights`, each network scaled by its value.
    pub fn weighted(weights: &BTreeMap<String, f64>) -> Result<Self> {
        let mut spec = StackSpec::new(weights.keys().cloned())?;
        let w: Vec<f64> = weights.values().copied().collect();
        if w.iter().any(|&x| !(x > 0.0 && x <= 1.0)) {
            return Err(Error::invalid(format!("stack weights must lie in (0, 1], got {w:?}")));
        }
        if w.iter().copied().fold(f64::MIN, f64::max) != 1.0 {
            return Err(Error::invalid("largest stack weight must be exactly 1"));
        }
        spec.weights = Some(w);
        Ok(spec)
    }

    pub fn network_ids(&self) -> &[String] {
        &self.network_ids
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn len(&self) -> usize {
        self.network_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.network_ids.is_empty()
    }

    /// Stable textual id, e.g. `A+B` or `A*0.5+B*1`.
    pub fn key(&self) -> String {
        match &self.weights {
            None => self.network_ids.join("+"),
            Some(w) => self
                .network_ids
                .iter()
                .zip(w)
                .map(|(id, w)| format!("{id}*{w}"))
                .collect::<Vec<_>>()
                .join("+"),
        }
    }
}

impl fmt::Display for StackSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.network_ids.join(", "))
    }
}

/// Scales each row to unit Euclidean norm; rows with norm below 1e-12 become zero.
pub fn l2_normalize_rows(m: &FeatureMatrix) -> FeatureMatrix {
    let mut out = m.clone();
    let d = m.d();
    for row in out.data_mut().chunks_exact_mut(d) {
        let norm = row.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
        if norm < 1e-12 {
            row.iter_mut().for_each(|x| *x = 0.0);
        } else {
            row.iter_mut().for_each(|x| *x = (f64::from(*x) / norm) as f32);
        }
    }
    out
}

/// Concatenates feature blocks column-wise in ascending network-id order.
///
/// `weights`, when given, pairs with `matrices` positionally and scales each
/// block before concatenation.
pub fn stack(matrices: &[&FeatureMatrix], weights: Option<&[f64]>) -> Result<FeatureMatrix> {
    let first = matrices.first().ok_or(Error::NoNetworks)?;
    if let Some(w) = weights {
        if w.len() != matrices.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} weights for {} networks",
                w.len(),
                matrices.len()
            )));
        }
    }
    let n = first.n();
    if let Some(m) = matrices.iter().find(|m| m.n() != n) {
        return Err(Error::SampleCountMismatch(n, m.n()));
    }
    let mut blocks: Vec<(&FeatureMatrix, Option<f64>)> = matrices
        .iter()
        .enumerate()
        .map(|(i, m)| (*m, weights.map(|w| w[i])))
        .collect();
    blocks.sort_by(|a, b| a.0.network_id().cmp(b.0.network_id()));
    if let Some(w) = blocks.windows(2).find(|w| w[0].0.network_id() == w[1].0.network_id()) {
        return Err(Error::invalid(format!("duplicate network {}", w[0].0.network_id())));
    }

    let d: usize = blocks.iter().map(|(m, _)| m.d()).sum();
    let mut data = Vec::with_capacity(n * d);
    for i in 0..n {
        for (m, w) in &blocks {
            match w {
                Some(w) => data.extend(m.row(i).iter().map(|&x| (f64::from(x) * w) as f32)),
                None => data.extend_from_slice(m.row(i)),
            }
        }
    }
    let id = blocks.iter().map(|(m, _)| m.network_id()).collect::<Vec<_>>().join("+");
    FeatureMatrix::new(id, first.dataset_id(), n, d, data)
}

/// Builds the stacked feature matrix for `spec` from a bundle: each network
/// is optionally row-normalized, then weighted, then concatenated.
pub fn stack_bundle(bundle: &DatasetBundle, spec: &StackSpec, normalize: bool) -> Result<FeatureMatrix> {
    let parts = spec
        .network_ids()
        .iter()
        .map(|id| {
            let m = bundle.network(id)?;
            Ok(if normalize { l2_normalize_rows(m) } else { m.clone() })
        })
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&FeatureMatrix> = parts.iter().collect();
    stack(&refs, spec.weights())
}

/// Every nonempty subset, ordered by size and then lexicographically.
pub fn enumerate_subsets<S: AsRef<str>>(network_ids: &[S]) -> Result<Vec<StackSpec>> {
    let mut ids: Vec<String> = network_ids.iter().map(|s| s.as_ref().to_string()).collect();
    ids.sort();
    ids.dedup();
    if ids.is_empty() {
        return Err(Error::NoNetworks);
    }
    if ids.len() > MAX_SUBSET_NETWORKS {
        return Err(Error::invalid(format!(
            "at most {MAX_SUBSET_NETWORKS} networks can be enumerated, got {}",
            ids.len()
        )));
    }
    let mut subsets: Vec<Vec<String>> = (1u32..(1 << ids.len()))
        .map(|mask| {
            ids.iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, id)| id.clone())
                .collect()
        })
        .collect();
    subsets.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    subsets.into_iter().map(StackSpec::new).collect()
}

/// Per-network weight = accuracy / best accuracy.
pub fn accuracy_weights(accuracies: &BTreeMap<String, f64>) -> Result<BTreeMap<String, f64>> {
    if accuracies.is_empty() {
        return Err(Error::NoNetworks);
    }
    if let Some((network, &accuracy)) = accuracies.iter().find(|(_, &a)| !(a > 0.0 && a.is_finite())) {
        return Err(Error::DegenerateAccuracy {
            network: network.clone(),
            accuracy,
        });
    }
    let best = accuracies.values().copied().fold(f64::MIN, f64::max);
    Ok(accuracies.iter().map(|(id, &a)| (id.clone(), a / best)).collect())
}
