//! Synthetic bundles with analytically predictable Bayes behavior.

use std::collections::BTreeMap;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{default_class_names, stratified_split, DatasetBundle, FeatureMatrix, Split};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::util::{self, derive_seed};

const SPLIT_FRACTIONS: [f64; 3] = [0.6, 0.2, 0.2];

/// Gaussian clusters whose means depend only on a class's group in each
/// network's partition of the classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    #[serde(default = "default_dataset_id")]
    pub dataset_id: String,
    pub num_classes: usize,
    /// network id → partition of `0..num_classes` into groups.
    pub partitions: BTreeMap<String, Vec<Vec<usize>>>,
    pub dims_per_network: usize,
    pub samples_per_class: usize,
    pub separation: f64,
    pub noise_sigma: f64,
}

fn default_dataset_id() -> String {
    "synthetic".into()
}

/// C=4 with networks `A: {{0,1},{2,3}}` and `B: {{0,2},{1,3}}`: each network
/// alone sees half of the label, together they see all of it.
pub fn complementary_spec(samples_per_class: usize) -> SynthSpec {
    SynthSpec {
        dataset_id: "complementary".into(),
        num_classes: 4,
        partitions: [
            ("A".to_string(), vec![vec![0, 1], vec![2, 3]]),
            ("B".to_string(), vec![vec![0, 2], vec![1, 3]]),
        ]
        .into_iter()
        .collect(),
        dims_per_network: 4,
        samples_per_class,
        separation: 4.0,
        noise_sigma: 1.0,
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 || self.samples_per_class == 0 || self.dims_per_network == 0 {
            return Err(Error::invalid("classes, samples and dims must be positive"));
        }
        if self.partitions.is_empty() {
            return Err(Error::NoNetworks);
        }
        if !(self.separation > 0.0 && self.separation.is_finite()) {
            return Err(Error::invalid("separation must be > 0"));
        }
        if !(self.noise_sigma > 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::invalid("noise sigma must be > 0"));
        }
        for (net, groups) in &self.partitions {
            let mut seen = vec![false; self.num_classes];
            for &c in groups.iter().flatten() {
                if c >= self.num_classes || seen[c] {
                    return Err(Error::invalid(format!(
                        "partition for {net} is not a partition of 0..{}",
                        self.num_classes
                    )));
                }
                seen[c] = true;
            }
            if seen.iter().any(|s| !s) {
                return Err(Error::invalid(format!(
                    "partition for {net} does not cover every class"
                )));
            }
            if groups.len().div_ceil(2) > self.dims_per_network {
                return Err(Error::invalid(format!(
                    "{} groups need at least {} dims",
                    groups.len(),
                    groups.len().div_ceil(2)
                )));
            }
        }
        Ok(())
    }
}

/// Group `g` sits at ±separation/2 on axis `g / 2`; even groups positive.
fn group_mean(g: usize, dims: usize, separation: f64) -> Vec<f64> {
    let mut m = vec![0.0; dims];
    m[g / 2] = if g.is_multiple_of(2) {
        separation / 2.0
    } else {
        -separation / 2.0
    };
    m
}

/// Samples are laid out class by class; splits are stratified 60/20/20.
pub fn generate_synthetic(spec: &SynthSpec, seed: u64) -> Result<DatasetBundle> {
    spec.validate()?;
    let c = spec.num_classes;
    let n = c * spec.samples_per_class;
    let labels: Vec<usize> = (0..c)
        .flat_map(|k| std::iter::repeat_n(k, spec.samples_per_class))
        .collect();
    let split = stratified_split(&labels, SPLIT_FRACTIONS, derive_seed(seed, 0))?;

    let mut features = Vec::with_capacity(spec.partitions.len());
    for (k, (net, groups)) in spec.partitions.iter().enumerate() {
        let mut group_of = vec![0; c];
        for (g, members) in groups.iter().enumerate() {
            for &m in members {
                group_of[m] = g;
            }
        }
        let means: Vec<Vec<f64>> = (0..groups.len())
            .map(|g| group_mean(g, spec.dims_per_network, spec.separation))
            .collect();
        let mut rng = util::rng(derive_seed(seed, k as u64 + 1));
        let mut data = Vec::with_capacity(n * spec.dims_per_network);
        for &label in &labels {
            for &mu in &means[group_of[label]] {
                let e: f64 = StandardNormal.sample(&mut rng);
                data.push((mu + spec.noise_sigma * e) as f32);
            }
        }
        features.push(FeatureMatrix::new(
            net.clone(),
            spec.dataset_id.clone(),
            n,
            spec.dims_per_network,
            data,
        )?);
    }
    DatasetBundle::new(spec.dataset_id.clone(), default_class_names(c), labels, split, features)
}

/// A shared latent space of binary concepts embedded in `input_dim` inputs.
///
/// Every sample carries a ±1 value for every concept; a task labels samples by
/// the binary code of a subset of concepts and the rest act as nuisance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptSpace {
    pub num_concepts: usize,
    pub input_dim: usize,
    /// Amplitude of each concept along its embedding direction.
    pub signal: f64,
    pub noise_sigma: f64,
    /// Seed of the embedding; tasks drawn from one space share it.
    pub seed: u64,
}

/// `input_dim × num_concepts` matrix with orthonormal columns.
pub fn concept_embedding(space: &ConceptSpace) -> Result<Matrix> {
    let (m, k) = (space.input_dim, space.num_concepts);
    if k == 0 || m < k {
        return Err(Error::invalid(format!(
            "need 1 <= concepts <= input dim, got {k} concepts in {m} dims"
        )));
    }
    let mut rng = util::rng(space.seed);
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(k);
    while cols.len() < k {
        let mut v: Vec<f64> = (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
        for u in &cols {
            let p = crate::matrix::dot(&v, u);
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= p * b);
        }
        let norm = crate::matrix::dot(&v, &v).sqrt();
        if norm > 1e-6 {
            v.iter_mut().for_each(|a| *a /= norm);
            cols.push(v);
        }
    }
    Ok(Matrix::from_fn(m, k, |i, j| cols[j][i]))
}

/// Draws a task whose class is the binary code of `concepts` (bit `i` set when
/// concept `concepts[i]` is positive). The bundle's single network is `input`.
pub fn generate_concept_task(
    space: &ConceptSpace,
    task_id: &str,
    concepts: &[usize],
    samples_per_class: usize,
    seed: u64,
) -> Result<DatasetBundle> {
    if concepts.is_empty() || concepts.len() > 16 {
        return Err(Error::invalid("a task needs between 1 and 16 concepts"));
    }
    if let Some(&bad) = concepts.iter().find(|&&c| c >= space.num_concepts) {
        return Err(Error::invalid(format!("concept {bad} outside the space")));
    }
    if samples_per_class == 0 {
        return Err(Error::invalid("samples_per_class must be positive"));
    }
    let embed = concept_embedding(space)?;
    let c = 1usize << concepts.len();
    let n = c * samples_per_class;
    let mut rng = util::rng(derive_seed(seed, 1));
    let mut labels = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(n * space.input_dim);
    let mut z = vec![0.0; space.num_concepts];
    for class in 0..c {
        for _ in 0..samples_per_class {
            for zk in z.iter_mut() {
                *zk = if rng.random::<bool>() { 1.0 } else { -1.0 };
            }
            for (bit, &concept) in concepts.iter().enumerate() {
                z[concept] = if class >> bit & 1 == 1 { 1.0 } else { -1.0 };
            }
            for i in 0..space.input_dim {
                let e: f64 = StandardNormal.sample(&mut rng);
                let x = space.signal * crate::matrix::dot(embed.row(i), &z) + space.noise_sigma * e;
                data.push(x as f32);
            }
            labels.push(class);
        }
    }
    let split = stratified_split(&labels, SPLIT_FRACTIONS, derive_seed(seed, 0))?;
    let input = FeatureMatrix::new("input", task_id, n, space.input_dim, data)?;
    DatasetBundle::new(task_id, default_class_names(c), labels, split, [input])
}

/// Bayes classifier for a [`generate_synthetic`] bundle using only `networks`.
///
/// Works from the generating means, not from fitted parameters. Classes that
/// the chosen networks cannot tell apart tie and resolve to the lowest index.
pub fn bayes_predict(spec: &SynthSpec, bundle: &DatasetBundle, networks: &[&str]) -> Result<Vec<usize>> {
    spec.validate()?;
    if networks.is_empty() {
        return Err(Error::NoNetworks);
    }
    let c = spec.num_classes;
    let mut scores = vec![0.0; bundle.n() * c];
    for &net in networks {
        let groups = spec
            .partitions
            .get(net)
            .ok_or_else(|| Error::UnknownNetwork(net.to_string()))?;
        let x = bundle.network(net)?;
        if x.d() != spec.dims_per_network {
            return Err(Error::ShapeMismatch(format!(
                "{net} has {} dims, spec says {}",
                x.d(),
                spec.dims_per_network
            )));
        }
        for (g, members) in groups.iter().enumerate() {
            let mu = group_mean(g, spec.dims_per_network, spec.separation);
            for i in 0..bundle.n() {
                let dist: f64 = x.row(i).iter().zip(&mu).map(|(&v, m)| (f64::from(v) - m).powi(2)).sum();
                for &class in members {
                    scores[i * c + class] -= dist;
                }
            }
        }
    }
    Ok(scores.chunks(c).map(crate::matrix::argmax).collect())
}

/// Accuracy of [`bayes_predict`] on one split.
pub fn bayes_accuracy(spec: &SynthSpec, bundle: &DatasetBundle, networks: &[&str], split: Split) -> Result<f64> {
    let preds = bayes_predict(spec, bundle, networks)?;
    let idx = bundle.indices(split);
    if idx.is_empty() {
        return Err(Error::invalid(format!("split {split} is empty")));
    }
    let hits = idx.iter().filter(|&&i| preds[i] == bundle.labels[i]).count();
    Ok(hits as f64 / idx.len() as f64)
}
