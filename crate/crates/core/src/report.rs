//! Evaluation artifacts and their JSON/CSV forms.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ensemble::StackEnsembleReport;
use crate::error::{Error, Result};
use crate::stacking::StackSpec;
use crate::sweep::SweepResult;
use crate::util;

/// `counts[x][y]` = samples of actual class `x` predicted as class `y`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub class_names: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.num_classes()).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            t => self.trace() as f64 / t as f64,
        }
    }
}

pub fn confusion(predictions: &[usize], labels: &[usize], class_names: &[String]) -> Result<ConfusionMatrix> {
    if predictions.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let c = class_names.len();
    let mut counts = vec![vec![0u64; c]; c];
    for (&p, &y) in predictions.iter().zip(labels) {
        if p >= c || y >= c {
            return Err(Error::LabelOutOfRange {
                label: p.max(y),
                classes: c,
            });
        }
        counts[y][p] += 1;
    }
    Ok(ConfusionMatrix {
        class_names: class_names.to_vec(),
        counts,
    })
}

/// One stack's accuracy on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRecord {
    pub dataset_id: String,
    pub stack_spec: StackSpec,
    pub accuracy: f64,
}

impl From<&SweepResult> for AccuracyRecord {
    fn from(r: &SweepResult) -> Self {
        AccuracyRecord {
            dataset_id: r.dataset_id.clone(),
            stack_spec: r.stack_spec.clone(),
            accuracy: r.best_val_accuracy(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradationRow {
    pub dataset_id: String,
    pub stack_spec: StackSpec,
    pub accuracy: f64,
    /// Best accuracy on this dataset minus this accuracy.
    pub degradation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradationSummary {
    pub stack_spec: StackSpec,
    pub mean: f64,
    /// Population standard deviation across datasets.
    pub std_dev: f64,
    pub datasets: usize,
}

/// Per-dataset shortfall of every stack against that dataset's best stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradationTable {
    /// Grouped by stack in `summaries` order, then by dataset.
    pub rows: Vec<DegradationRow>,
    /// Sorted by mean degradation, ascending.
    pub summaries: Vec<DegradationSummary>,
}

pub fn degradation_table(results: &[AccuracyRecord]) -> Result<DegradationTable> {
    if results.is_empty() {
        return Err(Error::invalid("no results to tabulate"));
    }
    let mut best: BTreeMap<&str, f64> = BTreeMap::new();
    for r in results {
        let b = best.entry(&r.dataset_id).or_insert(f64::MIN);
        *b = b.max(r.accuracy);
    }
    let mut by_spec: BTreeMap<String, (StackSpec, Vec<DegradationRow>)> = BTreeMap::new();
    for r in results {
        let row = DegradationRow {
            dataset_id: r.dataset_id.clone(),
            stack_spec: r.stack_spec.clone(),
            accuracy: r.accuracy,
            degradation: best[r.dataset_id.as_str()] - r.accuracy,
        };
        by_spec
            .entry(r.stack_spec.key())
            .or_insert_with(|| (r.stack_spec.clone(), Vec::new()))
            .1
            .push(row);
    }
    let mut groups: Vec<(DegradationSummary, Vec<DegradationRow>)> = by_spec
        .into_values()
        .map(|(spec, mut rows)| {
            rows.sort_by(|a, b| a.dataset_id.cmp(&b.dataset_id));
            let d: Vec<f64> = rows.iter().map(|r| r.degradation).collect();
            (
                DegradationSummary {
                    stack_spec: spec,
                    mean: util::mean(&d),
                    std_dev: util::std_dev(&d),
                    datasets: d.len(),
                },
                rows,
            )
        })
        .collect();
    groups.sort_by(|a, b| {
        a.0.mean
            .total_cmp(&b.0.mean)
            .then(a.0.std_dev.total_cmp(&b.0.std_dev))
            .then_with(|| a.0.stack_spec.key().cmp(&b.0.stack_spec.key()))
    });
    let mut rows = Vec::with_capacity(results.len());
    let mut summaries = Vec::with_capacity(groups.len());
    for (s, r) in groups {
        summaries.push(s);
        rows.extend(r);
    }
    Ok(DegradationTable { rows, summaries })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            other => Err(Error::invalid(format!("unknown format {other:?}"))),
        }
    }
}

/// Anything that can be written as JSON and as a flat CSV table.
pub trait Report: Serialize {
    fn to_csv(&self) -> String;

    fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|source| Error::Json {
            context: "report".into(),
            source,
        })
    }

    fn render(&self, format: Format) -> Result<String> {
        match format {
            Format::Json => self.to_json().map(|mut s| {
                s.push('\n');
                s
            }),
            Format::Csv => Ok(self.to_csv()),
        }
    }
}

/// Writes the report atomically.
pub fn emit<R: Report + ?Sized>(report: &R, format: Format, path: impl AsRef<Path>) -> Result<()> {
    util::write_atomic(path.as_ref(), report.render(format)?.as_bytes())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl Report for ConfusionMatrix {
    fn to_csv(&self) -> String {
        let mut out = String::from("actual\\predicted");
        for name in &self.class_names {
            out.push(',');
            out.push_str(&csv_field(name));
        }
        out.push('\n');
        for (name, row) in self.class_names.iter().zip(&self.counts) {
            out.push_str(&csv_field(name));
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

impl Report for DegradationTable {
    fn to_csv(&self) -> String {
        let summary: BTreeMap<String, &DegradationSummary> =
            self.summaries.iter().map(|s| (s.stack_spec.key(), s)).collect();
        let mut out = String::from("dataset,stack,networks,accuracy,degradation,mean_degradation,std_degradation\n");
        for r in &self.rows {
            let key = r.stack_spec.key();
            let s = summary[&key];
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                csv_field(&r.dataset_id),
                csv_field(&key),
                r.stack_spec.len(),
                r.accuracy,
                r.degradation,
                s.mean,
                s.std_dev
            );
        }
        out
    }
}

impl Report for SweepResult {
    fn to_csv(&self) -> String {
        let mut out = String::from(
            "index,stack,lr,reg,epochs,decay,batch_size,dropout_enabled,dropout_p,loss,seed,val_accuracy,best_epoch,diverged_at,winner\n",
        );
        let key = self.stack_spec.key();
        for e in &self.entries {
            let c = &e.config;
            let opt = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                e.index,
                csv_field(&key),
                c.lr0,
                c.reg,
                c.epochs,
                c.decay,
                c.batch_size,
                c.dropout_enabled,
                c.dropout_p,
                serde_json::to_value(c.loss_kind)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_string))
                    .unwrap_or_default(),
                c.seed,
                e.val_accuracy,
                opt(e.best_epoch),
                opt(e.diverged_at),
                e.index == self.winner
            );
        }
        out
    }
}

impl Report for StackEnsembleReport {
    fn to_csv(&self) -> String {
        let mut out = String::from("kind,stack,networks,accuracy,degradation\n");
        let best = self
            .subsets
            .iter()
            .map(|s| s.val_accuracy)
            .fold(self.ensemble_accuracy, f64::max);
        for s in &self.subsets {
            let _ = writeln!(
                out,
                "subset,{},{},{},{}",
                csv_field(&s.stack_spec.key()),
                s.stack_spec.len(),
                s.val_accuracy,
                best - s.val_accuracy
            );
        }
        let _ = writeln!(
            out,
            "ensemble,{},{},{},{}",
            csv_field(&self.stack_spec.key()),
            self.stack_spec.len(),
            self.ensemble_accuracy,
            best - self.ensemble_accuracy
        );
        out
    }
}

impl Report for BTreeMap<String, f64> {
    fn to_csv(&self) -> String {
        let mut out = String::from("network,value\n");
        for (k, v) in self {
            let _ = writeln!(out, "{},{v}", csv_field(k));
        }
        out
    }
}

impl Report for Vec<StackSpec> {
    fn to_csv(&self) -> String {
        let mut out = String::from("stack,networks\n");
        for s in self {
            let _ = writeln!(out, "{},{}", csv_field(&s.key()), s.len());
        }
        out
    }
}
