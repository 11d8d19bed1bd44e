//! Artifact schemas. Every JSON artifact carries `schema_version`; timing
//! fields live under `timings` so reports compare equal across reruns once
//! that key is dropped.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use spectre::dataset::Standardization;
use spectre::guarantees::{Side, SweepRow};
use spectre::metrics::{per_class_errors, summarize, FairnessSummary, GroupedPredictions};
use spectre::mrc::MrcModel;
use spectre::tuner::GridRecord;

use crate::config::{ExperimentConfig, SCHEMA_VERSION};
use crate::data::Attribute;
use crate::error::{at, CliResult};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Everything needed to apply a trained rule to raw user data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: u32,
    pub feature_names: Vec<String>,
    pub label_names: Vec<String>,
    pub label_column: String,
    /// Label counted as positive by EOp and DP.
    pub positive_label: String,
    pub standardization: Standardization,
    pub sigma_scale: f64,
    pub prediction_rule: PredictionRule,
    pub model: MrcModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionRule {
    /// argmax of the scores, smallest label id on ties.
    Argmax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub n: usize,
    pub n_features: usize,
    pub feature_names: Vec<String>,
    pub label_names: Vec<String>,
    pub label_counts: Vec<usize>,
    pub attributes: Vec<AttributeSummary>,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSummary {
    pub name: String,
    pub group_names: Vec<String>,
    pub group_sizes: Vec<usize>,
}

impl AttributeSummary {
    pub fn of(a: &Attribute) -> Self {
        let mut sizes = vec![0; a.group_names.len()];
        for &g in &a.ids {
            sizes[g] += 1;
        }
        Self {
            name: a.name.clone(),
            group_names: a.group_names.clone(),
            group_sizes: sizes,
        }
    }
}

/// Accuracy and fairness metrics of one set of predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n: usize,
    pub accuracy: f64,
    /// Error per true class, null for absent classes.
    pub class_errors: Vec<Option<f64>>,
    pub attributes: Vec<AttributeMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeMetrics {
    pub attribute: String,
    pub worst_group_accuracy: f64,
    pub max_acc_disparity: f64,
    pub eop: f64,
    pub dp: f64,
    /// Per-group records keyed by group name.
    pub groups: Vec<GroupMetrics>,
    pub eop_excluded_groups: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub group: String,
    pub n: usize,
    pub accuracy: f64,
}

pub fn metrics(
    y_true: &[usize],
    y_pred: &[usize],
    n_classes: usize,
    attributes: &[Attribute],
    positive_label: usize,
) -> CliResult<Metrics> {
    let mut out = Metrics {
        n: y_true.len(),
        accuracy: spectre::metrics::accuracy(y_true, y_pred),
        class_errors: per_class_errors(y_true, y_pred, n_classes)
            .into_iter()
            .map(|e| (!e.is_nan()).then_some(e))
            .collect(),
        attributes: Vec::with_capacity(attributes.len()),
    };
    for a in attributes {
        let gp = GroupedPredictions::new(y_true.to_vec(), y_pred.to_vec(), a.ids.clone(), positive_label)
            .map_err(at("evaluate"))?;
        out.attributes.push(attribute_metrics(&a.name, &a.group_names, &summarize(&gp)));
    }
    Ok(out)
}

fn attribute_metrics(name: &str, group_names: &[String], s: &FairnessSummary) -> AttributeMetrics {
    AttributeMetrics {
        attribute: name.to_string(),
        worst_group_accuracy: s.worst_group_accuracy,
        max_acc_disparity: s.max_acc_disparity,
        eop: s.eop,
        dp: s.dp,
        groups: s
            .group_accuracies
            .iter()
            .map(|(&g, &acc)| GroupMetrics {
                group: group_names[g].clone(),
                n: s.group_sizes[&g],
                accuracy: acc,
            })
            .collect(),
        eop_excluded_groups: s.eop_excluded_groups.iter().map(|&g| group_names[g].clone()).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub sigma: Option<f64>,
    pub lambda0: f64,
    pub n_freq: Option<usize>,
    pub n_coefficients: usize,
    pub worst_case_risk: f64,
    pub solver_iterations: usize,
}

impl ModelSummary {
    pub fn of(m: &MrcModel) -> Self {
        Self {
            sigma: m.map.sigma(),
            lambda0: m.lambda0,
            n_freq: match m.map.descriptor().kind {
                spectre::spectral::MapKind::Fourier { n_freq, .. } => Some(n_freq),
                spectre::spectral::MapKind::Polynomial { .. } => None,
            },
            n_coefficients: m.mu.len(),
            worst_case_risk: m.worst_case_risk,
            solver_iterations: m.solver_meta.iterations,
        }
    }
}

/// Bounds on the error of one audit group (or overall) of the frozen rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRecord {
    /// Group name, or null for the overall bound.
    pub group: Option<String>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub audit_size: usize,
    pub audit_error: Option<f64>,
    /// Error of the rule on the group's test instances.
    pub test_error: Option<f64>,
    pub low_confidence: bool,
    pub extremal: Vec<ExtremalSummary>,
    pub error: Option<String>,
}

/// How far an extremal distribution moves away from the uniform audit
/// distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremalSummary {
    pub side: Side,
    pub max_abs_delta: f64,
    /// Total variation distance to the uniform audit distribution.
    pub total_variation: f64,
    pub support_size: usize,
    pub group_mass: BTreeMap<String, f64>,
    pub label_mass: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsAtModel {
    pub lambda0: f64,
    pub sigma: Option<f64>,
    pub n_freq: Option<usize>,
    pub tau_source: spectre::guarantees::TauSource,
    pub audit_size: usize,
    /// Attribute whose groups are bounded; null for overall-only runs.
    pub attribute: Option<String>,
    pub records: Vec<BoundRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub tool_version: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub data: DataSummary,
    pub sigma_scale: f64,
    pub sigma_star: f64,
    pub lambda0_star: f64,
    pub grid_records: Vec<GridRecord>,
    pub final_model: ModelSummary,
    pub prediction_rule: PredictionRule,
    pub positive_label: String,
    pub metrics: SplitMetrics,
    pub bounds: BoundsAtModel,
    pub timings: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub train: Metrics,
    pub val: Metrics,
    pub test: Metrics,
    /// The whole input file.
    pub all: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub schema_version: u32,
    pub tool_version: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub at_model: BoundsAtModel,
    pub sweeps: Vec<NamedSweepRow>,
    pub timings: BTreeMap<String, f64>,
}

/// A sweep row with the group id replaced by its name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedSweepRow {
    pub parameter: spectre::guarantees::SweepParameter,
    pub value: f64,
    pub group: String,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub audit_error: Option<f64>,
    pub audit_size: usize,
    pub low_confidence: bool,
    pub n_freq: Option<usize>,
    pub error: Option<String>,
}

pub const OVERALL: &str = "overall";

impl NamedSweepRow {
    pub fn new(row: SweepRow, group_names: &[String]) -> Self {
        Self {
            parameter: row.parameter,
            value: row.value,
            group: row.group.map_or_else(|| OVERALL.to_string(), |g| group_names[g].clone()),
            lower: row.lower,
            upper: row.upper,
            audit_error: row.audit_error,
            audit_size: row.audit_size,
            low_confidence: row.low_confidence,
            n_freq: row.n_freq,
            error: row.error,
        }
    }
}

/// Flat grid record for `grid.csv`.
#[derive(Debug, Clone, Serialize)]
pub struct GridRow {
    pub stage: u8,
    pub index: usize,
    pub sigma: f64,
    pub lambda0: f64,
    pub accuracy: Option<f64>,
    pub worst_class_error: Option<f64>,
    pub worst_case_risk: Option<f64>,
    pub iterations: Option<usize>,
    pub error: Option<String>,
}

impl From<&GridRecord> for GridRow {
    fn from(r: &GridRecord) -> Self {
        Self {
            stage: r.stage,
            index: r.index,
            sigma: r.sigma,
            lambda0: r.lambda0,
            accuracy: r.metrics.as_ref().map(|m| m.accuracy),
            worst_class_error: r.metrics.as_ref().map(|m| m.worst_class_error),
            worst_case_risk: r.worst_case_risk,
            iterations: r.iterations,
            error: r.error.clone(),
        }
    }
}

/// Output of `evaluate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub schema_version: u32,
    pub tool_version: String,
    pub positive_label: String,
    pub metrics: Metrics,
}

impl EvaluationReport {
    pub fn new(positive_label: String, metrics: Metrics) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            tool_version: TOOL_VERSION.into(),
            positive_label,
            metrics,
        }
    }
}
