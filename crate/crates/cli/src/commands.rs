//! The subcommands. Each writes its artifacts under an output directory and
//! returns the paths it wrote.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array2;
use serde::Serialize;
use spectre::dataset::{generate_toy, split, Dataset, SplitSets, SplitSpec, Standardization};
use spectre::guarantees::{
    audit_uncertainty, bound_sweep, bounds_for_all, extremal_report, sample_audit, AuditSet, BoundConfig, Side,
    SweepParameter,
};
use spectre::mrc::MrcModel;
use spectre::spectral::{sigma_grid, sigma_scale, MapKind};
use spectre::tuner::{default_lambda_grid, tune_observed, GridRecord, TuneConfig, TuneResult};

use crate::config::{ExperimentConfig, SCHEMA_VERSION};
use crate::data::{load_experiment, read_for_model, Attribute, Loaded};
use crate::error::{at, CliError, CliResult, Kind};
use crate::io::{read_json, write_csv, write_json, write_table, write_via_temp};
use crate::report::*;

pub const MODEL_FILE: &str = "model.json";
pub const TUNE_RESULT_FILE: &str = "tune_result.json";
pub const REPORT_FILE: &str = "report.json";
pub const GRID_FILE: &str = "grid.csv";
pub const SPLITS_FILE: &str = "splits.csv";
pub const BOUNDARY_FILE: &str = "boundary.csv";
pub const BOUNDS_JSON: &str = "bounds.json";
pub const BOUNDS_CSV: &str = "bounds.csv";
pub const EXTREMAL_CSV: &str = "extremal.csv";

fn data_error(stage: &str, message: impl Into<String>) -> CliError {
    CliError::new(Kind::Data, stage, message)
}

pub fn gen_toy(n: usize, seed: u64, out: &Path) -> CliResult<()> {
    let ds = generate_toy(n, seed).map_err(|e| CliError::config(e.to_string()))?;
    write_via_temp(out, |tmp| ds.write_csv(tmp).map_err(at("write")))
}

/// The experiment's data, split and standardized.
struct Prepared {
    loaded: Loaded,
    /// Standardized parts; each carries the grouping attribute when there
    /// is one.
    sets: SplitSets,
    standardization: Standardization,
    positive_label: usize,
}

impl Prepared {
    /// The attribute group bounds are computed for: the intersection of all
    /// sensitive columns (the only column when there is one).
    fn group_attribute(&self) -> Option<&Attribute> {
        self.loaded.attributes.last()
    }

    fn attributes_of(&self, rows: &[usize]) -> Vec<Attribute> {
        self.loaded.attributes.iter().map(|a| a.subset(rows)).collect()
    }
}

fn resolve_positive(cfg: &ExperimentConfig, label_names: &[String]) -> CliResult<usize> {
    match &cfg.data.positive_label {
        None => Ok(label_names.len() - 1),
        Some(name) => label_names.iter().position(|l| l == name).ok_or_else(|| {
            CliError::config(format!("positive_label `{name}` is not one of the labels {label_names:?}"))
        }),
    }
}

/// Loads and splits the data. With a stored model, the data must match its
/// features and labels and the model's transform is replayed instead of
/// fitting one on the training part.
fn prepare(cfg: &ExperimentConfig, model: Option<&ModelFile>) -> CliResult<Prepared> {
    let loaded = load_experiment(cfg)?;
    if loaded.ds.distinct_labels() < 2 {
        return Err(data_error("load", "data must contain at least two classes"));
    }
    if let Some(mf) = model {
        if loaded.ds.feature_names() != mf.feature_names.as_slice() {
            return Err(data_error(
                "load",
                format!(
                    "data features {:?} differ from the model's {:?}",
                    loaded.ds.feature_names(),
                    mf.feature_names
                ),
            ));
        }
        if loaded.ds.label_names() != mf.label_names.as_slice() {
            return Err(data_error(
                "load",
                format!("data labels {:?} differ from the model's {:?}", loaded.ds.label_names(), mf.label_names),
            ));
        }
    }
    let ds = match loaded.attributes.last() {
        Some(a) => loaded.ds.with_sensitive(a.ids.clone(), a.group_names.clone()).map_err(at("load"))?,
        None => loaded.ds.without_sensitive(),
    };
    let spec = SplitSpec::new(cfg.split.test_fraction, cfg.split.val_fraction, cfg.seed).map_err(at("split"))?;
    let raw = split(&ds, &spec).map_err(at("split"))?;
    let sets = match model.map(|m| &m.standardization) {
        None => raw.standardize(),
        Some(t) => {
            let apply = |d: &Dataset| d.apply_standardization(t).map_err(at("split"));
            SplitSets {
                train: apply(&raw.train)?,
                val: apply(&raw.val)?,
                test: apply(&raw.test)?,
                ..raw
            }
        }
    };
    let standardization = sets.train.standardization().expect("standardized above").clone();
    let positive_label = resolve_positive(cfg, loaded.ds.label_names())?;
    Ok(Prepared {
        loaded,
        sets,
        standardization,
        positive_label,
    })
}

pub fn tune_config(cfg: &ExperimentConfig, train: &Dataset) -> CliResult<TuneConfig> {
    let sigma_values = match &cfg.tune.sigma_values {
        Some(v) => v.clone(),
        None => sigma_grid(train, cfg.tune.sigma_points).map_err(at("tune"))?,
    };
    Ok(TuneConfig {
        sigma_values,
        lambda_values: cfg.tune.lambda_values.clone().unwrap_or_else(default_lambda_grid),
        lambda0_init: cfg.tune.lambda0_init,
        strategy: cfg.tune.strategy,
        lambda_strategy: cfg.tune.lambda_strategy,
        tolerance: cfg.tune.tolerance,
        top_n: cfg.tune.top_n,
        n_freq: cfg.map.n_freq,
        seed: cfg.seed,
        solver: cfg.solver.clone(),
    })
}

fn bound_config(cfg: &ExperimentConfig) -> BoundConfig {
    BoundConfig {
        audit_fraction: cfg.bounds.audit_fraction,
        seed: cfg.seed,
        tau_source: cfg.bounds.tau_source,
        reduced_frequencies: cfg.bounds.reduced_frequencies,
    }
}

fn split_metrics(model: &MrcModel, ds: &Dataset, attributes: &[Attribute], positive: usize) -> CliResult<Metrics> {
    let pred = model.predict_batch(ds.features()).map_err(at("evaluate"))?;
    metrics(ds.labels(), &pred, ds.n_classes(), attributes, positive)
}

fn write_grid(dir: &Path, records: &[GridRecord]) -> CliResult<()> {
    let rows: Vec<GridRow> = records.iter().map(GridRow::from).collect();
    write_csv(&dir.join(GRID_FILE), &rows)
}

#[derive(Serialize)]
struct SplitRow {
    row: usize,
    split: &'static str,
}

fn write_splits(dir: &Path, sets: &SplitSets) -> CliResult<()> {
    let mut rows: Vec<SplitRow> = Vec::new();
    for (name, idx) in [("train", &sets.train_idx), ("val", &sets.val_idx), ("test", &sets.test_idx)] {
        rows.extend(idx.iter().map(|&row| SplitRow { row, split: name }));
    }
    rows.sort_by_key(|r| r.row);
    write_csv(&dir.join(SPLITS_FILE), &rows)
}

/// Predictions on a regular grid spanning the raw data, for 2-feature data.
fn write_boundary(
    path: &Path,
    model: &MrcModel,
    raw: &Array2<f64>,
    t: &Standardization,
    feature_names: &[String],
    label_names: &[String],
    points: usize,
) -> CliResult<()> {
    let axis = |j: usize| {
        let col = raw.column(j);
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let pad = 0.05 * (hi - lo);
        let (lo, hi) = (lo - pad, hi + pad);
        (0..points)
            .map(|k| if points == 1 { lo } else { lo + (hi - lo) * k as f64 / (points - 1) as f64 })
            .collect::<Vec<f64>>()
    };
    let (xs, ys) = (axis(0), axis(1));
    let mut grid = Array2::zeros((points * points, 2));
    for (i, &a) in xs.iter().enumerate() {
        for (k, &b) in ys.iter().enumerate() {
            grid[[i * points + k, 0]] = a;
            grid[[i * points + k, 1]] = b;
        }
    }
    let z = t.transform(&grid).map_err(at("report"))?;
    let pred = model.predict_batch(&z).map_err(at("report"))?;
    let proba = model.predict_proba_batch(&z).map_err(at("report"))?;
    let mut header: Vec<String> = feature_names.to_vec();
    header.push("prediction".into());
    header.push("probability".into());
    let rows: Vec<Vec<String>> = (0..grid.nrows())
        .map(|r| {
            vec![
                grid[[r, 0]].to_string(),
                grid[[r, 1]].to_string(),
                label_names[pred[r]].clone(),
                proba[[r, pred[r]]].to_string(),
            ]
        })
        .collect();
    write_table(path, &header, &rows)
}

fn extremal_summary(
    report: &spectre::guarantees::ExtremalReport,
    weights: &[f64],
    group_names: &[String],
    label_names: &[String],
) -> ExtremalSummary {
    ExtremalSummary {
        side: report.side,
        max_abs_delta: report.deltas.iter().fold(0.0, |m, d| m.max(d.abs())),
        total_variation: 0.5 * report.deltas.iter().map(|d| d.abs()).sum::<f64>(),
        support_size: weights.iter().filter(|&&w| w > 0.0).count(),
        group_mass: report
            .group_marginals
            .iter()
            .enumerate()
            .map(|(g, &m)| (group_names[g].clone(), m))
            .collect(),
        label_mass: report
            .label_marginals
            .iter()
            .enumerate()
            .map(|(y, &m)| (label_names[y].clone(), m))
            .collect(),
    }
}

/// One audit instance's weight under one extremal distribution.
#[derive(Serialize)]
struct ExtremalRow {
    group: String,
    side: Side,
    /// Row of the instance in the input data.
    row: usize,
    instance_group: Option<String>,
    label: String,
    loss: f64,
    weight: f64,
    delta: f64,
}

struct AtModel {
    summary: BoundsAtModel,
    extremal_rows: Vec<ExtremalRow>,
}

/// Bounds of `model` at its own λ₀ on an audit sample of the training part.
fn bounds_at_model(model: &MrcModel, prep: &Prepared, cfg: &ExperimentConfig, grouped: bool) -> CliResult<AtModel> {
    let bcfg = bound_config(cfg);
    bcfg.validate().map_err(|e| CliError::config(e.to_string()))?;
    let (train, test) = if grouped {
        (prep.sets.train.clone(), prep.sets.test.clone())
    } else {
        (prep.sets.train.without_sensitive(), prep.sets.test.without_sensitive())
    };
    let group_names = train.group_names().to_vec();
    let label_names = train.label_names().to_vec();
    let audit_idx = sample_audit(&train, bcfg.audit_fraction, bcfg.seed).map_err(at("bounds"))?;
    let map = match bcfg.reduced_frequencies {
        Some(d) => model.map.with_frequencies(d).map_err(at("bounds"))?,
        None => model.map.clone(),
    };
    let audit = AuditSet::for_rule(model, &map, &train, &audit_idx).map_err(at("bounds"))?;
    let u = audit_uncertainty(&train, &audit, &map, model.lambda0, bcfg.tau_source).map_err(at("bounds"))?;

    let test_pred = model.predict_batch(test.features()).map_err(at("bounds"))?;
    let test_error = |group: Option<usize>| {
        let members: Vec<usize> = (0..test.len())
            .filter(|&i| group.is_none_or(|g| test.sensitive().is_some_and(|s| s[i] == g)))
            .collect();
        (!members.is_empty()).then(|| {
            members.iter().filter(|&&i| test_pred[i] != test.labels()[i]).count() as f64 / members.len() as f64
        })
    };

    let mut records = Vec::new();
    let mut extremal_rows = Vec::new();
    for (group, result) in bounds_for_all(&audit, &u) {
        let name = group.map(|g| group_names[g].clone());
        let audit_size = group.map_or(audit.len(), |g| audit.group_size(g));
        let mut rec = BoundRecord {
            group: name.clone(),
            lower: None,
            upper: None,
            audit_size,
            audit_error: audit.empirical_error(group),
            test_error: test_error(group),
            low_confidence: false,
            extremal: Vec::new(),
            error: None,
        };
        match result {
            Ok(b) => {
                rec.lower = Some(b.lower);
                rec.upper = Some(b.upper);
                rec.low_confidence = b.low_confidence;
                for side in [Side::Upper, Side::Lower] {
                    let weights = b.weights(side);
                    let rep = extremal_report(&b, side, &audit, train.n_classes());
                    rec.extremal.push(extremal_summary(&rep, weights, &group_names, &label_names));
                    for (i, (&w, &d)) in weights.iter().zip(&rep.deltas).enumerate() {
                        extremal_rows.push(ExtremalRow {
                            group: name.clone().unwrap_or_else(|| OVERALL.into()),
                            side,
                            row: prep.sets.train_idx[audit.instances[i]],
                            instance_group: audit.groups.as_ref().map(|g| group_names[g[i]].clone()),
                            label: label_names[audit.labels[i]].clone(),
                            loss: audit.losses[i],
                            weight: w,
                            delta: d,
                        });
                    }
                }
            }
            Err(e) => rec.error = Some(e.to_string()),
        }
        records.push(rec);
    }
    Ok(AtModel {
        summary: BoundsAtModel {
            lambda0: model.lambda0,
            sigma: model.map.sigma(),
            n_freq: match map.descriptor().kind {
                MapKind::Fourier { n_freq, .. } => Some(n_freq),
                MapKind::Polynomial { .. } => None,
            },
            tau_source: bcfg.tau_source,
            audit_size: audit.len(),
            attribute: grouped.then(|| prep.group_attribute().map(|a| a.name.clone())).flatten(),
            records,
        },
        extremal_rows,
    })
}

fn seconds(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

/// Everything `tune-train` produced.
pub struct TuneTrainOutput {
    pub report: RunReport,
    pub tune_result: TuneResult,
    pub files: Vec<PathBuf>,
}

/// split → standardize → tune (blind) → final model → evaluation → bounds.
pub fn tune_train(cfg: &ExperimentConfig) -> CliResult<TuneTrainOutput> {
    let start = Instant::now();
    let mut timings = BTreeMap::new();
    let dir = cfg.output_dir.clone();
    let prep = prepare(cfg, None)?;
    timings.insert("load_split".to_string(), seconds(start));

    // Tuning never sees a sensitive attribute.
    let train = prep.sets.train.without_sensitive();
    let val = prep.sets.val.without_sensitive();
    let tcfg = tune_config(cfg, &train)?;
    let scale = sigma_scale(&train).map_err(at("tune"))?;
    let t = Instant::now();
    let mut records = Vec::new();
    let tuned = tune_observed(&train, &val, &tcfg, &mut |r| records.push(r.clone()));
    let tune_result = match tuned {
        Ok(r) => r,
        Err(e) => {
            write_grid(&dir, &records)?;
            return Err(at("tune")(e));
        }
    };
    timings.insert("tune".to_string(), seconds(t));

    let model = &tune_result.final_model;
    let label_names = prep.loaded.ds.label_names().to_vec();
    let positive = prep.positive_label;
    let t = Instant::now();
    let all = prep.loaded.ds.apply_standardization(&prep.standardization).map_err(at("evaluate"))?;
    let split_metrics = SplitMetrics {
        train: split_metrics(model, &prep.sets.train, &prep.attributes_of(&prep.sets.train_idx), positive)?,
        val: split_metrics(model, &prep.sets.val, &prep.attributes_of(&prep.sets.val_idx), positive)?,
        test: split_metrics(model, &prep.sets.test, &prep.attributes_of(&prep.sets.test_idx), positive)?,
        all: split_metrics(model, &all, &prep.loaded.attributes, positive)?,
    };
    timings.insert("evaluate".to_string(), seconds(t));

    let t = Instant::now();
    let grouped = !cfg.bounds.overall_only && prep.group_attribute().is_some();
    let at_model = bounds_at_model(model, &prep, cfg, grouped)?;
    timings.insert("bounds".to_string(), seconds(t));

    let model_file = ModelFile {
        schema_version: SCHEMA_VERSION,
        feature_names: prep.loaded.ds.feature_names().to_vec(),
        label_names: label_names.clone(),
        label_column: cfg.data.label_column.clone(),
        positive_label: label_names[positive].clone(),
        standardization: prep.standardization.clone(),
        sigma_scale: scale,
        prediction_rule: PredictionRule::Argmax,
        model: model.clone(),
    };
    let counts = {
        let mut c = vec![0; label_names.len()];
        for &y in prep.loaded.ds.labels() {
            c[y] += 1;
        }
        c
    };
    let data = DataSummary {
        n: prep.loaded.ds.len(),
        n_features: prep.loaded.ds.dim(),
        feature_names: model_file.feature_names.clone(),
        label_names: label_names.clone(),
        label_counts: counts,
        attributes: prep.loaded.attributes.iter().map(AttributeSummary::of).collect(),
        n_train: prep.sets.train.len(),
        n_val: prep.sets.val.len(),
        n_test: prep.sets.test.len(),
    };

    let mut files = Vec::new();
    let mut put = |name: &str| {
        let p = dir.join(name);
        files.push(p.clone());
        p
    };
    write_json(&put(MODEL_FILE), &model_file)?;
    write_json(&put(TUNE_RESULT_FILE), &tune_result)?;
    write_grid(&dir, &tune_result.grid_records)?;
    put(GRID_FILE);
    write_splits(&dir, &prep.sets)?;
    put(SPLITS_FILE);
    if prep.loaded.ds.dim() == 2 && cfg.report.raster_points > 0 {
        write_boundary(
            &put(BOUNDARY_FILE),
            model,
            prep.loaded.ds.features(),
            &prep.standardization,
            prep.loaded.ds.feature_names(),
            &label_names,
            cfg.report.raster_points,
        )?;
    }
    timings.insert("total".to_string(), seconds(start));
    let report = RunReport {
        schema_version: SCHEMA_VERSION,
        tool_version: TOOL_VERSION.into(),
        seed: cfg.seed,
        config: cfg.clone(),
        data,
        sigma_scale: scale,
        sigma_star: tune_result.sigma_star,
        lambda0_star: tune_result.lambda0_star,
        grid_records: tune_result.grid_records.clone(),
        final_model: ModelSummary::of(model),
        prediction_rule: PredictionRule::Argmax,
        positive_label: label_names[positive].clone(),
        metrics: split_metrics,
        bounds: at_model.summary,
        timings,
    };
    write_json(&put(REPORT_FILE), &report)?;
    Ok(TuneTrainOutput {
        report,
        tune_result,
        files,
    })
}

pub fn load_model(path: &Path) -> CliResult<ModelFile> {
    let m: ModelFile = read_json(path, "model file")?;
    if m.schema_version != SCHEMA_VERSION {
        return Err(data_error(
            "load",
            format!("model file schema_version {} is not supported", m.schema_version),
        ));
    }
    Ok(m)
}

/// Bounds of a stored model at its own λ₀ plus the configured λ₀ and σ
/// sweeps, on the audit sample `tune-train` used.
pub fn bounds(cfg: &ExperimentConfig, model_path: &Path) -> CliResult<BoundsReport> {
    let start = Instant::now();
    let mut timings = BTreeMap::new();
    let mf = load_model(model_path)?;
    let prep = prepare(cfg, Some(&mf))?;
    let grouped = !cfg.bounds.overall_only;
    if grouped && prep.group_attribute().is_none() {
        return Err(data_error(
            "bounds",
            "group bounds need a sensitive column (data.sensitive_columns); pass --overall-only for overall bounds, which need none",
        ));
    }
    let model = &mf.model;
    let t = Instant::now();
    let at_model = bounds_at_model(model, &prep, cfg, grouped)?;
    timings.insert("at_model".to_string(), seconds(t));

    let train = if grouped {
        prep.sets.train.clone()
    } else {
        prep.sets.train.without_sensitive()
    };
    let bcfg = bound_config(cfg);
    let audit_idx = sample_audit(&train, bcfg.audit_fraction, bcfg.seed).map_err(at("bounds"))?;
    let group_names = train.group_names().to_vec();
    let mut sweeps = Vec::new();
    let t = Instant::now();
    let mut run = |parameter, values: &[f64]| -> CliResult<()> {
        if values.is_empty() {
            return Ok(());
        }
        let rows = bound_sweep(model, &train, &audit_idx, parameter, values, &bcfg).map_err(at("bounds"))?;
        sweeps.extend(rows.into_iter().map(|r| NamedSweepRow::new(r, &group_names)));
        Ok(())
    };
    run(SweepParameter::Lambda0, &cfg.bounds.lambda0_grid)?;
    if let Some(s) = &cfg.bounds.sigma_grid {
        run(SweepParameter::Sigma, s)?;
    }
    timings.insert("sweeps".to_string(), seconds(t));

    let dir = &cfg.output_dir;
    write_csv(&dir.join(BOUNDS_CSV), &sweeps)?;
    write_csv(&dir.join(EXTREMAL_CSV), &at_model.extremal_rows)?;
    timings.insert("total".to_string(), seconds(start));
    let report = BoundsReport {
        schema_version: SCHEMA_VERSION,
        tool_version: TOOL_VERSION.into(),
        seed: cfg.seed,
        config: cfg.clone(),
        at_model: at_model.summary,
        sweeps,
        timings,
    };
    write_json(&dir.join(BOUNDS_JSON), &report)?;
    Ok(report)
}

/// Metrics of a stored model on a labelled file.
pub fn evaluate(
    model_path: &Path,
    data: &Path,
    label_column: Option<&str>,
    sensitive_columns: &[String],
    out: &Path,
) -> CliResult<EvaluationReport> {
    let mf = load_model(model_path)?;
    let label_column = label_column.unwrap_or(&mf.label_column);
    let input = read_for_model(data, &mf.feature_names, &mf.label_names, Some(label_column), sensitive_columns)?;
    let x = mf.standardization.transform(&input.features).map_err(at("evaluate"))?;
    let pred = mf.model.predict_batch(&x).map_err(at("evaluate"))?;
    let y = input.labels.expect("label column requested");
    let positive = mf
        .label_names
        .iter()
        .position(|l| *l == mf.positive_label)
        .ok_or_else(|| data_error("load", "model file names an unknown positive label"))?;
    let m = metrics(&y, &pred, mf.label_names.len(), &input.attributes, positive)?;
    let report = EvaluationReport::new(mf.positive_label.clone(), m);
    write_json(out, &report)?;
    Ok(report)
}

/// Predicted label and class probabilities for every row of `data`.
pub fn predict(model_path: &Path, data: &Path, out: &Path) -> CliResult<()> {
    let mf = load_model(model_path)?;
    let input = read_for_model(data, &mf.feature_names, &mf.label_names, None, &[])?;
    let x = mf.standardization.transform(&input.features).map_err(at("predict"))?;
    let pred = mf.model.predict_batch(&x).map_err(at("predict"))?;
    let proba = mf.model.predict_proba_batch(&x).map_err(at("predict"))?;
    let mut header = vec!["row".to_string(), "prediction".to_string()];
    header.extend(mf.label_names.iter().map(|l| format!("p_{l}")));
    let rows: Vec<Vec<String>> = pred
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let mut r = vec![i.to_string(), mf.label_names[p].clone()];
            r.extend(proba.row(i).iter().map(f64::to_string));
            r
        })
        .collect();
    write_table(out, &header, &rows)
}
