//! Two-stage hyperparameter search: σ first at a fixed λ₀, then λ₀ at the
//! selected σ. Selection only looks at validation accuracy and per-class
//! errors, never at sensitive attributes.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{invalid, Error, Result};
use crate::lp::SolverConfig;
use crate::metrics::{accuracy, per_class_errors};
use crate::mrc::{train_on_blocks, MrcModel};
use crate::spectral::{log_space, sigma_grid, SpectralMap, DEFAULT_FREQUENCIES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Strategy {
    /// Highest accuracy.
    Acc,
    /// Lowest worst-class error.
    Wce,
    /// Highest accuracy among candidates whose worst-class error is within
    /// `tolerance` of the lowest one.
    WceTA,
    /// Lowest worst-class error among the `top_n` most accurate.
    TopnWce,
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace(['-', '+'], "_").as_str() {
            "ACC" => Ok(Self::Acc),
            "WCE" => Ok(Self::Wce),
            "WCE_T_A" => Ok(Self::WceTA),
            "TOPN_WCE" => Ok(Self::TopnWce),
            _ => invalid(format!("unknown strategy `{s}` (expected ACC, WCE, WCE_T_A or TOPN_WCE)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneConfig {
    pub sigma_values: Vec<f64>,
    pub lambda_values: Vec<f64>,
    pub lambda0_init: f64,
    pub strategy: Strategy,
    /// Strategy for the λ₀ stage when it differs from the σ stage.
    pub lambda_strategy: Option<Strategy>,
    pub tolerance: f64,
    pub top_n: usize,
    pub n_freq: usize,
    /// Seed of the frequency draw.
    pub seed: u64,
    pub solver: SolverConfig,
}

pub const DEFAULT_GRID_POINTS: usize = 10;
pub const DEFAULT_LAMBDA0_INIT: f64 = 0.3;
pub const DEFAULT_TOLERANCE: f64 = 0.05;
pub const DEFAULT_TOP_N: usize = 5;

/// 10 log-spaced λ₀ values over [0.01, 1].
pub fn default_lambda_grid() -> Vec<f64> {
    log_space(0.01, 1.0, DEFAULT_GRID_POINTS)
}

impl TuneConfig {
    /// Default grids: 10 σ values around σ_scale of `train` and 10 λ₀ values.
    pub fn with_default_grids(train: &Dataset, strategy: Strategy, seed: u64) -> Result<Self> {
        Ok(Self {
            sigma_values: sigma_grid(train, DEFAULT_GRID_POINTS)?,
            lambda_values: default_lambda_grid(),
            lambda0_init: DEFAULT_LAMBDA0_INIT,
            strategy,
            lambda_strategy: None,
            tolerance: DEFAULT_TOLERANCE,
            top_n: DEFAULT_TOP_N,
            n_freq: DEFAULT_FREQUENCIES,
            seed,
            solver: SolverConfig::default(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigma_values.is_empty() || self.lambda_values.is_empty() {
            return invalid("σ and λ₀ grids must be non-empty");
        }
        if self.sigma_values.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return invalid("σ values must be positive");
        }
        if self.lambda_values.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
            return invalid("λ₀ values must be non-negative");
        }
        if !(self.lambda0_init >= 0.0) || !self.lambda0_init.is_finite() {
            return invalid("initial λ₀ must be non-negative");
        }
        if !(self.tolerance >= 0.0) {
            return invalid("tolerance must be non-negative");
        }
        if self.top_n == 0 {
            return invalid("top_n must be at least 1");
        }
        if self.n_freq == 0 {
            return invalid("number of frequencies must be positive");
        }
        self.solver.validate()
    }
}

/// Validation metrics of one candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateMetrics {
    pub accuracy: f64,
    /// Error within each true class (NaN-free: absent classes are skipped
    /// by the worst-class aggregate and stored as null).
    pub class_errors: Vec<Option<f64>>,
    pub worst_class_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRecord {
    /// 1 for the σ stage, 2 for the λ₀ stage.
    pub stage: u8,
    pub index: usize,
    pub sigma: f64,
    pub lambda0: f64,
    pub metrics: Option<CandidateMetrics>,
    pub worst_case_risk: Option<f64>,
    pub iterations: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub sigma_star: f64,
    pub lambda0_star: f64,
    pub grid_records: Vec<GridRecord>,
    pub final_model: MrcModel,
}

/// Accuracy and per-class errors of `model` on `val`.
pub fn evaluate_candidate(model: &MrcModel, val: &Dataset) -> Result<CandidateMetrics> {
    let pred = model.predict_batch(val.features())?;
    Ok(metrics_from_predictions(val.labels(), &pred, val.n_classes().max(model.n_classes())))
}

fn metrics_from_predictions(y_true: &[usize], y_pred: &[usize], n_classes: usize) -> CandidateMetrics {
    let class_errors: Vec<Option<f64>> = per_class_errors(y_true, y_pred, n_classes)
        .into_iter()
        .map(|e| (!e.is_nan()).then_some(e))
        .collect();
    let worst_class_error = class_errors.iter().flatten().copied().fold(0.0, f64::max);
    CandidateMetrics {
        accuracy: accuracy(y_true, y_pred),
        class_errors,
        worst_class_error,
    }
}

/// Index of the chosen candidate; `None` entries (failed trainings) are
/// never chosen. Ties go to higher accuracy, then the lower index.
pub fn select(records: &[Option<CandidateMetrics>], strategy: Strategy, tolerance: f64, top_n: usize) -> Result<usize> {
    let ok: Vec<(usize, &CandidateMetrics)> = records
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.as_ref().map(|m| (i, m)))
        .collect();
    if ok.is_empty() {
        return invalid("no candidate to select from");
    }
    let by_accuracy = |a: &(usize, &CandidateMetrics), b: &(usize, &CandidateMetrics)| {
        b.1.accuracy.total_cmp(&a.1.accuracy).then(a.0.cmp(&b.0))
    };
    let by_wce = |a: &(usize, &CandidateMetrics), b: &(usize, &CandidateMetrics)| {
        a.1.worst_class_error
            .total_cmp(&b.1.worst_class_error)
            .then(b.1.accuracy.total_cmp(&a.1.accuracy))
            .then(a.0.cmp(&b.0))
    };
    let chosen = match strategy {
        Strategy::Acc => ok.iter().copied().min_by(by_accuracy),
        Strategy::Wce => ok.iter().copied().min_by(by_wce),
        Strategy::WceTA => {
            let best = ok.iter().map(|r| r.1.worst_class_error).fold(f64::INFINITY, f64::min);
            let band = best + tolerance;
            ok.iter()
                .copied()
                .filter(|r| r.1.worst_class_error <= band)
                .min_by(by_accuracy)
                .or_else(|| ok.iter().copied().min_by(by_wce))
        }
        Strategy::TopnWce => {
            let mut ranked = ok.clone();
            ranked.sort_by(by_accuracy);
            ranked.truncate(top_n);
            ranked.into_iter().min_by(by_wce)
        }
    };
    Ok(chosen.expect("non-empty candidate list").0)
}

struct Trained {
    model: Option<MrcModel>,
    record: GridRecord,
}

fn train_candidate(
    blocks: &ndarray::Array2<f64>,
    train: &Dataset,
    val: &Dataset,
    map: &SpectralMap,
    lambda0: f64,
    cfg: &TuneConfig,
    stage: u8,
    index: usize,
) -> Trained {
    let sigma = map.sigma().unwrap_or(f64::NAN);
    let outcome = train_on_blocks(blocks, train.labels(), map, lambda0, &cfg.solver)
        .and_then(|m| evaluate_candidate(&m, val).map(|metrics| (m, metrics)));
    match outcome {
        Ok((model, metrics)) => Trained {
            record: GridRecord {
                stage,
                index,
                sigma,
                lambda0,
                metrics: Some(metrics),
                worst_case_risk: Some(model.worst_case_risk),
                iterations: Some(model.solver_meta.iterations),
                error: None,
            },
            model: Some(model),
        },
        Err(e) => Trained {
            model: None,
            record: GridRecord {
                stage,
                index,
                sigma,
                lambda0,
                metrics: None,
                worst_case_risk: None,
                iterations: None,
                error: Some(e.to_string()),
            },
        },
    }
}

/// Stage 1 trains one model per σ at `lambda0_init`; stage 2 trains one per
/// λ₀ at the selected σ. The stage-2 winner is the final model, so exactly
/// |σ| + |λ₀| models are trained.
pub fn tune(train: &Dataset, val: &Dataset, cfg: &TuneConfig) -> Result<TuneResult> {
    tune_observed(train, val, cfg, &mut |_| {})
}

/// [`tune`] that hands every grid record to `observe` as soon as it
/// exists, so callers keep partial results when a stage fails.
pub fn tune_observed(
    train: &Dataset,
    val: &Dataset,
    cfg: &TuneConfig,
    observe: &mut dyn FnMut(&GridRecord),
) -> Result<TuneResult> {
    cfg.validate()?;
    if val.is_empty() || val.distinct_labels() < 2 {
        return invalid("validation set must contain at least two classes");
    }
    if train.dim() != val.dim() {
        return invalid("training and validation sets differ in feature dimension");
    }
    let n_classes = train.n_classes().max(val.n_classes());
    let mut records = Vec::with_capacity(cfg.sigma_values.len() + cfg.lambda_values.len());

    let mut stage1 = Vec::with_capacity(cfg.sigma_values.len());
    for (i, &sigma) in cfg.sigma_values.iter().enumerate() {
        let map = SpectralMap::fourier(train.dim(), cfg.n_freq, sigma, n_classes, cfg.seed)?;
        let blocks = map.block_matrix(train.features())?;
        let t = train_candidate(&blocks, train, val, &map, cfg.lambda0_init, cfg, 1, i);
        observe(&t.record);
        stage1.push(t.record.metrics.clone());
        records.push(t.record);
    }
    let s = select(&stage1, cfg.strategy, cfg.tolerance, cfg.top_n).map_err(|_| all_failed(1, &records))?;
    let sigma_star = cfg.sigma_values[s];

    let map = SpectralMap::fourier(train.dim(), cfg.n_freq, sigma_star, n_classes, cfg.seed)?;
    let blocks = map.block_matrix(train.features())?;
    let mut stage2 = Vec::with_capacity(cfg.lambda_values.len());
    let mut models = Vec::with_capacity(cfg.lambda_values.len());
    for (k, &lambda0) in cfg.lambda_values.iter().enumerate() {
        let t = train_candidate(&blocks, train, val, &map, lambda0, cfg, 2, k);
        observe(&t.record);
        stage2.push(t.record.metrics.clone());
        records.push(t.record);
        models.push(t.model);
    }
    let strategy = cfg.lambda_strategy.unwrap_or(cfg.strategy);
    let k = select(&stage2, strategy, cfg.tolerance, cfg.top_n).map_err(|_| all_failed(2, &records))?;
    let final_model = models[k].take().expect("selected candidate trained");
    Ok(TuneResult {
        sigma_star,
        lambda0_star: cfg.lambda_values[k],
        grid_records: records,
        final_model,
    })
}

fn all_failed(stage: u8, records: &[GridRecord]) -> Error {
    let first = records
        .iter()
        .filter(|r| r.stage == stage)
        .find_map(|r| r.error.clone())
        .unwrap_or_default();
    Error::Solver(format!("every stage-{stage} candidate failed to train; first error: {first}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_toy, split, SplitSpec};

    fn m(acc: f64, wce: f64) -> Option<CandidateMetrics> {
        Some(CandidateMetrics {
            accuracy: acc,
            class_errors: vec![Some(wce)],
            worst_class_error: wce,
        })
    }

    #[test]
    fn strategy_definitions() {
        let r = vec![m(0.8, 0.4), m(0.7, 0.2)];
        assert_eq!(select(&r, Strategy::Acc, 0.05, 5).unwrap(), 0);
        assert_eq!(select(&r, Strategy::Wce, 0.05, 5).unwrap(), 1);
        assert_eq!(select(&r, Strategy::TopnWce, 0.05, 5).unwrap(), select(&r, Strategy::Wce, 0.05, 5).unwrap());
        assert_eq!(select(&r, Strategy::TopnWce, 0.05, 1).unwrap(), 0);
    }

    #[test]
    fn tolerance_band() {
        let r = vec![m(0.70, 0.20), m(0.75, 0.24), m(0.90, 0.26), m(0.72, 0.21)];
        assert_eq!(select(&r, Strategy::WceTA, 0.05, 5).unwrap(), 1);
        assert_eq!(select(&r, Strategy::WceTA, 0.0, 5).unwrap(), 0);
        assert_eq!(select(&r, Strategy::WceTA, 0.1, 5).unwrap(), 2);
    }

    #[test]
    fn ties_and_failures() {
        let r = vec![None, m(0.7, 0.3), m(0.8, 0.3), m(0.8, 0.3)];
        assert_eq!(select(&r, Strategy::Wce, 0.05, 5).unwrap(), 2);
        assert_eq!(select(&r, Strategy::Acc, 0.05, 5).unwrap(), 2);
        assert!(select(&[None, None], Strategy::Acc, 0.05, 5).is_err());
    }

    #[test]
    fn dominant_candidate_wins_under_acc() {
        let r = vec![m(0.6, 0.1), m(0.9, 0.5), m(0.7, 0.2)];
        assert_eq!(select(&r, Strategy::Acc, 0.05, 5).unwrap(), 1);
    }

    #[test]
    fn candidate_metrics_examples() {
        let perfect = metrics_from_predictions(&[0, 1, 1, 0], &[0, 1, 1, 0], 2);
        assert_eq!(perfect.accuracy, 1.0);
        assert_eq!(perfect.class_errors, vec![Some(0.0), Some(0.0)]);
        let constant = metrics_from_predictions(&[0, 1, 0, 1], &[0, 0, 0, 0], 2);
        assert_eq!(constant.accuracy, 0.5);
        assert_eq!(constant.worst_class_error, 1.0);
    }

    #[test]
    fn strategy_names_parse() {
        assert_eq!("wce+t+a".parse::<Strategy>().unwrap(), Strategy::WceTA);
        assert_eq!("TOPN_WCE".parse::<Strategy>().unwrap(), Strategy::TopnWce);
        assert!("best".parse::<Strategy>().is_err());
        assert_eq!(serde_json::to_string(&Strategy::WceTA).unwrap(), "\"WCE_T_A\"");
    }

    #[test]
    fn training_counts_and_determinism() {
        let ds = generate_toy(200, 4).unwrap();
        let sets = split(&ds, &SplitSpec::default()).unwrap().standardize();
        let mut cfg = TuneConfig::with_default_grids(&sets.train, Strategy::Wce, 1).unwrap();
        cfg.sigma_values.truncate(3);
        cfg.lambda_values = vec![0.1, 0.5];
        cfg.n_freq = 20;
        let a = tune(&sets.train, &sets.val, &cfg).unwrap();
        assert_eq!(a.grid_records.len(), 5);
        assert_eq!(a.grid_records.iter().filter(|r| r.stage == 1).count(), 3);
        assert!(cfg.sigma_values.contains(&a.sigma_star));
        assert_eq!(a.final_model.lambda0, a.lambda0_star);
        assert_eq!(a.final_model.map.sigma(), Some(a.sigma_star));
        let b = tune(&sets.train, &sets.val, &cfg).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn singleton_grids() {
        let ds = generate_toy(120, 5).unwrap();
        let sets = split(&ds, &SplitSpec::default()).unwrap().standardize();
        let mut cfg = TuneConfig::with_default_grids(&sets.train, Strategy::Acc, 0).unwrap();
        cfg.sigma_values = vec![0.7];
        cfg.lambda_values = vec![0.2];
        cfg.n_freq = 10;
        let r = tune(&sets.train, &sets.val, &cfg).unwrap();
        assert_eq!((r.sigma_star, r.lambda0_star, r.grid_records.len()), (0.7, 0.2, 2));
    }
}
