//! Experiment configuration: one TOML file, every field defaulted, with
//! command-line overrides applied on top. The merged result is echoed
//! into every report.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spectre::guarantees::TauSource;
use spectre::lp::SolverConfig;
use spectre::tuner::{Strategy, DEFAULT_GRID_POINTS, DEFAULT_LAMBDA0_INIT, DEFAULT_TOLERANCE, DEFAULT_TOP_N};
use spectre::spectral::DEFAULT_FREQUENCIES;

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    /// Drives the toy generator, the split, the frequency draw and the
    /// audit sample.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub data: DataConfig,
    pub split: SplitConfig,
    pub map: MapConfig,
    pub tune: TuneSettings,
    pub solver: SolverConfig,
    pub bounds: BoundsSettings,
    pub report: ReportSettings,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Toy,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    /// Toy sample size.
    pub n: usize,
    pub path: Option<PathBuf>,
    pub label_column: String,
    /// Sensitive columns; several form intersectional groups. Used for
    /// evaluation and group bounds only, never for training or tuning.
    pub sensitive_columns: Vec<String>,
    /// Columns ignored entirely.
    pub exclude_columns: Vec<String>,
    /// Label counted as positive by EOp and DP; defaults to the last label.
    pub positive_label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub test_fraction: f64,
    pub val_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapConfig {
    pub n_freq: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneSettings {
    pub strategy: Strategy,
    pub lambda_strategy: Option<Strategy>,
    /// Explicit σ grid; when absent, `sigma_points` values around σ_scale.
    pub sigma_values: Option<Vec<f64>>,
    pub sigma_points: usize,
    /// Explicit λ₀ grid; when absent, 10 log-spaced values over [0.01, 1].
    pub lambda_values: Option<Vec<f64>>,
    pub lambda0_init: f64,
    pub tolerance: f64,
    pub top_n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsSettings {
    pub audit_fraction: f64,
    pub tau_source: TauSource,
    /// Compute bounds with only the first this many frequencies.
    pub reduced_frequencies: Option<usize>,
    pub lambda0_grid: Vec<f64>,
    /// σ values for a σ sweep; no σ sweep when absent.
    pub sigma_grid: Option<Vec<f64>>,
    /// Skip group bounds (no sensitive data needed).
    pub overall_only: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSettings {
    /// Side of the decision-boundary raster for 2-feature data; 0 disables.
    pub raster_points: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            output_dir: PathBuf::from("spectre-out"),
            data: DataConfig::default(),
            split: SplitConfig::default(),
            map: MapConfig::default(),
            tune: TuneSettings::default(),
            solver: SolverConfig::default(),
            bounds: BoundsSettings::default(),
            report: ReportSettings::default(),
        }
    }
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Toy,
            n: 1000,
            path: None,
            label_column: "y".into(),
            sensitive_columns: vec!["s".into()],
            exclude_columns: Vec::new(),
            positive_label: None,
        }
    }
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            test_fraction: 0.3,
            val_fraction: 0.2,
        }
    }
}

impl Default for MapConfig {
    fn default() -> Self {
        Self {
            n_freq: DEFAULT_FREQUENCIES,
        }
    }
}

impl Default for TuneSettings {
    fn default() -> Self {
        Self {
            strategy: Strategy::Wce,
            lambda_strategy: None,
            sigma_values: None,
            sigma_points: DEFAULT_GRID_POINTS,
            lambda_values: None,
            lambda0_init: DEFAULT_LAMBDA0_INIT,
            tolerance: DEFAULT_TOLERANCE,
            top_n: DEFAULT_TOP_N,
        }
    }
}

impl Default for BoundsSettings {
    fn default() -> Self {
        Self {
            audit_fraction: 0.3,
            tau_source: TauSource::Audit,
            reduced_frequencies: None,
            lambda0_grid: vec![0.1, 0.5, 1.0, 5.0],
            sigma_grid: None,
            overall_only: false,
        }
    }
}

impl Default for ReportSettings {
    fn default() -> Self {
        Self { raster_points: 100 }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub label_column: Option<String>,
    pub sensitive_columns: Option<Vec<String>>,
    pub n: Option<usize>,
    pub strategy: Option<Strategy>,
    pub n_freq: Option<usize>,
    pub sigma_values: Option<Vec<f64>>,
    pub lambda_values: Option<Vec<f64>>,
    pub audit_fraction: Option<f64>,
    pub tau_source: Option<TauSource>,
    pub reduced_frequencies: Option<usize>,
    pub lambda0_grid: Option<Vec<f64>>,
    pub sigma_grid: Option<Vec<f64>>,
    pub overall_only: bool,
}

impl ExperimentConfig {
    /// Reads `path` (defaults only when None), applies `overrides` and
    /// validates the result.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> CliResult<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::config(format!("{}: {e}", p.display())))?;
                toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", p.display())))?
            }
            None => ExperimentConfig::default(),
        };
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = &o.output_dir {
            self.output_dir = v.clone();
        }
        if let Some(v) = &o.data {
            self.data.source = DataSource::Csv;
            self.data.path = Some(v.clone());
        }
        if let Some(v) = &o.label_column {
            self.data.label_column = v.clone();
        }
        if let Some(v) = &o.sensitive_columns {
            self.data.sensitive_columns = v.clone();
        }
        if let Some(v) = o.n {
            self.data.n = v;
        }
        if let Some(v) = o.strategy {
            self.tune.strategy = v;
        }
        if let Some(v) = o.n_freq {
            self.map.n_freq = v;
        }
        if let Some(v) = &o.sigma_values {
            self.tune.sigma_values = Some(v.clone());
        }
        if let Some(v) = &o.lambda_values {
            self.tune.lambda_values = Some(v.clone());
        }
        if let Some(v) = o.audit_fraction {
            self.bounds.audit_fraction = v;
        }
        if let Some(v) = o.tau_source {
            self.bounds.tau_source = v;
        }
        if let Some(v) = o.reduced_frequencies {
            self.bounds.reduced_frequencies = Some(v);
        }
        if let Some(v) = &o.lambda0_grid {
            self.bounds.lambda0_grid = v.clone();
        }
        if let Some(v) = &o.sigma_grid {
            self.bounds.sigma_grid = Some(v.clone());
        }
        if o.overall_only {
            self.bounds.overall_only = true;
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        let fail = |m: String| Err(CliError::config(m));
        if self.schema_version != SCHEMA_VERSION {
            return fail(format!("unsupported schema_version {} (expected {SCHEMA_VERSION})", self.schema_version));
        }
        match self.data.source {
            DataSource::Toy if self.data.n < 10 => return fail(format!("toy data needs n >= 10, got {}", self.data.n)),
            DataSource::Csv => match &self.data.path {
                None => return fail("data.source = \"csv\" needs data.path".into()),
                Some(p) if !p.is_file() => return fail(format!("data file {} does not exist", p.display())),
                _ => {}
            },
            _ => {}
        }
        let frac = |v: f64| v > 0.0 && v < 1.0;
        if !frac(self.split.test_fraction) || !frac(self.split.val_fraction) {
            return fail("split fractions must lie strictly between 0 and 1".into());
        }
        if self.map.n_freq == 0 {
            return fail("map.n_freq must be positive".into());
        }
        if let Some(s) = &self.tune.sigma_values {
            if s.is_empty() {
                return fail("tune.sigma_values is empty".into());
            }
            if s.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return fail("tune.sigma_values must be positive".into());
            }
        } else if self.tune.sigma_points < 2 {
            return fail("tune.sigma_points must be at least 2".into());
        }
        if let Some(l) = &self.tune.lambda_values {
            if l.is_empty() {
                return fail("tune.lambda_values is empty".into());
            }
            if l.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                return fail("tune.lambda_values must be non-negative".into());
            }
        }
        if !(self.tune.tolerance >= 0.0) || self.tune.top_n == 0 || !(self.tune.lambda0_init >= 0.0) {
            return fail("tune.tolerance and tune.lambda0_init must be non-negative and tune.top_n positive".into());
        }
        self.solver.validate().map_err(|e| CliError::config(e.to_string()))?;
        if !(self.bounds.audit_fraction > 0.0 && self.bounds.audit_fraction <= 1.0) {
            return fail("bounds.audit_fraction must lie in (0, 1]".into());
        }
        if self.bounds.reduced_frequencies == Some(0) {
            return fail("bounds.reduced_frequencies must be positive".into());
        }
        if self.bounds.lambda0_grid.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return fail("bounds.lambda0_grid must be non-negative".into());
        }
        if let Some(s) = &self.bounds.sigma_grid {
            if s.is_empty() || s.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return fail("bounds.sigma_grid must be a non-empty list of positive values".into());
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg: ExperimentConfig = toml::from_str("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        cfg.validate().unwrap();
    }

    #[test]
    fn roundtrip_through_toml() {
        let mut cfg = ExperimentConfig::default();
        cfg.tune.sigma_values = Some(vec![0.5, 1.0]);
        cfg.bounds.reduced_frequencies = Some(50);
        let text = toml::to_string(&cfg).unwrap();
        let back: ExperimentConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_bad_values() {
        let bad = [
            "[tune]\nsigma_values = []",
            "schema_version = 2",
            "[split]\ntest_fraction = 1.5",
            "[data]\nsource = \"csv\"",
            "[data]\nn = 5",
            "[map]\nn_freq = 0",
        ];
        for text in bad {
            let cfg: ExperimentConfig = toml::from_str(text).unwrap();
            assert!(cfg.validate().is_err(), "{text}");
        }
        assert!(toml::from_str::<ExperimentConfig>("unknown_key = 1").is_err());
    }

    #[test]
    fn overrides_win() {
        let mut cfg = ExperimentConfig::default();
        cfg.apply(&Overrides {
            seed: Some(9),
            strategy: Some(Strategy::Acc),
            lambda0_grid: Some(vec![0.2]),
            ..Overrides::default()
        });
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.tune.strategy, Strategy::Acc);
        assert_eq!(cfg.bounds.lambda0_grid, vec![0.2]);
    }
}
