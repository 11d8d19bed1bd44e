use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spectre::guarantees::TauSource;
use spectre::tuner::Strategy;
use spectre_cli::commands;
use spectre_cli::{CliError, CliResult, ExperimentConfig, Overrides};

/// Minimax-fair classification without demographic data, with certified
/// group error bounds.
#[derive(Parser)]
#[command(name = "spectre", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the two-group toy dataset as CSV (columns x1, x2, s, y).
    GenToy {
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "toy.csv")]
        out: PathBuf,
    },
    /// Tune σ and λ₀ blind to sensitive data, train the final model and
    /// write model.json, report.json and grid/boundary tables.
    TuneTrain(ExperimentArgs),
    /// Group and overall error bounds of a trained model, with λ₀ and σ sweeps.
    Bounds {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Model file; defaults to model.json in the output directory.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Accuracy and fairness metrics of a trained model on a labelled CSV.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Label column; defaults to the one the model was trained with.
        #[arg(long)]
        label_column: Option<String>,
        /// Sensitive columns to report group metrics for.
        #[arg(long, value_delimiter = ',')]
        sensitive: Vec<String>,
        #[arg(long, default_value = "metrics.json")]
        out: PathBuf,
    },
    /// Predicted labels and class probabilities for a CSV.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "predictions.csv")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct ExperimentArgs {
    /// TOML experiment file; every field has a default.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// CSV input (switches the data source from the toy generator).
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    label_column: Option<String>,
    #[arg(long, value_delimiter = ',')]
    sensitive: Option<Vec<String>>,
    /// Toy sample size.
    #[arg(long)]
    n: Option<usize>,
    /// ACC, WCE, WCE_T_A or TOPN_WCE.
    #[arg(long)]
    strategy: Option<Strategy>,
    #[arg(long)]
    n_freq: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    sigma_values: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    lambda_values: Option<Vec<f64>>,
    #[arg(long)]
    audit_fraction: Option<f64>,
    /// `audit` or `training`.
    #[arg(long, value_parser = parse_tau_source)]
    tau_source: Option<TauSource>,
    #[arg(long)]
    reduced_frequencies: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    lambda0_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    sigma_grid: Option<Vec<f64>>,
    /// Only the overall bound; needs no sensitive column.
    #[arg(long)]
    overall_only: bool,
}

fn parse_tau_source(s: &str) -> Result<TauSource, String> {
    match s {
        "audit" => Ok(TauSource::Audit),
        "training" => Ok(TauSource::Training),
        _ => Err(format!("expected `audit` or `training`, got `{s}`")),
    }
}

impl ExperimentArgs {
    fn load(&self) -> CliResult<ExperimentConfig> {
        let o = Overrides {
            seed: self.seed,
            output_dir: self.output_dir.clone(),
            data: self.data.clone(),
            label_column: self.label_column.clone(),
            // `--sensitive ''` clears the list.
            sensitive_columns: self
                .sensitive
                .as_ref()
                .map(|v| v.iter().filter(|s| !s.is_empty()).cloned().collect()),
            n: self.n,
            strategy: self.strategy,
            n_freq: self.n_freq,
            sigma_values: self.sigma_values.clone(),
            lambda_values: self.lambda_values.clone(),
            audit_fraction: self.audit_fraction,
            tau_source: self.tau_source,
            reduced_frequencies: self.reduced_frequencies,
            lambda0_grid: self.lambda0_grid.clone(),
            sigma_grid: self.sigma_grid.clone(),
            overall_only: self.overall_only,
        };
        ExperimentConfig::load(self.config.as_deref(), &o)
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::GenToy { n, seed, out } => {
            commands::gen_toy(n, seed, &out)?;
            eprintln!("wrote {}", out.display());
        }
        Command::TuneTrain(args) => {
            let cfg = args.load()?;
            let out = commands::tune_train(&cfg)?;
            let r = &out.report;
            eprintln!(
                "σ* = {}, λ₀* = {}, test accuracy {:.4}",
                r.sigma_star, r.lambda0_star, r.metrics.test.accuracy
            );
            for f in &out.files {
                eprintln!("wrote {}", f.display());
            }
        }
        Command::Bounds { exp, model } => {
            let cfg = exp.load()?;
            let model = model.unwrap_or_else(|| cfg.output_dir.join(commands::MODEL_FILE));
            let report = commands::bounds(&cfg, &model)?;
            for r in &report.at_model.records {
                eprintln!(
                    "{}: [{}, {}]",
                    r.group.as_deref().unwrap_or("overall"),
                    fmt_opt(r.lower),
                    fmt_opt(r.upper)
                );
            }
            eprintln!("wrote {}", cfg.output_dir.join(commands::BOUNDS_JSON).display());
        }
        Command::Evaluate {
            model,
            data,
            label_column,
            sensitive,
            out,
        } => {
            let r = commands::evaluate(&model, &data, label_column.as_deref(), &sensitive, &out)?;
            eprintln!("accuracy {:.4}; wrote {}", r.metrics.accuracy, out.display());
        }
        Command::Predict { model, data, out } => {
            commands::predict(&model, &data, &out)?;
            eprintln!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.4}"))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::config(e.to_string().trim_end().to_string());
            eprintln!("{}", err.record());
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.record());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
