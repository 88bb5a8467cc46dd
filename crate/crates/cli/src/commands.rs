//! The four verbs. Each returns the text it would print so tests can run
//! them in-process.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::config::{CalibSplit, ExperimentConfig};
use crate::data::apply_dataset_arg;
use crate::error::CliError;
use crate::experiment::{evaluate_split, model_stem, prepare, run_setting, Prepared, SplitOutcome, TrainedModel};
use crate::output::{
    metric_rows, recal_rows, summarize, write_reliability, write_rows, MetricRow, RecalRow, CURVE_CSV, METRICS_CSV,
    RECALIBRATION_CSV, RELIABILITY_CSV, SUMMARY_CSV,
};
use crate::report::{self, metric_tables, recal_table, render_csv, render_text, spearman, REPORT_CSV, REPORT_TXT};

pub const MODELS_DIR: &str = "models";

#[derive(Debug, Parser)]
#[command(name = "qrcal", version, about = "Calibrated regression experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train λ=0 and λ=train.lambda (or just --lambda) on every split.
    Train(Common),
    /// Refit isotonic maps for trained models and report pre/post error.
    Recalibrate(Common),
    /// Train every λ in the config's `lambdas` list.
    Sweep(Common),
    /// Render mean ± std tables from a results directory.
    Report {
        /// Results directory (defaults to --out or the config's out_dir).
        dir: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CalibSplitArg {
    Train,
    Holdout,
}

#[derive(Debug, Default, Args)]
pub struct Common {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Synthetic generator, descriptor name, descriptor `.toml` or CSV path.
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Sets the data, split and training seeds.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub desk_scale: bool,
    #[arg(long, value_enum)]
    pub calib_split: Option<CalibSplitArg>,
}

impl Common {
    /// Config file (or defaults) with command-line overrides applied.
    pub fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(d) = &self.dataset {
            apply_dataset_arg(&mut cfg.dataset, d);
        }
        if let Some(s) = self.seed {
            cfg.dataset.seed = s;
            cfg.splits.seed = s;
            cfg.train.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
        }
        if let Some(c) = self.calib_split {
            cfg.calib_split = match c {
                CalibSplitArg::Train => CalibSplit::Train,
                CalibSplitArg::Holdout => CalibSplit::Holdout,
            };
        }
        if let Some(l) = self.lambda {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(CliError::Usage(format!("--lambda must be finite and nonnegative, got {l}")));
            }
        }
        if self.desk_scale || cfg.desk_scale {
            cfg.apply_desk_scale();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// λ settings for `train` and `recalibrate`: the baseline and the configured
/// regularized model, unless one value is forced.
pub fn train_lambdas(cfg: &ExperimentConfig, forced: Option<f64>) -> Vec<f64> {
    match forced {
        Some(l) => vec![l],
        None if cfg.train.lambda == 0.0 => vec![0.0],
        None => vec![0.0, cfg.train.lambda],
    }
}

/// Result of a training run.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub label: String,
    pub rows: Vec<MetricRow>,
    pub outcomes: Vec<SplitOutcome>,
}

fn run_lambdas(cfg: &ExperimentConfig, prep: &Prepared, lambdas: &[f64]) -> Result<RunResult, CliError> {
    let mut outcomes = Vec::new();
    for &l in lambdas {
        outcomes.extend(run_setting(cfg, prep, l)?);
    }
    let model_dir = cfg.out_dir.join(MODELS_DIR);
    for o in &outcomes {
        o.model.save(&model_dir, &model_stem(&prep.label, cfg, o.lambda, o.split))?;
    }
    let model = cfg.model.as_str();
    let rows = metric_rows(&prep.label, model, &outcomes);
    write_rows(&cfg.out_dir.join(METRICS_CSV), &rows)?;
    write_rows(&cfg.out_dir.join(SUMMARY_CSV), &summarize(&rows))?;
    write_reliability(&cfg.out_dir.join(RELIABILITY_CSV), &prep.label, model, &outcomes)?;
    std::fs::write(cfg.out_dir.join("config.toml"), cfg.to_toml_string()).map_err(CliError::io(&cfg.out_dir))?;
    Ok(RunResult {
        label: prep.label.clone(),
        rows,
        outcomes,
    })
}

pub fn cmd_train(cfg: &ExperimentConfig, lambdas: &[f64]) -> Result<RunResult, CliError> {
    let prep = prepare(cfg)?;
    run_lambdas(cfg, &prep, lambdas)
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    pub run: RunResult,
    /// Rank correlation between λ and the mean calibration error.
    pub spearman: f64,
}

pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<SweepResult, CliError> {
    if cfg.lambdas.is_empty() {
        return Err(CliError::Config("lambdas must not be empty for a sweep".into()));
    }
    let prep = prepare(cfg)?;
    let run = run_lambdas(cfg, &prep, &cfg.lambdas)?;
    let summary = summarize(&run.rows);
    #[derive(serde::Serialize)]
    struct CurvePoint {
        lambda: f64,
        calib_error_mean: f64,
        calib_error_std: f64,
        rmse_mean: f64,
        rmse_std: f64,
        nll_mean: f64,
        nll_std: f64,
    }
    let curve: Vec<CurvePoint> = summary
        .iter()
        .map(|s| CurvePoint {
            lambda: s.lambda,
            calib_error_mean: s.calib_error_mean,
            calib_error_std: s.calib_error_std,
            rmse_mean: s.rmse_mean,
            rmse_std: s.rmse_std,
            nll_mean: s.nll_mean,
            nll_std: s.nll_std,
        })
        .collect();
    write_rows(&cfg.out_dir.join(CURVE_CSV), &curve)?;
    let xs: Vec<f64> = curve.iter().map(|c| c.lambda).collect();
    let ys: Vec<f64> = curve.iter().map(|c| c.calib_error_mean).collect();
    Ok(SweepResult {
        run,
        spearman: if xs.len() > 1 { spearman(&xs, &ys) } else { f64::NAN },
    })
}

/// Reloads the models written by `train` and evaluates isotonic
/// recalibration on every split.
pub fn cmd_recalibrate(cfg: &ExperimentConfig, lambdas: &[f64]) -> Result<Vec<RecalRow>, CliError> {
    let prep = prepare(cfg)?;
    let model_dir = cfg.out_dir.join(MODELS_DIR);
    let mut outcomes = Vec::new();
    for &l in lambdas {
        let per_split: Vec<SplitOutcome> = prep
            .splits
            .par_iter()
            .map(|s| {
                let stem = model_stem(&prep.label, cfg, l, s.index);
                let model = TrainedModel::load(cfg.model, cfg.ensemble.size, &model_dir, &stem)?;
                evaluate_split(cfg, &prep.data, s, l, model)
            })
            .collect::<Result<_, _>>()?;
        outcomes.extend(per_split);
    }
    let rows = recal_rows(&prep.label, cfg.model.as_str(), &outcomes);
    write_rows(&cfg.out_dir.join(RECALIBRATION_CSV), &rows)?;
    Ok(rows)
}

pub fn cmd_report(dir: &Path) -> Result<String, CliError> {
    let tables = report::load_tables(dir)?;
    let text = render_text(&tables);
    std::fs::write(dir.join(REPORT_TXT), &text).map_err(CliError::io(dir))?;
    std::fs::write(dir.join(REPORT_CSV), render_csv(&tables)?).map_err(CliError::io(dir))?;
    Ok(text)
}

/// Parses nothing; runs an already parsed command and returns stdout text.
pub fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Train(c) => {
            let cfg = c.resolve()?;
            let r = cmd_train(&cfg, &train_lambdas(&cfg, c.lambda))?;
            Ok(render_text(&metric_tables(&r.rows)))
        }
        Command::Sweep(c) => {
            let mut cfg = c.resolve()?;
            if let Some(l) = c.lambda {
                cfg.lambdas = vec![l];
            }
            let r = cmd_sweep(&cfg)?;
            let mut text = render_text(&metric_tables(&r.run.rows));
            let _ = writeln!(text, "spearman(lambda, mean calibration error) = {:.4}", r.spearman);
            Ok(text)
        }
        Command::Recalibrate(c) => {
            let cfg = c.resolve()?;
            let rows = cmd_recalibrate(&cfg, &train_lambdas(&cfg, c.lambda))?;
            let mut text = render_text(&[recal_table(&rows)]);
            for r in rows.iter().filter(|r| !r.worse.is_empty()) {
                let _ = writeln!(
                    text,
                    "* {} lambda={} split {}: {:.4} -> {:.4}",
                    r.dataset, r.lambda, r.split, r.calib_error, r.calib_error_iso
                );
            }
            Ok(text)
        }
        Command::Report { dir, common } => {
            let dir = match dir {
                Some(d) => d,
                None => common.resolve()?.out_dir,
            };
            cmd_report(&dir)
        }
    }
}
