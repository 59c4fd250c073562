//! Experiment driver: configuration, seeds, estimators, sweeps and reports.
//!
//! Every task runs from an [`ExperimentConfig`]; results go to a CSV file
//! whose path is checked for writability before any computation starts.

pub mod arms;
pub mod config;
pub mod runner;
pub mod seed;
pub mod studies;

use std::path::PathBuf;

use thiserror::Error;

pub use arms::{fit_arm, ArmError, ArmOutcome, ArmSettings, FittedModel};
pub use config::{parse_config, parse_config_for, Arm, ConfigErrors, ExperimentConfig, Task};
pub use runner::{run_experiment, ExperimentReport, ResultRow};
pub use seed::derive_seed;

use crate::data::DataError;
use crate::earlystop::EarlyStopError;
use crate::linalg::LinalgError;
use crate::network::NetworkError;
use crate::ntk::NtkError;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("cannot write output {}: {source}", path.display())]
    OutputUnwritable {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid configuration:\n{0}")]
    Config(ConfigErrors),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Ntk(#[from] NtkError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    EarlyStop(#[from] EarlyStopError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Arm(#[from] ArmError),
    #[error("rate fit needs at least two distinct sample sizes; got {points}")]
    DegenerateFit { points: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

impl From<ConfigErrors> for ExperimentError {
    fn from(e: ConfigErrors) -> Self {
        ExperimentError::Config(e)
    }
}

/// What a task produced, for the caller to summarize.
#[derive(Debug, Clone)]
pub enum TaskOutcome {
    Sweep(ExperimentReport),
    RateStudy(studies::RateStudyReport),
    Eigendecay(studies::EigendecayReport),
    StoppingCurve(studies::StoppingCurveReport),
}

/// Runs `config.task` and writes its CSV to `config.output`.
pub fn run_task(config: &ExperimentConfig) -> Result<TaskOutcome, ExperimentError> {
    Ok(match config.task {
        Task::Simulate | Task::Mnist => TaskOutcome::Sweep(run_experiment(config)?),
        Task::RateStudy => TaskOutcome::RateStudy(studies::run_rate_study(config)?),
        Task::Eigendecay => TaskOutcome::Eigendecay(studies::run_eigendecay(config)?),
        Task::StoppingCurve => TaskOutcome::StoppingCurve(studies::run_stopping_curve(config)?),
    })
}

impl TaskOutcome {
    /// A short human-readable digest.
    pub fn summary(&self, config: &ExperimentConfig) -> String {
        let mut s = String::new();
        match self {
            TaskOutcome::Sweep(r) => {
                s.push_str(&format!("{:<8} {:>8} {:>14} {:>7}\n", "arm", "sigma", r.metric.column(), "failed"));
                for &arm in &config.arms {
                    for &sigma in &config.sigmas {
                        let failed = r
                            .rows
                            .iter()
                            .filter(|x| x.arm == arm && x.sigma == sigma && x.metric.is_none())
                            .count();
                        let mean = r
                            .mean_metric(arm, sigma)
                            .map_or("-".to_string(), |m| format!("{m:.6}"));
                        s.push_str(&format!("{:<8} {sigma:>8} {mean:>14} {failed:>7}\n", arm.name()));
                    }
                }
            }
            TaskOutcome::RateStudy(r) => {
                for p in &r.per_sigma {
                    let fit = p.fit.map_or("slope unavailable".to_string(), |f| {
                        format!("slope {:.4}, r² {:.4}", f.slope, f.r_squared)
                    });
                    s.push_str(&format!("sigma {}: c = {}, {fit}\n", p.sigma, p.c));
                }
            }
            TaskOutcome::Eigendecay(r) => {
                let fit = r.fit.map_or("slope unavailable".to_string(), |f| {
                    format!("mid-spectrum slope {:.4}, r² {:.4}", f.slope, f.r_squared)
                });
                s.push_str(&format!("n = {}, d = {}: {fit}\n", r.n, r.d));
            }
            TaskOutcome::StoppingCurve(r) => {
                for row in &r.rows {
                    let k = row.k_star.map_or("not found".to_string(), |k| k.to_string());
                    s.push_str(&format!(
                        "sigma {} replication {}: k* = {k}\n",
                        row.sigma, row.replication
                    ));
                }
            }
        }
        s
    }
}
