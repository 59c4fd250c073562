//! The five estimators and validation-based selection of `μ`.

use thiserror::Error;

use crate::cli::config::{Arm, DecayStep, NetworkParams, Optimizer, StepSize};
use crate::data::{normalize_unit, DataError, Dataset};
use crate::earlystop::{self, EarlyStopError};
use crate::linalg::{self, dot, Cholesky, LinalgError, SymMatrix};
use crate::network::{
    self, init_network, network_gram, NetworkError, NetworkState, TrainConfig, UpdateRule,
};
use crate::ntk::{self, KernelMode, KernelModel, Ntk, NtkError};

/// Largest training set for which the automatic step uses the exact top
/// eigenvalue; larger sets use the Gershgorin row-sum bound.
const EXACT_STEP_MAX_N: usize = 400;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArmError {
    #[error(transparent)]
    Ntk(#[from] NtkError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    EarlyStop(#[from] EarlyStopError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("{0}")]
    Data(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("arm {0} needs a validation set")]
    MissingValidation(Arm),
    #[error("every grid value failed; first error: {0}")]
    AllGridPointsFailed(String),
}

impl From<DataError> for ArmError {
    fn from(e: DataError) -> Self {
        ArmError::Data(e.to_string())
    }
}

/// Estimator-independent settings shared by every cell of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmSettings {
    pub kernel: Ntk,
    /// Scale kernel-path inputs to unit norm first.
    pub normalize_kernel_inputs: bool,
    pub mu_grid: Vec<f64>,
    pub onn_mu_grid: Vec<f64>,
    pub kernel_eta: f64,
    pub k_cap: usize,
    pub network: NetworkParams,
}

#[derive(Debug, Clone)]
pub enum FittedModel {
    Kernel { model: KernelModel, normalize: bool },
    Network(NetworkState),
}

impl FittedModel {
    pub fn predict_batch(&self, inputs: &[Vec<f64>]) -> Result<Vec<f64>, ArmError> {
        match self {
            FittedModel::Kernel { model, normalize } => {
                let owned;
                let xs = if *normalize {
                    owned = normalize_unit(inputs)?;
                    &owned
                } else {
                    inputs
                };
                Ok(xs.iter().map(|x| model.predict(x)).collect::<Result<_, _>>()?)
            }
            FittedModel::Network(state) => Ok(network::predict_batch(state, inputs)?),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvPoint {
    pub mu: f64,
    /// Validation mean squared error, or the error that grid value hit.
    pub val_mse: Result<f64, String>,
}

#[derive(Debug, Clone)]
pub struct CvResult {
    pub best_mu: f64,
    pub curve: Vec<CvPoint>,
    pub model: FittedModel,
    pub train_loss: f64,
}

#[derive(Debug, Clone)]
pub struct ArmOutcome {
    pub model: FittedModel,
    pub chosen_mu: Option<f64>,
    pub k_star: Option<usize>,
    /// `½‖u − y‖₂²` on the training set.
    pub train_loss: f64,
    /// Non-fatal notice (e.g. a stopping-time fallback).
    pub note: Option<String>,
    pub cv_curve: Option<Vec<CvPoint>>,
}

fn half_sq_residual(u: &[f64], y: &[f64]) -> f64 {
    0.5 * u.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
}

fn mse(u: &[f64], y: &[f64]) -> f64 {
    2.0 * half_sq_residual(u, y) / y.len() as f64
}

fn kernel_inputs(settings: &ArmSettings, inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, ArmError> {
    if settings.normalize_kernel_inputs {
        Ok(normalize_unit(inputs)?)
    } else {
        Ok(inputs.to_vec())
    }
}

/// Keeps the best finite score; ties go to the larger `μ`.
fn better(score: f64, mu: f64, best: Option<(f64, f64)>) -> bool {
    match best {
        None => true,
        Some((s, m)) => score < s || (score == s && mu > m),
    }
}

/// Fits `arm` once per grid value on `train`, scores each fit by mean
/// squared error against `val`'s labels and keeps the minimizer. A grid
/// value that fails is recorded in the curve and skipped.
pub fn cross_validate_mu(
    train: &Dataset,
    val: &Dataset,
    grid: &[f64],
    arm: Arm,
    settings: &ArmSettings,
    seed: u64,
) -> Result<CvResult, ArmError> {
    if grid.is_empty() {
        return Err(ArmError::InvalidParameter("empty μ grid".into()));
    }
    match arm {
        Arm::NtkL2 => cv_kernel(train, val, grid, settings),
        Arm::OnnL2 => cv_network(train, val, grid, settings, seed),
        other => Err(ArmError::InvalidParameter(format!(
            "arm {other} has no tuning parameter"
        ))),
    }
}

fn cv_kernel(
    train: &Dataset,
    val: &Dataset,
    grid: &[f64],
    settings: &ArmSettings,
) -> Result<CvResult, ArmError> {
    let kernel = settings.kernel;
    let xs = kernel_inputs(settings, &train.inputs)?;
    let vx = kernel_inputs(settings, &val.inputs)?;
    let gram = kernel.gram(&xs)?;
    let kval: Vec<Vec<f64>> = vx
        .iter()
        .map(|x| kernel.row(x, &xs))
        .collect::<Result<_, _>>()?;
    let y = &train.noisy_labels;

    let mut curve = Vec::with_capacity(grid.len());
    let mut best: Option<(f64, f64)> = None;
    let mut best_coeffs = None;
    for &mu in grid {
        let fit = Cholesky::factor(&gram.add_to_diagonal(mu)).and_then(|c| c.solve(y));
        match fit {
            Ok(coeffs) => {
                let pred: Vec<f64> = kval.iter().map(|k| dot(k, &coeffs)).collect();
                let score = mse(&pred, &val.noisy_labels);
                if score.is_finite() && better(score, mu, best) {
                    best = Some((score, mu));
                    best_coeffs = Some(coeffs);
                }
                curve.push(CvPoint { mu, val_mse: Ok(score) });
            }
            Err(e) => curve.push(CvPoint {
                mu,
                val_mse: Err(e.to_string()),
            }),
        }
    }
    let (Some((_, mu)), Some(coeffs)) = (best, best_coeffs) else {
        return Err(all_failed(&curve));
    };
    let mode = if mu == 0.0 {
        KernelMode::Interpolate
    } else {
        KernelMode::Ridge
    };
    let model = KernelModel::from_parts(kernel, xs, gram, mu, coeffs, mode)?;
    let train_loss = half_sq_residual(&model.fitted_values(), y);
    Ok(CvResult {
        best_mu: mu,
        curve,
        model: FittedModel::Kernel {
            model,
            normalize: settings.normalize_kernel_inputs,
        },
        train_loss,
    })
}

fn all_failed(curve: &[CvPoint]) -> ArmError {
    let first = curve
        .iter()
        .find_map(|p| p.val_mse.clone().err())
        .unwrap_or_else(|| "no finite validation score".into());
    ArmError::AllGridPointsFailed(first)
}

fn cv_network(
    train: &Dataset,
    val: &Dataset,
    grid: &[f64],
    settings: &ArmSettings,
    seed: u64,
) -> Result<CvResult, ArmError> {
    let init = init_network(settings.network.width, train.dim(), settings.network.tau, seed)?;
    let eta1 = resolve_eta1(&settings.network, &init, train)?;
    let mut curve = Vec::with_capacity(grid.len());
    let mut best: Option<(f64, f64)> = None;
    let mut best_fit = None;
    for &mu in grid {
        let run = train_network(&settings.network, init.clone(), train, eta1, mu, true, seed)
            .and_then(|(state, loss)| {
                let pred = network::predict_batch(&state, &val.inputs)?;
                Ok((state, loss, mse(&pred, &val.noisy_labels)))
            });
        match run {
            Ok((state, loss, score)) => {
                if score.is_finite() && better(score, mu, best) {
                    best = Some((score, mu));
                    best_fit = Some((state, loss));
                }
                curve.push(CvPoint { mu, val_mse: Ok(score) });
            }
            Err(e) => curve.push(CvPoint {
                mu,
                val_mse: Err(e.to_string()),
            }),
        }
    }
    let (Some((_, mu)), Some((state, train_loss))) = (best, best_fit) else {
        return Err(all_failed(&curve));
    };
    Ok(CvResult {
        best_mu: mu,
        curve,
        model: FittedModel::Network(state),
        train_loss,
    })
}

/// Data-fit step for GD rules; the learning rate is used for RMSProp.
pub fn resolve_eta1(
    params: &NetworkParams,
    init: &NetworkState,
    train: &Dataset,
) -> Result<f64, ArmError> {
    match (params.optimizer, params.eta1) {
        (Optimizer::RmsProp, _) => Ok(params.learning_rate),
        (Optimizer::Gd, StepSize::Fixed(eta)) => Ok(eta),
        (Optimizer::Gd, StepSize::Auto) => {
            let h = network_gram(init, &train.inputs, true)?;
            let top = top_eigenvalue_bound(&h)?;
            if !(top > 0.0) {
                return Err(ArmError::InvalidParameter(
                    "network Gram matrix at initialization is zero".into(),
                ));
            }
            Ok(1.0 / top)
        }
    }
}

fn top_eigenvalue_bound(h: &SymMatrix) -> Result<f64, ArmError> {
    if h.n() <= EXACT_STEP_MAX_N {
        Ok(linalg::sym_eigenvalues(h, linalg::DEFAULT_EIGEN_TOL)?[0])
    } else {
        Ok((0..h.n())
            .map(|i| h.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max))
    }
}

/// Trains from `init` and returns the final state with its training loss.
pub fn train_network(
    params: &NetworkParams,
    init: NetworkState,
    train: &Dataset,
    eta1: f64,
    mu: f64,
    penalized: bool,
    seed: u64,
) -> Result<(NetworkState, f64), ArmError> {
    let (rule, eta2, mu) = match (params.optimizer, penalized) {
        (Optimizer::Gd, false) => (UpdateRule::PlainGd, 0.0, 0.0),
        (Optimizer::Gd, true) => {
            let eta2 = match params.eta2 {
                DecayStep::SameAsEta1 => eta1,
                DecayStep::Fixed(v) => v,
            };
            (UpdateRule::L2Gd, eta2, mu)
        }
        (Optimizer::RmsProp, pen) => (
            UpdateRule::RmsProp {
                learning_rate: params.learning_rate,
                rho: network::RMSPROP_RHO,
                epsilon: network::RMSPROP_EPSILON,
            },
            0.0,
            if pen { mu } else { 0.0 },
        ),
    };
    let cfg = TrainConfig {
        eta1,
        eta2,
        mu,
        max_iter: params.iterations,
        seed,
        record_every: params.iterations.max(1),
        target_rmse: None,
    };
    let (state, log) = network::train(init, &train.inputs, &train.noisy_labels, &cfg, rule)?;
    Ok((state, log.last().loss))
}

/// Fits one estimator. `val` is required by the cross-validated arms;
/// `sigma` is the noise level handed to the stopping rule.
pub fn fit_arm(
    arm: Arm,
    settings: &ArmSettings,
    train: &Dataset,
    val: Option<&Dataset>,
    sigma: f64,
    seed: u64,
) -> Result<ArmOutcome, ArmError> {
    let y = &train.noisy_labels;
    match arm {
        Arm::Ntk => {
            let xs = kernel_inputs(settings, &train.inputs)?;
            let model = ntk::fit_krr_with(settings.kernel, &xs, y, 0.0)?;
            let train_loss = half_sq_residual(&model.fitted_values(), y);
            Ok(ArmOutcome {
                model: FittedModel::Kernel {
                    model,
                    normalize: settings.normalize_kernel_inputs,
                },
                chosen_mu: Some(0.0),
                k_star: None,
                train_loss,
                note: None,
                cv_curve: None,
            })
        }
        Arm::NtkEs => {
            let xs = kernel_inputs(settings, &train.inputs)?;
            let fit = earlystop::run_early_stopped_kernel_gd_with(
                settings.kernel,
                &xs,
                y,
                sigma,
                settings.kernel_eta,
                settings.k_cap,
            );
            let (model, k, note) = match fit {
                Ok((model, diag)) => (model, diag.k_star.found(), None),
                Err(EarlyStopError::NotFound { k_cap, diagnostics }) => {
                    let gram = settings.kernel.gram(&xs)?;
                    let traj =
                        ntk::kernel_gd_run_gram(&gram, y, diagnostics.step_size, k_cap, k_cap)?;
                    let model = KernelModel::from_parts(
                        settings.kernel,
                        xs,
                        gram,
                        0.0,
                        traj.final_coeffs().to_vec(),
                        KernelMode::GradientDescent,
                    )?;
                    let note = format!("stopping time not found up to k_cap = {k_cap}; ran k_cap steps");
                    (model, Some(k_cap), Some(note))
                }
                Err(e) => return Err(e.into()),
            };
            let train_loss = half_sq_residual(&model.fitted_values(), y);
            Ok(ArmOutcome {
                model: FittedModel::Kernel {
                    model,
                    normalize: settings.normalize_kernel_inputs,
                },
                chosen_mu: None,
                k_star: k,
                train_loss,
                note,
                cv_curve: None,
            })
        }
        Arm::NtkL2 | Arm::OnnL2 => {
            let val = val.ok_or(ArmError::MissingValidation(arm))?;
            let grid = if arm == Arm::NtkL2 {
                &settings.mu_grid
            } else {
                &settings.onn_mu_grid
            };
            let cv = cross_validate_mu(train, val, grid, arm, settings, seed)?;
            Ok(ArmOutcome {
                model: cv.model,
                chosen_mu: Some(cv.best_mu),
                k_star: None,
                train_loss: cv.train_loss,
                note: None,
                cv_curve: Some(cv.curve),
            })
        }
        Arm::Onn => {
            let init = init_network(settings.network.width, train.dim(), settings.network.tau, seed)?;
            let eta1 = resolve_eta1(&settings.network, &init, train)?;
            let (state, train_loss) =
                train_network(&settings.network, init, train, eta1, 0.0, false, seed)?;
            Ok(ArmOutcome {
                model: FittedModel::Network(state),
                chosen_mu: None,
                k_star: None,
                train_loss,
                note: None,
                cv_curve: None,
            })
        }
    }
}
