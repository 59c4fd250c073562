//! Rate-slope, eigendecay and stopping-curve tasks.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;

use crate::cli::config::ExperimentConfig;
use crate::cli::runner::{arm_settings, num, open_output, opt, opt_num, sample_domain, target_spec, with_threads};
use crate::cli::seed::derive_seed;
use crate::cli::ExperimentError;
use crate::data::{make_dataset, rms_distance, sample_sphere, DomainTag};
use crate::earlystop::{stopping_time_with, CurvePoint, StoppingOptions};
use crate::linalg::{self, dot, Cholesky};
use crate::ntk::{self, Ntk};

/// Least-squares line `y = slope·x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares. `r² = 1` when the residuals vanish.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> Result<LineFit, ExperimentError> {
    if xs.len() != ys.len() {
        return Err(ExperimentError::InvalidParameter(format!(
            "{} abscissae but {} ordinates",
            xs.len(),
            ys.len()
        )));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if xs.len() < 2 || sxx == 0.0 {
        return Err(ExperimentError::DegenerateFit { points: xs.len() });
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - slope * x - intercept).powi(2))
        .sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let r_squared = if ss_res <= f64::EPSILON * ss_tot.max(f64::MIN_POSITIVE) || ss_tot == 0.0 {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok(LineFit {
        slope,
        intercept,
        r_squared,
    })
}

/// Regresses `log(error²)` on `log n`.
pub fn fit_rate_slope(ns: &[usize], errors: &[f64]) -> Result<LineFit, ExperimentError> {
    if ns.len() != errors.len() {
        return Err(ExperimentError::InvalidParameter(format!(
            "{} sample sizes but {} errors",
            ns.len(),
            errors.len()
        )));
    }
    if let Some(&n) = ns.iter().find(|&&n| n < 2) {
        return Err(ExperimentError::InvalidParameter(format!(
            "sample sizes must be at least 2; got {n}"
        )));
    }
    if let Some(&e) = errors.iter().find(|&&e| !(e > 0.0 && e.is_finite())) {
        return Err(ExperimentError::InvalidParameter(format!(
            "errors must be positive and finite; got {e}"
        )));
    }
    let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| (e * e).ln()).collect();
    fit_line(&xs, &ys)
}

// ---------------------------------------------------------------- rate study

#[derive(Debug, Clone, PartialEq)]
pub struct RateRow {
    pub sigma: f64,
    pub n: usize,
    pub replication: usize,
    pub seed: u64,
    pub mu: f64,
    pub l2_error: Option<f64>,
    pub wall_time_ms: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateSigmaResult {
    pub sigma: f64,
    /// Ridge constant used; cross-validated unless fixed in the config.
    pub c: f64,
    /// `(c, mean validation MSE)` per grid value; empty when `c` was fixed.
    pub cv_curve: Vec<(f64, f64)>,
    /// `(n, mean squared L2 error)` over the successful replications.
    pub mean_sq_error: Vec<(usize, f64)>,
    pub fit: Option<LineFit>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateStudyReport {
    pub exponent: f64,
    pub rows: Vec<RateRow>,
    pub per_sigma: Vec<RateSigmaResult>,
}

impl RateStudyReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), ExperimentError> {
        {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record([
                "sigma",
                "n",
                "replication",
                "seed",
                "mu",
                "l2_error",
                "wall_time_ms",
                "error",
            ])?;
            for r in &self.rows {
                w.write_record([
                    num(r.sigma),
                    r.n.to_string(),
                    r.replication.to_string(),
                    r.seed.to_string(),
                    num(r.mu),
                    opt_num(r.l2_error),
                    format!("{:.3}", r.wall_time_ms),
                    r.error.clone().unwrap_or_default(),
                ])?;
            }
            w.flush().map_err(io_err)?;
        }
        for s in &self.per_sigma {
            let fit = match s.fit {
                Some(f) => format!(
                    "slope = {}, intercept = {}, r_squared = {}",
                    f.slope, f.intercept, f.r_squared
                ),
                None => "slope unavailable".into(),
            };
            writeln!(
                out,
                "# sigma = {}: mu = {} * n^{}, {}",
                s.sigma, s.c, self.exponent, fit
            )
            .map_err(io_err)?;
        }
        out.flush().map_err(io_err)
    }
}

fn io_err(source: std::io::Error) -> ExperimentError {
    ExperimentError::Io {
        path: "<csv>".into(),
        source,
    }
}

fn domain_tag(config: &ExperimentConfig) -> DomainTag {
    match config.domain {
        crate::cli::config::Domain::Sphere => DomainTag::Sphere,
        crate::cli::config::Domain::Cube => DomainTag::Cube,
    }
}

/// One ridge fit at sample size `n`, scored by L2 error on the noiseless
/// validation set (`cv`) or on the test set.
fn rate_cell(
    config: &ExperimentConfig,
    kernel: Ntk,
    n: usize,
    mu: f64,
    sigma_idx: usize,
    rep: usize,
    cv: bool,
) -> Result<f64, ExperimentError> {
    let (m, s, r) = (config.seed, sigma_idx as u64, rep as u64);
    let tag = if cv { "rate-cv" } else { "rate" };
    let target = target_spec(config.target);
    let sigma = config.sigmas[sigma_idx];
    let pts = sample_domain(
        config.domain,
        n,
        config.d,
        derive_seed(m, &format!("{tag}-points"), &[n as u64, r]),
    )?;
    let train = make_dataset(
        pts,
        domain_tag(config),
        &target,
        sigma,
        derive_seed(m, &format!("{tag}-noise"), &[s, n as u64, r]),
    )?;
    let gram = kernel.gram(&train.inputs)?;
    let coeffs = Cholesky::factor(&gram.add_to_diagonal(mu))?.solve(&train.noisy_labels)?;
    let (size, eval_tag) = if cv {
        (config.val_size, "rate-val")
    } else {
        (config.test_size, "rate-test")
    };
    let eval_pts = sample_domain(config.domain, size, config.d, derive_seed(m, eval_tag, &[r]))?;
    let pred: Vec<f64> = eval_pts
        .iter()
        .map(|x| kernel.row(x, &train.inputs).map(|k| dot(&k, &coeffs)))
        .collect::<Result<_, _>>()?;
    let truth: Vec<f64> = eval_pts.iter().map(|x| target.eval(x)).collect();
    Ok(rms_distance(&pred, &truth)?)
}

/// Kernel ridge regression with `μ = c·n^e` across the configured sample
/// sizes; `c` is chosen once at `rate_cv_n` on noiseless validation data
/// unless fixed.
pub fn rate_study(config: &ExperimentConfig) -> Result<RateStudyReport, ExperimentError> {
    let kernel = arm_settings(config).kernel;
    let e = config.rate_exponent;
    let reps = config.replications;
    let mut rows = Vec::new();
    let mut per_sigma = Vec::new();
    for (si, &sigma) in config.sigmas.iter().enumerate() {
        let (c, cv_curve) = match config.rate_c {
            Some(c) => (c, Vec::new()),
            None => {
                let n = config.rate_cv_n;
                let curve: Vec<(f64, f64)> = config
                    .rate_c_grid
                    .iter()
                    .map(|&c| {
                        let mu = c * (n as f64).powf(e);
                        let errs: Vec<f64> = (0..reps)
                            .into_par_iter()
                            .filter_map(|r| rate_cell(config, kernel, n, mu, si, r, true).ok())
                            .collect();
                        let mse = if errs.is_empty() {
                            f64::INFINITY
                        } else {
                            errs.iter().map(|v| v * v).sum::<f64>() / errs.len() as f64
                        };
                        (c, mse)
                    })
                    .collect();
                // Ties go to the larger constant.
                let best = curve
                    .iter()
                    .copied()
                    .filter(|(_, m)| m.is_finite())
                    .fold(None, |acc: Option<(f64, f64)>, (c, m)| match acc {
                        Some((bc, bm)) if bm < m || (bm == m && bc > c) => Some((bc, bm)),
                        _ => Some((c, m)),
                    })
                    .ok_or_else(|| {
                        ExperimentError::InvalidParameter(
                            "every ridge constant failed during validation".into(),
                        )
                    })?;
                (best.0, curve)
            }
        };

        let cells: Vec<(usize, usize)> = config
            .ns
            .iter()
            .flat_map(|&n| (0..reps).map(move |r| (n, r)))
            .collect();
        let sigma_rows: Vec<RateRow> = cells
            .par_iter()
            .map(|&(n, r)| {
                let mu = c * (n as f64).powf(e);
                let start = Instant::now();
                let res = rate_cell(config, kernel, n, mu, si, r, false);
                let wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
                let (l2_error, error) = match res {
                    Ok(v) => (Some(v), None),
                    Err(err) => (None, Some(err.to_string())),
                };
                RateRow {
                    sigma,
                    n,
                    replication: r,
                    seed: derive_seed(config.seed, "rate-points", &[n as u64, r as u64]),
                    mu,
                    l2_error,
                    wall_time_ms,
                    error,
                }
            })
            .collect();

        let mean_sq_error: Vec<(usize, f64)> = config
            .ns
            .iter()
            .filter_map(|&n| {
                let errs: Vec<f64> = sigma_rows
                    .iter()
                    .filter(|row| row.n == n)
                    .filter_map(|row| row.l2_error)
                    .collect();
                (!errs.is_empty())
                    .then(|| (n, errs.iter().map(|v| v * v).sum::<f64>() / errs.len() as f64))
            })
            .collect();
        let (ns, errs): (Vec<usize>, Vec<f64>) =
            mean_sq_error.iter().map(|&(n, m)| (n, m.sqrt())).unzip();
        let fit = fit_rate_slope(&ns, &errs).ok();
        rows.extend(sigma_rows);
        per_sigma.push(RateSigmaResult {
            sigma,
            c,
            cv_curve,
            mean_sq_error,
            fit,
        });
    }
    Ok(RateStudyReport {
        exponent: e,
        rows,
        per_sigma,
    })
}

// ---------------------------------------------------------------- eigendecay

/// Ranks used for the mid-spectrum slope.
pub const MID_SPECTRUM: (usize, usize) = (10, 200);

#[derive(Debug, Clone, PartialEq)]
pub struct EigendecayReport {
    pub n: usize,
    pub d: usize,
    /// Eigenvalues of `H∞/n`, non-increasing; rank `j` is index `j − 1`.
    pub eigenvalues: Vec<f64>,
    /// Log-log fit of eigenvalue against rank over [`MID_SPECTRUM`].
    pub fit: Option<LineFit>,
}

impl EigendecayReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), ExperimentError> {
        {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(["rank", "eigenvalue"])?;
            for (i, v) in self.eigenvalues.iter().enumerate() {
                w.write_record([(i + 1).to_string(), num(*v)])?;
            }
            w.flush().map_err(io_err)?;
        }
        let (lo, hi) = MID_SPECTRUM;
        match self.fit {
            Some(f) => writeln!(
                out,
                "# n = {}, d = {}: ranks {lo}-{} slope = {}, intercept = {}, r_squared = {}",
                self.n,
                self.d,
                hi.min(self.n),
                f.slope,
                f.intercept,
                f.r_squared
            ),
            None => writeln!(out, "# n = {}, d = {}: slope unavailable", self.n, self.d),
        }
        .map_err(io_err)?;
        out.flush().map_err(io_err)
    }
}

/// Spectrum of `H∞/n` on `n` uniform sphere points.
pub fn eigendecay_report(n: usize, d: usize, seed: u64) -> Result<EigendecayReport, ExperimentError> {
    if n < 100 {
        return Err(ExperimentError::InvalidParameter(format!(
            "eigendecay needs n >= 100; got {n}"
        )));
    }
    let pts = sample_sphere(n, d, derive_seed(seed, "eigendecay", &[n as u64, d as u64]))?;
    let gram = ntk::gram_matrix(&pts)?.scaled(1.0 / n as f64);
    let mut eigenvalues = linalg::sym_eigenvalues(&gram, linalg::DEFAULT_EIGEN_TOL)?;
    // Round-off can leave the smallest eigenvalues of this PSD matrix a
    // hair below zero.
    for v in &mut eigenvalues {
        if *v < 0.0 && *v > crate::earlystop::NEGATIVE_EIGEN_TOL {
            *v = 0.0;
        }
    }
    let (lo, hi) = MID_SPECTRUM;
    let (xs, ys): (Vec<f64>, Vec<f64>) = (lo..=hi.min(n))
        .filter(|&j| eigenvalues[j - 1] > 0.0)
        .map(|j| ((j as f64).ln(), eigenvalues[j - 1].ln()))
        .unzip();
    let fit = fit_line(&xs, &ys).ok();
    Ok(EigendecayReport {
        n,
        d,
        eigenvalues,
        fit,
    })
}

// ------------------------------------------------------------ stopping curve

#[derive(Debug, Clone, PartialEq)]
pub struct StoppingRow {
    pub sigma: f64,
    pub replication: usize,
    pub seed: u64,
    pub step_size: f64,
    pub k_star: Option<usize>,
    pub curve: Vec<CurvePoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoppingCurveReport {
    pub rows: Vec<StoppingRow>,
}

impl StoppingCurveReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), ExperimentError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "sigma",
            "replication",
            "seed",
            "step_size",
            "k_star",
            "k",
            "complexity",
            "threshold",
        ])?;
        for r in &self.rows {
            for p in &r.curve {
                w.write_record([
                    num(r.sigma),
                    r.replication.to_string(),
                    r.seed.to_string(),
                    num(r.step_size),
                    opt(r.k_star),
                    p.k.to_string(),
                    num(p.complexity),
                    num(p.threshold),
                ])?;
            }
        }
        w.flush().map_err(io_err)
    }
}

/// Empirical complexity against the stopping threshold along `k`, for each
/// noise level and replication. Training points use the same seeds as the
/// simulate task.
pub fn stopping_curve(config: &ExperimentConfig) -> Result<StoppingCurveReport, ExperimentError> {
    let kernel = arm_settings(config).kernel;
    let per_rep: Vec<Result<Vec<StoppingRow>, ExperimentError>> = (0..config.replications)
        .into_par_iter()
        .map(|r| {
            let seed = derive_seed(config.seed, "points", &[r as u64]);
            let pts = sample_domain(config.domain, config.n, config.d, seed)?;
            let eig = linalg::sym_eigenvalues(&kernel.gram(&pts)?, linalg::DEFAULT_EIGEN_TOL)?;
            let eta = config.kernel_eta.min(ntk::safe_step_size(eig[0]));
            config
                .sigmas
                .iter()
                .map(|&sigma| {
                    let diag = stopping_time_with(
                        &eig,
                        config.n,
                        sigma,
                        eta,
                        StoppingOptions {
                            k_cap: config.k_cap,
                            record_every: Some(config.record_every),
                        },
                    )?;
                    Ok(StoppingRow {
                        sigma,
                        replication: r,
                        seed,
                        step_size: eta,
                        k_star: diag.k_star.found(),
                        curve: diag.curve.unwrap_or_default(),
                    })
                })
                .collect()
        })
        .collect();
    let mut rows = Vec::new();
    for r in per_rep {
        rows.extend(r?);
    }
    // σ-major order to match the other reports.
    rows.sort_by(|a, b| {
        a.sigma
            .total_cmp(&b.sigma)
            .then(a.replication.cmp(&b.replication))
    });
    Ok(StoppingCurveReport { rows })
}

/// Writes the eigendecay report for `config` to its output path.
pub fn run_eigendecay(config: &ExperimentConfig) -> Result<EigendecayReport, ExperimentError> {
    let out = open_output(&config.output)?;
    let report = with_threads(config.threads, || eigendecay_report(config.n, config.d, config.seed))??;
    report.write_csv(out)?;
    Ok(report)
}

pub fn run_rate_study(config: &ExperimentConfig) -> Result<RateStudyReport, ExperimentError> {
    let out = open_output(&config.output)?;
    let report = with_threads(config.threads, || rate_study(config))??;
    report.write_csv(out)?;
    Ok(report)
}

pub fn run_stopping_curve(config: &ExperimentConfig) -> Result<StoppingCurveReport, ExperimentError> {
    let out = open_output(&config.output)?;
    let report = with_threads(config.threads, || stopping_curve(config))??;
    report.write_csv(out)?;
    Ok(report)
}
