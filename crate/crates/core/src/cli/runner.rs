//! The `(arm, σ, replication)` sweep for the simulate and mnist tasks.
//!
//! Seeds are derived from the master seed so that each cell is
//! reproducible on its own:
//!
//! | stream            | derivation                          |
//! |-------------------|-------------------------------------|
//! | training points   | `(master, "points", rep)`           |
//! | training noise    | `(master, "noise", σ_idx, rep)`     |
//! | validation points | `(master, "val", rep)`              |
//! | test points       | `(master, "test", rep)`             |
//! | model (init)      | `(master, arm, σ_idx, rep)`         |
//! | mnist subsample   | `(master, "subsample", rep)`        |
//! | mnist split       | `(master, "split", rep)`            |
//! | mnist val noise   | `(master, "val-noise", σ_idx, rep)` |
//!
//! Data streams do not depend on the arm, so arms are compared on the same
//! draws. The model seed is the one reported in the `seed` column.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use crate::cli::arms::{fit_arm, ArmSettings};
use crate::cli::config::{Arm, Domain, ExperimentConfig, TargetKind, Task};
use crate::cli::seed::derive_seed;
use crate::cli::ExperimentError;
use crate::data::{
    load_mnist_5v8, make_dataset, misclassification_rate_values, rms_distance, sample_cube,
    sample_sphere, Dataset, DomainTag, TargetSpec,
};
use crate::ntk::Ntk;

pub const MNIST_TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const MNIST_TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const MNIST_TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const MNIST_TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

/// Fraction of the mnist subsample used for training; the rest validates.
pub const MNIST_TRAIN_FRACTION: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    L2Error,
    MisclassificationRate,
}

impl Metric {
    pub fn column(self) -> &'static str {
        match self {
            Metric::L2Error => "l2_error",
            Metric::MisclassificationRate => "misclassification_rate",
        }
    }
}

/// One `(arm, σ, replication)` cell. Failed cells keep their coordinates
/// and carry the message in `error`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub arm: Arm,
    pub sigma: f64,
    pub replication: usize,
    pub seed: u64,
    pub chosen_mu: Option<f64>,
    pub k_star: Option<usize>,
    pub train_loss_final: Option<f64>,
    pub metric: Option<f64>,
    pub wall_time_ms: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub metric: Metric,
    pub rows: Vec<ResultRow>,
}

impl ExperimentReport {
    /// Mean metric over the successful rows of one `(arm, σ)` group.
    pub fn mean_metric(&self, arm: Arm, sigma: f64) -> Option<f64> {
        let vals: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.arm == arm && r.sigma == sigma)
            .filter_map(|r| r.metric)
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), ExperimentError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "arm",
            "sigma",
            "replication",
            "seed",
            "chosen_mu",
            "k_star",
            "train_loss_final",
            self.metric.column(),
            "wall_time_ms",
            "error",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.arm.name().to_string(),
                num(r.sigma),
                r.replication.to_string(),
                r.seed.to_string(),
                opt_num(r.chosen_mu),
                opt(r.k_star),
                opt_num(r.train_loss_final),
                opt_num(r.metric),
                format!("{:.3}", r.wall_time_ms),
                r.error.clone().unwrap_or_default(),
            ])?;
        }
        w.flush().map_err(|source| ExperimentError::Io {
            path: "<csv>".into(),
            source,
        })?;
        Ok(())
    }
}

pub(crate) fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Shortest round-trip form, switching to exponent notation for very
/// small or large magnitudes.
pub(crate) fn num(v: f64) -> String {
    format!("{v:?}")
}

pub(crate) fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Creates (truncating) the output file, failing before any compute.
pub fn open_output(path: &Path) -> Result<BufWriter<File>, ExperimentError> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| ExperimentError::OutputUnwritable {
            path: path.to_path_buf(),
            source,
        })?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| ExperimentError::OutputUnwritable {
            path: path.to_path_buf(),
            source,
        })
}

/// Runs `f` on a pool with the configured thread count.
pub fn with_threads<T: Send>(
    threads: Option<usize>,
    f: impl FnOnce() -> T + Send,
) -> Result<T, ExperimentError> {
    match threads {
        None => Ok(f()),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| ExperimentError::ThreadPool(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

/// Kernel and input handling for a domain.
pub fn arm_settings(config: &ExperimentConfig) -> ArmSettings {
    let (kernel, normalize) = match (config.task, config.domain) {
        (Task::Mnist, _) => (Ntk::sphere(), true),
        (_, Domain::Sphere) => (Ntk::sphere(), false),
        (_, Domain::Cube) => (Ntk::euclidean(), false),
    };
    let kernel = if config.gram_scale_by_d {
        kernel.with_scale(1.0 / config.d as f64)
    } else {
        kernel
    };
    ArmSettings {
        kernel,
        normalize_kernel_inputs: normalize,
        mu_grid: config.mu_grid.clone(),
        onn_mu_grid: config.onn_mu_grid.clone(),
        kernel_eta: config.kernel_eta,
        k_cap: config.k_cap,
        network: config.network.clone(),
    }
}

pub fn target_spec(kind: TargetKind) -> TargetSpec {
    match kind {
        TargetKind::Zero => TargetSpec::Zero,
        TargetKind::QuadraticNorm => TargetSpec::QuadraticNorm,
    }
}

pub fn sample_domain(domain: Domain, n: usize, d: usize, seed: u64) -> Result<Vec<Vec<f64>>, ExperimentError> {
    Ok(match domain {
        Domain::Sphere => sample_sphere(n, d, seed)?,
        Domain::Cube => sample_cube(n, d, seed)?,
    })
}

fn domain_tag(domain: Domain) -> DomainTag {
    match domain {
        Domain::Sphere => DomainTag::Sphere,
        Domain::Cube => DomainTag::Cube,
    }
}

/// Training, validation and test data for one cell.
#[derive(Debug, Clone)]
pub struct CellData {
    pub train: Dataset,
    pub val: Dataset,
    pub test_inputs: Vec<Vec<f64>>,
    /// Clean test targets (regression) or ±1 labels (mnist).
    pub test_truth: Vec<f64>,
}

/// Simulation data: noisy training set, noiseless validation and test sets.
pub fn simulate_cell_data(
    config: &ExperimentConfig,
    sigma_idx: usize,
    rep: usize,
) -> Result<CellData, ExperimentError> {
    let (m, r, s) = (config.seed, rep as u64, sigma_idx as u64);
    let target = target_spec(config.target);
    let tag = domain_tag(config.domain);
    let sigma = config.sigmas[sigma_idx];
    let pts = sample_domain(config.domain, config.n, config.d, derive_seed(m, "points", &[r]))?;
    let train = make_dataset(pts, tag, &target, sigma, derive_seed(m, "noise", &[s, r]))?;
    let vpts = sample_domain(config.domain, config.val_size, config.d, derive_seed(m, "val", &[r]))?;
    let val = make_dataset(vpts, tag, &target, 0.0, 0)?;
    let test_inputs =
        sample_domain(config.domain, config.test_size, config.d, derive_seed(m, "test", &[r]))?;
    let test_truth = test_inputs.iter().map(|x| target.eval(x)).collect();
    Ok(CellData {
        train,
        val,
        test_inputs,
        test_truth,
    })
}

/// The full 5-vs-8 training and test pools.
#[derive(Debug, Clone)]
pub struct MnistPools {
    pub train: Dataset,
    pub test: Dataset,
}

pub fn load_mnist_pools(dir: &Path) -> Result<MnistPools, ExperimentError> {
    Ok(MnistPools {
        train: load_mnist_5v8(dir.join(MNIST_TRAIN_IMAGES), dir.join(MNIST_TRAIN_LABELS), false)?,
        test: load_mnist_5v8(dir.join(MNIST_TEST_IMAGES), dir.join(MNIST_TEST_LABELS), false)?,
    })
}

/// Subsample `n`, split 80/20, add label noise to both parts; the test set
/// keeps its clean labels and is capped at `test_size`.
pub fn mnist_cell_data(
    config: &ExperimentConfig,
    pools: &MnistPools,
    sigma_idx: usize,
    rep: usize,
) -> Result<CellData, ExperimentError> {
    let (m, r, s) = (config.seed, rep as u64, sigma_idx as u64);
    let sigma = config.sigmas[sigma_idx];
    let n = config.n.min(pools.train.len());
    let sub = pools.train.subsample(n, derive_seed(m, "subsample", &[r]))?;
    let (train, val) = sub.split(MNIST_TRAIN_FRACTION, derive_seed(m, "split", &[r]))?;
    let train = train.with_noise(sigma, derive_seed(m, "noise", &[s, r]))?;
    let val = val.with_noise(sigma, derive_seed(m, "val-noise", &[s, r]))?;
    let test = if config.test_size >= pools.test.len() {
        pools.test.clone()
    } else {
        pools.test.subsample(config.test_size, derive_seed(m, "test", &[]))?
    };
    Ok(CellData {
        train,
        val,
        test_inputs: test.inputs,
        test_truth: test.clean_labels,
    })
}

fn run_cell(
    arm: Arm,
    settings: &ArmSettings,
    data: &Result<CellData, String>,
    metric: Metric,
    sigma: f64,
    seed: u64,
) -> (Result<(Option<f64>, Option<usize>, f64, f64), String>, Option<String>) {
    let data = match data {
        Ok(d) => d,
        Err(e) => return (Err(e.clone()), None),
    };
    let fit = match fit_arm(arm, settings, &data.train, Some(&data.val), sigma, seed) {
        Ok(f) => f,
        Err(e) => return (Err(e.to_string()), None),
    };
    if let Some(note) = &fit.note {
        eprintln!("warning: {arm} σ={sigma} seed={seed}: {note}");
    }
    let scored = fit
        .model
        .predict_batch(&data.test_inputs)
        .map_err(|e| e.to_string())
        .and_then(|pred| {
            match metric {
                Metric::L2Error => rms_distance(&pred, &data.test_truth),
                Metric::MisclassificationRate => {
                    misclassification_rate_values(&pred, &data.test_truth)
                }
            }
            .map_err(|e| e.to_string())
        });
    let out = scored.map(|score| {
        let mu = if arm == Arm::NtkEs { None } else { fit.chosen_mu };
        (mu, fit.k_star, fit.train_loss, score)
    });
    (out, fit.note)
}

/// Runs every cell and returns the rows in `(arm, σ, replication)` order.
pub fn run_cells(config: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    let (metric, pools) = match config.task {
        Task::Simulate => (Metric::L2Error, None),
        Task::Mnist => {
            let dir = config.mnist_dir.as_deref().ok_or_else(|| {
                ExperimentError::InvalidParameter("mnist task needs mnist_dir".into())
            })?;
            (Metric::MisclassificationRate, Some(load_mnist_pools(dir)?))
        }
        other => {
            return Err(ExperimentError::InvalidParameter(format!(
                "task {other} is not an (arm, σ, replication) sweep"
            )))
        }
    };
    let settings = arm_settings(config);

    // Data depends on (σ, rep) only; build it once per pair.
    let pairs: Vec<(usize, usize)> = (0..config.sigmas.len())
        .flat_map(|s| (0..config.replications).map(move |r| (s, r)))
        .collect();
    let build = |&(s, r): &(usize, usize)| -> Result<CellData, String> {
        match &pools {
            Some(p) => mnist_cell_data(config, p, s, r),
            None => simulate_cell_data(config, s, r),
        }
        .map_err(|e| e.to_string())
    };

    let cells: Vec<(Arm, usize, usize)> = config
        .arms
        .iter()
        .flat_map(|&a| pairs.iter().map(move |&(s, r)| (a, s, r)))
        .collect();

    let rows = with_threads(config.threads, || {
        let data: Vec<Result<CellData, String>> = pairs.par_iter().map(build).collect();
        cells
            .par_iter()
            .map(|&(arm, s, r)| {
                let sigma = config.sigmas[s];
                let seed = derive_seed(config.seed, arm.name(), &[s as u64, r as u64]);
                let start = Instant::now();
                let (res, note) = run_cell(
                    arm,
                    &settings,
                    &data[s * config.replications + r],
                    metric,
                    sigma,
                    seed,
                );
                let wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
                let mut row = ResultRow {
                    arm,
                    sigma,
                    replication: r,
                    seed,
                    chosen_mu: None,
                    k_star: None,
                    train_loss_final: None,
                    metric: None,
                    wall_time_ms,
                    error: note,
                };
                match res {
                    Ok((mu, k, loss, score)) => {
                        row.chosen_mu = mu;
                        row.k_star = k;
                        row.train_loss_final = Some(loss);
                        row.metric = Some(score);
                    }
                    Err(e) => row.error = Some(e),
                }
                row
            })
            .collect::<Vec<_>>()
    })?;
    Ok(ExperimentReport { metric, rows })
}

/// Checks the output path, runs the sweep and writes the CSV.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    let out = open_output(&config.output)?;
    let report = run_cells(config)?;
    report.write_csv(out)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::config::parse_config;

    /// A tiny simulate config; keys in `extra` replace the defaults here.
    fn small(extra: &str) -> ExperimentConfig {
        let base = "task = simulate\narms = ntk\nn = 12\nsigma = 0.2\nreplications = 1\n\
                    test_size = 20\nval_size = 10\nseed = 5";
        let key = |l: &str| l.split('=').next().unwrap().trim().to_string();
        let overridden: Vec<String> = extra.lines().map(key).collect();
        let mut text: Vec<&str> = base
            .lines()
            .filter(|l| !overridden.contains(&key(l)))
            .collect();
        text.extend(extra.lines());
        parse_config(&text.join("\n")).unwrap()
    }

    #[test]
    fn one_cell_gives_one_row_plus_header() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small("");
        cfg.output = dir.path().join("out.csv");
        let report = run_experiment(&cfg).unwrap();
        assert_eq!(report.rows.len(), 1);
        let text = std::fs::read_to_string(&cfg.output).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(
            lines[0],
            "arm,sigma,replication,seed,chosen_mu,k_star,train_loss_final,l2_error,wall_time_ms,error"
        );
        assert!(report.rows[0].error.is_none());
    }

    #[test]
    fn replications_draw_different_noise() {
        let cfg = small("replications = 2");
        let a = simulate_cell_data(&cfg, 0, 0).unwrap();
        let b = simulate_cell_data(&cfg, 0, 1).unwrap();
        assert_ne!(a.train.noisy_labels, b.train.noisy_labels);
        let again = simulate_cell_data(&cfg, 0, 0).unwrap();
        assert_eq!(a.train.noisy_labels, again.train.noisy_labels);
    }

    #[test]
    fn unwritable_output_fails_before_compute() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        std::fs::write(&blocker, b"x").unwrap();
        let mut cfg = small("");
        cfg.output = blocker.join("sub").join("out.csv");
        assert!(matches!(
            run_experiment(&cfg),
            Err(ExperimentError::OutputUnwritable { .. })
        ));
    }

    #[test]
    fn failing_cells_become_error_rows() {
        let cfg = small("arms = onn, ntk\noptimizer = gd\neta1 = 1e9\nwidth = 8\niterations = 50");
        let mut a = run_cells(&cfg).unwrap();
        assert_eq!(a.rows.len(), 2);
        assert_eq!(a.rows[0].arm, Arm::Onn);
        assert!(a.rows[0].error.is_some() && a.rows[0].metric.is_none());
        assert!(a.rows[1].error.is_none() && a.rows[1].metric.is_some());

        // Same config, same CSV apart from timings.
        let mut b = run_cells(&cfg).unwrap();
        for r in a.rows.iter_mut().chain(b.rows.iter_mut()) {
            r.wall_time_ms = 0.0;
        }
        assert_eq!(a, b);
    }
}
