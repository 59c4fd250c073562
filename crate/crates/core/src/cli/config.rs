//! Line-oriented experiment configuration.
//!
//! ```text
//! # comment
//! task = simulate
//! sigma = 0.1, 0.2, 0.3
//! mu_grid = 0.01:1:0.01     # inclusive range start:stop:step
//! ```
//!
//! Every problem in the file is reported, not just the first.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value `{value}` for `{key}`: {reason}")]
    BadValue {
        line: usize,
        key: String,
        value: String,
        reason: String,
    },
    #[error("missing required key `{key}`")]
    MissingRequired { key: String },
}

/// All problems found in one configuration text.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Simulate,
    RateStudy,
    Mnist,
    Eigendecay,
    StoppingCurve,
}

impl FromStr for Task {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "simulate" => Task::Simulate,
            "rate-study" => Task::RateStudy,
            "mnist" => Task::Mnist,
            "eigendecay" => Task::Eigendecay,
            "stopping-curve" => Task::StoppingCurve,
            _ => {
                return Err(
                    "expected simulate, rate-study, mnist, eigendecay or stopping-curve".into(),
                )
            }
        })
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Simulate => "simulate",
            Task::RateStudy => "rate-study",
            Task::Mnist => "mnist",
            Task::Eigendecay => "eigendecay",
            Task::StoppingCurve => "stopping-curve",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Arm {
    /// Ridgeless NTK regression (the interpolant).
    Ntk,
    /// Kernel gradient descent stopped at `k*`.
    NtkEs,
    /// NTK ridge regression with cross-validated `μ`.
    NtkL2,
    /// Network trained without penalty.
    Onn,
    /// Network trained with the ℓ2 penalty, cross-validated `μ`.
    OnnL2,
}

impl Arm {
    pub const ALL: [Arm; 5] = [Arm::Ntk, Arm::NtkEs, Arm::NtkL2, Arm::Onn, Arm::OnnL2];

    pub fn name(self) -> &'static str {
        match self {
            Arm::Ntk => "ntk",
            Arm::NtkEs => "ntk_es",
            Arm::NtkL2 => "ntk_l2",
            Arm::Onn => "onn",
            Arm::OnnL2 => "onn_l2",
        }
    }

    pub fn is_network(self) -> bool {
        matches!(self, Arm::Onn | Arm::OnnL2)
    }
}

impl FromStr for Arm {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Arm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| "expected ntk, ntk_es, ntk_l2, onn or onn_l2".into())
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Sphere,
    Cube,
}

impl FromStr for Domain {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sphere" => Ok(Domain::Sphere),
            "cube" => Ok(Domain::Cube),
            _ => Err("expected sphere or cube".into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetKind {
    Zero,
    QuadraticNorm,
}

impl FromStr for TargetKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "zero" => Ok(TargetKind::Zero),
            "quadratic_norm" => Ok(TargetKind::QuadraticNorm),
            _ => Err("expected zero or quadratic_norm".into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Optimizer {
    /// Plain GD for `onn`, ℓ2-regularized GD for `onn_l2`.
    Gd,
    RmsProp,
}

impl FromStr for Optimizer {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "gd" => Ok(Optimizer::Gd),
            "rmsprop" => Ok(Optimizer::RmsProp),
            _ => Err("expected gd or rmsprop".into()),
        }
    }
}

/// A GD step size, possibly chosen from the data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSize {
    /// `1/λ_max(H(0))` of the network Gram matrix at initialization;
    /// above 400 training points the Gershgorin bound `max_i Σ_j |H_ij(0)|`
    /// stands in for `λ_max`.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DecayStep {
    /// Same as the data-fit step.
    SameAsEta1,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub width: usize,
    pub tau: f64,
    pub eta1: StepSize,
    pub eta2: DecayStep,
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub task: Task,
    pub arms: Vec<Arm>,
    pub n: usize,
    pub d: usize,
    pub domain: Domain,
    pub target: TargetKind,
    pub sigmas: Vec<f64>,
    pub replications: usize,
    pub seed: u64,
    pub test_size: usize,
    pub val_size: usize,
    pub network: NetworkParams,
    /// Ridge grid for `ntk_l2`.
    pub mu_grid: Vec<f64>,
    /// Penalty grid for `onn_l2`.
    pub onn_mu_grid: Vec<f64>,
    /// Kernel gradient descent step before the `1/λ̂₁²` cap.
    pub kernel_eta: f64,
    pub k_cap: usize,
    pub ns: Vec<usize>,
    /// Ridge constant `c` in `μ = c·n^e`; cross-validated when absent.
    pub rate_c: Option<f64>,
    pub rate_c_grid: Vec<f64>,
    /// Exponent `e`; defaults to `(d−1)/(2d−1)`.
    pub rate_exponent: f64,
    pub rate_cv_n: usize,
    pub mnist_dir: Option<PathBuf>,
    pub gram_scale_by_d: bool,
    pub record_every: usize,
    pub output: PathBuf,
    pub threads: Option<usize>,
}

const KEYS: &[&str] = &[
    "task",
    "arms",
    "n",
    "d",
    "domain",
    "target",
    "sigma",
    "replications",
    "seed",
    "test_size",
    "val_size",
    "width",
    "tau",
    "eta1",
    "eta2",
    "optimizer",
    "learning_rate",
    "iterations",
    "mu_grid",
    "onn_mu_grid",
    "kernel_eta",
    "k_cap",
    "ns",
    "rate_c",
    "rate_c_grid",
    "rate_exponent",
    "rate_cv_n",
    "mnist_dir",
    "gram_scale_by_d",
    "record_every",
    "output",
    "threads",
];

struct Entries {
    map: BTreeMap<String, (usize, String)>,
    errors: Vec<ConfigError>,
}

impl Entries {
    fn parse(text: &str) -> Self {
        let mut map = BTreeMap::new();
        let mut errors = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((k, v)) = content.split_once('=') else {
                errors.push(ConfigError::BadValue {
                    line,
                    key: content.to_string(),
                    value: String::new(),
                    reason: "expected `key = value`".into(),
                });
                continue;
            };
            let key = k.trim().to_string();
            let value = v.trim().to_string();
            if !KEYS.contains(&key.as_str()) {
                errors.push(ConfigError::UnknownKey { line, key });
                continue;
            }
            if let Some((first, _)) = map.get(&key) {
                errors.push(ConfigError::BadValue {
                    line,
                    key,
                    value,
                    reason: format!("duplicate key, first set on line {first}"),
                });
                continue;
            }
            map.insert(key, (line, value));
        }
        Self { map, errors }
    }

    fn get<T>(&mut self, key: &str, parse: impl Fn(&str) -> Result<T, String>) -> Option<T> {
        let (line, value) = self.map.get(key)?;
        match parse(value) {
            Ok(v) => Some(v),
            Err(reason) => {
                self.errors.push(ConfigError::BadValue {
                    line: *line,
                    key: key.to_string(),
                    value: value.clone(),
                    reason,
                });
                None
            }
        }
    }

    fn or<T>(&mut self, key: &str, parse: impl Fn(&str) -> Result<T, String>, default: T) -> T {
        self.get(key, parse).unwrap_or(default)
    }

    fn invalid(&mut self, key: &str, reason: impl Into<String>) {
        let (line, value) = self.map.get(key).cloned().unwrap_or((0, String::new()));
        self.errors.push(ConfigError::BadValue {
            line,
            key: key.to_string(),
            value,
            reason: reason.into(),
        });
    }
}

fn parse_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| "expected a number".to_string())?;
    if !v.is_finite() {
        return Err("expected a finite number".into());
    }
    Ok(v)
}

fn non_negative(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if v < 0.0 {
        return Err("must be non-negative".into());
    }
    Ok(v)
}

fn positive(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if v <= 0.0 {
        return Err("must be positive".into());
    }
    Ok(v)
}

/// Non-negative integer; scientific notation allowed when exact (`1e7`).
fn count(s: &str) -> Result<usize, String> {
    if let Ok(v) = s.parse::<usize>() {
        return Ok(v);
    }
    let v = parse_f64(s).map_err(|_| "expected a non-negative integer".to_string())?;
    if v < 0.0 || v.fract() != 0.0 || v > 9.007_199_254_740_992e15 {
        return Err("expected a non-negative integer".into());
    }
    Ok(v as usize)
}

fn positive_count(s: &str) -> Result<usize, String> {
    match count(s)? {
        0 => Err("must be at least 1".into()),
        v => Ok(v),
    }
}

fn boolean(s: &str) -> Result<bool, String> {
    match s {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err("expected true or false".into()),
    }
}

fn seed(s: &str) -> Result<u64, String> {
    s.parse().map_err(|_| "expected an unsigned 64-bit integer".into())
}

fn items(s: &str) -> impl Iterator<Item = &str> {
    s.split(',').map(str::trim)
}

fn list<T>(s: &str, item: impl Fn(&str) -> Result<T, String>) -> Result<Vec<T>, String> {
    let v: Vec<T> = items(s).map(&item).collect::<Result<_, _>>()?;
    if v.is_empty() {
        return Err("empty list".into());
    }
    Ok(v)
}

/// Comma list of non-negative reals; an item `a:b:h` expands to
/// `a, a+h, …` up to `b` inclusive.
fn real_list(s: &str) -> Result<Vec<f64>, String> {
    let mut out = Vec::new();
    for item in items(s) {
        let parts: Vec<&str> = item.split(':').collect();
        match parts.as_slice() {
            [v] => out.push(non_negative(v)?),
            [a, b, h] => {
                let (a, b, h) = (non_negative(a)?, non_negative(b)?, positive(h)?);
                if b < a {
                    return Err(format!("range `{item}` ends before it starts"));
                }
                let steps = ((b - a) / h + 1e-9).floor() as usize;
                // Round to the step's decimal grid so 0.01:1:0.01 yields 0.07, not 0.07000000000000001.
                out.extend((0..=steps).map(|i| round_to_grid(a + i as f64 * h)));
            }
            _ => return Err(format!("`{item}` is neither a number nor start:stop:step")),
        }
    }
    if out.is_empty() {
        return Err("empty list".into());
    }
    Ok(out)
}

fn round_to_grid(v: f64) -> f64 {
    let r = (v * 1e9).round() / 1e9;
    if (r - v).abs() < 1e-12 * v.abs().max(1.0) {
        r
    } else {
        v
    }
}

fn step_size(s: &str) -> Result<StepSize, String> {
    if s == "auto" {
        Ok(StepSize::Auto)
    } else {
        positive(s).map(StepSize::Fixed)
    }
}

fn decay_step(s: &str) -> Result<DecayStep, String> {
    if s == "eta1" {
        Ok(DecayStep::SameAsEta1)
    } else {
        non_negative(s).map(DecayStep::Fixed)
    }
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigErrors> {
    parse_config_for(text, None)
}

/// As [`parse_config`]; when `task` is given the file's `task` key becomes
/// optional but must agree if present.
pub fn parse_config_for(text: &str, task: Option<Task>) -> Result<ExperimentConfig, ConfigErrors> {
    let mut e = Entries::parse(text);
    let file_task = e.get("task", str::parse::<Task>);
    let task = match (task, file_task) {
        (Some(t), Some(f)) if t != f => {
            e.invalid("task", format!("config says `{f}` but `{t}` was requested"));
            t
        }
        (Some(t), _) | (None, Some(t)) => t,
        (None, None) => {
            if !e.map.contains_key("task") {
                e.errors.push(ConfigError::MissingRequired { key: "task".into() });
            }
            Task::Simulate
        }
    };

    let mnist = task == Task::Mnist;
    let default_domain = match task {
        Task::Simulate => Domain::Cube,
        _ => Domain::Sphere,
    };
    let default_sigmas = match task {
        Task::Mnist => vec![0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5],
        Task::RateStudy => vec![0.3],
        _ => vec![0.1, 0.2, 0.3, 0.4, 0.5],
    };
    let (default_n, default_d) = match task {
        Task::Eigendecay => (2000, 3),
        Task::Mnist => (2000, 784),
        _ => (100, 2),
    };

    let arms = e.or("arms", |s| list(s, str::parse::<Arm>), Arm::ALL.to_vec());
    let n = e.or("n", positive_count, default_n);
    let d = e.or("d", positive_count, default_d);
    let domain = e.or("domain", str::parse, default_domain);
    let target = e.or("target", str::parse, TargetKind::QuadraticNorm);
    let sigmas = e.or("sigma", real_list, default_sigmas);
    let replications = e.or(
        "replications",
        positive_count,
        if task == Task::RateStudy { 20 } else { 100 },
    );
    let master_seed = e.or("seed", seed, 0);
    let test_size = e.or("test_size", positive_count, if mnist { 1866 } else { 1000 });
    let val_size = e.or("val_size", positive_count, 100);
    let network = NetworkParams {
        width: e.or("width", positive_count, 500),
        tau: e.or("tau", positive, 1.0),
        eta1: e.or("eta1", step_size, StepSize::Auto),
        eta2: e.or("eta2", decay_step, DecayStep::SameAsEta1),
        optimizer: e.or("optimizer", str::parse, Optimizer::RmsProp),
        learning_rate: e.or("learning_rate", positive, 0.001),
        iterations: e.or("iterations", count, 2000),
    };
    let mu_grid = e.or(
        "mu_grid",
        real_list,
        if mnist {
            (1..=100).map(f64::from).collect()
        } else {
            (1..=100).map(|i| i as f64 / 100.0).collect()
        },
    );
    let onn_mu_grid = e.or(
        "onn_mu_grid",
        real_list,
        if mnist {
            vec![1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0, 500.0, 1000.0, 2000.0, 5000.0]
        } else {
            (1..=100).map(|i| i as f64 / 10.0).collect()
        },
    );
    let kernel_eta = e.or("kernel_eta", positive, if mnist { 1e-4 } else { 0.01 });
    let k_cap = e.or("k_cap", positive_count, 10_000_000);
    let ns = e.or("ns", |s| list(s, positive_count), vec![50, 100, 200, 400, 800]);
    let rate_c = e.get("rate_c", positive);
    let rate_c_grid = e.or(
        "rate_c_grid",
        real_list,
        vec![0.003, 0.01, 0.03, 0.1, 0.3, 1.0],
    );
    let rate_exponent = e.or(
        "rate_exponent",
        non_negative,
        (d as f64 - 1.0) / (2.0 * d as f64 - 1.0),
    );
    let rate_cv_n = e.or("rate_cv_n", positive_count, 100);
    let mnist_dir = e.get("mnist_dir", |s| Ok(PathBuf::from(s)));
    let gram_scale_by_d = e.or("gram_scale_by_d", boolean, mnist);
    let record_every = e.or("record_every", positive_count, 100);
    let output = e.or(
        "output",
        |s| Ok(PathBuf::from(s)),
        PathBuf::from(format!("{task}.csv")),
    );
    let threads = e.get("threads", positive_count);

    if domain == Domain::Sphere && d < 2 {
        e.invalid("d", "sphere data needs d >= 2");
    }
    if mnist && mnist_dir.is_none() {
        e.errors.push(ConfigError::MissingRequired {
            key: "mnist_dir".into(),
        });
    }
    if let (DecayStep::Fixed(eta2), Some(mu)) = (network.eta2, onn_mu_grid.iter().copied().reduce(f64::max)) {
        if network.optimizer == Optimizer::Gd && eta2 * mu >= 1.0 {
            e.invalid("eta2", format!("eta2·mu = {} for the largest onn_mu_grid value; must be < 1", eta2 * mu));
        }
    }
    if task == Task::RateStudy && ns.iter().any(|&v| v < 2) {
        e.invalid("ns", "every n must be at least 2");
    }

    if !e.errors.is_empty() {
        e.errors.sort_by_key(|err| match err {
            ConfigError::UnknownKey { line, .. } | ConfigError::BadValue { line, .. } => *line,
            ConfigError::MissingRequired { .. } => usize::MAX,
        });
        return Err(ConfigErrors(e.errors));
    }
    Ok(ExperimentConfig {
        task,
        arms,
        n,
        d,
        domain,
        target,
        sigmas,
        replications,
        seed: master_seed,
        test_size,
        val_size,
        network,
        mu_grid,
        onn_mu_grid,
        kernel_eta,
        k_cap,
        ns,
        rate_c,
        rate_c_grid,
        rate_exponent,
        rate_cv_n,
        mnist_dir,
        gram_scale_by_d,
        record_every,
        output,
        threads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config("task = simulate\n").unwrap();
        assert_eq!(c.task, Task::Simulate);
        assert_eq!(c.arms, Arm::ALL.to_vec());
        assert_eq!((c.n, c.d, c.domain), (100, 2, Domain::Cube));
        assert_eq!(c.sigmas, vec![0.1, 0.2, 0.3, 0.4, 0.5]);
        assert_eq!(c.replications, 100);
        assert_eq!(c.val_size, 100);
        assert_eq!(c.test_size, 1000);
        assert_eq!(c.kernel_eta, 0.01);
        assert_eq!(c.k_cap, 10_000_000);
        assert_eq!(c.network.optimizer, Optimizer::RmsProp);
        assert_eq!(c.network.learning_rate, 0.001);
        assert_eq!(c.mu_grid.len(), 100);
        assert_eq!(c.mu_grid[6], 0.07);
        assert_eq!(c.mu_grid[99], 1.0);
        assert_eq!(c.onn_mu_grid.first(), Some(&0.1));
        assert_eq!(c.onn_mu_grid.last(), Some(&10.0));
        assert!(!c.gram_scale_by_d);
    }

    #[test]
    fn lists_comments_and_ranges() {
        let text = "# header\ntask = rate-study   # trailing\nsigma = 0.1,0.2,0.3\nns = 50, 100\nmu_grid = 0.5, 1:2:0.5\nk_cap = 1e5\n\n";
        let c = parse_config(text).unwrap();
        assert_eq!(c.sigmas, vec![0.1, 0.2, 0.3]);
        assert_eq!(c.ns, vec![50, 100]);
        assert_eq!(c.mu_grid, vec![0.5, 1.0, 1.5, 2.0]);
        assert_eq!(c.k_cap, 100_000);
        assert_eq!(c.domain, Domain::Sphere);
        assert!((c.rate_exponent - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn every_error_is_reported_with_lines() {
        let text = "task = simulate\nn = -5\nbogus = 1\nsigma = 0.1, x\nn = 3\n";
        let errs = parse_config(text).unwrap_err().0;
        assert_eq!(errs.len(), 4, "{errs:?}");
        assert!(matches!(&errs[0], ConfigError::BadValue { line: 2, key, .. } if key == "n"));
        assert!(matches!(&errs[1], ConfigError::UnknownKey { line: 3, key } if key == "bogus"));
        assert!(matches!(&errs[2], ConfigError::BadValue { line: 4, key, .. } if key == "sigma"));
        assert!(matches!(&errs[3], ConfigError::BadValue { line: 5, .. }));
        let msg = ConfigErrors(errs).to_string();
        assert!(msg.contains("line 2") && msg.contains("line 3"));
    }

    #[test]
    fn missing_task_and_mnist_dir() {
        let errs = parse_config("n = 5\n").unwrap_err().0;
        assert_eq!(errs, vec![ConfigError::MissingRequired { key: "task".into() }]);
        assert!(parse_config_for("n = 5\n", Some(Task::Eigendecay)).is_ok());
        assert!(parse_config_for("task = mnist\n", Some(Task::Simulate)).is_err());
        let errs = parse_config("task = mnist\n").unwrap_err().0;
        assert_eq!(errs, vec![ConfigError::MissingRequired { key: "mnist_dir".into() }]);
        let c = parse_config("task = mnist\nmnist_dir = /tmp/m\n").unwrap();
        assert!(c.gram_scale_by_d);
        assert_eq!(c.kernel_eta, 1e-4);
        assert_eq!(c.sigmas.len(), 7);
    }

    #[test]
    fn decay_step_must_stay_contractive() {
        let text = "task = simulate\noptimizer = gd\neta2 = 0.2\nonn_mu_grid = 1, 5\n";
        let errs = parse_config(text).unwrap_err().0;
        assert!(matches!(&errs[0], ConfigError::BadValue { line: 3, key, .. } if key == "eta2"));
        assert!(parse_config("task = simulate\noptimizer = gd\neta2 = 0.1\nonn_mu_grid = 1, 5\n").is_ok());
    }
}
