//! Data-dependent stopping rule for kernel gradient descent.
//!
//! With `λ̂_1 ≥ … ≥ λ̂_n` the eigenvalues of the NTK Gram matrix, the local
//! empirical Rademacher complexity is
//!
//! ```text
//! R̂(ε) = √( (1/n) Σ_i min{λ̂_i / n, ε²} )
//! ```
//!
//! and the stopping time is the first `k` with `R̂(1/√(ηk)) > 1/(2eσηk)`,
//! minus one.

use std::f64::consts::E;

use thiserror::Error;

use crate::linalg::{self, LinalgError};
use crate::ntk::{self, KernelMode, KernelModel, Ntk, NtkError};

/// Eigenvalues down to this are treated as round-off and clamped to zero.
pub const NEGATIVE_EIGEN_TOL: f64 = -1e-10;

pub const DEFAULT_K_CAP: usize = 10_000_000;

/// Relative gap below which the incremental scan defers to the direct formula.
const TIE_REL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EarlyStopError {
    #[error("eigenvalue {index} is {value:e}, below the round-off tolerance")]
    NegativeEigenvalue { index: usize, value: f64 },
    #[error("expected {expected} eigenvalues, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("no stopping time at or below k_cap = {k_cap}")]
    NotFound {
        k_cap: usize,
        diagnostics: Box<StoppingDiagnostics>,
    },
    #[error(transparent)]
    Ntk(#[from] NtkError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, EarlyStopError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StoppingTime {
    Found(usize),
    NotFound,
}

impl StoppingTime {
    pub fn found(self) -> Option<usize> {
        match self {
            StoppingTime::Found(k) => Some(k),
            StoppingTime::NotFound => None,
        }
    }
}

/// One point of the recorded complexity curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub k: usize,
    /// `R̂(1/√(ηk))`
    pub complexity: f64,
    /// `1/(2eσηk)`
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoppingDiagnostics {
    /// Descending, clamped at zero.
    pub eigenvalues: Vec<f64>,
    pub sigma: f64,
    pub step_size: f64,
    pub k_cap: usize,
    pub k_star: StoppingTime,
    pub curve: Option<Vec<CurvePoint>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StoppingOptions {
    pub k_cap: usize,
    /// Record every `r`-th point of the curve (plus the crossing) when set.
    pub record_every: Option<usize>,
}

impl Default for StoppingOptions {
    fn default() -> Self {
        Self {
            k_cap: DEFAULT_K_CAP,
            record_every: None,
        }
    }
}

fn clamp_eigenvalues(eigenvalues: &[f64], n: usize) -> Result<Vec<f64>> {
    if eigenvalues.len() != n {
        return Err(EarlyStopError::LengthMismatch {
            expected: n,
            found: eigenvalues.len(),
        });
    }
    eigenvalues
        .iter()
        .enumerate()
        .map(|(index, &value)| {
            if value < NEGATIVE_EIGEN_TOL || value.is_nan() {
                Err(EarlyStopError::NegativeEigenvalue { index, value })
            } else {
                Ok(value.max(0.0))
            }
        })
        .collect()
}

fn rademacher_unchecked(eigenvalues: &[f64], n: usize, eps: f64) -> f64 {
    let nf = n as f64;
    let e2 = eps * eps;
    let s: f64 = eigenvalues.iter().map(|&l| (l / nf).min(e2)).sum();
    (s / nf).sqrt()
}

/// `R̂(ε)` for the eigenvalues of an `n × n` Gram matrix.
pub fn rademacher(eigenvalues: &[f64], n: usize, eps: f64) -> Result<f64> {
    if !(eps >= 0.0) {
        return Err(EarlyStopError::InvalidParameter(format!(
            "eps must be non-negative, got {eps}"
        )));
    }
    let clamped = clamp_eigenvalues(eigenvalues, n)?;
    Ok(rademacher_unchecked(&clamped, n, eps))
}

/// `1/(2eσηk)`
pub fn stopping_threshold(sigma: f64, eta: f64, k: usize) -> f64 {
    1.0 / (2.0 * E * sigma * eta * k as f64)
}

/// Whether the stopping inequality holds at `k ≥ 1`, by the direct formula.
pub fn stopping_predicate(eigenvalues: &[f64], n: usize, sigma: f64, eta: f64, k: usize) -> bool {
    let eps = 1.0 / (eta * k as f64).sqrt();
    rademacher_unchecked(eigenvalues, n, eps) > stopping_threshold(sigma, eta, k)
}

pub fn stopping_time(
    eigenvalues: &[f64],
    n: usize,
    sigma: f64,
    eta: f64,
    k_cap: usize,
) -> Result<StoppingDiagnostics> {
    stopping_time_with(
        eigenvalues,
        n,
        sigma,
        eta,
        StoppingOptions {
            k_cap,
            record_every: None,
        },
    )
}

/// Scans `k = 1..=k_cap`. The sum over eigenvalues is updated incrementally
/// (the split point between capped and uncapped terms only moves right as
/// `k` grows), so each step is O(1) amortized; near-ties are re-decided by
/// the direct formula.
pub fn stopping_time_with(
    eigenvalues: &[f64],
    n: usize,
    sigma: f64,
    eta: f64,
    opts: StoppingOptions,
) -> Result<StoppingDiagnostics> {
    if !(sigma > 0.0) || !(eta > 0.0) || opts.k_cap == 0 {
        return Err(EarlyStopError::InvalidParameter(format!(
            "need sigma > 0, eta > 0, k_cap >= 1; got sigma = {sigma}, eta = {eta}, k_cap = {}",
            opts.k_cap
        )));
    }
    if opts.record_every == Some(0) {
        return Err(EarlyStopError::InvalidParameter(
            "record_every must be at least 1".into(),
        ));
    }
    let mut eig = clamp_eigenvalues(eigenvalues, n)?;
    eig.sort_by(|a, b| b.total_cmp(a));

    let nf = n as f64;
    let scaled: Vec<f64> = eig.iter().map(|l| l / nf).collect();
    // suffix[j] = Σ_{i ≥ j} λ̂_i / n
    let mut suffix = vec![0.0; n + 1];
    for j in (0..n).rev() {
        suffix[j] = suffix[j + 1] + scaled[j];
    }

    let mut curve = opts.record_every.map(|_| Vec::new());
    let mut split = 0;
    let mut k_star = StoppingTime::NotFound;
    for k in 1..=opts.k_cap {
        let eps = 1.0 / (eta * k as f64).sqrt();
        let e2 = eps * eps;
        while split < n && scaled[split] > e2 {
            split += 1;
        }
        let lhs = ((split as f64 * e2 + suffix[split]) / nf).sqrt();
        let rhs = stopping_threshold(sigma, eta, k);
        let holds = if (lhs - rhs).abs() <= TIE_REL * lhs.max(rhs) {
            stopping_predicate(&eig, n, sigma, eta, k)
        } else {
            lhs > rhs
        };
        if let (Some(c), Some(r)) = (curve.as_mut(), opts.record_every) {
            if k % r == 0 || holds {
                c.push(CurvePoint {
                    k,
                    complexity: lhs,
                    threshold: rhs,
                });
            }
        }
        if holds {
            k_star = StoppingTime::Found(k - 1);
            break;
        }
    }
    Ok(StoppingDiagnostics {
        eigenvalues: eig,
        sigma,
        step_size: eta,
        k_cap: opts.k_cap,
        k_star,
        curve,
    })
}

/// Gram assembly, eigenvalues, `k*`, then exactly `k*` steps of kernel
/// gradient descent. The step size is capped at `1/λ̂₁²`; the diagnostics
/// carry the step actually used.
pub fn run_early_stopped_kernel_gd(
    points: &[Vec<f64>],
    labels: &[f64],
    sigma: f64,
    eta: f64,
    k_cap: usize,
) -> Result<(KernelModel, StoppingDiagnostics)> {
    run_early_stopped_kernel_gd_with(Ntk::sphere(), points, labels, sigma, eta, k_cap)
}

pub fn run_early_stopped_kernel_gd_with(
    kernel: Ntk,
    points: &[Vec<f64>],
    labels: &[f64],
    sigma: f64,
    eta: f64,
    k_cap: usize,
) -> Result<(KernelModel, StoppingDiagnostics)> {
    let gram = kernel.gram(points)?;
    let n = gram.n();
    if labels.len() != n {
        return Err(NtkError::DimensionMismatch {
            expected: n,
            found: labels.len(),
        }
        .into());
    }
    let eig = linalg::sym_eigenvalues(&gram, linalg::DEFAULT_EIGEN_TOL)?;
    let eta = if eig[0] > 0.0 {
        eta.min(ntk::safe_step_size(eig[0]))
    } else {
        eta
    };
    let diag = stopping_time(&eig, n, sigma, eta, k_cap)?;
    let Some(k) = diag.k_star.found() else {
        return Err(EarlyStopError::NotFound {
            k_cap,
            diagnostics: Box::new(diag),
        });
    };
    let coeffs = if k == 0 {
        vec![0.0; n]
    } else {
        let traj = ntk::kernel_gd_run_gram(&gram, labels, eta, k, k)?;
        traj.final_coeffs().to_vec()
    };
    let model = KernelModel::from_parts(
        kernel,
        points.to_vec(),
        gram,
        0.0,
        coeffs,
        KernelMode::GradientDescent,
    )?;
    Ok((model, diag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // Separately coded oracle: plain loop, ε² formed as 1/(ηk) directly.
    fn brute_force_k_star(eig: &[f64], sigma: f64, eta: f64, k_cap: usize) -> Option<usize> {
        let n = eig.len() as f64;
        for k in 1..=k_cap {
            let mut acc = 0.0;
            for &l in eig {
                let a = l.max(0.0) / n;
                let b = 1.0 / (eta * k as f64);
                acc += if a < b { a } else { b };
            }
            let left = (acc / n).sqrt();
            let right = 1.0 / (2.0 * std::f64::consts::E * sigma * eta * k as f64);
            if left > right {
                return Some(k - 1);
            }
        }
        None
    }

    fn random_spectrum(rng: &mut ChaCha8Rng) -> Vec<f64> {
        let n = rng.random_range(1..60);
        let decay = rng.random_range(0.5..3.0);
        let top = rng.random_range(0.1..50.0);
        let mut v: Vec<f64> = (1..=n)
            .map(|j| top * (j as f64).powf(-decay) * rng.random_range(0.5..1.5))
            .collect();
        v.sort_by(|a, b| b.total_cmp(a));
        v
    }

    #[test]
    fn rademacher_examples() {
        assert_eq!(rademacher(&[0.5, 0.1], 2, 0.0).unwrap(), 0.0);
        let r = rademacher(&[0.5], 1, 10.0).unwrap();
        assert!((r - 0.5f64.sqrt()).abs() < 1e-15);
        let r = rademacher(&[0.8, 0.2], 2, 0.3f64.sqrt()).unwrap();
        assert!((r - 0.2f64.sqrt()).abs() < 1e-12);
        assert!(matches!(
            rademacher(&[0.5, -1e-3], 2, 1.0),
            Err(EarlyStopError::NegativeEigenvalue { index: 1, .. })
        ));
        assert!(rademacher(&[0.5, -1e-11], 2, 1.0).is_ok());
        assert!(matches!(
            rademacher(&[0.5], 2, 1.0),
            Err(EarlyStopError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn stopping_examples() {
        let d = stopping_time(&[0.5], 1, 1.0, 1.0, 100).unwrap();
        assert_eq!(d.k_star, StoppingTime::Found(0));
        let d = stopping_time(&[3.0, 1.0, 0.2], 3, 1e6, 0.01, 100).unwrap();
        assert_eq!(d.k_star, StoppingTime::Found(0));
        // Zero spectrum: complexity is identically zero, never crosses.
        let d = stopping_time(&[0.0, 0.0], 2, 1.0, 1.0, 1000).unwrap();
        assert_eq!(d.k_star, StoppingTime::NotFound);
        assert!(stopping_time(&[0.5], 1, 0.0, 1.0, 10).is_err());
        assert!(stopping_time(&[0.5], 1, 1.0, 1.0, 0).is_err());
    }

    #[test]
    fn matches_brute_force_on_random_spectra() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut found = 0;
        for _ in 0..300 {
            let eig = random_spectrum(&mut rng);
            let sigma = rng.random_range(0.01..2.0);
            let eta = 10f64.powf(rng.random_range(-4.0..0.0));
            let cap = 20_000;
            let d = stopping_time(&eig, eig.len(), sigma, eta, cap).unwrap();
            assert_eq!(d.k_star.found(), brute_force_k_star(&eig, sigma, eta, cap));
            found += d.k_star.found().is_some() as usize;
        }
        assert!(found > 100);
    }

    #[test]
    fn boundary_is_certified() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let eig = random_spectrum(&mut rng);
            let n = eig.len();
            let sigma = rng.random_range(0.05..1.0);
            let eta = 10f64.powf(rng.random_range(-3.0..0.0));
            let d = stopping_time(&eig, n, sigma, eta, 100_000).unwrap();
            if let Some(k) = d.k_star.found() {
                assert!(stopping_predicate(&d.eigenvalues, n, sigma, eta, k + 1));
                if k >= 1 {
                    assert!(!stopping_predicate(&d.eigenvalues, n, sigma, eta, k));
                }
            }
        }
    }

    #[test]
    fn k_star_non_increasing_in_sigma() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let eig = random_spectrum(&mut rng);
            let eta = 10f64.powf(rng.random_range(-3.0..-1.0));
            let mut last = usize::MAX;
            for sigma in [0.1, 0.2, 0.3, 0.4, 0.5] {
                let k = stopping_time(&eig, eig.len(), sigma, eta, 1_000_000)
                    .unwrap()
                    .k_star
                    .found()
                    .unwrap_or(usize::MAX);
                assert!(k <= last);
                last = k;
            }
        }
    }

    #[test]
    fn predicate_depends_on_k_only_through_eta_k() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let eig = random_spectrum(&mut rng);
            let n = eig.len();
            let sigma = rng.random_range(0.05..1.0);
            let eta = 0.001 * rng.random_range(1..10) as f64;
            for k in [1usize, 3, 10, 40, 200] {
                for c in [2usize, 5] {
                    // (η, c·k) and (c·η, k) share the product ηk up to rounding.
                    let a = stopping_predicate(&eig, n, sigma, eta, c * k);
                    let b = stopping_predicate(&eig, n, sigma, eta * c as f64, k);
                    let eps = 1.0 / (eta * (c * k) as f64).sqrt();
                    let gap = rademacher_unchecked(&eig, n, eps)
                        - stopping_threshold(sigma, eta, c * k);
                    if gap.abs() > 1e-9 {
                        assert_eq!(a, b);
                    }
                }
            }
        }
    }

    #[test]
    fn curve_records_crossing() {
        let eig = [2.0, 1.0, 0.5, 0.1];
        let opts = StoppingOptions {
            k_cap: 10_000,
            record_every: Some(10),
        };
        let d = stopping_time_with(&eig, 4, 0.3, 0.01, opts).unwrap();
        let k = d.k_star.found().unwrap();
        let curve = d.curve.unwrap();
        let last = curve.last().unwrap();
        assert_eq!(last.k, k + 1);
        assert!(last.complexity > last.threshold);
        assert!(curve[..curve.len() - 1].iter().all(|p| p.k % 10 == 0 && p.complexity <= p.threshold));
    }

    #[test]
    fn early_stopped_gd_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Vec<f64>> = (0..12)
            .map(|_| {
                let t: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                vec![t.cos(), t.sin()]
            })
            .collect();
        let zeros = vec![0.0; 12];
        let (m, _) = run_early_stopped_kernel_gd(&pts, &zeros, 0.3, 0.01, 100_000).unwrap();
        assert!(m.coeffs().iter().all(|&c| c == 0.0));

        let y: Vec<f64> = pts.iter().map(|p| p[0]).collect();
        let (m, d) = run_early_stopped_kernel_gd(&pts, &y, 1e6, 0.01, 100).unwrap();
        assert_eq!(d.k_star, StoppingTime::Found(0));
        assert!(m.coeffs().iter().all(|&c| c == 0.0));
        assert_eq!(m.predict(&[1.0, 0.0]).unwrap(), 0.0);

        let (m, d) = run_early_stopped_kernel_gd(&pts, &y, 0.3, 0.01, 1_000_000).unwrap();
        let k = d.k_star.found().unwrap();
        assert!(k > 0);
        assert_eq!(m.mode(), KernelMode::GradientDescent);
        let direct = ntk::kernel_gd_run(&pts, &y, d.step_size, k, k).unwrap();
        assert_eq!(m.coeffs(), direct.final_coeffs());

        match run_early_stopped_kernel_gd(&pts, &y, 0.3, 0.01, 1) {
            Err(EarlyStopError::NotFound { k_cap: 1, .. }) => {}
            other => panic!("expected NotFound, got {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn rademacher_monotone_and_bounded(
            eig in proptest::collection::vec(0.0f64..10.0, 1..30),
            a in 0.0f64..5.0,
            b in 0.0f64..5.0,
        ) {
            let n = eig.len();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let rl = rademacher(&eig, n, lo).unwrap();
            let rh = rademacher(&eig, n, hi).unwrap();
            prop_assert!(rl <= rh);
            let bound = (eig.iter().sum::<f64>() / (n * n) as f64).sqrt();
            prop_assert!(rh <= bound * (1.0 + 1e-12));
        }
    }
}
