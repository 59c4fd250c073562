//! Closed-form neural tangent kernel of a one-hidden-layer ReLU network,
//! Gram matrices, kernel ridge regression, ridgeless interpolation and
//! gradient descent on the kernel coefficients.
//!
//! For unit vectors `s`, `t` with `c = sᵀt` the kernel is
//!
//! ```text
//! h(s, t) = c · (π − arccos c) / (2π) = E_w[ sᵀt · 1{wᵀs ≥ 0, wᵀt ≥ 0} ],  w ~ N(0, I)
//! ```
//!
//! The same expectation is defined for arbitrary vectors, where the arccos
//! argument becomes the cosine of the angle. [`KernelDomain::Euclidean`]
//! exposes that extension for inputs that are not on the sphere (cube data,
//! raw pixels).

use std::f64::consts::PI;

use thiserror::Error;

use crate::linalg::{self, dot, norm2, Cholesky, LinalgError, SymMatrix};

/// Largest tolerated deviation of `‖x‖₂` from 1 for sphere inputs.
pub const UNIT_NORM_TOL: f64 = 1e-6;

/// Coefficient norm beyond which kernel gradient descent is declared divergent.
pub const DIVERGENCE_NORM: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NtkError {
    #[error("input {index} has norm {norm}, expected a unit vector")]
    NotUnitNorm { index: usize, norm: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("at least one training point is required")]
    Empty,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("kernel gradient descent diverged at iteration {iteration}: coefficient norm {norm:e}")]
    Divergence { iteration: usize, norm: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, NtkError>;

/// Kernel value as a function of the inner product of two unit vectors.
pub fn ntk_of_cosine(c: f64) -> f64 {
    let c = c.clamp(-1.0, 1.0);
    c * (PI - c.acos()) / (2.0 * PI)
}

fn check_unit(x: &[f64], index: usize) -> Result<()> {
    let norm = norm2(x);
    if (norm - 1.0).abs() > UNIT_NORM_TOL {
        return Err(NtkError::NotUnitNorm { index, norm });
    }
    Ok(())
}

/// `h(s, t)` for unit vectors. `NotUnitNorm` reports index 0 for `s`, 1 for `t`.
pub fn ntk_eval(s: &[f64], t: &[f64]) -> Result<f64> {
    if s.len() != t.len() {
        return Err(NtkError::DimensionMismatch {
            expected: s.len(),
            found: t.len(),
        });
    }
    check_unit(s, 0)?;
    check_unit(t, 1)?;
    Ok(ntk_of_cosine(dot(s, t)))
}

/// Expectation form for arbitrary vectors: `sᵀt (π − angle(s, t)) / (2π)`.
/// Zero vectors give 0.
pub fn ntk_eval_general(s: &[f64], t: &[f64]) -> f64 {
    let st = dot(s, t);
    let ns = norm2(s);
    let nt = norm2(t);
    if ns == 0.0 || nt == 0.0 {
        return 0.0;
    }
    let c = (st / (ns * nt)).clamp(-1.0, 1.0);
    st * (PI - c.acos()) / (2.0 * PI)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelDomain {
    /// Inputs must be unit vectors.
    Sphere,
    /// Any finite vectors; the kernel is the homogeneous extension.
    Euclidean,
}

/// The NTK together with its input domain and a constant output scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ntk {
    pub domain: KernelDomain,
    pub scale: f64,
}

impl Default for Ntk {
    fn default() -> Self {
        Self::sphere()
    }
}

impl Ntk {
    pub fn sphere() -> Self {
        Self {
            domain: KernelDomain::Sphere,
            scale: 1.0,
        }
    }

    pub fn euclidean() -> Self {
        Self {
            domain: KernelDomain::Euclidean,
            scale: 1.0,
        }
    }

    /// Multiplies every kernel value by `scale` (e.g. `1/d` for
    /// high-dimensional inputs).
    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    fn raw(&self, s: &[f64], t: &[f64]) -> f64 {
        match self.domain {
            KernelDomain::Sphere => self.scale * ntk_of_cosine(dot(s, t)),
            KernelDomain::Euclidean => self.scale * ntk_eval_general(s, t),
        }
    }

    /// Validates a point set against the domain and a common dimension.
    pub fn check_points(&self, points: &[Vec<f64>]) -> Result<()> {
        let d = points.first().map(Vec::len).ok_or(NtkError::Empty)?;
        for (i, p) in points.iter().enumerate() {
            if p.len() != d {
                return Err(NtkError::DimensionMismatch {
                    expected: d,
                    found: p.len(),
                });
            }
            if self.domain == KernelDomain::Sphere {
                check_unit(p, i)?;
            }
        }
        Ok(())
    }

    pub fn eval(&self, s: &[f64], t: &[f64]) -> Result<f64> {
        if s.len() != t.len() {
            return Err(NtkError::DimensionMismatch {
                expected: s.len(),
                found: t.len(),
            });
        }
        if self.domain == KernelDomain::Sphere {
            check_unit(s, 0)?;
            check_unit(t, 1)?;
        }
        Ok(self.raw(s, t))
    }

    pub fn gram(&self, points: &[Vec<f64>]) -> Result<SymMatrix> {
        self.check_points(points)?;
        Ok(SymMatrix::from_fn(points.len(), |i, j| {
            self.raw(&points[i], &points[j])
        })?)
    }

    /// `h(x, X)` against every training point.
    pub fn row(&self, x: &[f64], points: &[Vec<f64>]) -> Result<Vec<f64>> {
        let d = points.first().map(Vec::len).ok_or(NtkError::Empty)?;
        if x.len() != d {
            return Err(NtkError::DimensionMismatch {
                expected: d,
                found: x.len(),
            });
        }
        if self.domain == KernelDomain::Sphere {
            check_unit(x, 0)?;
        }
        Ok(points.iter().map(|p| self.raw(x, p)).collect())
    }
}

/// NTK matrix `H∞` over unit vectors.
pub fn gram_matrix(points: &[Vec<f64>]) -> Result<SymMatrix> {
    Ntk::sphere().gram(points)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelMode {
    Ridge,
    Interpolate,
    GradientDescent,
}

/// A fitted kernel predictor `x ↦ Σ_i coeffs[i] · h(x, x_i)`.
#[derive(Debug, Clone)]
pub struct KernelModel {
    kernel: Ntk,
    train_inputs: Vec<Vec<f64>>,
    gram: SymMatrix,
    ridge: f64,
    coeffs: Vec<f64>,
    mode: KernelMode,
}

impl KernelModel {
    /// Assembles a model from precomputed parts.
    pub fn from_parts(
        kernel: Ntk,
        train_inputs: Vec<Vec<f64>>,
        gram: SymMatrix,
        ridge: f64,
        coeffs: Vec<f64>,
        mode: KernelMode,
    ) -> Result<Self> {
        let n = train_inputs.len();
        if gram.n() != n || coeffs.len() != n {
            return Err(NtkError::DimensionMismatch {
                expected: n,
                found: if gram.n() != n { gram.n() } else { coeffs.len() },
            });
        }
        Ok(Self {
            kernel,
            train_inputs,
            gram,
            ridge,
            coeffs,
            mode,
        })
    }

    pub fn kernel(&self) -> Ntk {
        self.kernel
    }

    pub fn train_inputs(&self) -> &[Vec<f64>] {
        &self.train_inputs
    }

    pub fn gram(&self) -> &SymMatrix {
        &self.gram
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn mode(&self) -> KernelMode {
        self.mode
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        let k = self.kernel.row(x, &self.train_inputs)?;
        Ok(dot(&k, &self.coeffs))
    }

    /// Predictions at the training inputs, `H∞ · coeffs`.
    pub fn fitted_values(&self) -> Vec<f64> {
        self.gram.matvec(&self.coeffs).expect("sizes checked at construction")
    }
}

pub fn predict(model: &KernelModel, x: &[f64]) -> Result<f64> {
    model.predict(x)
}

fn check_labels(n: usize, labels: &[f64]) -> Result<()> {
    if labels.len() != n {
        return Err(NtkError::DimensionMismatch {
            expected: n,
            found: labels.len(),
        });
    }
    Ok(())
}

/// Kernel ridge regression on unit vectors; `ridge == 0` interpolates.
pub fn fit_krr(points: &[Vec<f64>], labels: &[f64], ridge: f64) -> Result<KernelModel> {
    fit_krr_with(Ntk::sphere(), points, labels, ridge)
}

pub fn fit_krr_with(
    kernel: Ntk,
    points: &[Vec<f64>],
    labels: &[f64],
    ridge: f64,
) -> Result<KernelModel> {
    let gram = kernel.gram(points)?;
    fit_krr_with_gram(kernel, points, &gram, labels, ridge)
}

/// Solves `(H∞ + μI) c = y` against an already assembled Gram matrix, so a
/// ridge grid can share one Gram.
pub fn fit_krr_with_gram(
    kernel: Ntk,
    points: &[Vec<f64>],
    gram: &SymMatrix,
    labels: &[f64],
    ridge: f64,
) -> Result<KernelModel> {
    if !(ridge >= 0.0) {
        return Err(NtkError::InvalidParameter(format!(
            "ridge must be non-negative, got {ridge}"
        )));
    }
    if gram.n() != points.len() {
        return Err(NtkError::DimensionMismatch {
            expected: points.len(),
            found: gram.n(),
        });
    }
    check_labels(points.len(), labels)?;
    let shifted = gram.add_to_diagonal(ridge);
    let coeffs = Cholesky::factor(&shifted)?.solve(labels)?;
    let mode = if ridge == 0.0 {
        KernelMode::Interpolate
    } else {
        KernelMode::Ridge
    };
    KernelModel::from_parts(kernel, points.to_vec(), gram.clone(), ridge, coeffs, mode)
}

/// Step size `1 / λ̂₁²`, the default cap for kernel gradient descent.
pub fn safe_step_size(top_eigenvalue: f64) -> f64 {
    1.0 / (top_eigenvalue * top_eigenvalue)
}

/// Recorded iterates of `ω_{k+1} = ω_k − η((H∞)²ω_k − H∞y)` from `ω_0 = 0`.
#[derive(Debug, Clone)]
pub struct KernelGdTrajectory {
    pub step_size: f64,
    /// Iteration index of each recorded iterate.
    pub iterations: Vec<usize>,
    pub iterates: Vec<Vec<f64>>,
    /// `½‖H∞ω_k − y‖₂²` for each recorded iterate.
    pub recorded_losses: Vec<f64>,
}

impl KernelGdTrajectory {
    pub fn final_coeffs(&self) -> &[f64] {
        self.iterates.last().expect("ω_0 is always recorded")
    }

    pub fn final_iteration(&self) -> usize {
        *self.iterations.last().expect("ω_0 is always recorded")
    }
}

pub fn kernel_gd_run(
    points: &[Vec<f64>],
    labels: &[f64],
    step_size: f64,
    max_iter: usize,
    record_every: usize,
) -> Result<KernelGdTrajectory> {
    let gram = gram_matrix(points)?;
    kernel_gd_run_gram(&gram, labels, step_size, max_iter, record_every)
}

/// Kernel-coefficient gradient descent on a given Gram matrix. Iterates are
/// kept at `k = 0`, every `record_every`-th step and the last step.
pub fn kernel_gd_run_gram(
    gram: &SymMatrix,
    labels: &[f64],
    step_size: f64,
    max_iter: usize,
    record_every: usize,
) -> Result<KernelGdTrajectory> {
    if !(step_size > 0.0) {
        return Err(NtkError::InvalidParameter(format!(
            "step size must be positive, got {step_size}"
        )));
    }
    if record_every == 0 {
        return Err(NtkError::InvalidParameter("record_every must be at least 1".into()));
    }
    let n = gram.n();
    check_labels(n, labels)?;

    let mut omega = vec![0.0; n];
    // residual = H∞ω − y
    let mut residual: Vec<f64> = labels.iter().map(|y| -y).collect();
    let loss = |r: &[f64]| 0.5 * dot(r, r);

    let mut traj = KernelGdTrajectory {
        step_size,
        iterations: vec![0],
        iterates: vec![omega.clone()],
        recorded_losses: vec![loss(&residual)],
    };
    for k in 1..=max_iter {
        // H∞(H∞ω − y) = (H∞)²ω − H∞y
        let grad = gram.matvec(&residual)?;
        for (w, g) in omega.iter_mut().zip(&grad) {
            *w -= step_size * g;
        }
        let fitted = gram.matvec(&omega)?;
        for ((r, f), y) in residual.iter_mut().zip(&fitted).zip(labels) {
            *r = f - y;
        }
        let norm = norm2(&omega);
        if !(norm <= DIVERGENCE_NORM) {
            return Err(NtkError::Divergence { iteration: k, norm });
        }
        if k % record_every == 0 || k == max_iter {
            traj.iterations.push(k);
            traj.iterates.push(omega.clone());
            traj.recorded_losses.push(loss(&residual));
        }
    }
    Ok(traj)
}

/// Top eigenvalue of a Gram matrix, used for the step-size cap.
pub fn top_eigenvalue(gram: &SymMatrix) -> Result<f64> {
    let values = linalg::sym_eigenvalues(gram, linalg::DEFAULT_EIGEN_TOL)?;
    Ok(values[0])
}
