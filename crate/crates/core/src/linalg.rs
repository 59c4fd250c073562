//! Dense symmetric linear algebra: Cholesky solves, cyclic Jacobi
//! eigendecomposition and matrix-vector products.
//!
//! Everything here works on [`SymMatrix`], a row-major square matrix that is
//! exactly symmetric by construction. Gram matrices, their ridge-shifted
//! versions and finite-width network Gram matrices all live in this type.

use thiserror::Error;

/// Default cap on Jacobi sweeps.
pub const DEFAULT_MAX_SWEEPS: usize = 100;

/// Default relative off-diagonal tolerance for [`sym_eigen`].
pub const DEFAULT_EIGEN_TOL: f64 = 1e-12;

/// Relative pivot threshold: a Cholesky pivot must exceed
/// `PIVOT_REL_TOL * trace / n`.
pub const PIVOT_REL_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not positive definite: pivot {pivot:e} at row {index} is not above {threshold:e}")]
    NotPositiveDefinite {
        index: usize,
        pivot: f64,
        threshold: f64,
    },
    #[error("Jacobi iteration did not converge within {sweeps} sweeps (off-diagonal norm {off_norm:e})")]
    NoConvergence { sweeps: usize, off_norm: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix dimension must be at least 1")]
    Empty,
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
}

pub type Result<T> = std::result::Result<T, LinalgError>;

/// Square symmetric matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    /// Builds the matrix by evaluating `f(i, j)` for `i <= j` and mirroring.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        if n == 0 {
            return Err(LinalgError::Empty);
        }
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = f(i, j);
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        Ok(Self { n, data })
    }

    /// Wraps a row-major buffer, replacing it with `(A + Aᵀ) / 2`.
    pub fn from_row_major(n: usize, mut data: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(LinalgError::Empty);
        }
        if data.len() != n * n {
            return Err(LinalgError::DimensionMismatch {
                expected: n * n,
                found: data.len(),
            });
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (data[i * n + j] + data[j * n + i]);
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        Ok(Self { n, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for row in rows {
            if row.len() != n {
                return Err(LinalgError::DimensionMismatch {
                    expected: n,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::from_row_major(n, data)
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::from_fn(n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::from_fn(diag.len(), |i, j| if i == j { diag[i] } else { 0.0 })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Returns `self + c·I`.
    pub fn add_to_diagonal(&self, c: f64) -> SymMatrix {
        let mut out = self.clone();
        for i in 0..self.n {
            out.data[i * self.n + i] += c;
        }
        out
    }

    /// Returns `c·self`.
    pub fn scaled(&self, c: f64) -> SymMatrix {
        SymMatrix {
            n: self.n,
            data: self.data.iter().map(|v| c * v).collect(),
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n {
            return Err(LinalgError::DimensionMismatch {
                expected: self.n,
                found: x.len(),
            });
        }
        Ok((0..self.n).map(|i| dot(self.row(i), x)).collect())
    }
}

/// Dense product `a·x`.
pub fn matvec(a: &SymMatrix, x: &[f64]) -> Result<Vec<f64>> {
    a.matvec(x)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Lower-triangular Cholesky factor `A = L Lᵀ`, stored row-major.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    lower: Vec<f64>,
}

impl Cholesky {
    /// Factors `a`, rejecting any pivot at or below `1e-12 · trace(a) / n`.
    pub fn factor(a: &SymMatrix) -> Result<Self> {
        let n = a.n();
        let threshold = PIVOT_REL_TOL * (a.trace() / n as f64).max(0.0);
        let mut lower = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let (li, lj) = (i * n, j * n);
                let partial = dot(&lower[li..li + j], &lower[lj..lj + j]);
                let v = a.get(i, j) - partial;
                if i == j {
                    // NaN also fails this comparison.
                    if !(v > threshold) {
                        return Err(LinalgError::NotPositiveDefinite {
                            index: i,
                            pivot: v,
                            threshold,
                        });
                    }
                    lower[li + i] = v.sqrt();
                } else {
                    lower[li + j] = v / lower[lj + j];
                }
            }
        }
        Ok(Self { n, lower })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        if b.len() != n {
            return Err(LinalgError::DimensionMismatch {
                expected: n,
                found: b.len(),
            });
        }
        let l = &self.lower;
        let mut z = vec![0.0; n];
        for i in 0..n {
            let s = dot(&l[i * n..i * n + i], &z[..i]);
            z[i] = (b[i] - s) / l[i * n + i];
        }
        let mut x = z;
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= l[k * n + i] * x[k];
            }
            x[i] = s / l[i * n + i];
        }
        Ok(x)
    }

    /// `log det A = 2 Σ log L_ii`.
    pub fn log_det(&self) -> f64 {
        (0..self.n)
            .map(|i| self.lower[i * self.n + i].ln())
            .sum::<f64>()
            * 2.0
    }
}

/// Solves `a·x = b` for positive definite `a`.
pub fn cholesky_solve(a: &SymMatrix, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != a.n() {
        return Err(LinalgError::DimensionMismatch {
            expected: a.n(),
            found: b.len(),
        });
    }
    Cholesky::factor(a)?.solve(b)
}

/// Eigenvalues sorted descending with matching orthonormal eigenvectors.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    n: usize,
    values: Vec<f64>,
    // Row j holds the eigenvector of values[j].
    vectors_t: Vec<f64>,
}

impl EigenDecomposition {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Eigenvector paired with `values()[j]`.
    pub fn vector(&self, j: usize) -> &[f64] {
        &self.vectors_t[j * self.n..(j + 1) * self.n]
    }

    /// Component `i` of eigenvector `j`, i.e. entry `(i, j)` of `V`.
    pub fn vector_entry(&self, i: usize, j: usize) -> f64 {
        self.vectors_t[j * self.n + i]
    }

    /// Rebuilds `V diag(λ) Vᵀ`.
    pub fn reconstruct(&self) -> SymMatrix {
        let n = self.n;
        SymMatrix::from_fn(n, |i, j| {
            (0..n)
                .map(|k| self.values[k] * self.vector_entry(i, k) * self.vector_entry(j, k))
                .sum()
        })
        .expect("n >= 1")
    }
}

#[derive(Debug, Clone, Copy)]
pub struct JacobiOptions {
    /// Stop once the off-diagonal Frobenius norm is at most `tol · ‖A‖_F`.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for JacobiOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_EIGEN_TOL,
            max_sweeps: DEFAULT_MAX_SWEEPS,
        }
    }
}

/// Full symmetric eigendecomposition by cyclic Jacobi.
pub fn sym_eigen(a: &SymMatrix, tol: f64) -> Result<EigenDecomposition> {
    sym_eigen_with(
        a,
        JacobiOptions {
            tol,
            ..JacobiOptions::default()
        },
    )
}

pub fn sym_eigen_with(a: &SymMatrix, opts: JacobiOptions) -> Result<EigenDecomposition> {
    let (diag, vt) = jacobi(a, opts, true)?;
    let vt = vt.expect("vectors requested");
    let n = a.n();
    let order = descending_order(&diag);
    let values = order.iter().map(|&j| diag[j]).collect();
    let mut vectors_t = Vec::with_capacity(n * n);
    for &j in &order {
        vectors_t.extend_from_slice(&vt[j * n..(j + 1) * n]);
    }
    Ok(EigenDecomposition {
        n,
        values,
        vectors_t,
    })
}

/// Eigenvalues only, sorted descending. Skips eigenvector accumulation.
pub fn sym_eigenvalues(a: &SymMatrix, tol: f64) -> Result<Vec<f64>> {
    let (mut diag, _) = jacobi(
        a,
        JacobiOptions {
            tol,
            ..JacobiOptions::default()
        },
        false,
    )?;
    diag.sort_by(|x, y| y.total_cmp(x));
    Ok(diag)
}

fn descending_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]));
    order
}

fn off_diagonal_norm(a: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[i * n + j] * a[i * n + j];
            }
        }
    }
    s.sqrt()
}

/// Round-robin tournament pairing: `n - 1` rounds (n even) of disjoint pairs
/// covering every unordered pair once. Odd `n` gets a bye slot.
fn round_robin(n: usize) -> Vec<Vec<(usize, usize)>> {
    let m = n + (n % 2);
    let mut order: Vec<usize> = (0..m).collect();
    let mut rounds = Vec::with_capacity(m - 1);
    for _ in 0..m.saturating_sub(1) {
        let mut pairs = Vec::with_capacity(m / 2);
        for i in 0..m / 2 {
            let (p, q) = (order[i], order[m - 1 - i]);
            if p < n && q < n {
                pairs.push((p.min(q), p.max(q)));
            }
        }
        rounds.push(pairs);
        order[1..].rotate_right(1);
    }
    rounds
}

/// Cyclic Jacobi with round-robin ordering. Rotations within a round touch
/// disjoint index pairs, so they commute and can be applied as one pass over
/// rows followed by one pass over columns, both row-contiguous.
///
/// Returns the final diagonal and, when requested, `Vᵀ` row-major.
fn jacobi(
    a: &SymMatrix,
    opts: JacobiOptions,
    want_vectors: bool,
) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    if !(opts.tol > 0.0) {
        return Err(LinalgError::BadTolerance(opts.tol));
    }
    let n = a.n();
    let mut m = a.as_slice().to_vec();
    let mut vt = want_vectors.then(|| {
        let mut v = vec![0.0; n * n];
        for i in 0..n {
            v[i * n + i] = 1.0;
        }
        v
    });
    let fro = a.frobenius_norm();
    let target = opts.tol * fro;
    // Entries at or below this never need rotating: if every off-diagonal
    // entry is this small the total off-norm is already <= target / 2.
    let skip = target / (2.0 * n as f64);
    let rounds = round_robin(n);
    let mut rot: Vec<(usize, usize, f64, f64)> = Vec::with_capacity(n / 2 + 1);

    let mut off = off_diagonal_norm(&m, n);
    let mut sweeps = 0;
    while off > target {
        if sweeps == opts.max_sweeps {
            return Err(LinalgError::NoConvergence {
                sweeps,
                off_norm: off,
            });
        }
        sweeps += 1;
        for pairs in &rounds {
            rot.clear();
            for &(p, q) in pairs {
                let apq = m[p * n + q];
                if apq.abs() <= skip {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                rot.push((p, q, c, t * c));
            }
            if rot.is_empty() {
                continue;
            }
            for &(p, q, c, s) in &rot {
                rotate_rows(&mut m, n, p, q, c, s);
                if let Some(v) = vt.as_mut() {
                    rotate_rows(v, n, p, q, c, s);
                }
            }
            for row in m.chunks_exact_mut(n) {
                for &(p, q, c, s) in &rot {
                    let (x, y) = (row[p], row[q]);
                    row[p] = c * x - s * y;
                    row[q] = s * x + c * y;
                }
            }
            for &(p, q, _, _) in &rot {
                m[p * n + q] = 0.0;
                m[q * n + p] = 0.0;
            }
        }
        off = off_diagonal_norm(&m, n);
    }
    let diag = (0..n).map(|i| m[i * n + i]).collect();
    Ok((diag, vt))
}

fn rotate_rows(m: &mut [f64], n: usize, p: usize, q: usize, c: f64, s: f64) {
    debug_assert!(p < q);
    let (head, tail) = m.split_at_mut(q * n);
    let rp = &mut head[p * n..(p + 1) * n];
    let rq = &mut tail[..n];
    for (x, y) in rp.iter_mut().zip(rq.iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}
