//! Finite-width one-hidden-layer ReLU network
//! `f(x) = (1/√m) Σ_r a_r max(0, w_rᵀx)` with the output signs `a` frozen
//! after initialization, trained by full-batch gradient descent,
//! ℓ2-regularized gradient descent or RMSProp.
//!
//! Weights are stored row-major as an `m × d` matrix, so `vec(W)` is the
//! neuron-major concatenation of the `w_r`. Batched passes go through two
//! GEMMs: `P = X Wᵀ` for the preactivations and `G = Cᵀ X` for the gradient.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::linalg::{dot, SymMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite weight after iteration {iteration}")]
    NonFinite { iteration: usize },
    #[error("at least one input is required")]
    Empty,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, NetworkError>;

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(NetworkError::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// Network parameters plus a frozen copy of the initial weights.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    m: usize,
    d: usize,
    tau: f64,
    weights: Vec<f64>,
    initial: Vec<f64>,
    signs: Vec<f64>,
}

impl NetworkState {
    /// Builds a state from explicit weights (`m × d`, row-major) and signs,
    /// which also become the initial snapshot.
    pub fn from_parts(d: usize, weights: Vec<f64>, signs: Vec<f64>, tau: f64) -> Result<Self> {
        let m = signs.len();
        if m == 0 || d == 0 {
            return Err(NetworkError::InvalidParameter(
                "width and input dimension must be positive".into(),
            ));
        }
        check_len(m * d, weights.len())?;
        if let Some(bad) = signs.iter().find(|&&a| a != 1.0 && a != -1.0) {
            return Err(NetworkError::InvalidParameter(format!(
                "output signs must be ±1, found {bad}"
            )));
        }
        Ok(Self {
            m,
            d,
            tau,
            initial: weights.clone(),
            weights,
            signs,
        })
    }

    pub fn width(&self) -> usize {
        self.m
    }

    pub fn input_dim(&self) -> usize {
        self.d
    }

    pub fn init_scale(&self) -> f64 {
        self.tau
    }

    /// Current `vec(W)`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `vec(W(0))`.
    pub fn initial_weights(&self) -> &[f64] {
        &self.initial
    }

    pub fn signs(&self) -> &[f64] {
        &self.signs
    }

    pub fn neuron(&self, r: usize) -> &[f64] {
        &self.weights[r * self.d..(r + 1) * self.d]
    }

    fn scale(&self) -> f64 {
        1.0 / (self.m as f64).sqrt()
    }

    /// `max_r ‖w_r − w_r(0)‖₂`
    pub fn max_movement(&self) -> f64 {
        self.weights
            .chunks_exact(self.d)
            .zip(self.initial.chunks_exact(self.d))
            .map(|(w, w0)| {
                w.iter()
                    .zip(w0)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }

    /// `‖vec(W) − factor · vec(W(0))‖₂`
    pub fn distance_to_scaled_init(&self, factor: f64) -> f64 {
        self.weights
            .iter()
            .zip(&self.initial)
            .map(|(w, w0)| (w - factor * w0).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    fn replace_weights(&mut self, next: &mut Vec<f64>, iteration: usize) -> Result<()> {
        if next.iter().any(|w| !w.is_finite()) {
            return Err(NetworkError::NonFinite { iteration });
        }
        std::mem::swap(&mut self.weights, next);
        Ok(())
    }
}

/// `W` entries i.i.d. `N(0, τ²)` drawn neuron-major, coordinate-minor, then
/// `m` uniform signs, all from one ChaCha8 stream seeded with `seed`.
pub fn init_network(m: usize, d: usize, tau: f64, seed: u64) -> Result<NetworkState> {
    if m == 0 || d == 0 || !(tau > 0.0) {
        return Err(NetworkError::InvalidParameter(format!(
            "need m, d >= 1 and tau > 0; got m = {m}, d = {d}, tau = {tau}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights: Vec<f64> = (0..m * d)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            tau * z
        })
        .collect();
    let signs = (0..m)
        .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
        .collect();
    NetworkState::from_parts(d, weights, signs, tau)
}

pub fn forward(state: &NetworkState, x: &[f64]) -> Result<f64> {
    check_len(state.d, x.len())?;
    let s: f64 = state
        .weights
        .chunks_exact(state.d)
        .zip(&state.signs)
        .map(|(w, a)| a * dot(w, x).max(0.0))
        .sum();
    Ok(state.scale() * s)
}

/// `z(x)`: block `r` is `(1/√m) a_r 1{w_rᵀx ≥ 0} x`, with the indicator taken
/// at `W(0)` when `at_init` and at the current weights otherwise.
pub fn feature_map(state: &NetworkState, x: &[f64], at_init: bool) -> Result<Vec<f64>> {
    check_len(state.d, x.len())?;
    let w = if at_init { &state.initial } else { &state.weights };
    let scale = state.scale();
    let mut z = vec![0.0; state.m * state.d];
    for ((block, wr), a) in z
        .chunks_exact_mut(state.d)
        .zip(w.chunks_exact(state.d))
        .zip(&state.signs)
    {
        if dot(wr, x) >= 0.0 {
            for (zi, xi) in block.iter_mut().zip(x) {
                *zi = scale * a * xi;
            }
        }
    }
    Ok(z)
}

/// `vec(W)ᵀ z₀(x)`: the current weights against the initial activation pattern.
pub fn linearized_predict(state: &NetworkState, x: &[f64]) -> Result<f64> {
    check_len(state.d, x.len())?;
    let s: f64 = state
        .weights
        .chunks_exact(state.d)
        .zip(state.initial.chunks_exact(state.d))
        .zip(&state.signs)
        .map(|((w, w0), a)| if dot(w0, x) >= 0.0 { a * dot(w, x) } else { 0.0 })
        .sum();
    Ok(state.scale() * s)
}

/// Inputs packed row-major as an `n × d` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

impl Batch {
    pub fn new(inputs: &[Vec<f64>]) -> Result<Self> {
        let d = inputs.first().map(Vec::len).ok_or(NetworkError::Empty)?;
        let mut data = Vec::with_capacity(inputs.len() * d);
        for x in inputs {
            check_len(d, x.len())?;
            data.extend_from_slice(x);
        }
        Ok(Self {
            n: inputs.len(),
            d,
            data,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }
}

/// `P = X Wᵀ` (`n × m`, row-major) for the given weight matrix.
/// Below this input dimension plain loops beat the packed GEMM kernels.
const SMALL_DIM: usize = 8;

fn preactivations(batch: &Batch, weights: &[f64], m: usize, out: &mut [f64]) {
    let (n, d) = (batch.n, batch.d);
    debug_assert_eq!(out.len(), n * m);
    if d <= SMALL_DIM {
        for (x, row) in batch.data.chunks_exact(d).zip(out.chunks_exact_mut(m)) {
            for (p, w) in row.iter_mut().zip(weights.chunks_exact(d)) {
                *p = dot(w, x);
            }
        }
        return;
    }
    // SAFETY: strides describe in-bounds row-major layouts of X (n×d),
    // W viewed as d×m (element (k, r) = W[r·d + k]) and P (n×m).
    unsafe {
        matrixmultiply::dgemm(
            n,
            d,
            m,
            1.0,
            batch.data.as_ptr(),
            d as isize,
            1,
            weights.as_ptr(),
            1,
            d as isize,
            0.0,
            out.as_mut_ptr(),
            m as isize,
            1,
        );
    }
}

fn outputs_from_preactivations(state: &NetworkState, p: &[f64], out: &mut [f64]) {
    let scale = state.scale();
    for (u, row) in out.iter_mut().zip(p.chunks_exact(state.m)) {
        let s: f64 = row
            .iter()
            .zip(&state.signs)
            .map(|(z, a)| a * z.max(0.0))
            .sum();
        *u = scale * s;
    }
}

/// Scratch buffers for batched passes over one batch.
struct Workspace {
    p: Vec<f64>,
    u: Vec<f64>,
    grad: Vec<f64>,
}

impl Workspace {
    fn new(state: &NetworkState, batch: &Batch) -> Self {
        Self {
            p: vec![0.0; batch.n * state.m],
            u: vec![0.0; batch.n],
            grad: vec![0.0; state.m * state.d],
        }
    }

    fn forward(&mut self, state: &NetworkState, batch: &Batch) {
        preactivations(batch, &state.weights, state.m, &mut self.p);
        outputs_from_preactivations(state, &self.p, &mut self.u);
    }

    /// Gradient of `½‖u − y‖₂²` into `grad`, reusing `p` and `u` from the
    /// last `forward`. Overwrites `p`.
    fn data_gradient(&mut self, state: &NetworkState, batch: &Batch, labels: &[f64]) {
        let (n, m, d) = (batch.n, state.m, state.d);
        let scale = state.scale();
        // C_ir = (a_r/√m)(u_i − y_i) 1{P_ir ≥ 0}, stored over P.
        for ((row, u), y) in self.p.chunks_exact_mut(m).zip(&self.u).zip(labels) {
            let e = scale * (u - y);
            // Branch-free: the mask is close to a coin flip per entry.
            for (c, a) in row.iter_mut().zip(&state.signs) {
                *c = a * e * f64::from(u8::from(*c >= 0.0));
            }
        }
        if d <= SMALL_DIM {
            self.grad.fill(0.0);
            for (row, x) in self.p.chunks_exact(m).zip(batch.data.chunks_exact(d)) {
                for (c, g) in row.iter().zip(self.grad.chunks_exact_mut(d)) {
                    for (gk, xk) in g.iter_mut().zip(x) {
                        *gk += c * xk;
                    }
                }
            }
            return;
        }
        // SAFETY: C viewed as m×n (element (r, i) = C[i·m + r]), X is n×d and
        // G is m×d, all row-major and in bounds.
        unsafe {
            matrixmultiply::dgemm(
                m,
                n,
                d,
                1.0,
                self.p.as_ptr(),
                1,
                m as isize,
                batch.data.as_ptr(),
                d as isize,
                1,
                0.0,
                self.grad.as_mut_ptr(),
                d as isize,
                1,
            );
        }
    }
}

fn check_batch(state: &NetworkState, batch: &Batch, labels: &[f64]) -> Result<()> {
    check_len(state.d, batch.d)?;
    check_len(batch.n, labels.len())
}

/// Network outputs on every input.
pub fn predict_batch(state: &NetworkState, inputs: &[Vec<f64>]) -> Result<Vec<f64>> {
    let batch = Batch::new(inputs)?;
    check_len(state.d, batch.d)?;
    let mut ws = Workspace::new(state, &batch);
    ws.forward(state, &batch);
    Ok(ws.u)
}

/// `Φ₁(W) = ½‖y − u‖₂² + (μ/2)‖vec(W)‖₂²`; `μ = 0` gives the plain loss `Φ`.
pub fn loss(state: &NetworkState, inputs: &[Vec<f64>], labels: &[f64], mu: f64) -> Result<f64> {
    let u = predict_batch(state, inputs)?;
    check_len(u.len(), labels.len())?;
    Ok(penalized_loss(state, &u, labels, mu))
}

fn squared_loss(u: &[f64], labels: &[f64]) -> f64 {
    0.5 * u.iter().zip(labels).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
}

fn penalized_loss(state: &NetworkState, u: &[f64], labels: &[f64], mu: f64) -> f64 {
    let phi = squared_loss(u, labels);
    if mu == 0.0 {
        phi
    } else {
        phi + 0.5 * mu * dot(&state.weights, &state.weights)
    }
}

/// Gradient of `Φ₁` with respect to `vec(W)`.
pub fn loss_gradient(
    state: &NetworkState,
    inputs: &[Vec<f64>],
    labels: &[f64],
    mu: f64,
) -> Result<Vec<f64>> {
    let batch = Batch::new(inputs)?;
    check_batch(state, &batch, labels)?;
    let mut ws = Workspace::new(state, &batch);
    ws.forward(state, &batch);
    ws.data_gradient(state, &batch, labels);
    if mu != 0.0 {
        for (g, w) in ws.grad.iter_mut().zip(&state.weights) {
            *g += mu * w;
        }
    }
    Ok(ws.grad)
}

fn apply_l2_step(
    state: &mut NetworkState,
    grad: &[f64],
    eta1: f64,
    decay: f64,
    iteration: usize,
) -> Result<()> {
    let mut next: Vec<f64> = state
        .weights
        .iter()
        .zip(grad)
        .map(|(w, g)| w - eta1 * g)
        .collect();
    if decay != 0.0 {
        for (n, w) in next.iter_mut().zip(&state.weights) {
            *n -= decay * w;
        }
    }
    state.replace_weights(&mut next, iteration)
}

/// `vec(W) ← vec(W) − η Z (u − y)`, full batch.
pub fn gd_step(
    state: &mut NetworkState,
    inputs: &[Vec<f64>],
    labels: &[f64],
    eta: f64,
) -> Result<()> {
    regularized_gd_step(state, inputs, labels, eta, 0.0, 0.0)
}

/// `vec(W) ← vec(W) − η₁ Z (u − y) − η₂ μ vec(W)`, decay on the pre-step
/// weights. With `η₂μ = 0` this is exactly [`gd_step`].
pub fn regularized_gd_step(
    state: &mut NetworkState,
    inputs: &[Vec<f64>],
    labels: &[f64],
    eta1: f64,
    eta2: f64,
    mu: f64,
) -> Result<()> {
    check_decay(eta2, mu)?;
    let batch = Batch::new(inputs)?;
    check_batch(state, &batch, labels)?;
    let mut ws = Workspace::new(state, &batch);
    ws.forward(state, &batch);
    ws.data_gradient(state, &batch, labels);
    apply_l2_step(state, &ws.grad, eta1, eta2 * mu, 1)
}

fn check_decay(eta2: f64, mu: f64) -> Result<()> {
    let decay = eta2 * mu;
    if !(eta2 >= 0.0 && mu >= 0.0 && decay < 1.0) {
        return Err(NetworkError::InvalidParameter(format!(
            "need eta2, mu >= 0 and eta2·mu < 1; got eta2 = {eta2}, mu = {mu}"
        )));
    }
    Ok(())
}

pub const RMSPROP_LEARNING_RATE: f64 = 0.001;
pub const RMSPROP_RHO: f64 = 0.9;
pub const RMSPROP_EPSILON: f64 = 1e-7;

/// RMSProp hyperparameters and per-coordinate accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct RmsProp {
    pub learning_rate: f64,
    pub rho: f64,
    pub epsilon: f64,
    accumulator: Vec<f64>,
}

impl Default for RmsProp {
    fn default() -> Self {
        Self::new(RMSPROP_LEARNING_RATE, RMSPROP_RHO, RMSPROP_EPSILON)
    }
}

impl RmsProp {
    pub fn new(learning_rate: f64, rho: f64, epsilon: f64) -> Self {
        Self {
            learning_rate,
            rho,
            epsilon,
            accumulator: Vec::new(),
        }
    }

    pub fn accumulator(&self) -> &[f64] {
        &self.accumulator
    }

    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.rho > 0.0 && self.rho < 1.0 && self.epsilon > 0.0) {
            return Err(NetworkError::InvalidParameter(format!(
                "need lr > 0, rho in (0, 1), epsilon > 0; got lr = {}, rho = {}, epsilon = {}",
                self.learning_rate, self.rho, self.epsilon
            )));
        }
        Ok(())
    }

    /// `v ← ρv + (1−ρ)g²`, `w ← w − lr·g/√(v + ε)`.
    fn apply(&mut self, state: &mut NetworkState, grad: &[f64], iteration: usize) -> Result<()> {
        if self.accumulator.len() != grad.len() {
            self.accumulator = vec![0.0; grad.len()];
        }
        let (rho, lr, eps) = (self.rho, self.learning_rate, self.epsilon);
        let mut acc = self.accumulator.clone();
        let mut next: Vec<f64> = Vec::with_capacity(grad.len());
        for ((v, g), w) in acc.iter_mut().zip(grad).zip(&state.weights) {
            *v = rho * *v + (1.0 - rho) * g * g;
            next.push(w - lr * g / (*v + eps).sqrt());
        }
        state.replace_weights(&mut next, iteration)?;
        self.accumulator = acc;
        Ok(())
    }
}

/// One RMSProp step on `Φ₁` with penalty `mu`.
pub fn rmsprop_step(
    state: &mut NetworkState,
    optimizer: &mut RmsProp,
    inputs: &[Vec<f64>],
    labels: &[f64],
    mu: f64,
) -> Result<()> {
    optimizer.validate()?;
    let grad = loss_gradient(state, inputs, labels, mu)?;
    optimizer.apply(state, &grad, 1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UpdateRule {
    PlainGd,
    L2Gd,
    RmsProp {
        learning_rate: f64,
        rho: f64,
        epsilon: f64,
    },
}

impl UpdateRule {
    pub fn rmsprop_default() -> Self {
        UpdateRule::RmsProp {
            learning_rate: RMSPROP_LEARNING_RATE,
            rho: RMSPROP_RHO,
            epsilon: RMSPROP_EPSILON,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    /// Data-fit step `η₁`; the step `η` of plain GD.
    pub eta1: f64,
    /// Decay step `η₂`.
    pub eta2: f64,
    pub mu: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub record_every: usize,
    /// Stop as soon as the training RMSE drops below this.
    pub target_rmse: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            eta1: 0.1,
            eta2: 0.0,
            mu: 0.0,
            max_iter: 1000,
            seed: 0,
            record_every: 100,
            target_rmse: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta1 > 0.0) {
            return Err(NetworkError::InvalidParameter(format!(
                "eta1 must be positive, got {}",
                self.eta1
            )));
        }
        if self.record_every == 0 {
            return Err(NetworkError::InvalidParameter(
                "record_every must be at least 1".into(),
            ));
        }
        check_decay(self.eta2, self.mu)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogEntry {
    pub iteration: usize,
    /// `Φ = ½‖y − u‖₂²`
    pub loss: f64,
    /// `Φ₁ = Φ + (μ/2)‖vec(W)‖₂²`
    pub penalized_loss: f64,
    /// `max_r ‖w_r(k) − w_r(0)‖₂`
    pub max_movement: f64,
    /// `‖vec(W(k)) − (1 − η₂μ)ᵏ vec(W(0))‖₂`; the factor is 1 for rules without decay.
    pub decayed_init_distance: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub entries: Vec<LogEntry>,
    /// Outputs on the training inputs at the final iterate.
    pub final_outputs: Vec<f64>,
}

impl TrainLog {
    pub fn last(&self) -> &LogEntry {
        self.entries.last().expect("the initial state is always logged")
    }

    pub fn final_rmse(&self) -> f64 {
        (2.0 * self.last().loss / self.final_outputs.len() as f64).sqrt()
    }
}

/// Runs `rule` for up to `config.max_iter` full-batch steps, logging at
/// iteration 0, every `record_every`-th iteration and the last one.
pub fn train(
    mut state: NetworkState,
    inputs: &[Vec<f64>],
    labels: &[f64],
    config: &TrainConfig,
    rule: UpdateRule,
) -> Result<(NetworkState, TrainLog)> {
    config.validate()?;
    let batch = Batch::new(inputs)?;
    check_batch(&state, &batch, labels)?;
    let mut optimizer = match rule {
        UpdateRule::RmsProp {
            learning_rate,
            rho,
            epsilon,
        } => {
            let opt = RmsProp::new(learning_rate, rho, epsilon);
            opt.validate()?;
            Some(opt)
        }
        _ => None,
    };
    let decay = match rule {
        UpdateRule::L2Gd => config.eta2 * config.mu,
        _ => 0.0,
    };
    let penalty = match rule {
        UpdateRule::PlainGd => 0.0,
        _ => config.mu,
    };
    let n = batch.n as f64;
    let mut ws = Workspace::new(&state, &batch);
    let mut log = TrainLog::default();
    let mut factor = 1.0;
    for k in 0..=config.max_iter {
        ws.forward(&state, &batch);
        let phi = squared_loss(&ws.u, labels);
        let reached = config
            .target_rmse
            .is_some_and(|t| (2.0 * phi / n).sqrt() < t);
        let last = k == config.max_iter || reached;
        if k % config.record_every == 0 || last {
            log.entries.push(LogEntry {
                iteration: k,
                loss: phi,
                penalized_loss: penalized_loss(&state, &ws.u, labels, penalty),
                max_movement: state.max_movement(),
                decayed_init_distance: state.distance_to_scaled_init(factor),
            });
        }
        if last {
            break;
        }
        ws.data_gradient(&state, &batch, labels);
        match optimizer.as_mut() {
            Some(opt) => {
                if penalty != 0.0 {
                    for (g, w) in ws.grad.iter_mut().zip(&state.weights) {
                        *g += penalty * w;
                    }
                }
                opt.apply(&mut state, &ws.grad, k + 1)?;
            }
            None => apply_l2_step(&mut state, &ws.grad, config.eta1, decay, k + 1)?,
        }
        factor *= 1.0 - decay;
    }
    log.final_outputs = ws.u;
    Ok((state, log))
}

/// `H_ij = ⟨z(x_i), z(x_j)⟩ = (x_iᵀx_j) · (1/m) Σ_r 1{w_rᵀx_i ≥ 0} 1{w_rᵀx_j ≥ 0}`.
pub fn network_gram(state: &NetworkState, inputs: &[Vec<f64>], at_init: bool) -> Result<SymMatrix> {
    let batch = Batch::new(inputs)?;
    check_len(state.d, batch.d)?;
    let (n, m) = (batch.n, state.m);
    let w = if at_init { &state.initial } else { &state.weights };
    let mut ind = vec![0.0; n * m];
    preactivations(&batch, w, m, &mut ind);
    for v in ind.iter_mut() {
        *v = if *v >= 0.0 { 1.0 } else { 0.0 };
    }
    let mut overlap = vec![0.0; n * n];
    // SAFETY: I is n×m row-major; Iᵀ is the same buffer with swapped
    // strides; the output is n×n row-major.
    unsafe {
        matrixmultiply::dgemm(
            n,
            m,
            n,
            1.0 / m as f64,
            ind.as_ptr(),
            m as isize,
            1,
            ind.as_ptr(),
            1,
            m as isize,
            0.0,
            overlap.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    for i in 0..n {
        for j in 0..n {
            overlap[i * n + j] *= dot(batch.row(i), batch.row(j));
        }
    }
    SymMatrix::from_row_major(n, overlap).map_err(|_| NetworkError::Empty)
}
