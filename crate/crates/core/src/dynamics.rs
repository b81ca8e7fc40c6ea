//! Learned transition model `P_phi(s' | s, a)`: a fully-factored Gaussian
//! whose means and log standard deviations are outputs of one network, fit
//! by KL-constrained negative log-likelihood steps on replay-memory batches.

use alloc::boxed::Box;
use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dist::{diag_gaussian_kl_row, DiagGaussianParams, LogStdBounds, HALF_LN_2PI};
use crate::error::{shape_err, Error, Result};
use crate::numkit::{Mlp, MlpActivations, MlpSpec, OutputMetric, ParamVector, Tensor};
use crate::trustregion::{
    solve_step, CurvatureOperator, StepReport, TrustRegionConfig, TrustRegionProblem,
};

/// One `(s, a, s')` experience tuple. Discrete actions are one-hot.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionTuple {
    pub s: Vec<f64>,
    pub a: Vec<f64>,
    pub s_next: Vec<f64>,
    pub r_ext: f64,
    pub done: bool,
}

/// Column-major-by-field view of many transitions.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TransitionBatch {
    pub state_dim: usize,
    pub action_dim: usize,
    pub states: Vec<f64>,
    pub actions: Vec<f64>,
    pub next_states: Vec<f64>,
}

impl TransitionBatch {
    pub fn new(state_dim: usize, action_dim: usize) -> Self {
        Self {
            state_dim,
            action_dim,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.states.len().checked_div(self.state_dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn push(&mut self, s: &[f64], a: &[f64], s_next: &[f64]) {
        debug_assert_eq!(s.len(), self.state_dim);
        debug_assert_eq!(a.len(), self.action_dim);
        self.states.extend_from_slice(s);
        self.actions.extend_from_slice(a);
        self.next_states.extend_from_slice(s_next);
    }

    pub fn from_tuples<'a>(
        state_dim: usize,
        action_dim: usize,
        tuples: impl IntoIterator<Item = &'a TransitionTuple>,
    ) -> Self {
        let mut b = Self::new(state_dim, action_dim);
        for t in tuples {
            b.push(&t.s, &t.a, &t.s_next);
        }
        b
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.state_dim..(i + 1) * self.state_dim]
    }

    pub fn action(&self, i: usize) -> &[f64] {
        &self.actions[i * self.action_dim..(i + 1) * self.action_dim]
    }

    pub fn next_state(&self, i: usize) -> &[f64] {
        &self.next_states[i * self.state_dim..(i + 1) * self.state_dim]
    }

    /// Rows `[start, end)` as a new batch.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        let (n, m) = (self.state_dim, self.action_dim);
        Self {
            state_dim: n,
            action_dim: m,
            states: self.states[start * n..end * n].to_vec(),
            actions: self.actions[start * m..end * m].to_vec(),
            next_states: self.next_states[start * n..end * n].to_vec(),
        }
    }
}

/// Bounded FIFO store of transitions.
#[derive(Debug, Clone)]
pub struct ReplayMemory {
    capacity: usize,
    storage: VecDeque<TransitionTuple>,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            storage: VecDeque::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &TransitionTuple> {
        self.storage.iter()
    }

    /// Inserts in order, evicting the oldest tuples beyond capacity.
    pub fn insert(&mut self, tuples: impl IntoIterator<Item = TransitionTuple>) {
        for t in tuples {
            if self.storage.len() == self.capacity {
                self.storage.pop_front();
            }
            self.storage.push_back(t);
        }
    }

    /// Indices of a uniform sample without replacement (the whole memory,
    /// permuted, when `count >= len`).
    pub fn sample_indices(&self, count: usize, seed: u64) -> Result<Vec<usize>> {
        if self.storage.is_empty() {
            return Err(Error::Empty("replay memory"));
        }
        if count == 0 {
            return Err(Error::InvalidArgument("sample count must be >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.storage.len();
        Ok(rand::seq::index::sample(&mut rng, n, count.min(n)).into_vec())
    }

    pub fn sample(&self, count: usize, seed: u64) -> Result<Vec<&TransitionTuple>> {
        Ok(self
            .sample_indices(count, seed)?
            .into_iter()
            .map(|i| &self.storage[i])
            .collect())
    }
}

/// Affine whitening of model inputs `[s, a]` and targets `s'`.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub input_mean: Vec<f64>,
    pub input_std: Vec<f64>,
    pub target_mean: Vec<f64>,
    pub target_std: Vec<f64>,
}

/// Standard deviations below this are treated as 1 (constant features).
pub const MIN_FEATURE_STD: f64 = 1e-6;

impl Normalizer {
    pub fn identity(state_dim: usize, action_dim: usize) -> Self {
        Self {
            input_mean: vec![0.0; state_dim + action_dim],
            input_std: vec![1.0; state_dim + action_dim],
            target_mean: vec![0.0; state_dim],
            target_std: vec![1.0; state_dim],
        }
    }

    pub fn state_dim(&self) -> usize {
        self.target_mean.len()
    }

    /// Population mean and standard deviation of every feature.
    pub fn fit<'a>(
        state_dim: usize,
        action_dim: usize,
        tuples: impl IntoIterator<Item = &'a TransitionTuple>,
    ) -> Self {
        let ni = state_dim + action_dim;
        let mut sum_in = vec![0.0; ni];
        let mut sq_in = vec![0.0; ni];
        let mut sum_t = vec![0.0; state_dim];
        let mut sq_t = vec![0.0; state_dim];
        let mut count = 0usize;
        // shifted sums: subtract the first row to avoid cancellation
        let mut shift_in: Option<Vec<f64>> = None;
        let mut shift_t: Option<Vec<f64>> = None;
        for t in tuples {
            let sin = shift_in.get_or_insert_with(|| t.s.iter().chain(&t.a).copied().collect());
            let st = shift_t.get_or_insert_with(|| t.s_next.clone());
            for (i, x) in t.s.iter().chain(&t.a).enumerate() {
                let d = x - sin[i];
                sum_in[i] += d;
                sq_in[i] += d * d;
            }
            for (i, x) in t.s_next.iter().enumerate() {
                let d = x - st[i];
                sum_t[i] += d;
                sq_t[i] += d * d;
            }
            count += 1;
        }
        if count == 0 {
            return Self::identity(state_dim, action_dim);
        }
        let n = count as f64;
        let finish = |sum: &[f64], sq: &[f64], shift: &[f64]| -> (Vec<f64>, Vec<f64>) {
            sum.iter()
                .zip(sq)
                .zip(shift)
                .map(|((s, q), c)| {
                    let m = s / n;
                    let var = (q / n - m * m).max(0.0);
                    let sd = libm::sqrt(var);
                    (c + m, if sd < MIN_FEATURE_STD { 1.0 } else { sd })
                })
                .unzip()
        };
        let (input_mean, input_std) = finish(&sum_in, &sq_in, shift_in.as_deref().unwrap_or(&[]));
        let (target_mean, target_std) = finish(&sum_t, &sq_t, shift_t.as_deref().unwrap_or(&[]));
        Self {
            input_mean,
            input_std,
            target_mean,
            target_std,
        }
    }

    /// `sum_i ln(target_std_i)`: whitened log-density minus this is the
    /// log-density in the original state space.
    pub fn target_log_jacobian(&self) -> f64 {
        self.target_std.iter().map(|s| libm::log(*s)).sum()
    }

    pub fn whiten_inputs(&self, batch: &TransitionBatch) -> Vec<f64> {
        let (n, m) = (batch.state_dim, batch.action_dim);
        let mut out = Vec::with_capacity(batch.len() * (n + m));
        for i in 0..batch.len() {
            for (j, x) in batch.state(i).iter().chain(batch.action(i)).enumerate() {
                out.push((x - self.input_mean[j]) / self.input_std[j]);
            }
        }
        out
    }

    pub fn whiten_targets(&self, batch: &TransitionBatch) -> Vec<f64> {
        let n = batch.state_dim;
        batch
            .next_states
            .iter()
            .enumerate()
            .map(|(k, x)| (x - self.target_mean[k % n]) / self.target_std[k % n])
            .collect()
    }
}

/// Parameters plus normalizer: everything needed to evaluate a past model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSnapshot {
    pub params: ParamVector,
    pub normalizer: Normalizer,
}

/// Gaussian dynamics model over next states.
#[derive(Debug, Clone)]
pub struct DynamicsModel {
    mlp: Mlp,
    params: ParamVector,
    normalizer: Normalizer,
    bounds: LogStdBounds,
    state_dim: usize,
    action_dim: usize,
}

impl DynamicsModel {
    /// Network maps `[s, a]` to `[mean, log_std]` over the whitened next state.
    pub fn new(
        state_dim: usize,
        action_dim: usize,
        hidden_sizes: Vec<usize>,
        seed: u64,
        bounds: LogStdBounds,
    ) -> Result<Self> {
        let spec = MlpSpec::new(state_dim + action_dim, hidden_sizes, 2 * state_dim, seed);
        let mlp = Mlp::new(spec)?;
        let params = mlp.init();
        Ok(Self {
            mlp,
            params,
            normalizer: Normalizer::identity(state_dim, action_dim),
            bounds,
            state_dim,
            action_dim,
        })
    }

    /// Rebuilds a model from stored parts (e.g. a checkpoint).
    pub fn from_parts(
        spec: MlpSpec,
        params: ParamVector,
        normalizer: Normalizer,
        bounds: LogStdBounds,
    ) -> Result<Self> {
        let mlp = Mlp::new(spec)?;
        if params.layout() != &mlp.layout() {
            return Err(shape_err("dynamics parameters do not match the network spec"));
        }
        if mlp.output_dim() % 2 != 0 {
            return Err(shape_err("dynamics output must hold mean and log_std heads"));
        }
        let state_dim = mlp.output_dim() / 2;
        let action_dim = mlp
            .input_dim()
            .checked_sub(state_dim)
            .ok_or_else(|| shape_err("dynamics input narrower than the state"))?;
        if normalizer.state_dim() != state_dim || normalizer.input_mean.len() != mlp.input_dim() {
            return Err(shape_err("normalizer dimensions do not match the network"));
        }
        Ok(Self {
            mlp,
            params,
            normalizer,
            bounds,
            state_dim,
            action_dim,
        })
    }

    pub fn spec(&self) -> &MlpSpec {
        self.mlp.spec()
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    pub fn bounds(&self) -> LogStdBounds {
        self.bounds
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn set_params(&mut self, params: ParamVector) -> Result<()> {
        if params.layout() != self.params.layout() {
            return Err(shape_err("dynamics parameter layout changed"));
        }
        self.params = params;
        Ok(())
    }

    pub fn set_normalizer(&mut self, normalizer: Normalizer) -> Result<()> {
        if normalizer.input_mean.len() != self.mlp.input_dim()
            || normalizer.state_dim() != self.state_dim
        {
            return Err(shape_err("normalizer dimensions do not match the model"));
        }
        self.normalizer = normalizer;
        Ok(())
    }

    pub fn snapshot(&self) -> ModelSnapshot {
        ModelSnapshot {
            params: self.params.clone(),
            normalizer: self.normalizer.clone(),
        }
    }

    /// The same architecture evaluated at a stored snapshot.
    pub fn with_snapshot(&self, snap: &ModelSnapshot) -> Result<Self> {
        let mut m = self.clone();
        m.set_params(snap.params.clone())?;
        m.set_normalizer(snap.normalizer.clone())?;
        Ok(m)
    }

    fn check_batch(&self, batch: &TransitionBatch) -> Result<()> {
        if batch.state_dim != self.state_dim || batch.action_dim != self.action_dim {
            return Err(shape_err(format!(
                "batch dims ({}, {}) do not match model ({}, {})",
                batch.state_dim, batch.action_dim, self.state_dim, self.action_dim
            )));
        }
        Ok(())
    }

    fn forward_whitened(&self, params: &[f64], inputs: &[f64], rows: usize) -> Result<MlpActivations> {
        self.mlp.forward(params, inputs, rows)
    }

    /// Predicted next-state distribution in the whitened output space.
    pub fn predict_whitened(&self, batch: &TransitionBatch) -> Result<DiagGaussianParams> {
        self.check_batch(batch)?;
        let rows = batch.len();
        let acts = self.forward_whitened(self.params.data(), &self.normalizer.whiten_inputs(batch), rows)?;
        let (mean, log_std) = split_heads(acts.output(), self.state_dim);
        DiagGaussianParams::new(
            Tensor::matrix(rows, self.state_dim, mean)?,
            Tensor::matrix(rows, self.state_dim, log_std)?,
            self.bounds,
        )
    }

    /// Predicted next-state distribution in the original state space.
    pub fn predict(&self, batch: &TransitionBatch) -> Result<DiagGaussianParams> {
        let w = self.predict_whitened(batch)?;
        let n = self.state_dim;
        let nz = &self.normalizer;
        let mean = w
            .mean()
            .data()
            .iter()
            .enumerate()
            .map(|(k, m)| m * nz.target_std[k % n] + nz.target_mean[k % n])
            .collect();
        let log_std = w
            .log_std()
            .data()
            .iter()
            .enumerate()
            .map(|(k, l)| l + libm::log(nz.target_std[k % n]))
            .collect();
        let unbounded = LogStdBounds {
            min: f64::NEG_INFINITY,
            max: f64::INFINITY,
        };
        DiagGaussianParams::new(
            Tensor::matrix(batch.len(), n, mean)?,
            Tensor::matrix(batch.len(), n, log_std)?,
            unbounded,
        )
    }

    /// `log P_phi(s' | s, a)` per transition, in the original state space.
    pub fn log_probs(&self, batch: &TransitionBatch) -> Result<Vec<f64>> {
        self.check_batch(batch)?;
        let rows = batch.len();
        let inputs = self.normalizer.whiten_inputs(batch);
        let targets = self.normalizer.whiten_targets(batch);
        let acts = self.forward_whitened(self.params.data(), &inputs, rows)?;
        let jac = self.normalizer.target_log_jacobian();
        let n = self.state_dim;
        let out = acts.output();
        Ok((0..rows)
            .map(|r| {
                let o = &out[r * 2 * n..(r + 1) * 2 * n];
                let y = &targets[r * n..(r + 1) * n];
                whitened_log_density(&o[..n], &o[n..], y, self.bounds) - jac
            })
            .collect())
    }

    /// Predicted means in the original state space, row-major.
    pub fn predicted_means(&self, batch: &TransitionBatch) -> Result<Vec<f64>> {
        Ok(self.predict(batch)?.mean().data().to_vec())
    }

    /// Sum of squared weights (biases excluded).
    pub fn weight_norm_sq(&self, params: &[f64]) -> f64 {
        self.mlp
            .weight_ranges()
            .map(|r| params[r].iter().map(|w| w * w).sum::<f64>())
            .sum()
    }
}

fn split_heads(out: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut mean = Vec::with_capacity(out.len() / 2);
    let mut log_std = Vec::with_capacity(out.len() / 2);
    for row in out.chunks_exact(2 * n) {
        mean.extend_from_slice(&row[..n]);
        log_std.extend_from_slice(&row[n..]);
    }
    (mean, log_std)
}

#[inline]
fn whitened_log_density(mean: &[f64], raw_log_std: &[f64], y: &[f64], bounds: LogStdBounds) -> f64 {
    let mut acc = 0.0;
    for i in 0..mean.len() {
        let l = bounds.clamp(raw_log_std[i]);
        let z = (y[i] - mean[i]) * libm::exp(-l);
        acc -= 0.5 * z * z + l;
    }
    acc - HALF_LN_2PI * mean.len() as f64
}

/// Mean negative log-likelihood in the original state space.
pub fn model_nll(model: &DynamicsModel, batch: &TransitionBatch) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Empty("transition batch"));
    }
    let lp = model.log_probs(batch)?;
    Ok(-lp.iter().sum::<f64>() / lp.len() as f64)
}

/// Past model states for the k-step learning-progress bonus.
#[derive(Debug, Clone)]
pub struct SnapshotRing {
    k_max: usize,
    ring: VecDeque<(u64, ModelSnapshot)>,
}

impl SnapshotRing {
    pub fn new(k_max: usize) -> Self {
        Self {
            k_max: k_max.max(1),
            ring: VecDeque::new(),
        }
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn len(&self) -> usize {
        self.ring.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ring.is_empty()
    }

    /// Records the model state that existed before update number `index`.
    pub fn push(&mut self, index: u64, snap: ModelSnapshot) -> Result<()> {
        if let Some((last, _)) = self.ring.back() {
            if index <= *last {
                return Err(Error::InvalidArgument(format!(
                    "snapshot index {index} not after {last}"
                )));
            }
        }
        if self.ring.len() == self.k_max {
            self.ring.pop_front();
        }
        self.ring.push_back((index, snap));
        Ok(())
    }

    /// The model from `k` updates ago, or the oldest one held if fewer
    /// than `k` updates have happened.
    pub fn get(&self, k: usize) -> Result<&ModelSnapshot> {
        if k == 0 {
            return Err(Error::InvalidArgument("k must be >= 1".into()));
        }
        let len = self.ring.len();
        if len == 0 {
            return Err(Error::Empty("snapshot ring"));
        }
        Ok(&self.ring[len - k.min(len)].1)
    }

    pub fn indices(&self) -> impl Iterator<Item = u64> + '_ {
        self.ring.iter().map(|(i, _)| *i)
    }
}

/// Settings for one KL-constrained dynamics step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicsUpdateConfig {
    /// Transitions sampled from the replay memory per update.
    pub batch_size: usize,
    /// KL radius of the step.
    pub kappa: f64,
    /// L2 penalty on weights.
    pub alpha: f64,
    pub trust_region: TrustRegionConfig,
}

impl Default for DynamicsUpdateConfig {
    fn default() -> Self {
        Self {
            batch_size: 5000,
            kappa: 0.001,
            alpha: 1.0,
            trust_region: TrustRegionConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelUpdateReport {
    /// Memory held fewer than `batch_size` tuples; nothing changed.
    pub skipped: bool,
    pub step: Option<StepReport>,
    /// Batch NLL (original space) before and after the step.
    pub nll_before: f64,
    pub nll_after: f64,
    /// Measured mean KL of the new model from the old one on the batch.
    pub kl_step: f64,
}

impl ModelUpdateReport {
    fn skipped() -> Self {
        Self {
            skipped: true,
            step: None,
            nll_before: f64::NAN,
            nll_after: f64::NAN,
            kl_step: 0.0,
        }
    }
}

struct DynamicsStep<'a> {
    model: &'a DynamicsModel,
    inputs: Vec<f64>,
    targets: Vec<f64>,
    rows: usize,
    alpha: f64,
    kappa: f64,
    old_acts: MlpActivations,
    metric: OutputMetric,
}

impl<'a> DynamicsStep<'a> {
    fn new(model: &'a DynamicsModel, batch: &TransitionBatch, alpha: f64, kappa: f64) -> Result<Self> {
        model.check_batch(batch)?;
        if batch.is_empty() {
            return Err(Error::Empty("transition batch"));
        }
        let rows = batch.len();
        let inputs = model.normalizer.whiten_inputs(batch);
        let targets = model.normalizer.whiten_targets(batch);
        let old_acts = model.forward_whitened(model.params.data(), &inputs, rows)?;
        let metric = output_fisher(old_acts.output(), model.state_dim, model.bounds);
        Ok(Self {
            model,
            inputs,
            targets,
            rows,
            alpha,
            kappa,
            old_acts,
            metric,
        })
    }

    fn n(&self) -> usize {
        self.model.state_dim
    }
}

impl TrustRegionProblem for DynamicsStep<'_> {
    fn theta_old(&self) -> &[f64] {
        self.model.params.data()
    }

    fn delta(&self) -> f64 {
        self.kappa
    }

    fn gradient(&self) -> Result<Vec<f64>> {
        let n = self.n();
        let bounds = self.model.bounds;
        let inv = 1.0 / self.rows as f64;
        let out = self.old_acts.output();
        let mut grad_out = vec![0.0; out.len()];
        for r in 0..self.rows {
            let o = &out[r * 2 * n..(r + 1) * 2 * n];
            let y = &self.targets[r * n..(r + 1) * n];
            let g = &mut grad_out[r * 2 * n..(r + 1) * 2 * n];
            for i in 0..n {
                let raw = o[n + i];
                let l = bounds.clamp(raw);
                let prec = libm::exp(-2.0 * l);
                let d = y[i] - o[i];
                // objective is -nll; d(-nll)/d mean = (y - mu) / sigma^2
                g[i] = inv * d * prec;
                if bounds.passes(raw) {
                    g[n + i] = inv * (d * d * prec - 1.0);
                }
            }
        }
        let theta = self.theta_old();
        let (mut grad, _) = self.model.mlp.backward(theta, &self.old_acts, &grad_out, false);
        for range in self.model.mlp.weight_ranges() {
            for j in range {
                grad[j] -= 2.0 * self.alpha * theta[j];
            }
        }
        Ok(grad)
    }

    fn num_rows(&self) -> usize {
        self.rows
    }

    fn curvature(&self, rows: Option<&[usize]>) -> Result<CurvatureOperator<'_>> {
        let (acts, metric) = match rows {
            Some(r) => (self.old_acts.select_rows(r), self.metric.select_rows(r)),
            None => (self.old_acts.clone(), self.metric.clone()),
        };
        let mlp = &self.model.mlp;
        let theta = self.theta_old();
        Ok(Box::new(move |v| Ok(mlp.gauss_newton_product(theta, &acts, &metric, v))))
    }

    fn evaluate(&self, theta: &[f64]) -> Result<(f64, f64)> {
        let n = self.n();
        let bounds = self.model.bounds;
        let acts = self.model.forward_whitened(theta, &self.inputs, self.rows)?;
        let out = acts.output();
        let old = self.old_acts.output();
        let mut nll = 0.0;
        let mut kl = 0.0;
        let mut lp = vec![0.0; n];
        let mut lq = vec![0.0; n];
        for r in 0..self.rows {
            let o = &out[r * 2 * n..(r + 1) * 2 * n];
            let q = &old[r * 2 * n..(r + 1) * 2 * n];
            let y = &self.targets[r * n..(r + 1) * n];
            nll -= whitened_log_density(&o[..n], &o[n..], y, bounds);
            for i in 0..n {
                lp[i] = bounds.clamp(o[n + i]);
                lq[i] = bounds.clamp(q[n + i]);
            }
            kl += diag_gaussian_kl_row(&o[..n], &lp, &q[..n], &lq);
        }
        let inv = 1.0 / self.rows as f64;
        let objective = -(nll * inv + self.alpha * self.model.weight_norm_sq(theta));
        Ok((objective, kl * inv))
    }
}

impl DynamicsModel {
    /// Fitting objective `-(whitened NLL + alpha ||W||^2)` at `theta` and
    /// mean KL(P_theta || P_current) over `batch`, under the current normalizer.
    pub fn fit_objective(&self, theta: &[f64], batch: &TransitionBatch, alpha: f64) -> Result<(f64, f64)> {
        DynamicsStep::new(self, batch, alpha, 0.0)?.evaluate(theta)
    }

    /// Gradient of [`DynamicsModel::fit_objective`] at the current parameters.
    pub fn fit_gradient(&self, batch: &TransitionBatch, alpha: f64) -> Result<Vec<f64>> {
        DynamicsStep::new(self, batch, alpha, 0.0)?.gradient()
    }

    /// Fisher-vector product of the mean KL at the current parameters.
    pub fn fisher_product(&self, batch: &TransitionBatch, v: &[f64]) -> Result<Vec<f64>> {
        let problem = DynamicsStep::new(self, batch, 0.0, 0.0)?;
        let op = problem.curvature(None)?;
        op(v)
    }
}

/// Fisher metric of the whitened output Gaussian over `(mean, log_std)`
/// heads in network-output order; clamped log-std entries get zero weight.
fn output_fisher(out: &[f64], n: usize, bounds: LogStdBounds) -> OutputMetric {
    let mut values = Vec::with_capacity(out.len());
    for o in out.chunks_exact(2 * n) {
        values.extend(o[n..].iter().map(|&raw| libm::exp(-2.0 * bounds.clamp(raw))));
        values.extend(o[n..].iter().map(|&raw| if bounds.passes(raw) { 2.0 } else { 0.0 }));
    }
    OutputMetric::Diagonal { dim: 2 * n, values }
}

/// One KL-constrained, L2-regularized NLL step on a replay batch.
///
/// The pre-update state is pushed to `snapshots` under `update_index`, the
/// normalizer is refreshed from the whole memory and then held fixed for the
/// step, and the step itself is a single [`solve_step`] with radius `kappa`.
pub fn model_update(
    model: &mut DynamicsModel,
    memory: &ReplayMemory,
    snapshots: &mut SnapshotRing,
    update_index: u64,
    config: &DynamicsUpdateConfig,
    seed: u64,
) -> Result<ModelUpdateReport> {
    if memory.len() < config.batch_size || memory.is_empty() {
        return Ok(ModelUpdateReport::skipped());
    }
    snapshots.push(update_index, model.snapshot())?;
    model.normalizer = Normalizer::fit(model.state_dim, model.action_dim, memory.iter());

    let sample = memory.sample(config.batch_size, seed)?;
    let batch = TransitionBatch::from_tuples(model.state_dim, model.action_dim, sample);
    let jac = model.normalizer.target_log_jacobian();
    let reg_old = config.alpha * model.weight_norm_sq(model.params.data());
    let (theta, report) = {
        let problem = DynamicsStep::new(model, &batch, config.alpha, config.kappa)?;
        solve_step(&problem, &config.trust_region, seed ^ 0x5eed)?
    };
    let reg_new = config.alpha * model.weight_norm_sq(&theta);
    // objective = -(whitened nll + penalty); shift back to the original space
    let nll_before = -report.objective_before - reg_old + jac;
    let nll_after = -report.objective_after - reg_new + jac;
    let kl_step = if report.accepted { report.constraint_after } else { 0.0 };
    model.params = model.params.with_data(theta)?;
    Ok(ModelUpdateReport {
        skipped: false,
        step: Some(report),
        nll_before,
        nll_after,
        kl_step,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn t(x: f64) -> TransitionTuple {
        TransitionTuple {
            s: vec![x],
            a: vec![0.0],
            s_next: vec![x + 1.0],
            r_ext: 0.0,
            done: false,
        }
    }

    #[test]
    fn fifo_eviction() {
        let mut m = ReplayMemory::new(2);
        m.insert([t(1.0), t(2.0), t(3.0)]);
        let held: Vec<f64> = m.iter().map(|x| x.s[0]).collect();
        assert_eq!(held, vec![2.0, 3.0]);
    }

    #[test]
    fn sampling_rules() {
        let mut m = ReplayMemory::new(10);
        assert_eq!(m.sample_indices(1, 0), Err(Error::Empty("replay memory")));
        m.insert((0..6).map(|i| t(i as f64)));
        let mut idx = m.sample_indices(6, 3).unwrap();
        assert_eq!(idx, m.sample_indices(6, 3).unwrap());
        idx.sort_unstable();
        assert_eq!(idx, (0..6).collect::<Vec<_>>());
        assert_eq!(m.sample_indices(50, 1).unwrap().len(), 6);
        let few = m.sample_indices(3, 9).unwrap();
        assert_eq!(few.len(), 3);
        assert!(few.iter().all(|&i| i < 6));
    }

    #[test]
    fn normalizer_statistics() {
        let tuples: Vec<_> = [1.0, 2.0, 3.0, 4.0].iter().map(|&x| t(x)).collect();
        let nz = Normalizer::fit(1, 1, &tuples);
        assert_abs_diff_eq!(nz.input_mean[0], 2.5, epsilon = 1e-12);
        assert_abs_diff_eq!(nz.input_std[0], libm::sqrt(1.25), epsilon = 1e-12);
        // constant action column
        assert_eq!(nz.input_std[1], 1.0);
        assert_abs_diff_eq!(nz.target_mean[0], 3.5, epsilon = 1e-12);
    }

    fn snap(v: f64) -> ModelSnapshot {
        let spec = MlpSpec::new(1, vec![], 1, 0);
        ModelSnapshot {
            params: ParamVector::new(spec.layout(), vec![v, v]).unwrap(),
            normalizer: Normalizer::identity(1, 0),
        }
    }

    #[test]
    fn snapshot_ring_bookkeeping() {
        let mut ring = SnapshotRing::new(3);
        assert!(matches!(ring.get(1), Err(Error::Empty(_))));
        for u in 0..5u64 {
            ring.push(u, snap(u as f64)).unwrap();
        }
        // after 5 updates the current model is phi_5; k back is phi_{5-k}
        assert_eq!(ring.get(1).unwrap().params.data()[0], 4.0);
        assert_eq!(ring.get(3).unwrap().params.data()[0], 2.0);
        assert_eq!(ring.get(10).unwrap().params.data()[0], 2.0);
        assert!(ring.push(4, snap(0.0)).is_err());
        assert_eq!(ring.indices().collect::<Vec<_>>(), vec![2, 3, 4]);
    }
}
