use alloc::boxed::Box;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dist::{diag_gaussian_kl_row, log_softmax, softmax, LogStdBounds, HALF_LN_2PI};
use crate::envs::{ActionSpace, EnvSpec};
use crate::error::{shape_err, Result};
use crate::numkit::{Mlp, MlpActivations, MlpSpec, OutputMetric, ParamVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    /// Network outputs the mean; log-stds are separate trainable parameters.
    Gaussian,
    /// Network outputs logits.
    Categorical,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    pub obs_dim: usize,
    /// Action dimension (Gaussian) or number of categories.
    pub act_dim: usize,
    pub hidden_sizes: Vec<usize>,
    pub init_log_std: f64,
    /// Multiplier on the initial output-layer weights; small values start
    /// from a nearly state-independent policy.
    pub init_output_scale: f64,
    pub seed: u64,
}

impl PolicySpec {
    /// Policy matching an environment's action space.
    pub fn for_env(env: &EnvSpec, hidden_sizes: Vec<usize>, seed: u64) -> Self {
        let (kind, act_dim) = match &env.action {
            ActionSpace::Continuous { low, .. } => (PolicyKind::Gaussian, low.len()),
            ActionSpace::Discrete { n } => (PolicyKind::Categorical, *n),
        };
        Self {
            kind,
            obs_dim: env.obs_dim,
            act_dim,
            hidden_sizes,
            init_log_std: 0.0,
            init_output_scale: 0.01,
            seed,
        }
    }
}

/// Stochastic policy over a fixed observation scaling.
///
/// Gaussian actions live in normalized units: the environment maps the
/// clipped range `[-1, 1]` onto its bounds.
#[derive(Debug, Clone)]
pub struct Policy {
    spec: PolicySpec,
    mlp: Mlp,
    params: ParamVector,
    obs_offset: Vec<f64>,
    obs_scale: Vec<f64>,
    bounds: LogStdBounds,
}

impl Policy {
    pub fn new(spec: PolicySpec, obs_offset: Vec<f64>, obs_scale: Vec<f64>) -> Result<Self> {
        if obs_offset.len() != spec.obs_dim || obs_scale.len() != spec.obs_dim {
            return Err(shape_err("observation scaling does not match obs_dim"));
        }
        let mlp = Mlp::new(MlpSpec::new(
            spec.obs_dim,
            spec.hidden_sizes.clone(),
            spec.act_dim,
            spec.seed,
        ))?;
        let mut net = mlp.init();
        let last = format!("layer{}.weight", spec.hidden_sizes.len());
        if let Some(w) = net.segment_mut(&last) {
            w.iter_mut().for_each(|x| *x *= spec.init_output_scale);
        }
        let mut layout = mlp.layout();
        let mut data = net.into_data();
        if spec.kind == PolicyKind::Gaussian {
            layout.push("log_std", vec![spec.act_dim]);
            data.extend(core::iter::repeat_n(spec.init_log_std, spec.act_dim));
        }
        Ok(Self {
            params: ParamVector::new(layout, data)?,
            spec,
            mlp,
            obs_offset,
            obs_scale,
            bounds: LogStdBounds::default(),
        })
    }

    pub fn for_env(env: &EnvSpec, hidden_sizes: Vec<usize>, seed: u64) -> Result<Self> {
        Self::new(
            PolicySpec::for_env(env, hidden_sizes, seed),
            env.obs_offset.clone(),
            env.obs_scale.clone(),
        )
    }

    pub fn spec(&self) -> &PolicySpec {
        &self.spec
    }

    pub fn kind(&self) -> PolicyKind {
        self.spec.kind
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn set_params(&mut self, data: Vec<f64>) -> Result<()> {
        self.params = self.params.with_data(data)?;
        Ok(())
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn bounds(&self) -> LogStdBounds {
        self.bounds
    }

    /// Stored width of one action: `act_dim` for Gaussians, 1 (the index)
    /// for categoricals.
    pub fn action_width(&self) -> usize {
        match self.spec.kind {
            PolicyKind::Gaussian => self.spec.act_dim,
            PolicyKind::Categorical => 1,
        }
    }

    pub(crate) fn net_len(&self) -> usize {
        self.mlp.num_params()
    }

    /// Clamped log-stds at `theta` (Gaussian only).
    pub(crate) fn log_std<'a>(&self, theta: &'a [f64]) -> &'a [f64] {
        &theta[self.net_len()..]
    }

    pub fn scale_obs(&self, obs: &[f64]) -> Vec<f64> {
        let d = self.spec.obs_dim;
        obs.iter()
            .enumerate()
            .map(|(k, x)| (x - self.obs_offset[k % d]) * self.obs_scale[k % d])
            .collect()
    }

    pub(crate) fn forward(&self, theta: &[f64], scaled_obs: &[f64], rows: usize) -> Result<MlpActivations> {
        self.mlp.forward(&theta[..self.net_len()], scaled_obs, rows)
    }

    /// Draws one action for a single raw observation.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        obs: &[f64],
        rng: &mut R,
        scratch: &mut PolicyScratch,
        action: &mut Vec<f64>,
    ) {
        let d = self.spec.obs_dim;
        scratch.input.clear();
        scratch
            .input
            .extend((0..d).map(|k| (obs[k] - self.obs_offset[k]) * self.obs_scale[k]));
        scratch.out.resize(self.spec.act_dim, 0.0);
        let theta = self.params.data();
        self.mlp.forward_row(
            &theta[..self.net_len()],
            &scratch.input,
            &mut scratch.layers,
            &mut scratch.out,
        );
        action.clear();
        match self.spec.kind {
            PolicyKind::Gaussian => {
                for (m, l) in scratch.out.iter().zip(self.log_std(theta)) {
                    let eps: f64 = StandardNormal.sample(rng);
                    action.push(m + libm::exp(self.bounds.clamp(*l)) * eps);
                }
            }
            PolicyKind::Categorical => {
                let mut p = vec![0.0; self.spec.act_dim];
                softmax(&scratch.out, &mut p);
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut idx = p.len() - 1;
                for (i, pi) in p.iter().enumerate() {
                    acc += pi;
                    if u < acc {
                        idx = i;
                        break;
                    }
                }
                action.push(idx as f64);
            }
        }
    }

    /// `log pi(a | s)` per row, from cached network outputs.
    pub(crate) fn log_probs_from(&self, theta: &[f64], out: &[f64], actions: &[f64]) -> Vec<f64> {
        let m = self.spec.act_dim;
        match self.spec.kind {
            PolicyKind::Gaussian => {
                let ls: Vec<f64> = self.log_std(theta).iter().map(|l| self.bounds.clamp(*l)).collect();
                let ls_sum: f64 = ls.iter().sum();
                out.chunks_exact(m)
                    .zip(actions.chunks_exact(m))
                    .map(|(mu, a)| {
                        let mut q = 0.0;
                        for i in 0..m {
                            let z = (a[i] - mu[i]) * libm::exp(-ls[i]);
                            q += z * z;
                        }
                        -0.5 * q - ls_sum - HALF_LN_2PI * m as f64
                    })
                    .collect()
            }
            PolicyKind::Categorical => {
                let mut lp = vec![0.0; m];
                out.chunks_exact(m)
                    .zip(actions)
                    .map(|(logits, a)| {
                        log_softmax(logits, &mut lp);
                        lp[*a as usize]
                    })
                    .collect()
            }
        }
    }

    /// Log-probabilities of stored actions under the current parameters.
    pub fn log_probs(&self, obs: &[f64], actions: &[f64]) -> Result<Vec<f64>> {
        let rows = obs.len() / self.spec.obs_dim;
        if actions.len() != rows * self.action_width() {
            return Err(shape_err(format!(
                "{} actions for {rows} observations",
                actions.len()
            )));
        }
        let theta = self.params.data();
        let acts = self.forward(theta, &self.scale_obs(obs), rows)?;
        Ok(self.log_probs_from(theta, acts.output(), actions))
    }

    /// Mean KL(pi_a || pi_b) over rows given both sets of network outputs.
    pub(crate) fn mean_kl(&self, theta_a: &[f64], out_a: &[f64], theta_b: &[f64], out_b: &[f64]) -> f64 {
        let m = self.spec.act_dim;
        let rows = out_a.len() / m;
        if rows == 0 {
            return 0.0;
        }
        let total: f64 = match self.spec.kind {
            PolicyKind::Gaussian => {
                let la: Vec<f64> = self.log_std(theta_a).iter().map(|l| self.bounds.clamp(*l)).collect();
                let lb: Vec<f64> = self.log_std(theta_b).iter().map(|l| self.bounds.clamp(*l)).collect();
                out_a
                    .chunks_exact(m)
                    .zip(out_b.chunks_exact(m))
                    .map(|(ma, mb)| diag_gaussian_kl_row(ma, &la, mb, &lb))
                    .sum()
            }
            PolicyKind::Categorical => out_a
                .chunks_exact(m)
                .zip(out_b.chunks_exact(m))
                .map(|(a, b)| crate::dist::categorical_kl_row(a, b))
                .sum(),
        };
        total / rows as f64
    }

    /// Fisher metric of the action distribution w.r.t. network outputs.
    pub(crate) fn output_metric(&self, theta: &[f64], out: &[f64]) -> OutputMetric {
        let m = self.spec.act_dim;
        match self.spec.kind {
            PolicyKind::Gaussian => {
                let prec: Vec<f64> = self
                    .log_std(theta)
                    .iter()
                    .map(|l| libm::exp(-2.0 * self.bounds.clamp(*l)))
                    .collect();
                let rows = out.len() / m;
                let mut values = Vec::with_capacity(out.len());
                for _ in 0..rows {
                    values.extend_from_slice(&prec);
                }
                OutputMetric::Diagonal { dim: m, values }
            }
            PolicyKind::Categorical => {
                let mut values = Vec::with_capacity(out.len() * m);
                let mut p = vec![0.0; m];
                for logits in out.chunks_exact(m) {
                    softmax(logits, &mut p);
                    for i in 0..m {
                        for j in 0..m {
                            let d = if i == j { p[i] } else { 0.0 };
                            values.push(d - p[i] * p[j]);
                        }
                    }
                }
                OutputMetric::Dense { dim: m, values }
            }
        }
    }

    /// Fisher-vector product of the mean KL at `theta` over cached rows.
    pub(crate) fn fisher_operator<'a>(
        &'a self,
        theta: &'a [f64],
        acts: MlpActivations,
        metric: OutputMetric,
    ) -> crate::trustregion::CurvatureOperator<'a> {
        let n = self.net_len();
        Box::new(move |v: &[f64]| {
            let mut out = self.mlp.gauss_newton_product(&theta[..n], &acts, &metric, &v[..n]);
            if self.spec.kind == PolicyKind::Gaussian {
                for (l, vi) in self.log_std(theta).iter().zip(&v[n..]) {
                    out.push(if self.bounds.passes(*l) { 2.0 * vi } else { 0.0 });
                }
            }
            Ok(out)
        })
    }
}

/// Reusable buffers for [`Policy::sample`].
#[derive(Debug, Default, Clone)]
pub struct PolicyScratch {
    input: Vec<f64>,
    out: Vec<f64>,
    layers: [Vec<f64>; 2],
}
