use alloc::vec;
use alloc::vec::Vec;

use super::policy::{Policy, PolicyKind};
use crate::dist::softmax;
use crate::error::{shape_err, Error, Result};
use crate::numkit::{MlpActivations, OutputMetric};
use crate::trustregion::{solve_step, CurvatureOperator, StepReport, TrustRegionConfig, TrustRegionProblem};

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyUpdateReport {
    pub step: StepReport,
    /// Measured mean KL(pi_old || pi_new) over the batch.
    pub kl: f64,
    pub surrogate_before: f64,
    pub surrogate_after: f64,
}

struct PolicyStep<'a> {
    policy: &'a Policy,
    theta_old: Vec<f64>,
    scaled_obs: Vec<f64>,
    actions: &'a [f64],
    advantages: &'a [f64],
    rows: usize,
    delta: f64,
    old_acts: MlpActivations,
    old_logp: Vec<f64>,
    metric: OutputMetric,
}

impl<'a> PolicyStep<'a> {
    fn new(policy: &'a Policy, obs: &[f64], actions: &'a [f64], advantages: &'a [f64], delta: f64) -> Result<Self> {
        let rows = advantages.len();
        if rows == 0 {
            return Err(Error::Empty("policy batch"));
        }
        if obs.len() != rows * policy.spec().obs_dim || actions.len() != rows * policy.action_width() {
            return Err(shape_err("policy batch arrays disagree in length"));
        }
        let theta_old = policy.params().data().to_vec();
        let scaled_obs = policy.scale_obs(obs);
        let old_acts = policy.forward(&theta_old, &scaled_obs, rows)?;
        let old_logp = policy.log_probs_from(&theta_old, old_acts.output(), actions);
        let metric = policy.output_metric(&theta_old, old_acts.output());
        Ok(Self {
            policy,
            theta_old,
            scaled_obs,
            actions,
            advantages,
            rows,
            delta,
            old_acts,
            old_logp,
            metric,
        })
    }
}

impl TrustRegionProblem for PolicyStep<'_> {
    fn theta_old(&self) -> &[f64] {
        &self.theta_old
    }

    fn delta(&self) -> f64 {
        self.delta
    }

    fn gradient(&self) -> Result<Vec<f64>> {
        let p = self.policy;
        let m = p.spec().act_dim;
        let theta = &self.theta_old;
        let out = self.old_acts.output();
        let inv = 1.0 / self.rows as f64;
        let mut grad_out = vec![0.0; out.len()];
        let mut tail = vec![0.0; theta.len() - p.net_len()];
        match p.kind() {
            PolicyKind::Gaussian => {
                let bounds = p.bounds();
                let ls = p.log_std(theta);
                for r in 0..self.rows {
                    let w = inv * self.advantages[r];
                    for i in 0..m {
                        let l = bounds.clamp(ls[i]);
                        let z = (self.actions[r * m + i] - out[r * m + i]) * libm::exp(-l);
                        grad_out[r * m + i] = w * z * libm::exp(-l);
                        if bounds.passes(ls[i]) {
                            tail[i] += w * (z * z - 1.0);
                        }
                    }
                }
            }
            PolicyKind::Categorical => {
                let mut prob = vec![0.0; m];
                for r in 0..self.rows {
                    let w = inv * self.advantages[r];
                    softmax(&out[r * m..(r + 1) * m], &mut prob);
                    let a = self.actions[r] as usize;
                    for i in 0..m {
                        let onehot = if i == a { 1.0 } else { 0.0 };
                        grad_out[r * m + i] = w * (onehot - prob[i]);
                    }
                }
            }
        }
        let (mut grad, _) = p.mlp().backward(&theta[..p.net_len()], &self.old_acts, &grad_out, false);
        grad.extend_from_slice(&tail);
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
        Ok(self.policy.fisher_operator(&self.theta_old, acts, metric))
    }

    fn evaluate(&self, theta: &[f64]) -> Result<(f64, f64)> {
        let p = self.policy;
        let acts = p.forward(theta, &self.scaled_obs, self.rows)?;
        let logp = p.log_probs_from(theta, acts.output(), self.actions);
        let surrogate = logp
            .iter()
            .zip(&self.old_logp)
            .zip(self.advantages)
            .map(|((n, o), a)| libm::exp(n - o) * a)
            .sum::<f64>()
            / self.rows as f64;
        if !surrogate.is_finite() {
            return Err(Error::NonFinite("surrogate objective"));
        }
        let kl = p.mean_kl(&self.theta_old, self.old_acts.output(), theta, acts.output());
        Ok((surrogate, kl))
    }
}

/// Gradient of the surrogate at the current parameters, which equals the
/// score-function estimate `mean(A_t * grad log pi(a_t|s_t))`.
pub fn surrogate_gradient(policy: &Policy, obs: &[f64], actions: &[f64], advantages: &[f64]) -> Result<Vec<f64>> {
    PolicyStep::new(policy, obs, actions, advantages, 0.0)?.gradient()
}

/// Surrogate and mean KL(pi_current || pi_theta) at `theta`.
pub fn surrogate_and_kl(
    policy: &Policy,
    theta: &[f64],
    obs: &[f64],
    actions: &[f64],
    advantages: &[f64],
) -> Result<(f64, f64)> {
    PolicyStep::new(policy, obs, actions, advantages, 0.0)?.evaluate(theta)
}

/// Fisher-vector product of the mean policy KL at the current parameters
/// over the states in `obs`.
pub fn policy_fisher_product(policy: &Policy, obs: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    let rows = obs.len() / policy.spec().obs_dim;
    let actions = vec![0.0; rows * policy.action_width()];
    let adv = vec![0.0; rows];
    let problem = PolicyStep::new(policy, obs, &actions, &adv, 0.0)?;
    let op = problem.curvature(None)?;
    op(v)
}

/// One KL-constrained step on the importance-sampled surrogate
/// `mean(pi(a|s) / pi_old(a|s) * A)` with `mean KL(pi_old || pi) <= delta`.
pub fn trpo_step(
    policy: &mut Policy,
    obs: &[f64],
    actions: &[f64],
    advantages: &[f64],
    delta: f64,
    config: &TrustRegionConfig,
    seed: u64,
) -> Result<PolicyUpdateReport> {
    let (theta, step) = {
        let problem = PolicyStep::new(policy, obs, actions, advantages, delta)?;
        solve_step(&problem, config, seed)?
    };
    policy.set_params(theta)?;
    Ok(PolicyUpdateReport {
        kl: if step.accepted { step.constraint_after } else { 0.0 },
        surrogate_before: step.objective_before,
        surrogate_after: step.objective_after,
        step,
    })
}
