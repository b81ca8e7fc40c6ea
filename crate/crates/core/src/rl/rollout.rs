use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::policy::{Policy, PolicyKind, PolicyScratch};
use crate::dynamics::{TransitionBatch, TransitionTuple};
use crate::envs::{Action, ActionSpace, Environment};
use crate::error::{Error, Result};

/// One episode; per-step arrays are row-major.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Episode {
    pub obs: Vec<f64>,
    /// Policy samples (Gaussian: unclipped, normalized units; categorical: index).
    pub actions: Vec<f64>,
    /// Action as applied, encoded for the dynamics model (clipped
    /// normalized value, or one-hot).
    pub env_actions: Vec<f64>,
    pub next_obs: Vec<f64>,
    pub rewards: Vec<f64>,
    /// Ended by the environment (as opposed to the length cap).
    pub terminal: bool,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn undiscounted_return(&self) -> f64 {
        self.rewards.iter().sum()
    }

    /// Per-step done flags: only the last step of a terminal episode.
    pub fn dones(&self) -> Vec<bool> {
        let n = self.len();
        (0..n).map(|t| self.terminal && t + 1 == n).collect()
    }
}

/// Rollouts of one iteration plus the per-step quantities computed on them.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryBatch {
    pub obs_dim: usize,
    pub action_width: usize,
    pub encoded_action_dim: usize,
    pub episodes: Vec<Episode>,
    /// Flattened over episodes in order.
    pub shaped_rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl TrajectoryBatch {
    pub fn total_steps(&self) -> usize {
        self.episodes.iter().map(Episode::len).sum()
    }

    pub fn flat_obs(&self) -> Vec<f64> {
        self.episodes.iter().flat_map(|e| e.obs.iter().copied()).collect()
    }

    pub fn flat_actions(&self) -> Vec<f64> {
        self.episodes.iter().flat_map(|e| e.actions.iter().copied()).collect()
    }

    pub fn flat_rewards(&self) -> Vec<f64> {
        self.episodes.iter().flat_map(|e| e.rewards.iter().copied()).collect()
    }

    /// Step index within its episode, for every flattened step.
    pub fn time_indices(&self) -> Vec<usize> {
        self.episodes.iter().flat_map(|e| 0..e.len()).collect()
    }

    pub fn episode_returns(&self) -> Vec<f64> {
        self.episodes.iter().map(Episode::undiscounted_return).collect()
    }

    /// `(s, a, s')` of every step, for bonuses and model fitting.
    pub fn transitions(&self) -> TransitionBatch {
        let mut b = TransitionBatch::new(self.obs_dim, self.encoded_action_dim);
        for e in &self.episodes {
            b.states.extend_from_slice(&e.obs);
            b.actions.extend_from_slice(&e.env_actions);
            b.next_states.extend_from_slice(&e.next_obs);
        }
        b
    }

    pub fn transition_tuples(&self) -> impl Iterator<Item = TransitionTuple> + '_ {
        let (d, m) = (self.obs_dim, self.encoded_action_dim);
        self.episodes.iter().flat_map(move |e| {
            let dones = e.dones();
            (0..e.len()).map(move |t| TransitionTuple {
                s: e.obs[t * d..(t + 1) * d].to_vec(),
                a: e.env_actions[t * m..(t + 1) * m].to_vec(),
                s_next: e.next_obs[t * d..(t + 1) * d].to_vec(),
                r_ext: e.rewards[t],
                done: dones[t],
            })
        })
    }
}

/// Runs whole episodes until at least `batch_size` steps are collected; the
/// last episode runs to termination or `max_len`.
pub fn collect_rollouts<R: Rng + ?Sized>(
    env: &mut dyn Environment,
    policy: &Policy,
    batch_size: usize,
    max_len: usize,
    rng: &mut R,
) -> Result<TrajectoryBatch> {
    if batch_size == 0 || max_len == 0 {
        return Err(Error::InvalidArgument("batch_size and max_len must be >= 1".into()));
    }
    let spec = env.spec().clone();
    let (low, high, n_discrete) = match &spec.action {
        ActionSpace::Continuous { low, high } => (low.clone(), high.clone(), 0),
        ActionSpace::Discrete { n } => (Vec::new(), Vec::new(), *n),
    };
    match (policy.kind(), n_discrete) {
        (PolicyKind::Gaussian, 0) | (PolicyKind::Categorical, 1..) => {}
        _ => return Err(Error::InvalidArgument("policy kind does not match action space".into())),
    }
    let mut batch = TrajectoryBatch {
        obs_dim: spec.obs_dim,
        action_width: policy.action_width(),
        encoded_action_dim: spec.action.encoded_dim(),
        ..Default::default()
    };
    let mut scratch = PolicyScratch::default();
    let mut action = Vec::new();
    let mut physical = vec![0.0; low.len()];
    let mut total = 0;
    while total < batch_size {
        let mut ep = Episode::default();
        let mut obs = env.reset();
        for _ in 0..max_len {
            policy.sample(&obs, rng, &mut scratch, &mut action);
            let step = if n_discrete == 0 {
                let mut encoded = Vec::with_capacity(action.len());
                for (i, a) in action.iter().enumerate() {
                    let c = a.clamp(-1.0, 1.0);
                    physical[i] = low[i] + 0.5 * (c + 1.0) * (high[i] - low[i]);
                    encoded.push(c);
                }
                ep.env_actions.extend_from_slice(&encoded);
                env.step(Action::Continuous(&physical))?
            } else {
                let idx = action[0] as usize;
                ep.env_actions
                    .extend((0..n_discrete).map(|i| if i == idx { 1.0 } else { 0.0 }));
                env.step(Action::Discrete(idx))?
            };
            ep.obs.extend_from_slice(&obs);
            ep.actions.extend_from_slice(&action);
            ep.next_obs.extend_from_slice(&step.observation);
            ep.rewards.push(step.reward);
            obs = step.observation;
            if step.done {
                ep.terminal = true;
                break;
            }
        }
        total += ep.len();
        batch.episodes.push(ep);
    }
    Ok(batch)
}
