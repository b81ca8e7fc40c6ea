use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::gae::{gae_advantages, GaeConfig};
use super::policy::{Policy, PolicySpec};
use super::rollout::{collect_rollouts, TrajectoryBatch};
use super::trpo::trpo_step;
use super::value::{LinearValue, NeuralValue, ValueFunction};
use crate::bonus::{
    apply_bonus, check_bonus_spread, learning_progress_bonus, normalize_eta, pred_error_bonus,
    surprisal_bonus, BonusConfig, BonusReport, BonusScheme, BonusStats,
};
use crate::dist::LogStdBounds;
use crate::dynamics::{model_update, DynamicsModel, DynamicsUpdateConfig, ReplayMemory, SnapshotRing};
use crate::envs::{make_env, EnvSpec, Environment};
use crate::error::{Error, Result};
use crate::trustregion::TrustRegionConfig;

/// SplitMix64 finalizer of `seed + tag`; used to give every component its
/// own independent stream.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed
        .wrapping_add(tag.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Millisecond clock for phase timings. `no_std` builds use [`NoClock`].
pub trait Clock {
    fn now_ms(&self) -> f64;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn now_ms(&self) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrpoSettings {
    pub delta_kl: f64,
    pub batch_size: usize,
    pub max_len: usize,
    pub gae: GaeConfig,
    pub trust_region: TrustRegionConfig,
}

impl Default for TrpoSettings {
    fn default() -> Self {
        Self {
            delta_kl: 0.01,
            batch_size: 5000,
            max_len: 500,
            gae: GaeConfig::default(),
            trust_region: TrustRegionConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueKind {
    Neural,
    LinearTimeVarying,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueSettings {
    pub kind: ValueKind,
    pub hidden_sizes: Vec<usize>,
    /// Bound on the mean squared drift of whitened predictions per fit.
    pub delta: f64,
    /// Multiplier on the initial output-layer weights. Zero starts from an
    /// exact constant baseline, which stays exact while returns are all zero.
    pub init_output_scale: f64,
    pub trust_region: TrustRegionConfig,
}

impl Default for ValueSettings {
    fn default() -> Self {
        Self {
            kind: ValueKind::Neural,
            hidden_sizes: vec![32],
            delta: 0.01,
            init_output_scale: 0.0,
            trust_region: TrustRegionConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsSettings {
    pub hidden_sizes: Vec<usize>,
    pub replay_capacity: usize,
    pub updates_per_iteration: usize,
    pub log_std_bounds: LogStdBounds,
    pub update: DynamicsUpdateConfig,
}

impl Default for DynamicsSettings {
    fn default() -> Self {
        Self {
            hidden_sizes: vec![32],
            replay_capacity: 200_000,
            updates_per_iteration: 1,
            log_std_bounds: LogStdBounds::default(),
            update: DynamicsUpdateConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainerConfig {
    pub env: String,
    pub seed: u64,
    pub iterations: usize,
    pub policy_hidden: Vec<usize>,
    pub init_log_std: f64,
    pub policy_init_output_scale: f64,
    pub bonus: BonusConfig,
    pub trpo: TrpoSettings,
    pub value: ValueSettings,
    pub dynamics: DynamicsSettings,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            env: String::from(crate::envs::SPARSE_MOUNTAINCAR),
            seed: 0,
            iterations: 150,
            policy_hidden: vec![32],
            init_log_std: 0.0,
            policy_init_output_scale: 0.01,
            bonus: BonusConfig::default(),
            trpo: TrpoSettings::default(),
            value: ValueSettings::default(),
            dynamics: DynamicsSettings::default(),
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(alloc::format!("invalid {what}")));
        crate::envs::env_spec(&self.env)?;
        self.bonus.scheme.validate()?;
        self.trpo.trust_region.validate()?;
        self.value.trust_region.validate()?;
        self.dynamics.update.trust_region.validate()?;
        if !(self.bonus.eta0 >= 0.0 && self.bonus.eta0.is_finite()) {
            return bad("eta0");
        }
        if !(self.trpo.delta_kl > 0.0) || self.trpo.batch_size == 0 || self.trpo.max_len == 0 {
            return bad("trpo settings");
        }
        let g = self.trpo.gae;
        if !(g.gamma > 0.0 && g.gamma <= 1.0 && (0.0..=1.0).contains(&g.lambda)) {
            return bad("gamma/lambda");
        }
        if !(self.value.delta > 0.0) {
            return bad("value delta");
        }
        let d = &self.dynamics;
        if d.replay_capacity == 0
            || d.update.batch_size == 0
            || !(d.update.kappa >= 0.0)
            || !(d.update.alpha >= 0.0)
            || !(d.log_std_bounds.min < d.log_std_bounds.max)
        {
            return bad("dynamics settings");
        }
        Ok(())
    }
}

/// Milliseconds spent per phase of one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PhaseTimings {
    pub total_ms: f64,
    pub rollout_ms: f64,
    pub bonus_ms: f64,
    pub policy_ms: f64,
    pub value_ms: f64,
    pub dynamics_ms: f64,
}

/// One logged training iteration. All fields except `timings` are a
/// deterministic function of the config and seed.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub steps_total: u64,
    pub episodes: usize,
    /// Mean undiscounted extrinsic return per episode.
    pub ret_ext_mean: f64,
    pub ret_ext_median_episode: f64,
    pub ret_ext_max: f64,
    pub bonus: BonusStats,
    pub policy_kl: f64,
    pub policy_accepted: bool,
    /// NaN when no dynamics update ran.
    pub dynamics_nll: f64,
    pub dynamics_kl_step: f64,
    pub timings: PhaseTimings,
}

/// The surprise-incentive training loop for a single seed.
pub struct Trainer {
    config: TrainerConfig,
    env_spec: EnvSpec,
    env: Box<dyn Environment>,
    policy: Policy,
    value: ValueFunction,
    model: DynamicsModel,
    frozen: Option<DynamicsModel>,
    memory: ReplayMemory,
    snapshots: SnapshotRing,
    rng: ChaCha8Rng,
    iteration: usize,
    steps_total: u64,
    model_updates: u64,
    clock: Box<dyn Clock + Send>,
}

const TAG_ENV: u64 = 1;
const TAG_ROLLOUT: u64 = 2;
const TAG_POLICY_INIT: u64 = 3;
const TAG_VALUE_INIT: u64 = 4;
const TAG_MODEL_INIT: u64 = 5;
const TAG_ITER: u64 = 1 << 20;

impl Trainer {
    pub fn new(config: TrainerConfig) -> Result<Self> {
        Self::with_clock(config, Box::new(NoClock))
    }

    pub fn with_clock(config: TrainerConfig, clock: Box<dyn Clock + Send>) -> Result<Self> {
        config.validate()?;
        let seed = config.seed;
        let env = make_env(&config.env, derive_seed(seed, TAG_ENV))?;
        let env_spec = env.spec().clone();
        let mut policy_spec =
            PolicySpec::for_env(&env_spec, config.policy_hidden.clone(), derive_seed(seed, TAG_POLICY_INIT));
        policy_spec.init_log_std = config.init_log_std;
        policy_spec.init_output_scale = config.policy_init_output_scale;
        let policy = Policy::new(policy_spec, env_spec.obs_offset.clone(), env_spec.obs_scale.clone())?;
        let value = match config.value.kind {
            ValueKind::Neural => ValueFunction::Neural(NeuralValue::new(
                env_spec.obs_dim,
                config.value.hidden_sizes.clone(),
                env_spec.obs_offset.clone(),
                env_spec.obs_scale.clone(),
                derive_seed(seed, TAG_VALUE_INIT),
            )?
            .with_output_scale(config.value.init_output_scale)),
            ValueKind::LinearTimeVarying => ValueFunction::Linear(LinearValue::new(
                env_spec.obs_offset.clone(),
                env_spec.obs_scale.clone(),
                config.trpo.max_len,
            )?),
        };
        let model = DynamicsModel::new(
            env_spec.obs_dim,
            env_spec.action.encoded_dim(),
            config.dynamics.hidden_sizes.clone(),
            derive_seed(seed, TAG_MODEL_INIT),
            config.dynamics.log_std_bounds,
        )?;
        let frozen = matches!(config.bonus.scheme, BonusScheme::RandomSurprisal).then(|| model.clone());
        let k_max = match config.bonus.scheme {
            BonusScheme::LearningProgress { k } => k,
            _ => 1,
        };
        Ok(Self {
            memory: ReplayMemory::new(config.dynamics.replay_capacity),
            snapshots: SnapshotRing::new(k_max),
            rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, TAG_ROLLOUT)),
            env,
            env_spec,
            policy,
            value,
            model,
            frozen,
            config,
            iteration: 0,
            steps_total: 0,
            model_updates: 0,
            clock,
        })
    }

    pub fn config(&self) -> &TrainerConfig {
        &self.config
    }

    pub fn env_spec(&self) -> &EnvSpec {
        &self.env_spec
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    pub fn value(&self) -> &ValueFunction {
        &self.value
    }

    pub fn model(&self) -> &DynamicsModel {
        &self.model
    }

    pub fn memory(&self) -> &ReplayMemory {
        &self.memory
    }

    pub fn snapshots(&self) -> &SnapshotRing {
        &self.snapshots
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn is_done(&self) -> bool {
        self.iteration >= self.config.iterations
    }

    /// Whether the scheme needs the learned model to be trained.
    fn trains_model(&self) -> bool {
        !matches!(self.config.bonus.scheme, BonusScheme::None | BonusScheme::RandomSurprisal)
    }

    /// Raw bonuses under the start-of-iteration model.
    pub fn raw_bonus(&self, batch: &TrajectoryBatch) -> Result<Vec<f64>> {
        let transitions = batch.transitions();
        match self.config.bonus.scheme {
            BonusScheme::None => Ok(vec![0.0; transitions.len()]),
            BonusScheme::Surprisal => surprisal_bonus(&self.model, &transitions),
            BonusScheme::PredictionError => pred_error_bonus(&self.model, &transitions),
            BonusScheme::RandomSurprisal => {
                let frozen = self.frozen.as_ref().ok_or(Error::Empty("frozen model"))?;
                surprisal_bonus(frozen, &transitions)
            }
            BonusScheme::LearningProgress { k } => {
                if self.snapshots.is_empty() {
                    return Ok(vec![0.0; transitions.len()]);
                }
                let past = self.model.with_snapshot(self.snapshots.get(k)?)?;
                learning_progress_bonus(&self.model, &past, &transitions)
            }
        }
    }

    /// Runs one full iteration: collect, store, reshape, policy and value
    /// steps, then the dynamics update(s).
    pub fn step(&mut self) -> Result<IterationRecord> {
        let it = self.iteration as u64;
        let seed = |phase: u64| derive_seed(self.config.seed, TAG_ITER + it * 16 + phase);
        let (s_policy, s_value, s_dyn) = (seed(1), seed(2), seed(3));
        let t0 = self.clock.now_ms();
        let cfg = &self.config;

        let mut batch = collect_rollouts(
            self.env.as_mut(),
            &self.policy,
            cfg.trpo.batch_size,
            cfg.trpo.max_len,
            &mut self.rng,
        )?;
        if self.trains_model() {
            self.memory.insert(batch.transition_tuples());
        }
        let t1 = self.clock.now_ms();

        let rewards = batch.flat_rewards();
        let bonus = if cfg.bonus.scheme == BonusScheme::None {
            BonusReport {
                raw: vec![0.0; rewards.len()],
                eta: 0.0,
                shift: 0.0,
            }
        } else {
            let raw = self.raw_bonus(&batch)?;
            if matches!(cfg.bonus.scheme, BonusScheme::LearningProgress { .. }) {
                check_bonus_spread(&raw);
            }
            let eta = normalize_eta(&raw, cfg.bonus.eta0)?;
            let (_, shift) = apply_bonus(&rewards, &raw, eta, cfg.bonus.nonnegative_shift)?;
            BonusReport { raw, eta, shift }
        };
        batch.shaped_rewards = rewards.iter().zip(bonus.applied()).map(|(r, b)| r + b).collect();
        let t2 = self.clock.now_ms();

        let obs = batch.flat_obs();
        let times = batch.time_indices();
        batch.values = self.value.predict(&obs, &times)?;
        let mut last_obs = Vec::new();
        let mut last_times = Vec::new();
        for e in &batch.episodes {
            let d = batch.obs_dim;
            last_obs.extend_from_slice(&e.next_obs[(e.len() - 1) * d..]);
            last_times.push(e.len());
        }
        let last_values = self.value.predict(&last_obs, &last_times)?;
        let bootstrap: Vec<f64> = batch
            .episodes
            .iter()
            .zip(last_values)
            .map(|(e, v)| if e.terminal { 0.0 } else { v })
            .collect();
        let lens: Vec<usize> = batch.episodes.iter().map(|e| e.len()).collect();
        let gae = gae_advantages(&lens, &batch.shaped_rewards, &batch.values, &bootstrap, cfg.trpo.gae)?;
        batch.advantages = gae.advantages;
        batch.returns = gae.returns;
        let policy_report = trpo_step(
            &mut self.policy,
            &obs,
            &batch.flat_actions(),
            &batch.advantages,
            cfg.trpo.delta_kl,
            &cfg.trpo.trust_region,
            s_policy,
        )?;
        let t3 = self.clock.now_ms();
        self.value.fit(
            &obs,
            &times,
            &batch.returns,
            cfg.value.delta,
            &cfg.value.trust_region,
            s_value,
        )?;
        let t4 = self.clock.now_ms();

        let mut dynamics_nll = f64::NAN;
        let mut dynamics_kl = 0.0;
        if self.trains_model() {
            for u in 0..cfg.dynamics.updates_per_iteration {
                let report = model_update(
                    &mut self.model,
                    &self.memory,
                    &mut self.snapshots,
                    self.model_updates,
                    &cfg.dynamics.update,
                    derive_seed(s_dyn, u as u64),
                )?;
                if !report.skipped {
                    self.model_updates += 1;
                    dynamics_nll = report.nll_after;
                    dynamics_kl = report.kl_step;
                }
            }
        }
        let t5 = self.clock.now_ms();

        let mut returns = batch.episode_returns();
        let episodes = returns.len();
        let ret_mean = returns.iter().sum::<f64>() / episodes as f64;
        let ret_max = returns.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        returns.sort_by(f64::total_cmp);
        let median = if episodes % 2 == 1 {
            returns[episodes / 2]
        } else {
            0.5 * (returns[episodes / 2 - 1] + returns[episodes / 2])
        };
        self.steps_total += batch.total_steps() as u64;
        let record = IterationRecord {
            iteration: self.iteration,
            steps_total: self.steps_total,
            episodes,
            ret_ext_mean: ret_mean,
            ret_ext_median_episode: median,
            ret_ext_max: ret_max,
            bonus: bonus.stats(),
            policy_kl: policy_report.kl,
            policy_accepted: policy_report.step.accepted,
            dynamics_nll,
            dynamics_kl_step: dynamics_kl,
            timings: PhaseTimings {
                total_ms: t5 - t0,
                rollout_ms: t1 - t0,
                bonus_ms: t2 - t1,
                policy_ms: t3 - t2,
                value_ms: t4 - t3,
                dynamics_ms: t5 - t4,
            },
        };
        self.iteration += 1;
        Ok(record)
    }
}
