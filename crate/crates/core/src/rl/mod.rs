//! Policy-gradient training: rollouts, advantages, the TRPO policy step,
//! value baselines and the surprise-incentive training loop.

mod gae;
mod policy;
mod rollout;
mod trainer;
mod trpo;
mod value;

pub use gae::{gae_advantages, standardize, GaeConfig, GaeOutput};
pub use policy::{Policy, PolicyKind, PolicyScratch, PolicySpec};
pub use rollout::{collect_rollouts, Episode, TrajectoryBatch};
pub use trainer::{
    derive_seed, Clock, DynamicsSettings, IterationRecord, NoClock, PhaseTimings, Trainer,
    ValueKind,
    TrainerConfig, TrpoSettings, ValueSettings,
};
pub use trpo::{policy_fisher_product, surrogate_and_kl, surrogate_gradient, trpo_step, PolicyUpdateReport};
pub use value::{fit_value_linear_timevarying, fit_value_nn, LinearValue, NeuralValue, ValueFunction};
