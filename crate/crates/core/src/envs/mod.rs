//! Built-in sparse-reward environments and the name registry.

mod cartpole;
mod mountaincar;
mod noisychain;

use alloc::boxed::Box;
use alloc::string::ToString;
use alloc::vec::Vec;

pub use cartpole::{cartpole_swingup_step, CartpoleState, CartpoleSwingup};
pub use mountaincar::{mountaincar_step, MountainCar, MountainCarState};
pub use noisychain::{noisychain_step, ChainMove, NoisyChain, NoisyChainState, CHAIN_LENGTH};

use crate::error::{Error, Result};

pub const SPARSE_MOUNTAINCAR: &str = "sparse-mountaincar";
pub const SPARSE_CARTPOLE_SWINGUP: &str = "sparse-cartpole-swingup";
pub const NOISY_CHAIN: &str = "noisy-chain";

/// Registered environment names.
pub const ENVIRONMENTS: [&str; 3] = [SPARSE_MOUNTAINCAR, SPARSE_CARTPOLE_SWINGUP, NOISY_CHAIN];

#[derive(Debug, Clone, PartialEq)]
pub enum ActionSpace {
    Continuous {
        low: Vec<f64>,
        high: Vec<f64>,
    },
    Discrete {
        n: usize,
    },
}

impl ActionSpace {
    /// Width of the action as seen by the dynamics model (one-hot for
    /// discrete spaces).
    pub fn encoded_dim(&self) -> usize {
        match self {
            Self::Continuous { low, .. } => low.len(),
            Self::Discrete { n } => *n,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub name: &'static str,
    pub obs_dim: usize,
    pub action: ActionSpace,
    pub max_episode_len: usize,
    /// Typical centre and inverse scale of each observation, used to put
    /// policy and value inputs on a unit scale.
    pub obs_offset: Vec<f64>,
    pub obs_scale: Vec<f64>,
}

impl EnvSpec {
    /// `(obs - offset) * scale`
    pub fn scale_obs(&self, obs: &[f64], out: &mut [f64]) {
        for i in 0..obs.len() {
            out[i] = (obs[i] - self.obs_offset[i]) * self.obs_scale[i];
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Action<'a> {
    /// Physical units, clipped to the bounds by the environment.
    Continuous(&'a [f64]),
    Discrete(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvStep {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

/// A seeded environment instance. Identical seeds and action sequences
/// reproduce identical trajectories.
pub trait Environment: Send {
    fn spec(&self) -> &EnvSpec;

    /// Samples a start state and returns its observation.
    fn reset(&mut self) -> Vec<f64>;

    fn step(&mut self, action: Action<'_>) -> Result<EnvStep>;

    /// Steps taken since the last reset.
    fn steps(&self) -> usize;
}

pub fn env_spec(name: &str) -> Result<EnvSpec> {
    match name {
        SPARSE_MOUNTAINCAR => Ok(mountaincar::spec()),
        SPARSE_CARTPOLE_SWINGUP => Ok(cartpole::spec()),
        NOISY_CHAIN => Ok(noisychain::spec()),
        other => Err(Error::UnknownEnvironment(other.to_string())),
    }
}

pub fn make_env(name: &str, seed: u64) -> Result<Box<dyn Environment>> {
    Ok(match name {
        SPARSE_MOUNTAINCAR => Box::new(MountainCar::new(seed)),
        SPARSE_CARTPOLE_SWINGUP => Box::new(CartpoleSwingup::new(seed)),
        NOISY_CHAIN => Box::new(NoisyChain::new(seed)),
        other => return Err(Error::UnknownEnvironment(other.to_string())),
    })
}

fn expect_continuous<'a>(action: Action<'a>, dim: usize) -> Result<&'a [f64]> {
    match action {
        Action::Continuous(a) if a.len() == dim && a[0].is_finite() => Ok(a),
        Action::Continuous(_) => Err(Error::InvalidArgument(
            "continuous action has wrong size or is not finite".into(),
        )),
        Action::Discrete(_) => Err(Error::InvalidArgument(
            "discrete action given to a continuous environment".into(),
        )),
    }
}
