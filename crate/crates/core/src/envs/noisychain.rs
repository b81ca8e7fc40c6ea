use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Action, ActionSpace, EnvSpec, EnvStep, Environment};
use crate::error::{Error, Result};

/// Number of cells; reaching the last one pays 1.
pub const CHAIN_LENGTH: usize = 40;
/// Probability that a move takes effect.
pub const MOVE_SUCCESS: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainMove {
    Left,
    Right,
}

/// Current cell, `1..=CHAIN_LENGTH`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoisyChainState {
    pub cell: usize,
}

impl NoisyChainState {
    pub fn observation(&self) -> Vec<f64> {
        vec![self.cell as f64 / CHAIN_LENGTH as f64, 1.0]
    }
}

/// Moves one cell with probability `MOVE_SUCCESS` (decided by `success`),
/// otherwise stays. Falling off the left end ends the episode unrewarded.
pub fn noisychain_step(state: NoisyChainState, mv: ChainMove, success: bool) -> (NoisyChainState, f64, bool) {
    if !success {
        return (state, 0.0, false);
    }
    match mv {
        ChainMove::Left if state.cell <= 1 => (NoisyChainState { cell: 0 }, 0.0, true),
        ChainMove::Left => (NoisyChainState { cell: state.cell - 1 }, 0.0, false),
        ChainMove::Right => {
            let cell = (state.cell + 1).min(CHAIN_LENGTH);
            let goal = cell == CHAIN_LENGTH;
            (NoisyChainState { cell }, if goal { 1.0 } else { 0.0 }, goal)
        }
    }
}

pub(super) fn spec() -> EnvSpec {
    EnvSpec {
        name: super::NOISY_CHAIN,
        obs_dim: 2,
        action: ActionSpace::Discrete { n: 2 },
        max_episode_len: 200,
        obs_offset: vec![0.5, 0.0],
        obs_scale: vec![2.0, 1.0],
    }
}

pub struct NoisyChain {
    spec: EnvSpec,
    rng: ChaCha8Rng,
    state: NoisyChainState,
    steps: usize,
}

impl NoisyChain {
    pub fn new(seed: u64) -> Self {
        Self {
            spec: spec(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            state: NoisyChainState { cell: 1 },
            steps: 0,
        }
    }

    pub fn state(&self) -> NoisyChainState {
        self.state
    }
}

impl Environment for NoisyChain {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self) -> Vec<f64> {
        self.state = NoisyChainState { cell: 1 };
        self.steps = 0;
        self.state.observation()
    }

    fn step(&mut self, action: Action<'_>) -> Result<EnvStep> {
        let mv = match action {
            Action::Discrete(0) => ChainMove::Left,
            Action::Discrete(1) => ChainMove::Right,
            _ => {
                return Err(Error::InvalidArgument(
                    "noisy chain takes discrete action 0 (left) or 1 (right)".into(),
                ))
            }
        };
        let success = self.rng.random_bool(MOVE_SUCCESS);
        let (next, reward, done) = noisychain_step(self.state, mv, success);
        self.state = next;
        self.steps += 1;
        Ok(EnvStep {
            observation: self.state.observation(),
            reward,
            done,
        })
    }

    fn steps(&self) -> usize {
        self.steps
    }
}
