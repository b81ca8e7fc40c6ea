use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{expect_continuous, Action, ActionSpace, EnvSpec, EnvStep, Environment};
use crate::error::Result;

pub const MIN_POSITION: f64 = -1.2;
pub const MAX_POSITION: f64 = 0.6;
pub const MAX_SPEED: f64 = 0.07;
pub const GOAL_POSITION: f64 = 0.6;
const POWER: f64 = 0.001;
const GRAVITY: f64 = 0.0025;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MountainCarState {
    pub position: f64,
    pub velocity: f64,
}

/// One step of continuous mountain-car; reward 1 (and termination) only on
/// escaping the valley.
pub fn mountaincar_step(state: MountainCarState, force: f64) -> (MountainCarState, f64, bool) {
    let force = force.clamp(-1.0, 1.0);
    let mut v = state.velocity + POWER * force - GRAVITY * libm::cos(3.0 * state.position);
    v = v.clamp(-MAX_SPEED, MAX_SPEED);
    let p = (state.position + v).clamp(MIN_POSITION, MAX_POSITION);
    if p <= MIN_POSITION && v < 0.0 {
        v = 0.0;
    }
    let done = p >= GOAL_POSITION;
    let reward = if done { 1.0 } else { 0.0 };
    (
        MountainCarState {
            position: p,
            velocity: v,
        },
        reward,
        done,
    )
}

pub(super) fn spec() -> EnvSpec {
    EnvSpec {
        name: super::SPARSE_MOUNTAINCAR,
        obs_dim: 2,
        action: ActionSpace::Continuous {
            low: vec![-1.0],
            high: vec![1.0],
        },
        max_episode_len: 500,
        obs_offset: vec![-0.3, 0.0],
        obs_scale: vec![1.0 / 0.9, 1.0 / MAX_SPEED],
    }
}

pub struct MountainCar {
    spec: EnvSpec,
    rng: ChaCha8Rng,
    state: MountainCarState,
    steps: usize,
}

impl MountainCar {
    pub fn new(seed: u64) -> Self {
        let mut env = Self {
            spec: spec(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            state: MountainCarState {
                position: -0.5,
                velocity: 0.0,
            },
            steps: 0,
        };
        env.reset();
        env
    }

    pub fn state(&self) -> MountainCarState {
        self.state
    }

    fn obs(&self) -> Vec<f64> {
        vec![self.state.position, self.state.velocity]
    }
}

impl Environment for MountainCar {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self) -> Vec<f64> {
        self.state = MountainCarState {
            position: self.rng.random_range(-0.6..-0.4),
            velocity: 0.0,
        };
        self.steps = 0;
        self.obs()
    }

    fn step(&mut self, action: Action<'_>) -> Result<EnvStep> {
        let a = expect_continuous(action, 1)?;
        let (next, reward, done) = mountaincar_step(self.state, a[0]);
        self.state = next;
        self.steps += 1;
        Ok(EnvStep {
            observation: self.obs(),
            reward,
            done,
        })
    }

    fn steps(&self) -> usize {
        self.steps
    }
}
