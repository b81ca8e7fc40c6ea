use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{expect_continuous, Action, ActionSpace, EnvSpec, EnvStep, Environment};
use crate::error::Result;

pub const CART_MASS: f64 = 0.5;
pub const POLE_MASS: f64 = 0.5;
pub const POLE_LENGTH: f64 = 0.6;
pub const GRAVITY: f64 = 9.82;
pub const DT: f64 = 0.02;
pub const MAX_FORCE: f64 = 10.0;
pub const TRACK_HALF_LENGTH: f64 = 3.0;
/// Reward is paid while `cos(beta)` exceeds this.
pub const UPRIGHT_COS: f64 = 0.8;

/// `beta = 0` is upright, `beta = pi` hangs down.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartpoleState {
    pub x: f64,
    pub x_dot: f64,
    pub beta: f64,
    pub beta_dot: f64,
}

/// Cart-pole dynamics integrated with semi-implicit Euler.
pub fn cartpole_swingup_step(state: CartpoleState, force: f64) -> (CartpoleState, f64, bool) {
    let force = force.clamp(-MAX_FORCE, MAX_FORCE);
    let total = CART_MASS + POLE_MASS;
    let (sin, cos) = (libm::sin(state.beta), libm::cos(state.beta));
    let temp = (force + POLE_MASS * POLE_LENGTH * state.beta_dot * state.beta_dot * sin) / total;
    let beta_acc = (GRAVITY * sin - cos * temp)
        / (POLE_LENGTH * (4.0 / 3.0 - POLE_MASS * cos * cos / total));
    let x_acc = temp - POLE_MASS * POLE_LENGTH * beta_acc * cos / total;

    let x_dot = state.x_dot + DT * x_acc;
    let beta_dot = state.beta_dot + DT * beta_acc;
    let next = CartpoleState {
        x: state.x + DT * x_dot,
        x_dot,
        beta: state.beta + DT * beta_dot,
        beta_dot,
    };
    let reward = if libm::cos(next.beta) > UPRIGHT_COS { 1.0 } else { 0.0 };
    let done = libm::fabs(next.x) > TRACK_HALF_LENGTH;
    (next, reward, done)
}

pub(super) fn spec() -> EnvSpec {
    EnvSpec {
        name: super::SPARSE_CARTPOLE_SWINGUP,
        obs_dim: 4,
        action: ActionSpace::Continuous {
            low: vec![-MAX_FORCE],
            high: vec![MAX_FORCE],
        },
        max_episode_len: 500,
        obs_offset: vec![0.0; 4],
        obs_scale: vec![
            1.0 / TRACK_HALF_LENGTH,
            1.0 / 5.0,
            1.0 / core::f64::consts::PI,
            1.0 / 10.0,
        ],
    }
}

pub struct CartpoleSwingup {
    spec: EnvSpec,
    rng: ChaCha8Rng,
    state: CartpoleState,
    steps: usize,
}

impl CartpoleSwingup {
    pub fn new(seed: u64) -> Self {
        let mut env = Self {
            spec: spec(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            state: CartpoleState {
                x: 0.0,
                x_dot: 0.0,
                beta: core::f64::consts::PI,
                beta_dot: 0.0,
            },
            steps: 0,
        };
        env.reset();
        env
    }

    pub fn state(&self) -> CartpoleState {
        self.state
    }

    fn obs(&self) -> Vec<f64> {
        let s = self.state;
        vec![s.x, s.x_dot, s.beta, s.beta_dot]
    }
}

impl Environment for CartpoleSwingup {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self) -> Vec<f64> {
        self.state = CartpoleState {
            x: 0.0,
            x_dot: 0.0,
            beta: core::f64::consts::PI + self.rng.random_range(-0.05..0.05),
            beta_dot: 0.0,
        };
        self.steps = 0;
        self.obs()
    }

    fn step(&mut self, action: Action<'_>) -> Result<EnvStep> {
        let a = expect_continuous(action, 1)?;
        let (next, reward, done) = cartpole_swingup_step(self.state, a[0]);
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

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;

    fn at(beta: f64) -> CartpoleState {
        CartpoleState {
            x: 0.0,
            x_dot: 0.0,
            beta,
            beta_dot: 0.0,
        }
    }

    #[test]
    fn reward_rule() {
        // one step from rest barely moves the pole
        assert_eq!(cartpole_swingup_step(at(0.0), 0.0).1, 1.0);
        assert_eq!(cartpole_swingup_step(at(PI / 2.0), 0.0).1, 0.0);
    }

    #[test]
    fn hanging_rest_is_an_equilibrium() {
        let mut s = at(PI);
        for _ in 0..500 {
            let (next, r, done) = cartpole_swingup_step(s, 0.0);
            assert_eq!((r, done), (0.0, false));
            s = next;
        }
        assert!((s.beta - PI).abs() < 1e-9);
        assert!(s.x.abs() < 1e-9 && s.x_dot.abs() < 1e-9);
    }

    #[test]
    fn leaving_the_track_terminates() {
        let mut s = at(PI);
        s.x = 2.99;
        s.x_dot = 2.0;
        assert!(cartpole_swingup_step(s, MAX_FORCE).2);
    }

    #[test]
    fn reset_is_near_hanging() {
        let mut env = CartpoleSwingup::new(3);
        for _ in 0..20 {
            let o = env.reset();
            assert!((o[2] - PI).abs() <= 0.05);
            assert_eq!([o[0], o[1], o[3]], [0.0; 3]);
        }
    }
}
