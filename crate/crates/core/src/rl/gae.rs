use alloc::vec::Vec;

use crate::error::{shape_err, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaeConfig {
    pub gamma: f64,
    pub lambda: f64,
}

impl Default for GaeConfig {
    fn default() -> Self {
        Self {
            gamma: 0.995,
            lambda: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaeOutput {
    /// Zero-mean, unit-std advantages.
    pub advantages: Vec<f64>,
    /// Before standardization.
    pub raw_advantages: Vec<f64>,
    /// `raw_advantages + values`.
    pub returns: Vec<f64>,
}

/// Generalized advantage estimates within episode boundaries.
///
/// `episode_lens` partitions the flattened `rewards`/`values`; `bootstrap`
/// holds one value per episode for the state after its last step (0 for a
/// terminal episode, `V(s_T)` for a truncated one).
pub fn gae_advantages(
    episode_lens: &[usize],
    rewards: &[f64],
    values: &[f64],
    bootstrap: &[f64],
    cfg: GaeConfig,
) -> Result<GaeOutput> {
    let total: usize = episode_lens.iter().sum();
    if rewards.len() != total || values.len() != total || bootstrap.len() != episode_lens.len() {
        return Err(shape_err("GAE inputs do not line up with episode lengths"));
    }
    let mut raw = alloc::vec![0.0; total];
    let mut start = 0;
    for (&len, &boot) in episode_lens.iter().zip(bootstrap) {
        let mut next_value = boot;
        let mut acc = 0.0;
        for t in (start..start + len).rev() {
            let delta = rewards[t] + cfg.gamma * next_value - values[t];
            acc = delta + cfg.gamma * cfg.lambda * acc;
            raw[t] = acc;
            next_value = values[t];
        }
        start += len;
    }
    let returns = raw.iter().zip(values).map(|(a, v)| a + v).collect();
    let mut advantages = raw.clone();
    standardize(&mut advantages);
    Ok(GaeOutput {
        advantages,
        raw_advantages: raw,
        returns,
    })
}

/// Shifts to zero mean and scales to unit standard deviation (left centred
/// only when the spread is negligible).
pub fn standardize(x: &mut [f64]) {
    if x.is_empty() {
        return;
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = libm::sqrt(var);
    for v in x.iter_mut() {
        *v -= mean;
        if std > 1e-8 {
            *v /= std;
        }
    }
}
