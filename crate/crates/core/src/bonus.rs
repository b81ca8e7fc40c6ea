//! Intrinsic rewards computed from the dynamics model, the per-iteration
//! bonus coefficient and the reward reshaping step.
//!
//! Every scheme only needs forward passes through the model, so rows are
//! independent and may be evaluated in any order or split.

use alloc::vec::Vec;

use crate::dynamics::{DynamicsModel, TransitionBatch};
use crate::error::{shape_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BonusScheme {
    /// `-log P_phi(s'|s,a)` under the current model.
    Surprisal,
    /// `log P_phi_t - log P_phi_{t-k}`.
    LearningProgress { k: usize },
    /// `||s' - mu_phi(s,a)||_2`.
    PredictionError,
    /// Surprisal under the never-trained initial model.
    RandomSurprisal,
    /// Plain extrinsic rewards.
    None,
}

impl BonusScheme {
    pub fn uses_model(&self) -> bool {
        !matches!(self, Self::None)
    }

    /// Short name as used on the command line (`surprisal`, `learning_progress:10`, ...).
    pub fn label(&self) -> alloc::string::String {
        match self {
            Self::Surprisal => "surprisal".into(),
            Self::LearningProgress { k } => alloc::format!("learning_progress:{k}"),
            Self::PredictionError => "pred_error".into(),
            Self::RandomSurprisal => "random_surprisal".into(),
            Self::None => "none".into(),
        }
    }

    /// Parses `NAME[:k]`.
    pub fn parse(text: &str) -> Result<Self> {
        let (name, arg) = match text.split_once(':') {
            Some((n, a)) => (n.trim(), Some(a.trim())),
            None => (text.trim(), None),
        };
        let bad = || Error::InvalidArgument(alloc::format!("unknown bonus scheme `{text}`"));
        let scheme = match name {
            "surprisal" => Self::Surprisal,
            "learning_progress" | "lp" => {
                let k = match arg {
                    Some(a) => a.parse::<usize>().map_err(|_| bad())?,
                    None => 1,
                };
                Self::LearningProgress { k }
            }
            "pred_error" => Self::PredictionError,
            "random_surprisal" => Self::RandomSurprisal,
            "none" => Self::None,
            _ => return Err(bad()),
        };
        if arg.is_some() && !matches!(scheme, Self::LearningProgress { .. }) {
            return Err(bad());
        }
        scheme.validate()?;
        Ok(scheme)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::LearningProgress { k: 0 } => Err(Error::InvalidArgument(
                "learning progress needs k >= 1".into(),
            )),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BonusConfig {
    pub scheme: BonusScheme,
    /// Desired average bonus magnitude.
    pub eta0: f64,
    /// Translate raw bonuses so their batch mean is nonnegative.
    pub nonnegative_shift: bool,
}

impl Default for BonusConfig {
    fn default() -> Self {
        Self {
            scheme: BonusScheme::Surprisal,
            eta0: 0.001,
            nonnegative_shift: false,
        }
    }
}

/// What was applied to one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BonusReport {
    pub raw: Vec<f64>,
    pub eta: f64,
    pub shift: f64,
}

impl BonusReport {
    /// `eta * (raw + shift)` per transition.
    pub fn applied(&self) -> impl Iterator<Item = f64> + '_ {
        self.raw.iter().map(move |r| self.eta * (r + self.shift))
    }

    pub fn stats(&self) -> BonusStats {
        BonusStats::of(&self.raw, self.eta, self.shift)
    }
}

/// Summary row for logging.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BonusStats {
    pub mean_raw: f64,
    pub std_raw: f64,
    pub min_raw: f64,
    pub max_raw: f64,
    pub eta: f64,
    pub shift: f64,
    pub mean_applied: f64,
}

impl BonusStats {
    pub fn of(raw: &[f64], eta: f64, shift: f64) -> Self {
        if raw.is_empty() {
            return Self {
                eta,
                shift,
                ..Self::default()
            };
        }
        let n = raw.len() as f64;
        let mean = raw.iter().sum::<f64>() / n;
        let var = raw.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
        Self {
            mean_raw: mean,
            std_raw: libm::sqrt(var),
            min_raw: raw.iter().copied().fold(f64::INFINITY, f64::min),
            max_raw: raw.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            eta,
            shift,
            mean_applied: eta * (mean + shift),
        }
    }
}

pub fn surprisal_bonus(model: &DynamicsModel, batch: &TransitionBatch) -> Result<Vec<f64>> {
    Ok(model.log_probs(batch)?.into_iter().map(|lp| -lp).collect())
}

pub fn learning_progress_bonus(
    now: &DynamicsModel,
    past: &DynamicsModel,
    batch: &TransitionBatch,
) -> Result<Vec<f64>> {
    if now.spec() != past.spec() {
        return Err(shape_err("learning progress needs two models of the same spec"));
    }
    let a = now.log_probs(batch)?;
    let b = past.log_probs(batch)?;
    Ok(a.into_iter().zip(b).map(|(x, y)| x - y).collect())
}

pub fn pred_error_bonus(model: &DynamicsModel, batch: &TransitionBatch) -> Result<Vec<f64>> {
    let means = model.predicted_means(batch)?;
    let n = batch.state_dim;
    Ok(means
        .chunks_exact(n)
        .zip(batch.next_states.chunks_exact(n))
        .map(|(m, s)| {
            libm::sqrt(m.iter().zip(s).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        })
        .collect())
}

/// Surprisal under the frozen initial model.
pub fn random_surprisal_bonus(frozen: &DynamicsModel, batch: &TransitionBatch) -> Result<Vec<f64>> {
    surprisal_bonus(frozen, batch)
}

/// `eta0 / max(1, |mean(raw)|)`.
pub fn normalize_eta(raw: &[f64], eta0: f64) -> Result<f64> {
    if raw.is_empty() {
        return Err(Error::Empty("bonus batch"));
    }
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    Ok(eta0 / libm::fabs(mean).max(1.0))
}

/// Reshapes extrinsic rewards: `r' = r + eta * (raw + shift)` with
/// `shift = max(0, -mean(raw))` when the nonnegative shift is enabled.
pub fn apply_bonus(
    rewards_ext: &[f64],
    raw: &[f64],
    eta: f64,
    nonnegative_shift: bool,
) -> Result<(Vec<f64>, f64)> {
    if rewards_ext.len() != raw.len() {
        return Err(shape_err("rewards and bonuses differ in length"));
    }
    let shift = if nonnegative_shift && !raw.is_empty() {
        let mean = raw.iter().sum::<f64>() / raw.len() as f64;
        (-mean).max(0.0)
    } else {
        0.0
    };
    let shaped = rewards_ext
        .iter()
        .zip(raw)
        .map(|(r, b)| r + eta * (b + shift))
        .collect();
    Ok((shaped, shift))
}

/// Warns when the learning-progress mean is small relative to its spread, the
/// regime where `normalize_eta` lets individual bonuses grow large.
pub fn check_bonus_spread(raw: &[f64]) -> bool {
    let s = BonusStats::of(raw, 0.0, 0.0);
    let ratio = s.std_raw / (libm::fabs(s.mean_raw) + 1.0);
    if ratio > 100.0 {
        log::warn!(
            "bonus spread {:.3e} dominates its mean {:.3e}; eta normalization is loose",
            s.std_raw,
            s.mean_raw
        );
        return true;
    }
    false
}
