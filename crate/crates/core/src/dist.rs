//! Distribution algebra for network outputs: fully-factored Gaussians and
//! categoricals.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape_err, Result};
use crate::numkit::{OutputMetric, Tensor};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// `0.5 * ln(2 pi)`
pub const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Clamp range applied to log standard deviations before any density is
/// evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogStdBounds {
    pub min: f64,
    pub max: f64,
}

impl Default for LogStdBounds {
    fn default() -> Self {
        Self {
            min: LOG_STD_MIN,
            max: LOG_STD_MAX,
        }
    }
}

impl LogStdBounds {
    #[inline]
    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.min, self.max)
    }

    /// True when `x` lies strictly inside the range, i.e. the clamp passes
    /// gradients through.
    #[inline]
    pub fn passes(&self, x: f64) -> bool {
        x > self.min && x < self.max
    }
}

/// Batch of diagonal Gaussians. `log_std` is stored already clamped.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagGaussianParams {
    mean: Tensor,
    log_std: Tensor,
}

impl DiagGaussianParams {
    pub fn new(mean: Tensor, log_std: Tensor, bounds: LogStdBounds) -> Result<Self> {
        if mean.shape() != log_std.shape() || mean.shape().len() != 2 {
            return Err(shape_err(format!(
                "mean {:?} and log_std {:?} must be equal [batch, n] shapes",
                mean.shape(),
                log_std.shape()
            )));
        }
        let shape = log_std.shape().to_vec();
        let clamped = log_std.data().iter().map(|&l| bounds.clamp(l)).collect();
        Ok(Self {
            mean,
            log_std: Tensor::new(shape, clamped)?,
        })
    }

    pub fn mean(&self) -> &Tensor {
        &self.mean
    }

    pub fn log_std(&self) -> &Tensor {
        &self.log_std
    }

    pub fn batch(&self) -> usize {
        self.mean.rows()
    }

    pub fn dim(&self) -> usize {
        self.mean.cols()
    }
}

/// Log-density of one row; slices are equal length.
#[inline]
pub fn diag_gaussian_log_density(mean: &[f64], log_std: &[f64], x: &[f64]) -> f64 {
    let mut acc = 0.0;
    for ((m, l), xi) in mean.iter().zip(log_std).zip(x) {
        let z = (xi - m) * libm::exp(-l);
        acc -= 0.5 * z * z + l;
    }
    acc - HALF_LN_2PI * mean.len() as f64
}

/// KL(p || q) of one row of diagonal Gaussians.
#[inline]
pub fn diag_gaussian_kl_row(mp: &[f64], lp: &[f64], mq: &[f64], lq: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..mp.len() {
        let var_ratio = libm::exp(2.0 * (lp[i] - lq[i]));
        let d = (mp[i] - mq[i]) * libm::exp(-lq[i]);
        acc += lq[i] - lp[i] + 0.5 * (var_ratio + d * d) - 0.5;
    }
    acc
}

pub fn gaussian_log_prob(p: &DiagGaussianParams, x: &Tensor) -> Result<Tensor> {
    if x.shape() != p.mean.shape() {
        return Err(shape_err("sample shape differs from distribution shape"));
    }
    let out = (0..p.batch())
        .map(|r| diag_gaussian_log_density(p.mean.row(r), p.log_std.row(r), x.row(r)))
        .collect();
    Tensor::vector(out)
}

pub fn gaussian_kl(p: &DiagGaussianParams, q: &DiagGaussianParams) -> Result<Tensor> {
    if p.mean.shape() != q.mean.shape() {
        return Err(shape_err("KL between differently shaped Gaussians"));
    }
    let out = (0..p.batch())
        .map(|r| {
            diag_gaussian_kl_row(p.mean.row(r), p.log_std.row(r), q.mean.row(r), q.log_std.row(r))
        })
        .collect();
    Tensor::vector(out)
}

pub fn gaussian_entropy(p: &DiagGaussianParams) -> Tensor {
    let n = p.dim() as f64;
    let out = (0..p.batch())
        .map(|r| p.log_std.row(r).iter().sum::<f64>() + n * (HALF_LN_2PI + 0.5))
        .collect();
    Tensor::vector(out).expect("finite entropies")
}

/// Batch of categorical distributions given by unnormalized logits.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalParams {
    logits: Tensor,
}

impl CategoricalParams {
    pub fn new(logits: Tensor) -> Result<Self> {
        if logits.shape().len() != 2 || logits.cols() == 0 {
            return Err(shape_err("logits must be [batch, m] with m >= 1"));
        }
        Ok(Self { logits })
    }

    pub fn logits(&self) -> &Tensor {
        &self.logits
    }

    pub fn batch(&self) -> usize {
        self.logits.rows()
    }

    pub fn probs(&self) -> Tensor {
        let m = self.logits.cols();
        let mut out = Vec::with_capacity(self.logits.len());
        for r in 0..self.batch() {
            let mut row = vec![0.0; m];
            softmax(self.logits.row(r), &mut row);
            out.extend_from_slice(&row);
        }
        Tensor::matrix(self.batch(), m, out).expect("softmax is finite")
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = libm::exp(l - max);
        total += *o;
    }
    out.iter_mut().for_each(|o| *o /= total);
}

/// Log-softmax of one row.
pub fn log_softmax(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + libm::log(logits.iter().map(|&l| libm::exp(l - max)).sum::<f64>());
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = l - lse;
    }
}

pub fn categorical_log_prob(p: &CategoricalParams, idx: &[usize]) -> Result<Tensor> {
    if idx.len() != p.batch() {
        return Err(shape_err("one index per row required"));
    }
    let m = p.logits.cols();
    let mut lp = vec![0.0; m];
    let mut out = Vec::with_capacity(idx.len());
    for (r, &i) in idx.iter().enumerate() {
        if i >= m {
            return Err(shape_err(format!("category {i} out of range {m}")));
        }
        log_softmax(p.logits.row(r), &mut lp);
        out.push(lp[i]);
    }
    Tensor::vector(out)
}

/// KL(p || q) for one row of logits.
pub fn categorical_kl_row(p: &[f64], q: &[f64]) -> f64 {
    let m = p.len();
    let mut lp = vec![0.0; m];
    let mut lq = vec![0.0; m];
    log_softmax(p, &mut lp);
    log_softmax(q, &mut lq);
    lp.iter()
        .zip(&lq)
        .map(|(a, b)| libm::exp(*a) * (a - b))
        .sum::<f64>()
        .max(0.0)
}

pub fn categorical_kl(p: &CategoricalParams, q: &CategoricalParams) -> Result<Tensor> {
    if p.logits.shape() != q.logits.shape() {
        return Err(shape_err("KL between differently shaped categoricals"));
    }
    let out = (0..p.batch())
        .map(|r| categorical_kl_row(p.logits.row(r), q.logits.row(r)))
        .collect();
    Tensor::vector(out)
}

pub fn categorical_entropy(p: &CategoricalParams) -> Tensor {
    let m = p.logits.cols();
    let mut lp = vec![0.0; m];
    let out = (0..p.batch())
        .map(|r| {
            log_softmax(p.logits.row(r), &mut lp);
            -lp.iter().map(|l| libm::exp(*l) * l).sum::<f64>()
        })
        .collect();
    Tensor::vector(out).expect("finite entropies")
}

/// Either output distribution family, for [`fisher_metric`].
#[derive(Debug, Clone, Copy)]
pub enum DistParams<'a> {
    Gaussian(&'a DiagGaussianParams),
    Categorical(&'a CategoricalParams),
}

/// Fisher information of the distribution with respect to its own
/// parameters, one block per row.
///
/// Gaussians: `diag(1/sigma^2, 2)` over `(mean, log_std)`, laid out as all
/// means followed by all log-stds. Categoricals: `diag(p) - p p^T` over logits.
pub fn fisher_metric(p: DistParams<'_>) -> OutputMetric {
    match p {
        DistParams::Gaussian(g) => {
            let n = g.dim();
            let mut values = Vec::with_capacity(g.batch() * 2 * n);
            for r in 0..g.batch() {
                values.extend(g.log_std.row(r).iter().map(|l| libm::exp(-2.0 * l)));
                values.extend(core::iter::repeat_n(2.0, n));
            }
            OutputMetric::Diagonal { dim: 2 * n, values }
        }
        DistParams::Categorical(c) => {
            let m = c.logits.cols();
            let probs = c.probs();
            let mut values = Vec::with_capacity(c.batch() * m * m);
            for r in 0..c.batch() {
                let p = probs.row(r);
                for i in 0..m {
                    for j in 0..m {
                        let diag = if i == j { p[i] } else { 0.0 };
                        values.push(diag - p[i] * p[j]);
                    }
                }
            }
            OutputMetric::Dense { dim: m, values }
        }
    }
}
