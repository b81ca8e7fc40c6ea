use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape_err, Error, Result};
use crate::numkit::{Mlp, MlpActivations, MlpSpec, OutputMetric, ParamVector};
use crate::trustregion::{solve_step, CurvatureOperator, StepReport, TrustRegionConfig, TrustRegionProblem};

/// Ridge coefficient of the time-varying linear baseline.
pub const LINEAR_RIDGE: f64 = 1e-8;

/// Neural baseline `V(s)` whose output is de-whitened by the statistics of
/// the most recent fit.
#[derive(Debug, Clone)]
pub struct NeuralValue {
    mlp: Mlp,
    params: ParamVector,
    obs_offset: Vec<f64>,
    obs_scale: Vec<f64>,
    target_mean: f64,
    target_std: f64,
}

impl NeuralValue {
    pub fn new(obs_dim: usize, hidden_sizes: Vec<usize>, obs_offset: Vec<f64>, obs_scale: Vec<f64>, seed: u64) -> Result<Self> {
        if obs_offset.len() != obs_dim || obs_scale.len() != obs_dim {
            return Err(shape_err("observation scaling does not match obs_dim"));
        }
        let mlp = Mlp::new(MlpSpec::new(obs_dim, hidden_sizes, 1, seed))?;
        let params = mlp.init();
        Ok(Self {
            mlp,
            params,
            obs_offset,
            obs_scale,
            target_mean: 0.0,
            target_std: 1.0,
        })
    }

    /// Multiplies the output-layer weights, e.g. to start near a constant.
    pub fn with_output_scale(mut self, scale: f64) -> Self {
        let last = alloc::format!("layer{}.weight", self.mlp.spec().hidden_sizes.len());
        if let Some(w) = self.params.segment_mut(&last) {
            w.iter_mut().for_each(|x| *x *= scale);
        }
        self
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    /// `(mean, std)` mapping network output to value units.
    pub fn target_stats(&self) -> (f64, f64) {
        (self.target_mean, self.target_std)
    }

    fn scaled(&self, obs: &[f64]) -> Vec<f64> {
        let d = self.obs_offset.len();
        obs.iter()
            .enumerate()
            .map(|(k, x)| (x - self.obs_offset[k % d]) * self.obs_scale[k % d])
            .collect()
    }

    pub fn predict(&self, obs: &[f64]) -> Result<Vec<f64>> {
        let rows = obs.len() / self.obs_offset.len();
        let acts = self.mlp.forward(self.params.data(), &self.scaled(obs), rows)?;
        Ok(acts
            .output()
            .iter()
            .map(|v| v * self.target_std + self.target_mean)
            .collect())
    }

    /// Switches output statistics while keeping `predict` unchanged by
    /// rescaling the last layer.
    fn restat(&mut self, mean: f64, std: f64) {
        let last = self.mlp.spec().hidden_sizes.len();
        let ratio = self.target_std / std;
        let shift = (self.target_mean - mean) / std;
        let wname = alloc::format!("layer{last}.weight");
        let bname = alloc::format!("layer{last}.bias");
        if let Some(w) = self.params.segment_mut(&wname) {
            w.iter_mut().for_each(|x| *x *= ratio);
        }
        if let Some(b) = self.params.segment_mut(&bname) {
            b.iter_mut().for_each(|x| *x = *x * ratio + shift);
        }
        self.target_mean = mean;
        self.target_std = std;
    }
}

struct ValueStep<'a> {
    mlp: &'a Mlp,
    theta_old: &'a [f64],
    inputs: Vec<f64>,
    targets: Vec<f64>,
    rows: usize,
    delta: f64,
    old_acts: MlpActivations,
}

impl TrustRegionProblem for ValueStep<'_> {
    fn theta_old(&self) -> &[f64] {
        self.theta_old
    }

    fn delta(&self) -> f64 {
        self.delta
    }

    fn gradient(&self) -> Result<Vec<f64>> {
        let inv = 1.0 / self.rows as f64;
        let grad_out: Vec<f64> = self
            .old_acts
            .output()
            .iter()
            .zip(&self.targets)
            .map(|(v, y)| inv * (y - v))
            .collect();
        Ok(self.mlp.backward(self.theta_old, &self.old_acts, &grad_out, false).0)
    }

    fn num_rows(&self) -> usize {
        self.rows
    }

    fn curvature(&self, rows: Option<&[usize]>) -> Result<CurvatureOperator<'_>> {
        let acts = match rows {
            Some(r) => self.old_acts.select_rows(r),
            None => self.old_acts.clone(),
        };
        let metric = OutputMetric::Identity { dim: 1 };
        Ok(Box::new(move |v| Ok(self.mlp.gauss_newton_product(self.theta_old, &acts, &metric, v))))
    }

    fn evaluate(&self, theta: &[f64]) -> Result<(f64, f64)> {
        let acts = self.mlp.forward(theta, &self.inputs, self.rows)?;
        let mut loss = 0.0;
        let mut drift = 0.0;
        for ((v, y), o) in acts.output().iter().zip(&self.targets).zip(self.old_acts.output()) {
            loss += 0.5 * (v - y) * (v - y);
            drift += 0.5 * (v - o) * (v - o);
        }
        let inv = 1.0 / self.rows as f64;
        Ok((-loss * inv, drift * inv))
    }
}

/// One trust-region step on `-mean (V - y)^2 / 2` with the mean squared
/// drift of the predictions bounded by `delta`, in whitened target units.
pub fn fit_value_nn(
    vf: &mut NeuralValue,
    obs: &[f64],
    returns: &[f64],
    delta: f64,
    config: &TrustRegionConfig,
    seed: u64,
) -> Result<StepReport> {
    let rows = returns.len();
    if rows == 0 {
        return Err(Error::Empty("value batch"));
    }
    if obs.len() != rows * vf.obs_offset.len() {
        return Err(shape_err("observations and returns differ in length"));
    }
    let n = rows as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    let std = libm::sqrt(var);
    vf.restat(mean, if std > 1e-6 { std } else { 1.0 });
    let targets: Vec<f64> = returns.iter().map(|r| (r - vf.target_mean) / vf.target_std).collect();
    let inputs = vf.scaled(obs);
    let theta_old = vf.params.data().to_vec();
    let old_acts = vf.mlp.forward(&theta_old, &inputs, rows)?;
    let (theta, report) = {
        let problem = ValueStep {
            mlp: &vf.mlp,
            theta_old: &theta_old,
            inputs,
            targets,
            rows,
            delta,
            old_acts,
        };
        solve_step(&problem, config, seed)?
    };
    vf.params = vf.params.with_data(theta)?;
    Ok(report)
}

/// Time-varying linear baseline over `[s, s^2, t/T, (t/T)^2, (t/T)^3, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearValue {
    obs_offset: Vec<f64>,
    obs_scale: Vec<f64>,
    horizon: usize,
    coefficients: Vec<f64>,
}

impl LinearValue {
    /// Zero baseline; `horizon` is the episode length cap `T`.
    pub fn new(obs_offset: Vec<f64>, obs_scale: Vec<f64>, horizon: usize) -> Result<Self> {
        if obs_offset.len() != obs_scale.len() || horizon == 0 {
            return Err(Error::InvalidArgument("linear baseline needs matching scaling and T >= 1".into()));
        }
        let k = 2 * obs_offset.len() + 4;
        Ok(Self {
            obs_offset,
            obs_scale,
            horizon,
            coefficients: vec![0.0; k],
        })
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn num_features(&self) -> usize {
        self.coefficients.len()
    }

    pub fn features(&self, obs: &[f64], t: usize, out: &mut Vec<f64>) {
        out.clear();
        let d = self.obs_offset.len();
        let scaled = (0..d).map(|k| (obs[k] - self.obs_offset[k]) * self.obs_scale[k]);
        out.extend(scaled.clone());
        out.extend(scaled.map(|x| x * x));
        let u = t as f64 / self.horizon as f64;
        out.extend_from_slice(&[u, u * u, u * u * u, 1.0]);
    }

    pub fn predict(&self, obs: &[f64], times: &[usize]) -> Result<Vec<f64>> {
        let d = self.obs_offset.len();
        if obs.len() != times.len() * d {
            return Err(shape_err("observations and time indices differ in length"));
        }
        let mut f = Vec::new();
        Ok(obs
            .chunks_exact(d)
            .zip(times)
            .map(|(s, &t)| {
                self.features(s, t, &mut f);
                crate::numkit::dot(&f, &self.coefficients)
            })
            .collect())
    }
}

/// Ridge least-squares refit of `vf` on `(obs, t) -> returns`.
pub fn fit_value_linear_timevarying(
    vf: &mut LinearValue,
    obs: &[f64],
    times: &[usize],
    returns: &[f64],
) -> Result<()> {
    let d = vf.obs_offset.len();
    if returns.is_empty() {
        return Err(Error::Empty("value batch"));
    }
    if obs.len() != returns.len() * d || times.len() != returns.len() {
        return Err(shape_err("linear baseline inputs differ in length"));
    }
    let k = vf.num_features();
    let mut gram = vec![0.0; k * k];
    let mut rhs = vec![0.0; k];
    let mut f = Vec::with_capacity(k);
    for ((s, &t), &y) in obs.chunks_exact(d).zip(times).zip(returns) {
        vf.features(s, t, &mut f);
        for i in 0..k {
            rhs[i] += f[i] * y;
            for j in 0..=i {
                gram[i * k + j] += f[i] * f[j];
            }
        }
    }
    let mut ridge = LINEAR_RIDGE;
    loop {
        let mut a = gram.clone();
        for i in 0..k {
            a[i * k + i] += ridge;
        }
        if let Some(w) = cholesky_solve(&mut a, &rhs, k) {
            if w.iter().all(|x| x.is_finite()) {
                vf.coefficients = w;
                return Ok(());
            }
        }
        ridge *= 10.0;
        if ridge > 1e6 {
            return Err(Error::NonFinite("linear baseline solve"));
        }
    }
}

/// Solves `A x = b` for SPD `A` given by its lower triangle (overwritten).
fn cholesky_solve(a: &mut [f64], b: &[f64], k: usize) -> Option<Vec<f64>> {
    for j in 0..k {
        let mut s = a[j * k + j];
        for p in 0..j {
            s -= a[j * k + p] * a[j * k + p];
        }
        if !(s > 0.0) {
            return None;
        }
        let l = libm::sqrt(s);
        a[j * k + j] = l;
        for i in j + 1..k {
            let mut s = a[i * k + j];
            for p in 0..j {
                s -= a[i * k + p] * a[j * k + p];
            }
            a[i * k + j] = s / l;
        }
    }
    let mut y = b.to_vec();
    for i in 0..k {
        for p in 0..i {
            y[i] -= a[i * k + p] * y[p];
        }
        y[i] /= a[i * k + i];
    }
    for i in (0..k).rev() {
        for p in i + 1..k {
            y[i] -= a[p * k + i] * y[p];
        }
        y[i] /= a[i * k + i];
    }
    Some(y)
}

/// Either baseline behind one interface.
#[derive(Debug, Clone)]
pub enum ValueFunction {
    Neural(NeuralValue),
    Linear(LinearValue),
}

impl ValueFunction {
    pub fn predict(&self, obs: &[f64], times: &[usize]) -> Result<Vec<f64>> {
        match self {
            Self::Neural(v) => v.predict(obs),
            Self::Linear(v) => v.predict(obs, times),
        }
    }

    /// Refits on returns; the step report is present for the neural baseline.
    pub fn fit(
        &mut self,
        obs: &[f64],
        times: &[usize],
        returns: &[f64],
        delta: f64,
        config: &TrustRegionConfig,
        seed: u64,
    ) -> Result<Option<StepReport>> {
        match self {
            Self::Neural(v) => fit_value_nn(v, obs, returns, delta, config, seed).map(Some),
            Self::Linear(v) => fit_value_linear_timevarying(v, obs, times, returns).map(|_| None),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_small_system() {
        let mut a = vec![4.0, 0.0, 2.0, 3.0];
        let x = cholesky_solve(&mut a, &[2.0, 5.0], 2).unwrap();
        // [[4,2],[2,3]] x = [2,5]
        assert!((x[0] + 0.5).abs() < 1e-12 && (x[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn restat_preserves_predictions() {
        let mut v = NeuralValue::new(2, vec![4], vec![0.0, 0.0], vec![1.0, 1.0], 3).unwrap();
        let obs = [0.1, -0.4, 0.7, 0.2];
        let before = v.predict(&obs).unwrap();
        v.restat(3.0, 0.25);
        let after = v.predict(&obs).unwrap();
        for (a, b) in before.iter().zip(&after) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
