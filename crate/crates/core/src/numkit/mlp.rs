use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ParamLayout, ParamVector, Tensor};
use crate::error::{shape_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Tanh,
}

/// Architecture of a fully-connected network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    pub input_dim: usize,
    /// May be empty, in which case the network is affine.
    pub hidden_sizes: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
    /// Seed for [`mlp_init`].
    pub seed: u64,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden_sizes: Vec<usize>, output_dim: usize, seed: u64) -> Self {
        Self {
            input_dim,
            hidden_sizes,
            output_dim,
            activation: Activation::Tanh,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_sizes.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "network dimensions must be >= 1: {self:?}"
            )));
        }
        Ok(())
    }

    pub fn layout(&self) -> ParamLayout {
        let mut layout = ParamLayout::new();
        let mut fan_in = self.input_dim;
        let sizes = self.hidden_sizes.iter().chain(core::iter::once(&self.output_dim));
        for (i, &fan_out) in sizes.enumerate() {
            layout.push(format!("layer{i}.weight"), vec![fan_out, fan_in]);
            layout.push(format!("layer{i}.bias"), vec![fan_out]);
            fan_in = fan_out;
        }
        layout
    }

    pub fn num_params(&self) -> usize {
        self.layout().len()
    }
}

/// Curvature of a loss in network-output space, one PSD block per batch row.
#[derive(Debug, Clone, PartialEq)]
pub enum OutputMetric {
    /// Same identity matrix on every row.
    Identity { dim: usize },
    /// `values[row * dim + j]` is the j-th diagonal entry for that row.
    Diagonal { dim: usize, values: Vec<f64> },
    /// Row-major `dim x dim` block per row.
    Dense { dim: usize, values: Vec<f64> },
}

impl OutputMetric {
    pub fn dim(&self) -> usize {
        match self {
            Self::Identity { dim } | Self::Diagonal { dim, .. } | Self::Dense { dim, .. } => *dim,
        }
    }

    /// Number of rows covered, `None` for the row-independent identity.
    pub fn rows(&self) -> Option<usize> {
        match self {
            Self::Identity { .. } => None,
            Self::Diagonal { dim, values } => Some(values.len() / dim),
            Self::Dense { dim, values } => Some(values.len() / (dim * dim)),
        }
    }

    /// `out = M_row * t`
    pub fn apply(&self, row: usize, t: &[f64], out: &mut [f64]) {
        match self {
            Self::Identity { .. } => out.copy_from_slice(t),
            Self::Diagonal { dim, values } => {
                let d = &values[row * dim..(row + 1) * dim];
                for ((o, ti), di) in out.iter_mut().zip(t).zip(d) {
                    *o = ti * di;
                }
            }
            Self::Dense { dim, values } => {
                let m = &values[row * dim * dim..(row + 1) * dim * dim];
                for (i, o) in out.iter_mut().enumerate() {
                    *o = super::dot(&m[i * dim..(i + 1) * dim], t);
                }
            }
        }
    }

    /// Restricts the metric to a subset of rows.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        match self {
            Self::Identity { dim } => Self::Identity { dim: *dim },
            Self::Diagonal { dim, values } => Self::Diagonal {
                dim: *dim,
                values: rows
                    .iter()
                    .flat_map(|&r| values[r * dim..(r + 1) * dim].iter().copied())
                    .collect(),
            },
            Self::Dense { dim, values } => {
                let sq = dim * dim;
                Self::Dense {
                    dim: *dim,
                    values: rows
                        .iter()
                        .flat_map(|&r| values[r * sq..(r + 1) * sq].iter().copied())
                        .collect(),
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Layer {
    fan_in: usize,
    fan_out: usize,
    w: usize,
    b: usize,
}

impl Layer {
    fn weights<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        &p[self.w..self.w + self.fan_in * self.fan_out]
    }

    fn bias<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        &p[self.b..self.b + self.fan_out]
    }
}

/// Per-layer values cached by [`Mlp::forward`]: the input, every hidden
/// activation and the (linear) output, each `batch x width` row-major.
#[derive(Debug, Clone)]
pub struct MlpActivations {
    batch: usize,
    values: Vec<Vec<f64>>,
}

impl MlpActivations {
    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn output(&self) -> &[f64] {
        self.values.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// Keeps only the given rows, e.g. for a curvature subsample.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let values = self
            .values
            .iter()
            .map(|layer| {
                let width = layer.len() / self.batch.max(1);
                rows.iter()
                    .flat_map(|&r| layer[r * width..(r + 1) * width].iter().copied())
                    .collect()
            })
            .collect();
        Self {
            batch: rows.len(),
            values,
        }
    }
}

/// A validated network architecture operating on raw parameter slices.
#[derive(Debug, Clone)]
pub struct Mlp {
    spec: MlpSpec,
    layers: Vec<Layer>,
    num_params: usize,
}

impl Mlp {
    pub fn new(spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        let mut layers = Vec::new();
        let mut fan_in = spec.input_dim;
        let mut offset = 0;
        for &fan_out in spec.hidden_sizes.iter().chain(core::iter::once(&spec.output_dim)) {
            let w = offset;
            let b = w + fan_in * fan_out;
            offset = b + fan_out;
            layers.push(Layer {
                fan_in,
                fan_out,
                w,
                b,
            });
            fan_in = fan_out;
        }
        Ok(Self {
            spec,
            layers,
            num_params: offset,
        })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn num_params(&self) -> usize {
        self.num_params
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_dim
    }

    pub fn layout(&self) -> ParamLayout {
        self.spec.layout()
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(&self) -> ParamVector {
        let mut rng = ChaCha8Rng::seed_from_u64(self.spec.seed);
        let mut data = vec![0.0; self.num_params];
        for l in &self.layers {
            let bound = libm::sqrt(6.0 / (l.fan_in + l.fan_out) as f64);
            for w in &mut data[l.w..l.w + l.fan_in * l.fan_out] {
                *w = rng.random_range(-bound..bound);
            }
        }
        ParamVector::new(self.layout(), data).expect("layout matches parameter count")
    }

    /// Indices of the weight (not bias) entries.
    pub fn weight_ranges(&self) -> impl Iterator<Item = core::ops::Range<usize>> + '_ {
        self.layers.iter().map(|l| l.w..l.w + l.fan_in * l.fan_out)
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params {
            return Err(shape_err(format!(
                "expected {} parameters, got {}",
                self.num_params,
                params.len()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, params: &[f64], x: &[f64], batch: usize) -> Result<MlpActivations> {
        self.check_params(params)?;
        if x.len() != batch * self.spec.input_dim {
            return Err(shape_err(format!(
                "input has {} values, expected {} x {}",
                x.len(),
                batch,
                self.spec.input_dim
            )));
        }
        let mut values = Vec::with_capacity(self.layers.len() + 1);
        values.push(x.to_vec());
        let last = self.layers.len() - 1;
        for (li, l) in self.layers.iter().enumerate() {
            let input = values.last().expect("input pushed");
            let mut out = vec![0.0; batch * l.fan_out];
            affine(l, params, input, &mut out);
            if li != last {
                out.iter_mut().for_each(|z| *z = libm::tanh(*z));
            }
            values.push(out);
        }
        if !super::all_finite(values.last().expect("output")) {
            return Err(Error::NonFinite("network output"));
        }
        Ok(MlpActivations { batch, values })
    }

    /// Single-row forward pass into `out`, using `scratch` for hidden layers.
    pub fn forward_row(&self, params: &[f64], x: &[f64], scratch: &mut [Vec<f64>; 2], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.spec.input_dim);
        debug_assert_eq!(out.len(), self.spec.output_dim);
        let [a, b] = scratch;
        a.clear();
        a.extend_from_slice(x);
        let last = self.layers.len() - 1;
        for (li, l) in self.layers.iter().enumerate() {
            b.clear();
            b.resize(l.fan_out, 0.0);
            affine(l, params, a, b);
            if li != last {
                b.iter_mut().for_each(|z| *z = libm::tanh(*z));
            }
            core::mem::swap(a, b);
        }
        out.copy_from_slice(a);
    }

    /// Reverse-mode pass for `sum(grad_out * output)`.
    ///
    /// Returns the parameter gradient and, when `want_input_grad`, the input
    /// gradient (otherwise an empty vector).
    pub fn backward(
        &self,
        params: &[f64],
        acts: &MlpActivations,
        grad_out: &[f64],
        want_input_grad: bool,
    ) -> (Vec<f64>, Vec<f64>) {
        let batch = acts.batch;
        debug_assert_eq!(grad_out.len(), batch * self.spec.output_dim);
        let mut grad = vec![0.0; self.num_params];
        let mut dz = grad_out.to_vec();
        let mut dx = Vec::new();
        for (li, l) in self.layers.iter().enumerate().rev() {
            let input = &acts.values[li];
            let w = l.weights(params);
            let (gw, rest) = grad[l.w..].split_at_mut(l.fan_in * l.fan_out);
            let gb = &mut rest[..l.fan_out];
            let need_dh = li > 0 || want_input_grad;
            let mut dh = if need_dh {
                vec![0.0; batch * l.fan_in]
            } else {
                Vec::new()
            };
            for r in 0..batch {
                let h = &input[r * l.fan_in..(r + 1) * l.fan_in];
                let dzr = &dz[r * l.fan_out..(r + 1) * l.fan_out];
                for (o, &g) in dzr.iter().enumerate() {
                    if g == 0.0 {
                        continue;
                    }
                    gb[o] += g;
                    super::axpy(g, h, &mut gw[o * l.fan_in..(o + 1) * l.fan_in]);
                    if need_dh {
                        super::axpy(
                            g,
                            &w[o * l.fan_in..(o + 1) * l.fan_in],
                            &mut dh[r * l.fan_in..(r + 1) * l.fan_in],
                        );
                    }
                }
            }
            if li > 0 {
                // through tanh: d/dz tanh(z) = 1 - h^2
                for (d, h) in dh.iter_mut().zip(input) {
                    *d *= 1.0 - h * h;
                }
                dz = dh;
            } else {
                dx = dh;
            }
        }
        (grad, dx)
    }

    /// Forward-mode product `J v`: the output tangent for a parameter tangent `v`.
    pub fn jvp(&self, params: &[f64], acts: &MlpActivations, v: &[f64]) -> Vec<f64> {
        let batch = acts.batch;
        let last = self.layers.len() - 1;
        let mut tangent: Vec<f64> = Vec::new();
        for (li, l) in self.layers.iter().enumerate() {
            let input = &acts.values[li];
            let w = l.weights(params);
            let vw = l.weights(v);
            let vb = l.bias(v);
            let mut dz = vec![0.0; batch * l.fan_out];
            for r in 0..batch {
                let h = &input[r * l.fan_in..(r + 1) * l.fan_in];
                let dh = if li > 0 {
                    Some(&tangent[r * l.fan_in..(r + 1) * l.fan_in])
                } else {
                    None
                };
                for o in 0..l.fan_out {
                    let mut z = vb[o] + super::dot(&vw[o * l.fan_in..(o + 1) * l.fan_in], h);
                    if let Some(dh) = dh {
                        z += super::dot(&w[o * l.fan_in..(o + 1) * l.fan_in], dh);
                    }
                    dz[r * l.fan_out + o] = z;
                }
            }
            if li != last {
                let out = &acts.values[li + 1];
                for (d, h) in dz.iter_mut().zip(out) {
                    *d *= 1.0 - h * h;
                }
            }
            tangent = dz;
        }
        tangent
    }

    /// `(1/batch) * sum_rows J^T M J v` on cached activations.
    pub fn gauss_newton_product(
        &self,
        params: &[f64],
        acts: &MlpActivations,
        metric: &OutputMetric,
        v: &[f64],
    ) -> Vec<f64> {
        let batch = acts.batch;
        let out_dim = self.spec.output_dim;
        let jv = self.jvp(params, acts, v);
        let mut mjv = vec![0.0; jv.len()];
        for r in 0..batch {
            metric.apply(
                r,
                &jv[r * out_dim..(r + 1) * out_dim],
                &mut mjv[r * out_dim..(r + 1) * out_dim],
            );
        }
        let (mut g, _) = self.backward(params, acts, &mjv, false);
        if batch > 0 {
            let inv = 1.0 / batch as f64;
            g.iter_mut().for_each(|x| *x *= inv);
        }
        g
    }
}

fn affine(l: &Layer, params: &[f64], input: &[f64], out: &mut [f64]) {
    let w = l.weights(params);
    let b = l.bias(params);
    for (h, z) in input.chunks_exact(l.fan_in).zip(out.chunks_exact_mut(l.fan_out)) {
        for (o, zo) in z.iter_mut().enumerate() {
            *zo = b[o] + super::dot(&w[o * l.fan_in..(o + 1) * l.fan_in], h);
        }
    }
}

fn check_layout(params: &ParamVector, mlp: &Mlp) -> Result<()> {
    if params.layout() != &mlp.layout() {
        return Err(shape_err("parameter layout does not match network spec"));
    }
    Ok(())
}

pub fn mlp_init(spec: &MlpSpec) -> Result<ParamVector> {
    Ok(Mlp::new(spec.clone())?.init())
}

pub fn mlp_forward(params: &ParamVector, spec: &MlpSpec, x: &Tensor) -> Result<Tensor> {
    let mlp = Mlp::new(spec.clone())?;
    check_layout(params, &mlp)?;
    let batch = x.expect_matrix(spec.input_dim, "network input")?;
    let acts = mlp.forward(params.data(), x.data(), batch)?;
    Tensor::matrix(batch, spec.output_dim, acts.output().to_vec())
}

pub fn mlp_backward(
    params: &ParamVector,
    spec: &MlpSpec,
    x: &Tensor,
    grad_output: &Tensor,
) -> Result<(ParamVector, Tensor)> {
    let mlp = Mlp::new(spec.clone())?;
    check_layout(params, &mlp)?;
    let batch = x.expect_matrix(spec.input_dim, "network input")?;
    if grad_output.expect_matrix(spec.output_dim, "output gradient")? != batch {
        return Err(shape_err("output gradient batch differs from input batch"));
    }
    let acts = mlp.forward(params.data(), x.data(), batch)?;
    let (g, dx) = mlp.backward(params.data(), &acts, grad_output.data(), true);
    Ok((params.with_data(g)?, Tensor::matrix(batch, spec.input_dim, dx)?))
}

pub fn gauss_newton_vector_product(
    params: &ParamVector,
    spec: &MlpSpec,
    x: &Tensor,
    metric: &OutputMetric,
    v: &ParamVector,
) -> Result<ParamVector> {
    let mlp = Mlp::new(spec.clone())?;
    check_layout(params, &mlp)?;
    if v.layout() != params.layout() {
        return Err(shape_err("tangent layout differs from parameters"));
    }
    let batch = x.expect_matrix(spec.input_dim, "network input")?;
    if metric.dim() != spec.output_dim || metric.rows().is_some_and(|r| r != batch) {
        return Err(shape_err("metric does not match output dimension or batch"));
    }
    let acts = mlp.forward(params.data(), x.data(), batch)?;
    params.with_data(mlp.gauss_newton_product(params.data(), &acts, metric, v.data()))
}
