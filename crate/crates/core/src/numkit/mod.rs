//! Minimal numerical kernel: tensors, flattened parameter vectors and
//! feed-forward tanh networks with reverse-mode gradients and
//! curvature-vector products.

mod mlp;
mod params;
mod tensor;

pub use mlp::{
    gauss_newton_vector_product, mlp_backward, mlp_forward, mlp_init, Activation, Mlp,
    MlpActivations, MlpSpec, OutputMetric,
};
pub use params::{ParamLayout, ParamVector, Segment};
pub use tensor::Tensor;

/// Dot product of two equal-length slices.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn all_finite(a: &[f64]) -> bool {
    a.iter().all(|x| x.is_finite())
}
