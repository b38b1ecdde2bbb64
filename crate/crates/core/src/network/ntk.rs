use crate::error::Result;
use crate::linalg::Signal;
use crate::network::{forward, pre_activation_jacobians, NetworkParams};

/// Trace of the neural tangent kernel at `x`,
/// `sum_l (||α_{l-1}(x)||^2 + 1) ||J(ᾱ_l -> α_L)(x)||_F^2`.
///
/// The value equals `||J_theta f(x)||_F^2` when every layer is parameterized by
/// a dense matrix `W_l` and a per-pixel bias vector.
pub fn ntk_trace(params: &NetworkParams, x: &Signal) -> Result<f64> {
    let trace = forward(params, x)?;
    let jac = pre_activation_jacobians(params, &trace)?;
    Ok(trace
        .inputs
        .iter()
        .zip(&jac)
        .map(|(a, j)| (a.norm_sq() + 1.0) * j.norm_squared())
        .sum())
}
