//! Spatial operators, Galerkin residuals and the training objectives.

use std::sync::Arc;

pub mod dls;
pub mod galerkin_loss;
pub mod operator;

pub use dls::{dls_loss, DlsSolution, DlsSpec};
pub use galerkin_loss::{
    f_projection_cache, loss_hyperbolic, loss_parabolic, residuals_hyperbolic,
    residuals_parabolic, ForcingProjection, LaggedFn, LossParts, LossSpec, Workspace,
};
pub use operator::{apply_operator, CoefficientFn, Diffusion, SpatialOperator};

/// Scalar field on space-time, `(x, t) ↦ f(x, t)`.
pub type SpaceTimeFn = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;

/// Scalar field on space.
pub type SpatialFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Pointwise nonlinearity `u ↦ (g(u), g'(u))`.
pub type Nonlinearity = Arc<dyn Fn(f64) -> (f64, f64) + Send + Sync>;

/// Residual weights `r_j = N⁻³ Σ_{k=j}^{N} k(2k − 1)` of the parabolic loss.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualWeights(pub Vec<f64>);

impl ResidualWeights {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub fn residual_weights(n: usize) -> ResidualWeights {
    let n3 = (n as f64).powi(3);
    let mut out = vec![0.0; n];
    let mut acc = 0.0;
    for k in (1..=n).rev() {
        acc += (k * (2 * k - 1)) as f64;
        out[k - 1] = acc / n3;
    }
    ResidualWeights(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_small_cases() {
        assert_eq!(residual_weights(1).0, vec![1.0]);
        assert_eq!(residual_weights(2).0, vec![0.875, 0.75]);
    }

    #[test]
    fn weights_monotone_and_bounded() {
        let w = residual_weights(10);
        assert!(w.0.windows(2).all(|p| p[0] > p[1]));
        for n in 1..=200 {
            let w = residual_weights(n);
            let nf = n as f64;
            assert!(w.0[n - 1] >= 1.0 / nf);
            assert!(w.0[0] <= 2.0);
            assert!((w.0[n - 1] - (2.0 * nf - 1.0) / (nf * nf)).abs() < 1e-15);
        }
    }
}
