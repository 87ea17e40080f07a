//! Spatial operators `L u = −∇·(a ∇u) + c u`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::network::EvalBundle;

/// `x ↦ (a(x), ∇a(x))`
pub type CoefficientFn = Arc<dyn Fn(&[f64], &mut [f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum Diffusion {
    /// `a ≡ 1`
    Unit,
    /// `a(x) = 1 + |x|²/2`
    Quadratic,
    /// Writes `∇a` into the slice and returns `a`.
    Custom(CoefficientFn),
}

impl fmt::Debug for Diffusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diffusion::Unit => write!(f, "Unit"),
            Diffusion::Quadratic => write!(f, "Quadratic"),
            Diffusion::Custom(_) => write!(f, "Custom"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SpatialOperator {
    pub diffusion: Diffusion,
    /// Zeroth-order coefficient `c`.
    pub reaction: f64,
}

impl SpatialOperator {
    /// `−Δ`
    pub fn neg_laplacian() -> Self {
        Self {
            diffusion: Diffusion::Unit,
            reaction: 0.0,
        }
    }

    /// `−∇·((1 + |x|²/2) ∇)`
    pub fn neg_div_a_grad() -> Self {
        Self {
            diffusion: Diffusion::Quadratic,
            reaction: 0.0,
        }
    }

    pub fn custom(a: CoefficientFn) -> Self {
        Self {
            diffusion: Diffusion::Custom(a),
            reaction: 0.0,
        }
    }

    /// Adds `c u`; `with_reaction(-1.0)` on `−Δ` gives `−Δ − Id`.
    pub fn with_reaction(mut self, c: f64) -> Self {
        self.reaction = c;
        self
    }

    /// Writes `∇a(x)` and returns `a(x)`.
    #[inline]
    pub fn coefficient(&self, x: &[f64], grad_a: &mut [f64]) -> f64 {
        match &self.diffusion {
            Diffusion::Unit => {
                grad_a.iter_mut().for_each(|g| *g = 0.0);
                1.0
            }
            Diffusion::Quadratic => {
                grad_a.copy_from_slice(x);
                1.0 + 0.5 * x.iter().map(|v| v * v).sum::<f64>()
            }
            Diffusion::Custom(f) => f(x, grad_a),
        }
    }

    /// Applies the operator given the field's bundle at `x`.
    pub fn apply(&self, bundle: &EvalBundle, x: &[f64]) -> f64 {
        let mut ga = vec![0.0; x.len()];
        let a = self.coefficient(x, &mut ga);
        let drift: f64 = ga.iter().zip(&bundle.gradient).map(|(g, u)| g * u).sum();
        -(drift + a * bundle.laplacian) + self.reaction * bundle.value
    }

    /// Checks `a ≥ a_min > 0` on the sample points (row-major).
    pub fn check_elliptic(&self, points: &[f64], dim: usize, a_min: f64) -> Result<()> {
        let mut ga = vec![0.0; dim];
        for x in points.chunks(dim) {
            let a = self.coefficient(x, &mut ga);
            if !(a >= a_min) {
                return Err(Error::InvalidArgument(format!(
                    "diffusion coefficient {a} below {a_min} at {x:?}"
                )));
            }
        }
        Ok(())
    }
}

pub fn apply_operator(op: &SpatialOperator, bundle: &EvalBundle, x: &[f64]) -> f64 {
    op.apply(bundle, x)
}
