use super::boundary::{product_bundle, BoundaryFactor};
use super::mlp::{mlp_bundle, EvalBundle, MlpParams};
use crate::error::{Error, Result};
use crate::polybasis::{basis_family_at, BasisKind, BasisOrder, TimeInterval};

/// Bundle of `ŵ = ν φ̂` for a scalar network.
pub fn spatial_net_bundle(net: &MlpParams, bf: &BoundaryFactor, x: &[f64]) -> EvalBundle {
    product_bundle(&bf.bundle(x), &mlp_bundle(net, x))
}

/// `û_N(x, t) = Σ_n ŵ_n(x) φ_n(t)` with `ŵ_n = ν φ̂_n`.
///
/// The spatial functions come from `nets` in order; a multi-output network
/// contributes one `φ̂_n` per output.
#[derive(Debug, Clone)]
pub struct AdaptiveBasisSolution {
    pub nets: Vec<MlpParams>,
    pub boundary: BoundaryFactor,
    pub order: BasisOrder,
    pub interval: TimeInterval,
}

impl AdaptiveBasisSolution {
    pub fn new(
        nets: Vec<MlpParams>,
        boundary: BoundaryFactor,
        order: BasisOrder,
        interval: TimeInterval,
    ) -> Result<Self> {
        if nets.is_empty() {
            return Err(Error::InvalidArgument("solution needs at least one network".into()));
        }
        let d = nets[0].input_dim();
        if nets.iter().any(|n| n.input_dim() != d) {
            return Err(Error::InvalidArgument("networks disagree on input dimension".into()));
        }
        Ok(Self {
            nets,
            boundary,
            order,
            interval,
        })
    }

    /// Number of temporal modes `N`.
    pub fn modes(&self) -> usize {
        self.nets.iter().map(|n| n.outputs()).sum()
    }

    pub fn dim(&self) -> usize {
        self.nets[0].input_dim()
    }

    /// `ŵ_1(x), ..., ŵ_N(x)`.
    pub fn spatial_values(&self, x: &[f64]) -> Vec<f64> {
        let nu = self.boundary.value(x);
        let mut out = Vec::with_capacity(self.modes());
        let mut buf = Vec::new();
        for net in &self.nets {
            buf.resize(net.outputs(), 0.0);
            net.forward_values(x, &mut buf);
            out.extend(buf.iter().map(|v| nu * v));
        }
        out
    }

    /// Evaluates at several times sharing one spatial pass.
    pub fn eval_times(&self, x: &[f64], times: &[f64]) -> Result<Vec<f64>> {
        let w = self.spatial_values(x);
        times
            .iter()
            .map(|&t| {
                let (phi, _) =
                    basis_family_at(self.order, BasisKind::Trial, w.len(), t, self.interval)?;
                Ok(w.iter().zip(&phi).map(|(a, b)| a * b).sum())
            })
            .collect()
    }

    pub fn eval(&self, x: &[f64], t: f64) -> Result<f64> {
        Ok(self.eval_times(x, &[t])?[0])
    }
}

pub fn eval_solution(sol: &AdaptiveBasisSolution, x: &[f64], t: f64) -> Result<f64> {
    sol.eval(x, t)
}
