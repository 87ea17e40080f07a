//! Functions `ν` vanishing on ∂Ω, used to impose homogeneous boundary
//! conditions by construction.

use std::fmt;
use std::sync::Arc;

use super::mlp::EvalBundle;
use crate::error::{Error, Result};
use crate::sampler::{DomainSampler, DomainSpec};

/// Sample count used to estimate the normalization sup.
pub const NORMALIZATION_SAMPLES: usize = 100_000;

pub type LevelSetFn = Arc<dyn Fn(&[f64]) -> EvalBundle + Send + Sync>;

#[derive(Clone)]
pub enum BoundaryKind {
    /// `ν = Π (x_i − a_i)(x_i − b_i)`
    Box { lower: Vec<f64>, upper: Vec<f64> },
    /// `ν = |x|² − r²`
    Ball { radius: f64 },
    /// `ν = ρ(x) − a` for Ω = {ρ < a}
    LevelSet { rho: LevelSetFn, level: f64 },
}

impl fmt::Debug for BoundaryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundaryKind::Box { lower, upper } => f
                .debug_struct("Box")
                .field("lower", lower)
                .field("upper", upper)
                .finish(),
            BoundaryKind::Ball { radius } => f.debug_struct("Ball").field("radius", radius).finish(),
            BoundaryKind::LevelSet { level, .. } => {
                f.debug_struct("LevelSet").field("level", level).finish()
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct BoundaryFactor {
    kind: BoundaryKind,
    scale: f64,
}

impl BoundaryFactor {
    /// Unnormalized factor (scale 1).
    pub fn new(kind: BoundaryKind) -> Self {
        Self { kind, scale: 1.0 }
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    /// The natural factor for a sampler domain, unnormalized.
    pub fn for_domain(domain: &DomainSpec) -> Self {
        match domain {
            DomainSpec::Box { lower, upper } => Self::new(BoundaryKind::Box {
                lower: lower.clone(),
                upper: upper.clone(),
            }),
            DomainSpec::UnitBall { .. } => Self::new(BoundaryKind::Ball { radius: 1.0 }),
        }
    }

    /// Factor for `domain` scaled so that the sampled
    /// `max{|ν|, |∇ν|², |Δν|}` over Ω equals one.
    pub fn normalized_for(domain: &DomainSpec) -> Result<Self> {
        let mut sampler = DomainSampler::new(domain.clone())?;
        let points = sampler.sample(NORMALIZATION_SAMPLES)?;
        Self::for_domain(domain).normalized(&points, domain.dim())
    }

    /// Rescales using the given sample points (row-major).
    pub fn normalized(self, points: &[f64], dim: usize) -> Result<Self> {
        let unit = Self {
            kind: self.kind,
            scale: 1.0,
        };
        let (mut a, mut b, mut c) = (0.0f64, 0.0f64, 0.0f64);
        for x in points.chunks(dim) {
            let nb = unit.bundle(x);
            a = a.max(nb.value.abs());
            b = b.max(nb.gradient.iter().map(|g| g * g).sum::<f64>());
            c = c.max(nb.laplacian.abs());
        }
        // max(sA, s²B, sC) = 1 for the smallest feasible s
        let mut s = f64::INFINITY;
        if a.max(c) > 0.0 {
            s = s.min(1.0 / a.max(c));
        }
        if b > 0.0 {
            s = s.min(1.0 / b.sqrt());
        }
        if !s.is_finite() {
            return Err(Error::InvalidArgument(
                "boundary factor vanishes on all sample points".into(),
            ));
        }
        Ok(unit.with_scale(s))
    }

    pub fn kind(&self) -> &BoundaryKind {
        &self.kind
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.bundle(x).value
    }

    /// Exact value, gradient and Laplacian of `scale · ν` at `x`.
    pub fn bundle(&self, x: &[f64]) -> EvalBundle {
        let d = x.len();
        let s = self.scale;
        match &self.kind {
            BoundaryKind::Box { lower, upper } => {
                let p: Vec<f64> = (0..d).map(|i| (x[i] - lower[i]) * (x[i] - upper[i])).collect();
                // prefix/suffix products give Π_{k≠i} p_k without dividing
                let mut prefix = vec![1.0; d + 1];
                for i in 0..d {
                    prefix[i + 1] = prefix[i] * p[i];
                }
                let mut suffix = vec![1.0; d + 1];
                for i in (0..d).rev() {
                    suffix[i] = suffix[i + 1] * p[i];
                }
                let mut gradient = vec![0.0; d];
                let mut laplacian = 0.0;
                for i in 0..d {
                    let others = prefix[i] * suffix[i + 1];
                    gradient[i] = s * (2.0 * x[i] - lower[i] - upper[i]) * others;
                    laplacian += 2.0 * others;
                }
                EvalBundle {
                    value: s * prefix[d],
                    gradient,
                    laplacian: s * laplacian,
                }
            }
            BoundaryKind::Ball { radius } => {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                EvalBundle {
                    value: s * (r2 - radius * radius),
                    gradient: x.iter().map(|v| 2.0 * s * v).collect(),
                    laplacian: s * 2.0 * d as f64,
                }
            }
            BoundaryKind::LevelSet { rho, level } => {
                let mut b = rho(x);
                b.value = s * (b.value - level);
                b.gradient.iter_mut().for_each(|g| *g *= s);
                b.laplacian *= s;
                b
            }
        }
    }
}

/// Free-function form of [`BoundaryFactor::bundle`].
pub fn boundary_bundle(bf: &BoundaryFactor, x: &[f64]) -> EvalBundle {
    bf.bundle(x)
}

/// Bundle of `ŵ = ν φ̂` from the bundles of the factors (product rule).
pub fn product_bundle(nu: &EvalBundle, phi: &EvalBundle) -> EvalBundle {
    let gradient = nu
        .gradient
        .iter()
        .zip(&phi.gradient)
        .map(|(gn, gp)| phi.value * gn + nu.value * gp)
        .collect();
    let cross: f64 = nu.gradient.iter().zip(&phi.gradient).map(|(a, b)| a * b).sum();
    EvalBundle {
        value: nu.value * phi.value,
        gradient,
        laplacian: phi.value * nu.laplacian + 2.0 * cross + nu.value * phi.laplacian,
    }
}
