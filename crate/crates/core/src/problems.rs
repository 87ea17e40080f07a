//! Manufactured benchmark cases and the relative ℓ² error.
//!
//! | case | equation | domain | solution |
//! |------|----------|--------|----------|
//! | 1 | `u_t − Δu = f` | `[−1,1]²` | `exp(sin(2πwt) ν) − 1`, `ν = (x₁²−1)(x₂²−1)` |
//! | 2 | `u_t − Δu = f` | `[−1,1]²` | `exp(sin(2πwt ν)) − 1` |
//! | 3 | `u_t − ∇·(a∇u) = f` | unit ball | `sin(sin(2πwt)(|x|²−1))` |
//! | 4 | `u_t − Δu + u³ − u = f` | unit ball | `sin(sin(2πwt)(|x|²−1))` |
//! | 5 | `u_tt − ∇·(a∇u) = f` | unit ball | `sin(t sin(2πwt)(|x|²−1))` |
//!
//! with `a(x) = 1 + |x|²/2` and ball dimension 20 by default.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::loss::{DlsSolution, LaggedFn, Nonlinearity, SpaceTimeFn, SpatialFn, SpatialOperator};
use crate::network::AdaptiveBasisSolution;
use crate::polybasis::{basis_family_at, BasisKind, BasisOrder, TimeInterval};
use crate::sampler::DomainSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NonlinearTerm {
    None,
    AllenCahn,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseSpec {
    pub id: u32,
    pub w: f64,
    pub t_final: f64,
    pub dim: usize,
}

impl CaseSpec {
    /// Case `id` with its benchmark dimension.
    pub fn new(id: u32, w: f64, t_final: f64) -> Result<Self> {
        let dim = match id {
            1 | 2 => 2,
            3..=5 => 20,
            other => return Err(Error::UnknownCase(other)),
        };
        let spec = Self {
            id,
            w,
            t_final,
            dim,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Changes the ball dimension of Cases 3–5 (Cases 1–2 are planar).
    pub fn with_dim(mut self, dim: usize) -> Result<Self> {
        if self.id <= 2 && dim != 2 {
            return Err(Error::InvalidArgument(format!(
                "case {} is defined on the square; dimension must be 2",
                self.id
            )));
        }
        self.dim = dim;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=5).contains(&self.id) {
            return Err(Error::UnknownCase(self.id));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(Error::InvalidArgument(format!("T must be positive, got {}", self.t_final)));
        }
        if !self.w.is_finite() {
            return Err(Error::InvalidArgument("w must be finite".into()));
        }
        if self.dim == 0 {
            return Err(Error::InvalidArgument("dimension must be >= 1".into()));
        }
        Ok(())
    }

    pub fn interval(&self) -> TimeInterval {
        TimeInterval::new(self.t_final).expect("validated")
    }

    pub fn domain(&self) -> DomainSpec {
        match self.id {
            1 | 2 => DomainSpec::cube(2, -1.0, 1.0),
            _ => DomainSpec::UnitBall { dim: self.dim },
        }
    }

    /// Linear part of the spatial operator as used by the Galerkin solver
    /// (for Allen–Cahn the `−u` term is included: `−Δ − Id`).
    pub fn operator(&self) -> SpatialOperator {
        match self.id {
            1 | 2 => SpatialOperator::neg_laplacian(),
            3 | 5 => SpatialOperator::neg_div_a_grad(),
            _ => SpatialOperator::neg_laplacian().with_reaction(-1.0),
        }
    }

    pub fn order(&self) -> BasisOrder {
        if self.id == 5 {
            BasisOrder::Second
        } else {
            BasisOrder::First
        }
    }

    pub fn is_hyperbolic(&self) -> bool {
        self.order() == BasisOrder::Second
    }

    pub fn nonlinearity(&self) -> NonlinearTerm {
        if self.id == 4 {
            NonlinearTerm::AllenCahn
        } else {
            NonlinearTerm::None
        }
    }

    /// `g(u)` on the left-hand side (`u³` for Allen–Cahn), for the DLS residual.
    pub fn pointwise_term(&self) -> Option<Nonlinearity> {
        match self.nonlinearity() {
            NonlinearTerm::None => None,
            NonlinearTerm::AllenCahn => Some(Arc::new(|u: f64| (u * u * u, 3.0 * u * u))),
        }
    }

    /// Lagged right-hand-side correction `−u³` for the fixed-point scheme.
    pub fn lagged_source(&self) -> Option<LaggedFn> {
        match self.nonlinearity() {
            NonlinearTerm::None => None,
            NonlinearTerm::AllenCahn => Some(Arc::new(|u: f64| -u * u * u)),
        }
    }
}

/// Exact solution with its forcing and initial velocity.
#[derive(Clone)]
pub struct ManufacturedSolution {
    pub u: SpaceTimeFn,
    pub f: SpaceTimeFn,
    /// `∂_t u(x, 0)`; hyperbolic cases only.
    pub g0: Option<SpatialFn>,
}

impl std::fmt::Debug for ManufacturedSolution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ManufacturedSolution")
            .field("hyperbolic", &self.g0.is_some())
            .finish_non_exhaustive()
    }
}

/// `(ν, ∇ν, Δν)` for `ν = (x₁² − 1)(x₂² − 1)`.
fn square_factor(x: &[f64]) -> (f64, [f64; 2], f64) {
    let (p, q) = (x[0] * x[0] - 1.0, x[1] * x[1] - 1.0);
    (p * q, [2.0 * x[0] * q, 2.0 * x[1] * p], 2.0 * (p + q))
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub fn manufactured_case(spec: &CaseSpec) -> Result<ManufacturedSolution> {
    spec.validate()?;
    let k = 2.0 * PI * spec.w;
    let d = spec.dim as f64;
    let sol = match spec.id {
        1 => ManufacturedSolution {
            u: Arc::new(move |x: &[f64], t| {
                let (nu, _, _) = square_factor(x);
                ((k * t).sin() * nu).exp() - 1.0
            }),
            f: Arc::new(move |x: &[f64], t| {
                let (nu, g, lap) = square_factor(x);
                let (s, c) = (k * t).sin_cos();
                let e = (s * nu).exp();
                e * (k * c * nu - s * s * (g[0] * g[0] + g[1] * g[1]) - s * lap)
            }),
            g0: None,
        },
        2 => ManufacturedSolution {
            u: Arc::new(move |x: &[f64], t| {
                let (nu, _, _) = square_factor(x);
                (k * t * nu).sin().exp() - 1.0
            }),
            f: Arc::new(move |x: &[f64], t| {
                let (nu, g, lap) = square_factor(x);
                let theta = k * t * nu;
                let (s, c) = theta.sin_cos();
                let e = s.exp();
                let grad2 = (k * t).powi(2) * (g[0] * g[0] + g[1] * g[1]);
                let u_t = e * c * k * nu;
                let lap_u = e * ((c * c - s) * grad2 + c * k * t * lap);
                u_t - lap_u
            }),
            g0: None,
        },
        3 | 4 => {
            let allen_cahn = spec.id == 4;
            ManufacturedSolution {
                u: Arc::new(move |x: &[f64], t| ((k * t).sin() * (norm2(x) - 1.0)).sin()),
                f: Arc::new(move |x: &[f64], t| {
                    let r2 = norm2(x);
                    let (s, c) = (k * t).sin_cos();
                    let (sin_th, cos_th) = (s * (r2 - 1.0)).sin_cos();
                    let u_t = cos_th * k * c * (r2 - 1.0);
                    let lap_u = -sin_th * s * s * 4.0 * r2 + cos_th * s * 2.0 * d;
                    if allen_cahn {
                        u_t - lap_u + sin_th.powi(3) - sin_th
                    } else {
                        let a = 1.0 + 0.5 * r2;
                        let drift = 2.0 * r2 * s * cos_th;
                        u_t - (drift + a * lap_u)
                    }
                }),
                g0: None,
            }
        }
        5 => ManufacturedSolution {
            u: Arc::new(move |x: &[f64], t| (t * (k * t).sin() * (norm2(x) - 1.0)).sin()),
            f: Arc::new(move |x: &[f64], t| {
                let r2 = norm2(x);
                let nu = r2 - 1.0;
                let (s, c) = (k * t).sin_cos();
                let g = t * s;
                let g1 = s + k * t * c;
                let g2 = 2.0 * k * c - k * k * t * s;
                let (sin_th, cos_th) = (g * nu).sin_cos();
                let u_tt = -sin_th * (g1 * nu).powi(2) + cos_th * g2 * nu;
                let lap_u = -sin_th * g * g * 4.0 * r2 + cos_th * g * 2.0 * d;
                let a = 1.0 + 0.5 * r2;
                let drift = 2.0 * r2 * g * cos_th;
                u_tt - (drift + a * lap_u)
            }),
            // ∂_t u(x, 0) = g'(0) ν = 0
            g0: Some(Arc::new(|_: &[f64]| 0.0)),
        },
        other => return Err(Error::UnknownCase(other)),
    };
    Ok(sol)
}

/// Anything that can be evaluated on a space-time grid.
pub trait SpaceTimeField {
    /// Values at `x` for each time in `ts`.
    fn values_at(&self, x: &[f64], ts: &[f64]) -> Result<Vec<f64>>;
}

impl SpaceTimeField for AdaptiveBasisSolution {
    fn values_at(&self, x: &[f64], ts: &[f64]) -> Result<Vec<f64>> {
        self.eval_times(x, ts)
    }
}

impl SpaceTimeField for DlsSolution {
    fn values_at(&self, x: &[f64], ts: &[f64]) -> Result<Vec<f64>> {
        Ok(ts.iter().map(|&t| self.eval(x, t)).collect())
    }
}

/// Adapter for plain closures.
pub struct FnField<F>(pub F);

impl<F: Fn(&[f64], f64) -> f64> SpaceTimeField for FnField<F> {
    fn values_at(&self, x: &[f64], ts: &[f64]) -> Result<Vec<f64>> {
        Ok(ts.iter().map(|&t| (self.0)(x, t)).collect())
    }
}

/// Faster grid evaluation for the adaptive basis: one temporal table for all
/// points.
pub struct BasisGrid<'a> {
    sol: &'a AdaptiveBasisSolution,
    table: Vec<Vec<f64>>,
}

impl<'a> BasisGrid<'a> {
    pub fn new(sol: &'a AdaptiveBasisSolution, ts: &[f64]) -> Result<Self> {
        let n = sol.modes();
        let table = ts
            .iter()
            .map(|&t| basis_family_at(sol.order, BasisKind::Trial, n, t, sol.interval).map(|p| p.0))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { sol, table })
    }
}

impl SpaceTimeField for BasisGrid<'_> {
    fn values_at(&self, x: &[f64], ts: &[f64]) -> Result<Vec<f64>> {
        if ts.len() != self.table.len() {
            return Err(Error::InvalidArgument("time grid differs from the precomputed one".into()));
        }
        let w = self.sol.spatial_values(x);
        Ok(self
            .table
            .iter()
            .map(|phi| phi.iter().zip(&w).map(|(a, b)| a * b).sum())
            .collect())
    }
}

/// `sqrt(Σ |û − u|² / Σ |u|²)` over the product grid `X × T`.
pub fn relative_l2_error(
    approx: &dyn SpaceTimeField,
    truth: &dyn Fn(&[f64], f64) -> f64,
    xs: &[f64],
    dim: usize,
    ts: &[f64],
) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for x in xs.chunks(dim) {
        let vals = approx.values_at(x, ts)?;
        for (&t, v) in ts.iter().zip(vals) {
            let u = truth(x, t);
            num += (v - u) * (v - u);
            den += u * u;
        }
    }
    if den == 0.0 {
        return Err(Error::InvalidArgument("true solution vanishes on the test grid".into()));
    }
    if !num.is_finite() {
        return Err(Error::NonFinite {
            what: "approximation on test grid",
            location: vec![],
        });
    }
    Ok((num / den).sqrt())
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Dabg,
    Dls,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dabg" => Ok(Method::Dabg),
            "dls" => Ok(Method::Dls),
            other => Err(Error::InvalidArgument(format!("unknown method '{other}'"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Dabg => "dabg",
            Method::Dls => "dls",
        })
    }
}

/// One row of a results table.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ErrorReport {
    pub case: u32,
    pub method: Method,
    /// `N` for DABG, depth `L` for DLS.
    #[serde(rename = "N_or_L")]
    pub n_or_l: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub error: f64,
    pub seed: u64,
    pub runtime_s: f64,
    #[serde(rename = "T")]
    pub t_final: f64,
    pub w: f64,
    pub final_loss: f64,
    /// Effective configuration, `key=value` pairs separated by `;`.
    pub config: String,
}
