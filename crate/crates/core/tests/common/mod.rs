//! Independent oracles shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use std::sync::Arc;

use dabg::galerkin::OdeSolution;
use dabg::loss::{LossSpec, SpaceTimeFn, SpatialFn, SpatialOperator};
use dabg::network::{spatial_net_bundle, Activation, BoundaryFactor, MlpParams, MlpShape};
use dabg::polybasis::{project_time_with, reconstruct, BasisOrder, QuadratureRule, TimeInterval};
use dabg::sampler::DomainSpec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// `(L_m, L_m', L_m'')` at `z` for `m = 0..=n`, from the three-term recurrence.
pub fn legendre3(n: usize, z: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut p = vec![0.0; n + 2];
    let mut dp = vec![0.0; n + 2];
    let mut ddp = vec![0.0; n + 2];
    p[0] = 1.0;
    p[1] = z;
    dp[1] = 1.0;
    for m in 1..=n {
        let mf = m as f64;
        p[m + 1] = ((2.0 * mf + 1.0) * z * p[m] - mf * p[m - 1]) / (mf + 1.0);
        dp[m + 1] = (2.0 * mf + 1.0) * (p[m] + z * dp[m]) / (mf + 1.0) - mf * dp[m - 1] / (mf + 1.0);
        ddp[m + 1] =
            (2.0 * mf + 1.0) * (2.0 * dp[m] + z * ddp[m]) / (mf + 1.0) - mf * ddp[m - 1] / (mf + 1.0);
    }
    (p, dp, ddp)
}

/// Legendre coefficients of the trial (`test = false`) or test functions,
/// written out from their definitions.
pub fn basis_terms(order: BasisOrder, test: bool, k: usize) -> Vec<(usize, f64)> {
    match (order, test) {
        (BasisOrder::First, false) => vec![(k, 1.0), (k - 1, 1.0)],
        (BasisOrder::First, true) if k == 1 => vec![(0, 1.0)],
        (BasisOrder::First, true) => vec![(k - 1, 1.0), (k - 2, -1.0)],
        (BasisOrder::Second, _) => {
            let s = if test { -1.0 } else { 1.0 };
            if k == 1 {
                vec![(1, 1.0), (0, s)]
            } else {
                let kf = k as f64;
                vec![(k, 1.0 - 1.0 / kf), (k - 1, s * (2.0 - 1.0 / kf)), (k - 2, 1.0)]
            }
        }
    }
}

/// Basis functions `1..=n` with their first and second time derivatives.
pub fn basis3(order: BasisOrder, test: bool, n: usize, t: f64, t_final: f64) -> Vec<[f64; 3]> {
    let z = 2.0 * t / t_final - 1.0;
    let (p, dp, ddp) = legendre3(n, z);
    let s = 2.0 / t_final;
    (1..=n)
        .map(|k| {
            let mut out = [0.0; 3];
            for (m, c) in basis_terms(order, test, k) {
                out[0] += c * p[m];
                out[1] += c * s * dp[m];
                out[2] += c * s * s * ddp[m];
            }
            out
        })
        .collect()
}

pub fn trial3(order: BasisOrder, n: usize, t: f64, t_final: f64) -> Vec<[f64; 3]> {
    basis3(order, false, n, t, t_final)
}

/// Gauss-Legendre nodes and weights on `[0, T]` by Newton iteration.
pub fn gauss_legendre(points: usize, t_final: f64) -> Vec<(f64, f64)> {
    let n = points;
    (0..n)
        .map(|i| {
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d, _) = legendre3(n, z);
                dp = d[n];
                let step = p[n] / dp;
                z -= step;
                if step.abs() < 1e-16 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            (0.5 * t_final * (z + 1.0), 0.5 * t_final * w)
        })
        .collect()
}

pub fn ode_rel_l2(sol: &OdeSolution, exact: impl Fn(f64) -> f64) -> f64 {
    let rule = QuadratureRule::gauss_legendre(200, sol.interval);
    let (mut num, mut den) = (0.0, 0.0);
    for (&t, &w) in rule.nodes.iter().zip(&rule.weights) {
        let e = sol.eval(t).unwrap() - exact(t);
        num += w * e * e;
        den += w * exact(t) * exact(t);
    }
    (num / den).sqrt()
}

/// True when every error either halves from its predecessor or the
/// predecessor was already below `floor`.
pub fn is_geometric(errors: &[(usize, f64)], floor: f64) -> bool {
    errors.windows(2).all(|w| w[0].1 <= floor || w[1].1 < 0.5 * w[0].1)
}

pub fn projection_error(g: &dyn Fn(f64) -> f64, n: usize, iv: TimeInterval) -> f64 {
    let fine = QuadratureRule::gauss_legendre(1500, iv);
    let coeffs = project_time_with(g, n, &fine);
    let check = QuadratureRule::gauss_legendre(2001, iv);
    let (mut num, mut den) = (0.0, 0.0);
    for (&t, &w) in check.nodes.iter().zip(&check.weights) {
        let e = reconstruct(&coeffs, t, iv).unwrap() - g(t);
        num += w * e * e;
        den += w * g(t) * g(t);
    }
    (num / den).sqrt()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(pts: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = pts.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let k = pts.len() as f64;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0 / k, a.1 + p.1 / k));
    pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Gradient and Laplacian of `f` at `x` by central differences.
pub fn fd_grad_lap(f: &dyn Fn(&[f64]) -> f64, x: &[f64]) -> (Vec<f64>, f64) {
    let h = 1e-4;
    let f0 = f(x);
    let mut g = Vec::with_capacity(x.len());
    let mut lap = 0.0;
    for k in 0..x.len() {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[k] += h;
        xm[k] -= h;
        let (fp, fm) = (f(&xp), f(&xm));
        g.push((fp - fm) / (2.0 * h));
        lap += (fp - 2.0 * f0 + fm) / (h * h);
    }
    (g, lap)
}

/// Worst relative mismatch between analytic and finite-difference gradient
/// and Laplacian; the Laplacian part is divided by `d` since second
/// differences lose about half the digits.
pub fn bundle_mismatch(net: &MlpParams, output: usize, x: &[f64], analytic: &dabg::network::EvalBundle) -> f64 {
    let outputs = net.shape().outputs;
    let f = |y: &[f64]| {
        let mut out = vec![0.0; outputs];
        net.forward_values(y, &mut out);
        out[output]
    };
    let (g, lap) = fd_grad_lap(&f, x);
    let d = x.len() as f64;
    let grad = g.iter().zip(&analytic.gradient).map(|(a, b)| rel(*a, *b)).fold(0.0, f64::max);
    grad.max(rel(lap, analytic.laplacian) / d)
}

/// Worst relative mismatch between `loss_and_grad` and central differences of
/// `loss`, parameter by parameter.
pub fn loss_gradient_mismatch(spec: &LossSpec, nets: &[MlpParams], batch: &[f64]) -> f64 {
    let mut ws = spec.workspace(nets);
    let mut grads: Vec<Vec<f64>> = nets.iter().map(|n| vec![0.0; n.num_params()]).collect();
    let l0 = spec.loss_and_grad(nets, batch, &mut ws, &mut grads).unwrap();
    let mut worst = (l0 - spec.loss(nets, batch).unwrap()).abs() / l0.abs().max(1.0);
    let h = 1e-6;
    for i in 0..nets.len() {
        for p in 0..nets[i].num_params() {
            let mut plus = nets.to_vec();
            plus[i].as_mut_slice()[p] += h;
            let mut minus = nets.to_vec();
            minus[i].as_mut_slice()[p] -= h;
            let fd = (spec.loss(&plus, batch).unwrap() - spec.loss(&minus, batch).unwrap()) / (2.0 * h);
            let scale = fd.abs().max(grads[i][p].abs()).max(1e-3 * l0.abs()).max(1e-8);
            worst = worst.max((fd - grads[i][p]).abs() / scale);
        }
    }
    worst
}

pub fn random_nets(d: usize, width: usize, n: usize, seed: u64) -> Vec<MlpParams> {
    (0..n)
        .map(|i| MlpParams::uniform(MlpShape::new(d, width, 3, Activation::Sigmoid), seed + i as u64, 1.0).unwrap())
        .collect()
}

pub fn batch(domain: &DomainSpec, count: usize, seed: u64) -> Vec<f64> {
    domain.random_points(count, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Random networks together with a forcing manufactured so that their
/// adaptive-basis combination solves the problem exactly.
pub struct Manufactured {
    pub nets: Vec<MlpParams>,
    pub boundary: BoundaryFactor,
    pub operator: SpatialOperator,
    pub domain: DomainSpec,
}

impl Manufactured {
    pub fn new(domain: DomainSpec, operator: SpatialOperator, n: usize, seed: u64) -> Arc<Self> {
        let nets = random_nets(domain.dim(), 6, n, seed);
        let boundary = BoundaryFactor::for_domain(&domain);
        Arc::new(Self {
            nets,
            boundary,
            operator,
            domain,
        })
    }

    /// `(ŵ_n, L ŵ_n)` at `x`.
    fn spatial(&self, x: &[f64]) -> Vec<(f64, f64)> {
        self.nets
            .iter()
            .map(|net| {
                let b = spatial_net_bundle(net, &self.boundary, x);
                (b.value, self.operator.apply(&b, x))
            })
            .collect()
    }

    fn forcing(self: &Arc<Self>, order: BasisOrder, t_final: f64) -> SpaceTimeFn {
        let me = Arc::clone(self);
        let n = self.nets.len();
        let time_index = match order {
            BasisOrder::First => 1,
            BasisOrder::Second => 2,
        };
        Arc::new(move |x: &[f64], t: f64| {
            let phi = trial3(order, n, t, t_final);
            me.spatial(x)
                .iter()
                .zip(&phi)
                .map(|(&(v, lv), p)| v * p[time_index] + lv * p[0])
                .sum()
        })
    }

    fn initial_velocity(self: &Arc<Self>, t_final: f64) -> SpatialFn {
        let me = Arc::clone(self);
        let n = self.nets.len();
        Arc::new(move |x: &[f64]| {
            let phi = trial3(BasisOrder::Second, n, 0.0, t_final);
            me.spatial(x).iter().zip(&phi).map(|(&(v, _), p)| v * p[1]).sum()
        })
    }

    /// Largest Galerkin residual over 100 random points.
    pub fn max_residual(self: &Arc<Self>, order: BasisOrder, t_final: f64) -> f64 {
        let n = self.nets.len();
        let iv = TimeInterval::new(t_final).unwrap();
        let f = self.forcing(order, t_final);
        let (op, bf, vol) = (self.operator.clone(), self.boundary.clone(), self.domain.volume());
        let spec = match order {
            BasisOrder::First => LossSpec::parabolic(n, iv, 1.0, op, bf, vol, f),
            BasisOrder::Second => {
                LossSpec::hyperbolic(n, iv, 1.0, op, bf, vol, f, Some(self.initial_velocity(t_final)))
            }
        }
        .unwrap();
        let d = self.domain.dim();
        let mut worst = 0.0f64;
        for x in batch(&self.domain, 100, 99).chunks(d) {
            for r in spec.residuals(&self.nets, x).unwrap() {
                worst = worst.max(r.abs());
            }
        }
        worst
    }
}
