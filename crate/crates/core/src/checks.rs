//! Quick self-checks run by `dabg validate`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::galerkin::{assemble_by_quadrature, assemble_first_order, assemble_second_order, solve_first_order, solve_second_order};
use crate::network::{mlp_bundles, Activation, MlpParams, MlpShape};
use crate::polybasis::{BasisOrder, TimeInterval};
use crate::problems::{manufactured_case, CaseSpec};
use crate::sampler::DomainSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, worst: f64, tol: f64) -> CheckResult {
    CheckResult {
        name,
        passed: worst.is_finite() && worst <= tol,
        detail: format!("worst {worst:.3e} (tol {tol:.0e})"),
    }
}

/// Largest relative entry mismatch between closed-form and quadrature matrices.
pub fn matrix_oracle_mismatch(ns: &[usize], ts: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for &t in ts {
        let iv = TimeInterval::new(t).expect("positive T");
        for &n in ns {
            for order in [BasisOrder::First, BasisOrder::Second] {
                let (a, b) = match order {
                    BasisOrder::First => assemble_first_order(n, iv),
                    BasisOrder::Second => assemble_second_order(n, iv),
                };
                let (qa, qb) = assemble_by_quadrature(order, n, iv);
                for (m, q) in [(&a, &qa), (&b, &qb)] {
                    let (dm, dq) = (m.to_dense(), q.to_dense());
                    let scale = dq.amax().max(1e-300);
                    worst = worst.max((dm - dq).amax() / scale);
                }
            }
        }
    }
    worst
}

fn ode_error(order: BasisOrder, n: usize) -> f64 {
    let iv = TimeInterval::new(1.0).expect("T = 1");
    let sol = match order {
        BasisOrder::First => solve_first_order(n, 1.0, |t: f64| t.cos() + t.sin(), iv),
        BasisOrder::Second => solve_second_order(n, 1.0, |_| 0.0, 1.0, iv),
    };
    let Ok(sol) = sol else { return f64::INFINITY };
    let (mut num, mut den) = (0.0, 0.0);
    for k in 1..=200 {
        let t = k as f64 / 200.0;
        let e = sol.eval(t).unwrap_or(f64::NAN) - t.sin();
        num += e * e;
        den += t.sin() * t.sin();
    }
    (num / den).sqrt()
}

/// Relative error of gradient and Laplacian against central differences.
pub fn network_fd_mismatch(dims: &[usize], seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for &d in dims {
        let shape = MlpShape::new(d, 8, 3, Activation::Sigmoid);
        let net = MlpParams::uniform(shape, rng.gen(), 1.0).expect("valid shape");
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b = &mlp_bundles(&net, &x)[0];
        let h = 1e-4;
        let mut lap = 0.0;
        for k in 0..d {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            let (fp, fm) = (net.value(&xp), net.value(&xm));
            let g = (fp - fm) / (2.0 * h);
            worst = worst.max((g - b.gradient[k]).abs() / b.gradient[k].abs().max(1.0));
            lap += (fp - 2.0 * b.value + fm) / (h * h);
        }
        worst = worst.max((lap - b.laplacian).abs() / b.laplacian.abs().max(1.0));
    }
    worst
}

/// Relative PDE residual of each manufactured forcing, by central differences.
pub fn forcing_fd_mismatch(dim_ball: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for id in 1..=5u32 {
        let mut case = CaseSpec::new(id, 2.0, 1.0).expect("known case");
        if id >= 3 {
            case = case.with_dim(dim_ball).expect("ball dim");
        }
        let sol = manufactured_case(&case).expect("known case");
        let domain: DomainSpec = case.domain();
        let d = case.dim;
        let h = 1e-4;
        for _ in 0..5 {
            let x = &domain.random_points(1, &mut rng);
            let t = rng.gen_range(0.1..0.9);
            let u = |x: &[f64], t: f64| (sol.u)(x, t);
            let u0 = u(x, t);
            let time = match case.order() {
                BasisOrder::First => (u(x, t + h) - u(x, t - h)) / (2.0 * h),
                BasisOrder::Second => (u(x, t + h) - 2.0 * u0 + u(x, t - h)) / (h * h),
            };
            let r2: f64 = x.iter().map(|v| v * v).sum();
            let a = if matches!(id, 3 | 5) { 1.0 + 0.5 * r2 } else { 1.0 };
            let mut div = 0.0;
            for k in 0..d {
                // ∂_k (a ∂_k u) with a staggered stencil
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[k] += h;
                xm[k] -= h;
                let a_at = |y: &[f64]| {
                    if a == 1.0 {
                        1.0
                    } else {
                        1.0 + 0.5 * y.iter().map(|v| v * v).sum::<f64>()
                    }
                };
                let mut hp = x.to_vec();
                let mut hm = x.to_vec();
                hp[k] += 0.5 * h;
                hm[k] -= 0.5 * h;
                div += (a_at(&hp) * (u(&xp, t) - u0) - a_at(&hm) * (u0 - u(&xm, t))) / (h * h);
            }
            let mut lhs = time - div;
            if id == 4 {
                lhs += u0.powi(3) - u0;
            }
            let f = (sol.f)(x, t);
            worst = worst.max((lhs - f).abs() / f.abs().max(1.0));
        }
    }
    worst
}

/// Runs all self-checks.
pub fn run_all() -> Vec<CheckResult> {
    vec![
        check("matrix closed form vs quadrature", matrix_oracle_mismatch(&[1, 5, 30], &[1.0, 2.5]), 1e-12),
        check("first-order 1-D solve, N=24", ode_error(BasisOrder::First, 24), 1e-10),
        check("second-order 1-D solve, N=24", ode_error(BasisOrder::Second, 24), 1e-10),
        check("network derivatives vs finite differences", network_fd_mismatch(&[1, 2, 5, 20], 7), 1e-5),
        check("manufactured forcing vs finite differences", forcing_fd_mismatch(20, 11), 1e-4),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        for r in run_all() {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
    }
}
