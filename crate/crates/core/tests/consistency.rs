//! Residual consistency: forcing manufactured from an arbitrary adaptive-basis
//! function must make every Galerkin residual vanish.

mod common;

use common::Manufactured;
use dabg::loss::SpatialOperator;
use dabg::polybasis::{BasisOrder, TemporalBasisId};
use dabg::problems::{manufactured_case, CaseSpec};
use dabg::sampler::DomainSpec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn parabolic_residuals_vanish() {
    for (domain, op) in [
        (DomainSpec::cube(2, -1.0, 1.0), SpatialOperator::neg_laplacian()),
        (DomainSpec::UnitBall { dim: 3 }, SpatialOperator::neg_div_a_grad()),
        (DomainSpec::cube(2, -1.0, 1.0), SpatialOperator::neg_laplacian().with_reaction(-1.0)),
    ] {
        for (n, t) in [(1, 1.0), (4, 1.0), (6, 2.5)] {
            let worst = Manufactured::new(domain.clone(), op.clone(), n, 3).max_residual(BasisOrder::First, t);
            assert!(worst < 1e-9, "N={n} T={t}: {worst:e}");
        }
    }
}

#[test]
fn hyperbolic_residuals_vanish() {
    for (domain, op) in [
        (DomainSpec::cube(2, -1.0, 1.0), SpatialOperator::neg_laplacian()),
        (DomainSpec::UnitBall { dim: 4 }, SpatialOperator::neg_div_a_grad()),
    ] {
        for (n, t) in [(1, 1.0), (3, 1.0), (5, 2.5)] {
            let worst = Manufactured::new(domain.clone(), op.clone(), n, 8).max_residual(BasisOrder::Second, t);
            assert!(worst < 1e-9, "N={n} T={t}: {worst:e}");
        }
    }
}

#[test]
fn allen_cahn_exact_solution_is_stationary() {
    // with u the exact solution, f − u³ must balance u_t − Δu − u pointwise
    let case = CaseSpec::new(4, 3.0, 1.0).unwrap().with_dim(5).unwrap();
    let sol = manufactured_case(&case).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let pts = case.domain().random_points(50, &mut rng);
    let h = 1e-4;
    let mut worst = 0.0f64;
    for x in pts.chunks(5) {
        for &t in &[0.1, 0.37, 0.8] {
            let u = |y: &[f64], s: f64| (sol.u)(y, s);
            let u0 = u(x, t);
            let ut = (u(x, t + h) - u(x, t - h)) / (2.0 * h);
            let mut lap = 0.0;
            for k in 0..5 {
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[k] += h;
                xm[k] -= h;
                lap += (u(&xp, t) - 2.0 * u0 + u(&xm, t)) / (h * h);
            }
            let lagged = case.lagged_source().unwrap();
            let rhs = (sol.f)(x, t) + lagged(u0);
            let lhs = ut - lap - u0;
            worst = worst.max((lhs - rhs).abs());
        }
    }
    assert!(worst < 1e-5, "{worst:e}");
}

#[test]
fn shared_basis_terms_agree_with_library() {
    for order in [BasisOrder::First, BasisOrder::Second] {
        for k in 1..30 {
            assert_eq!(TemporalBasisId::trial(order, k).legendre_terms(), common::basis_terms(order, false, k));
            assert_eq!(TemporalBasisId::test(order, k).legendre_terms(), common::basis_terms(order, true, k));
        }
    }
}
