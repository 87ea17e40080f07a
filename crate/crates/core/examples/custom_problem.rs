//! Building a problem directly from the library pieces instead of a named case:
//! `u_t - Δu = f` on the unit disc with exact solution
//! `u = (1 - |x|²) t e^{-t}`.

use std::sync::Arc;

use dabg::loss::{LossSpec, SpatialOperator};
use dabg::network::{AdaptiveBasisSolution, Activation, BoundaryFactor, MlpParams, MlpShape};
use dabg::polybasis::{BasisOrder, TimeInterval};
use dabg::sampler::{DomainSampler, DomainSpec};
use dabg::train::{train, GalerkinObjective, Optimizer, Sampling, TrainConfig};

fn main() -> dabg::Result<()> {
    let domain = DomainSpec::UnitBall { dim: 2 };
    let iv = TimeInterval::new(1.0)?;
    let n = 6;
    let exact = |x: &[f64], t: f64| (1.0 - x[0] * x[0] - x[1] * x[1]) * t * (-t).exp();
    let forcing = Arc::new(|x: &[f64], t: f64| {
        let nu = 1.0 - x[0] * x[0] - x[1] * x[1];
        (1.0 - t) * (-t).exp() * nu + 4.0 * t * (-t).exp()
    });

    let bf = BoundaryFactor::for_domain(&domain);
    let spec = LossSpec::parabolic(n, iv, 1.0, SpatialOperator::neg_laplacian(), bf.clone(), domain.volume(), forcing)?;
    let mut objective = GalerkinObjective::new(spec, DomainSampler::new(domain.clone())?, 128, Sampling::Fresh);
    let init = (0..n)
        .map(|i| MlpParams::uniform(MlpShape::new(2, 16, 3, Activation::Sigmoid), i as u64, 1.0))
        .collect::<dabg::Result<Vec<_>>>()?;
    let config = TrainConfig {
        iterations: 1500,
        batch_size: 128,
        lr0: 1e-2,
        optimizer: Optimizer::adam(),
        checkpoint_every: 300,
        ..Default::default()
    };
    let trace = train(&mut objective, init, &config)?;
    for c in &trace.checkpoints {
        println!("iter {:>5}  loss {:.3e}", c.iteration, c.loss);
    }

    let sol = AdaptiveBasisSolution::new(trace.params, bf, BasisOrder::First, iv)?;
    for x in [[0.0, 0.0], [0.5, 0.3], [-0.2, 0.7]] {
        let t = 0.8;
        println!("u({x:?}, {t}) = {:.5} (exact {:.5})", sol.eval(&x, t)?, exact(&x, t));
    }
    Ok(())
}
