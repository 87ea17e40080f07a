//! Halton points in a box and a 20-dimensional ball; Monte Carlo volume check.

use dabg::sampler::{unit_ball_volume, DomainSampler, DomainSpec, HaltonState};

fn main() -> dabg::Result<()> {
    let mut h = HaltonState::new(2);
    println!("first Halton points in bases {:?}", h.bases());
    for p in h.take(6).chunks(2) {
        println!("  ({:.4}, {:.4})", p[0], p[1]);
    }

    // fraction of cube points inside the unit disc estimates pi/4
    let inside = HaltonState::new(2)
        .take(10_000)
        .chunks(2)
        .filter(|p| (2.0 * p[0] - 1.0).powi(2) + (2.0 * p[1] - 1.0).powi(2) <= 1.0)
        .count();
    println!("pi estimate from 10^4 points: {:.5}", 4.0 * inside as f64 / 10_000.0);

    let ball = DomainSpec::UnitBall { dim: 20 };
    let mut s = DomainSampler::new(ball.clone())?;
    let pts = s.sample(5000)?;
    let mean_r: f64 = pts
        .chunks(20)
        .map(|x| x.iter().map(|v| v * v).sum::<f64>().sqrt())
        .sum::<f64>()
        / 5000.0;
    println!("d=20 ball: volume {:.3e}, mean radius {mean_r:.4} (uniform: {:.4})", unit_ball_volume(20), 20.0 / 21.0);
    println!("all points inside: {}", pts.chunks(20).all(|x| ball.contains(x)));
    Ok(())
}
