//! Forward-mode value, gradient and Laplacian of a boundary-constrained network.

use dabg::network::{spatial_net_bundle, Activation, BoundaryFactor, MlpParams, MlpShape};
use dabg::sampler::DomainSpec;

fn main() -> dabg::Result<()> {
    let d = 3;
    let domain = DomainSpec::cube(d, -1.0, 1.0);
    let bf = BoundaryFactor::for_domain(&domain);
    let net = MlpParams::uniform(MlpShape::new(d, 16, 3, Activation::Sigmoid), 7, 1.0)?;
    let f = |x: &[f64]| bf.value(x) * net.value(x);

    let x = [0.3, -0.2, 0.5];
    let b = spatial_net_bundle(&net, &bf, &x);

    let h = 1e-4;
    let mut lap = 0.0;
    println!("{:>4} {:>14} {:>14}", "k", "analytic", "central diff");
    for k in 0..d {
        let mut xp = x;
        let mut xm = x;
        xp[k] += h;
        xm[k] -= h;
        let (fp, fm) = (f(&xp), f(&xm));
        println!("{k:>4} {:>14.8} {:>14.8}", b.gradient[k], (fp - fm) / (2.0 * h));
        lap += (fp - 2.0 * f(&x) + fm) / (h * h);
    }
    println!("value     {:.10}", b.value);
    println!("laplacian {:.8} (fd {:.8})", b.laplacian, lap);
    println!("on the boundary: {:.1e}", f(&[1.0, 0.2, -0.4]));
    Ok(())
}
