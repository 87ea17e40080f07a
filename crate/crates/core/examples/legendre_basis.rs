//! Temporal trial/test functions and Legendre projection in time.
//!
//! Run with `cargo run --example legendre_basis`.

use dabg::polybasis::{
    basis_family_at, project_time, reconstruct, BasisKind, BasisOrder, TimeInterval,
};

fn main() -> dabg::Result<()> {
    let iv = TimeInterval::new(2.0)?;
    let n = 5;

    println!("first-order trial functions on [0, 2]");
    println!("{:>6} {}", "t", (1..=n).map(|k| format!("{:>10}", format!("phi_{k}"))).collect::<String>());
    for i in 0..=8 {
        let t = 2.0 * i as f64 / 8.0;
        let (v, _) = basis_family_at(BasisOrder::First, BasisKind::Trial, n, t, iv)?;
        println!("{t:>6.2} {}", v.iter().map(|x| format!("{x:>10.4}")).collect::<String>());
    }

    let (v, dv) = basis_family_at(BasisOrder::Second, BasisKind::Trial, n, 0.0, iv)?;
    println!("\nsecond-order trial functions at t = 0: values {v:?}");
    println!("  derivatives {dv:.3?}");

    println!("\nprojection of exp(sin t) onto Legendre polynomials");
    let g = |t: f64| t.sin().exp();
    for deg in [2, 4, 8, 12, 16] {
        let coeffs = project_time(g, deg, iv);
        let worst = (0..=200)
            .map(|i| {
                let t = 2.0 * i as f64 / 200.0;
                (reconstruct(&coeffs, t, iv).unwrap() - g(t)).abs()
            })
            .fold(0.0, f64::max);
        println!("  degree {deg:>2}: max error {worst:.2e}");
    }
    Ok(())
}
