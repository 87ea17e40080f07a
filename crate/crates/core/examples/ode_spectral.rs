//! Spectral Petrov-Galerkin solves of scalar ODEs in time.
//!
//! `u' + u = cos t + sin t` and `u'' + u = 0, u'(0) = 1`, both with exact
//! solution `sin t`.

use dabg::galerkin::{solve_first_order, solve_second_order, OdeSolution};
use dabg::polybasis::TimeInterval;

fn max_error(sol: &OdeSolution) -> f64 {
    (0..=500)
        .map(|i| {
            let t = i as f64 / 500.0;
            (sol.eval(t).unwrap() - t.sin()).abs()
        })
        .fold(0.0, f64::max)
}

fn main() -> dabg::Result<()> {
    let iv = TimeInterval::new(1.0)?;
    println!("{:>4} {:>14} {:>14}", "N", "first order", "second order");
    for n in (2..=20).step_by(2) {
        let first = solve_first_order(n, 1.0, |t: f64| t.cos() + t.sin(), iv)?;
        let second = solve_second_order(n, 1.0, |_| 0.0, 1.0, iv)?;
        println!("{n:>4} {:>14.3e} {:>14.3e}", max_error(&first), max_error(&second));
    }
    Ok(())
}
