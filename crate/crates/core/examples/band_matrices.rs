//! Closed-form Galerkin matrices in time against a quadrature oracle.
//!
//! Run with `cargo run --example band_matrices -- 8 2.5`.

use dabg::galerkin::{assemble_by_quadrature, assemble_first_order, assemble_second_order, BandMatrix};
use dabg::polybasis::{BasisOrder, TimeInterval};

fn show(name: &str, m: &BandMatrix) {
    println!("{name} ({} nonzeros)", m.nnz());
    for j in 1..=m.dim() {
        let row: String = (1..=m.dim())
            .map(|k| {
                let v = m.get(j, k);
                if v == 0.0 {
                    format!("{:>8}", ".")
                } else {
                    format!("{v:>8.3}")
                }
            })
            .collect();
        println!("  {row}");
    }
}

fn max_diff(a: &BandMatrix, b: &BandMatrix) -> f64 {
    (a.to_dense() - b.to_dense()).amax()
}

fn main() -> dabg::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map(|s| s.parse().expect("N")).unwrap_or(6);
    let t: f64 = args.next().map(|s| s.parse().expect("T")).unwrap_or(1.0);
    let iv = TimeInterval::new(t)?;

    let (a1, b1) = assemble_first_order(n, iv);
    let (a2, b2) = assemble_second_order(n, iv);
    show("A1", &a1);
    show("B1", &b1);
    show("A2", &a2);
    show("B2", &b2);

    let (qa1, qb1) = assemble_by_quadrature(BasisOrder::First, n, iv);
    let (qa2, qb2) = assemble_by_quadrature(BasisOrder::Second, n, iv);
    println!("\nmax |closed form - quadrature|");
    println!("  first order:  A {:.1e}  B {:.1e}", max_diff(&a1, &qa1), max_diff(&b1, &qb1));
    println!("  second order: A {:.1e}  B {:.1e}", max_diff(&a2, &qa2), max_diff(&b2, &qb2));
    Ok(())
}
