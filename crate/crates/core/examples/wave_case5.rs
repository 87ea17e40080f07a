//! Second-order-in-time Case 5 with variable coefficient and initial velocity.

use dabg::experiment::{parse_config, run};

fn main() -> dabg::Result<()> {
    let cfg = parse_config("case=5\ndim=3\nN=10\nM=20\niters=1500\nbatch=128\noptimizer=adam\nlr=1e-2\ninit_bound=1")?;
    let out = run(&cfg)?;
    println!(
        "case 5, d={}, N={}: error {:.3e}, final loss {:.3e}, {:.1}s",
        cfg.dim.unwrap_or(20),
        cfg.n,
        out.report.error,
        out.report.final_loss,
        out.report.runtime_s
    );
    Ok(())
}
