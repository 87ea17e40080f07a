//! Adaptive basis against the deep least-squares baseline on an oscillatory
//! Case 1 problem, with the same network width and iteration budget.

use dabg::experiment::{parse_config, run};
use dabg::problems::Method;

fn main() -> dabg::Result<()> {
    let w: f64 = std::env::args().nth(1).map(|s| s.parse().expect("w")).unwrap_or(4.0);
    let base = format!("case=1\nw={w}\nM=20\niters=1500\nbatch=128\noptimizer=adam\nlr=1e-2\ninit_bound=1");

    let mut dabg = parse_config(&base)?;
    dabg.n = 30;
    let mut dls = parse_config(&base)?;
    dls.method = Method::Dls;
    dls.depth = 3;

    for cfg in [dabg, dls] {
        let out = run(&cfg)?;
        println!(
            "{:<5} {}={:<3} error {:.3e}  ({:.1}s)",
            cfg.method,
            if cfg.method == Method::Dabg { "N" } else { "L" },
            cfg.n_or_l(),
            out.report.error,
            out.report.runtime_s
        );
    }
    Ok(())
}
