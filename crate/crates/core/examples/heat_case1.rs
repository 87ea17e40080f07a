//! Parabolic benchmark Case 1 on the square, trained with the adaptive basis.
//!
//! Pass `key=value` overrides, e.g.
//! `cargo run --release --example heat_case1 -- N=8 iters=3000 w=2`.

use dabg::experiment::{apply_config_text, run, temporal_profile, RunConfig};
use dabg::problems::manufactured_case;

fn main() -> dabg::Result<()> {
    env_logger::init();
    let mut cfg = RunConfig::default();
    apply_config_text(
        &mut cfg,
        "case=1\nN=8\nM=20\niters=2000\nbatch=128\noptimizer=adam\nlr=1e-2\ninit_bound=1\ncheckpoint_every=250",
    )?;
    apply_config_text(&mut cfg, &std::env::args().skip(1).collect::<Vec<_>>().join("\n"))?;

    let out = run(&cfg)?;
    println!("{:>8} {:>12}", "iter", "mean loss");
    for c in &out.trace.checkpoints {
        println!("{:>8} {:>12.4e}", c.iteration, c.loss);
    }
    println!("relative l2 error {:.3e} after {:.1}s", out.report.error, out.report.runtime_s);

    let sol = manufactured_case(&cfg.case_spec()?)?;
    println!("\nu(0.2, -0.3, t): exact vs trained");
    let x = [0.2, -0.3];
    for p in temporal_profile(&out.fitted, &|x, t| (sol.u)(x, t), &x, cfg.t_final, 6)? {
        println!("  t={:.2}  {:>10.6}  {:>10.6}", p.t, p.exact, p.approx);
    }
    Ok(())
}
