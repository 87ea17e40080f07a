//! Allen-Cahn Case 4 solved by lagging the cubic term, in a low-dimensional ball.

use dabg::experiment::{parse_config, run};

fn main() -> dabg::Result<()> {
    env_logger::init();
    let cfg = parse_config(
        "case=4\ndim=4\nN=8\nM=20\niters=1500\nbatch=128\noptimizer=adam\nlr=1e-2\ninit_bound=1\ncheckpoint_every=250",
    )?;
    let out = run(&cfg)?;
    for c in &out.trace.checkpoints {
        println!("iter {:>6}  loss {:.4e}", c.iteration, c.loss);
    }
    println!("relative l2 error {:.3e}", out.report.error);
    Ok(())
}
