//! An N-sweep over Case 1 written as CSV to stdout, best of two seeds.

use dabg::experiment::{parse_config, sweep, write_csv_rows, Aggregation, SweepConfig};

fn main() -> dabg::Result<()> {
    let base = parse_config("case=1\nM=12\niters=800\nbatch=64\noptimizer=adam\nlr=1e-2\ninit_bound=1")?;
    let spec = SweepConfig {
        n_or_l: vec![2, 4, 6, 8],
        repeats: 2,
        aggregation: Aggregation::Best,
        ..Default::default()
    };
    let (rows, _) = sweep(&spec, &base)?;
    write_csv_rows(&rows, std::io::stdout())?;
    Ok(())
}
