use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dabg::error::Result;
use dabg::experiment::{
    apply_config_text, run, sweep, temporal_profile, write_csv_rows, write_reports, Aggregation, RunConfig,
    SweepConfig,
};
use dabg::galerkin::{assemble_first_order, assemble_second_order};
use dabg::polybasis::{BasisOrder, TimeInterval};

#[derive(Parser)]
#[command(name = "dabg", version, about = "Deep adaptive basis Galerkin benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate one configuration.
    Solve {
        #[command(flatten)]
        run: RunFlags,
        /// Write the training trace CSV here.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Write a temporal profile CSV at the probe point (the origin).
        #[arg(long)]
        profile: Option<PathBuf>,
    },
    /// Run a grid of configurations and aggregate repeats.
    Sweep {
        #[command(flatten)]
        run: RunFlags,
        /// `N` values (DABG) or depths (DLS), comma separated.
        #[arg(long = "Ns", value_delimiter = ',')]
        ns: Vec<usize>,
        #[arg(long = "Ms", value_delimiter = ',')]
        ms: Vec<usize>,
        #[arg(long = "Ts", value_delimiter = ',')]
        ts: Vec<f64>,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[arg(long, default_value = "best")]
        aggregate: Aggregation,
        /// Also write every single run here.
        #[arg(long)]
        runs: Option<PathBuf>,
    },
    /// Run the built-in oracle and derivative checks.
    Validate,
    /// Write the temporal band matrices as CSV triplets.
    DumpMatrices {
        #[arg(long = "N")]
        n: usize,
        #[arg(long = "T", default_value_t = 1.0)]
        t: f64,
        #[arg(long, default_value = "first")]
        order: String,
        /// Output directory; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunFlags {
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    case: Option<String>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long = "N")]
    n: Option<String>,
    #[arg(long = "M")]
    m: Option<String>,
    #[arg(long = "L")]
    l: Option<String>,
    #[arg(long)]
    w: Option<String>,
    #[arg(long = "T")]
    t: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    iters: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    out: Option<String>,
    /// Any other configuration key, as `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl RunFlags {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            apply_config_text(&mut cfg, &std::fs::read_to_string(path)?)?;
        }
        let flags = [
            ("case", &self.case),
            ("method", &self.method),
            ("N", &self.n),
            ("M", &self.m),
            ("L", &self.l),
            ("w", &self.w),
            ("T", &self.t),
            ("lambda", &self.lambda),
            ("iters", &self.iters),
            ("seed", &self.seed),
            ("out", &self.out),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| dabg::error::Error::Config(format!("--set expects KEY=VALUE, got '{kv}'")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn output(path: Option<&PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(File::create(p)?),
        None => Box::new(io::stdout()),
    })
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Solve { run: flags, trace, profile } => {
            let cfg = flags.resolve()?;
            let outcome = run(&cfg)?;
            write_reports(std::slice::from_ref(&outcome.report), output(cfg.out.as_ref())?)?;
            if let Some(p) = trace {
                outcome.trace.write_csv(File::create(p)?)?;
            }
            if let Some(p) = profile {
                let case = cfg.case_spec()?;
                let sol = dabg::problems::manufactured_case(&case)?;
                let origin = vec![0.0; case.dim];
                let pts = temporal_profile(&outcome.fitted, &|x, t| (sol.u)(x, t), &origin, case.t_final, 200)?;
                write_csv_rows(&pts, File::create(p)?)?;
            }
        }
        Command::Sweep {
            run: flags,
            ns,
            ms,
            ts,
            repeats,
            aggregate,
            runs,
        } => {
            let cfg = flags.resolve()?;
            let spec = SweepConfig {
                n_or_l: ns,
                m: ms,
                t_final: ts,
                repeats,
                aggregation: aggregate,
            };
            let (rows, all) = sweep(&spec, &cfg)?;
            write_csv_rows(&rows, output(cfg.out.as_ref())?)?;
            if let Some(p) = runs {
                write_reports(&all, File::create(p)?)?;
            }
        }
        Command::Validate => {
            let results = dabg::checks::run_all();
            let failed = results.iter().filter(|r| !r.passed).count();
            for r in &results {
                println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
            }
            if failed > 0 {
                return Err(dabg::error::Error::InvalidArgument(format!("{failed} check(s) failed")));
            }
        }
        Command::DumpMatrices { n, t, order, out } => {
            let order: BasisOrder = match order.as_str() {
                "first" | "1" => BasisOrder::First,
                "second" | "2" => BasisOrder::Second,
                other => {
                    return Err(dabg::error::Error::InvalidArgument(format!("unknown order '{other}'")));
                }
            };
            if n == 0 {
                return Err(dabg::error::Error::InvalidArgument("N must be >= 1".into()));
            }
            let iv = TimeInterval::new(t)?;
            let (a, b) = match order {
                BasisOrder::First => assemble_first_order(n, iv),
                BasisOrder::Second => assemble_second_order(n, iv),
            };
            match out {
                Some(dir) => {
                    std::fs::create_dir_all(&dir)?;
                    a.write_csv(File::create(dir.join("A.csv"))?)?;
                    b.write_csv(File::create(dir.join("B.csv"))?)?;
                }
                None => {
                    let mut so = io::stdout();
                    writeln!(so, "# A")?;
                    a.write_csv(&mut so)?;
                    writeln!(so, "# B")?;
                    b.write_csv(&mut so)?;
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
