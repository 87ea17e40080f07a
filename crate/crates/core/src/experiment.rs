//! Run configuration, end-to-end runs, sweeps and CSV output.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::loss::{DlsSpec, LossSpec};
use crate::network::{Activation, AdaptiveBasisSolution, BoundaryFactor, MlpParams, MlpShape};
use crate::problems::{
    manufactured_case, relative_l2_error, BasisGrid, CaseSpec, ErrorReport, ManufacturedSolution, Method,
    SpaceTimeField,
};
use crate::sampler::{test_sets, DomainSampler};
use crate::train::{train, train_fixed_point, DlsObjective, GalerkinObjective, TrainConfig, TrainTrace};

/// Everything needed for one benchmark run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub case: u32,
    pub method: Method,
    /// Number of temporal basis functions (DABG).
    pub n: usize,
    /// Network width.
    pub m: usize,
    /// Network depth; 3 for DABG.
    pub depth: usize,
    pub w: f64,
    pub t_final: f64,
    /// Ball dimension override for Cases 3–5.
    pub dim: Option<usize>,
    pub activation: Activation,
    /// Init bound; `None` means `√M`.
    pub init_bound: Option<f64>,
    /// One network with `N` outputs instead of `N` scalar networks.
    pub shared_trunk: bool,
    /// Gauss points for the forcing projections; `None` uses the default rule.
    pub time_points: Option<usize>,
    /// Lag refresh period for the Allen–Cahn fixed point.
    pub refresh_every: usize,
    /// Size of the fixed evaluation set scored at each checkpoint; 0 disables it.
    pub eval_points: usize,
    pub train: TrainConfig,
    pub n_x: usize,
    pub n_t: usize,
    pub test_seed: u64,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            case: 1,
            method: Method::Dabg,
            n: 12,
            m: 20,
            depth: 3,
            w: 1.0,
            t_final: 1.0,
            dim: None,
            activation: Activation::Sigmoid,
            init_bound: None,
            shared_trunk: false,
            time_points: None,
            refresh_every: 1,
            eval_points: 0,
            train: TrainConfig::default(),
            n_x: 5000,
            n_t: 100,
            test_seed: 2024,
            out: None,
        }
    }
}

/// Keys accepted by [`RunConfig::set`].
pub const CONFIG_KEYS: &[&str] = &[
    "case",
    "method",
    "N",
    "M",
    "L",
    "w",
    "T",
    "dim",
    "activation",
    "init_bound",
    "shared_trunk",
    "time_points",
    "refresh_every",
    "eval_points",
    "lambda",
    "iters",
    "batch",
    "lr",
    "schedule",
    "optimizer",
    "sampling",
    "checkpoint_every",
    "divergence_factor",
    "seed",
    "n_x",
    "n_t",
    "test_seed",
    "out",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value '{value}' for key '{key}'")))
}

fn parse_opt<T: std::str::FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    match value.trim() {
        "" | "none" | "default" => Ok(None),
        v => parse(key, v).map(Some),
    }
}

impl RunConfig {
    /// Sets one field from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "case" => self.case = parse(key, value)?,
            "method" => self.method = parse(key, value)?,
            "N" => self.n = parse(key, value)?,
            "M" => self.m = parse(key, value)?,
            "L" => self.depth = parse(key, value)?,
            "w" => self.w = parse(key, value)?,
            "T" => self.t_final = parse(key, value)?,
            "dim" => self.dim = parse_opt(key, value)?,
            "activation" => self.activation = parse(key, value)?,
            "init_bound" => self.init_bound = parse_opt(key, value)?,
            "shared_trunk" => self.shared_trunk = parse(key, value)?,
            "time_points" => self.time_points = parse_opt(key, value)?,
            "refresh_every" => self.refresh_every = parse(key, value)?,
            "eval_points" => self.eval_points = parse(key, value)?,
            "lambda" => self.train.lambda = parse(key, value)?,
            "iters" => self.train.iterations = parse(key, value)?,
            "batch" => self.train.batch_size = parse(key, value)?,
            "lr" => self.train.lr0 = parse(key, value)?,
            "schedule" => self.train.schedule = parse(key, value)?,
            "optimizer" => self.train.optimizer = parse(key, value)?,
            "sampling" => self.train.sampling = parse(key, value)?,
            "checkpoint_every" => self.train.checkpoint_every = parse(key, value)?,
            "divergence_factor" => self.train.divergence_factor = parse(key, value)?,
            "seed" => self.train.seed = parse(key, value)?,
            "n_x" => self.n_x = parse(key, value)?,
            "n_t" => self.n_t = parse(key, value)?,
            "test_seed" => self.test_seed = parse(key, value)?,
            "out" => self.out = parse_opt(key, value)?,
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Effective configuration as `(key, value)` pairs, in [`CONFIG_KEYS`] order.
    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        let opt = |v: Option<String>| v.unwrap_or_else(|| "default".into());
        let t = &self.train;
        vec![
            ("case", self.case.to_string()),
            ("method", self.method.to_string()),
            ("N", self.n.to_string()),
            ("M", self.m.to_string()),
            ("L", self.depth.to_string()),
            ("w", self.w.to_string()),
            ("T", self.t_final.to_string()),
            ("dim", opt(self.dim.map(|d| d.to_string()))),
            ("activation", self.activation.name().to_string()),
            ("init_bound", opt(self.init_bound.map(|b| b.to_string()))),
            ("shared_trunk", self.shared_trunk.to_string()),
            ("time_points", opt(self.time_points.map(|p| p.to_string()))),
            ("refresh_every", self.refresh_every.to_string()),
            ("eval_points", self.eval_points.to_string()),
            ("lambda", t.lambda.to_string()),
            ("iters", t.iterations.to_string()),
            ("batch", t.batch_size.to_string()),
            ("lr", t.lr0.to_string()),
            ("schedule", t.schedule.to_string()),
            ("optimizer", t.optimizer.name().to_string()),
            ("sampling", t.sampling.to_string()),
            ("checkpoint_every", t.checkpoint_every.to_string()),
            ("divergence_factor", t.divergence_factor.to_string()),
            ("seed", t.seed.to_string()),
            ("n_x", self.n_x.to_string()),
            ("n_t", self.n_t.to_string()),
            ("test_seed", self.test_seed.to_string()),
            ("out", opt(self.out.as_ref().map(|p| p.display().to_string()))),
        ]
    }

    /// `key=value;key=value;...`
    pub fn echo(&self) -> String {
        self.pairs()
            .into_iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(";")
    }

    pub fn case_spec(&self) -> Result<CaseSpec> {
        let case = CaseSpec::new(self.case, self.w, self.t_final)?;
        match self.dim {
            Some(d) => case.with_dim(d),
            None => Ok(case),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.case_spec()?;
        self.train.validate()?;
        if self.m == 0 {
            return Err(Error::Config("M must be >= 1".into()));
        }
        if self.depth < 2 {
            return Err(Error::Config("L must be >= 2".into()));
        }
        if self.method == Method::Dabg && self.n == 0 {
            return Err(Error::Config("N must be >= 1".into()));
        }
        if self.n_x == 0 || self.n_t == 0 {
            return Err(Error::Config("test-set sizes must be >= 1".into()));
        }
        if self.refresh_every == 0 {
            return Err(Error::Config("refresh_every must be >= 1".into()));
        }
        Ok(())
    }

    /// `N` for DABG, `L` for DLS.
    pub fn n_or_l(&self) -> usize {
        match self.method {
            Method::Dabg => self.n,
            Method::Dls => self.depth,
        }
    }
}

/// Parses `key = value` lines (with `#` comments) over the defaults.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    apply_config_text(&mut cfg, text)?;
    Ok(cfg)
}

pub fn apply_config_text(cfg: &mut RunConfig, text: &str) -> Result<()> {
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", lineno + 1)))?;
        cfg.set(key.trim(), value.trim())?;
    }
    Ok(())
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    parse_config(&fs::read_to_string(path)?)
}

/// Trained approximation of either method.
#[derive(Debug, Clone)]
pub enum Fitted {
    Dabg(AdaptiveBasisSolution),
    Dls(crate::loss::DlsSolution),
}

impl SpaceTimeField for Fitted {
    fn values_at(&self, x: &[f64], ts: &[f64]) -> Result<Vec<f64>> {
        match self {
            Fitted::Dabg(s) => s.values_at(x, ts),
            Fitted::Dls(s) => s.values_at(x, ts),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: ErrorReport,
    pub trace: TrainTrace,
    pub fitted: Fitted,
}

fn net_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(1_000_003).wrapping_add(index as u64)
}

fn initial_nets(cfg: &RunConfig, input_dim: usize, count: usize, outputs: usize) -> Result<Vec<MlpParams>> {
    let bound = cfg.init_bound.unwrap_or((cfg.m as f64).sqrt());
    (0..count)
        .map(|i| {
            let shape = MlpShape::new(input_dim, cfg.m, cfg.depth, cfg.activation).with_outputs(outputs);
            MlpParams::uniform(shape, net_seed(cfg.train.seed, i), bound)
        })
        .collect()
}

/// Builds the Galerkin loss for a case.
pub fn galerkin_spec(cfg: &RunConfig, case: &CaseSpec, sol: &ManufacturedSolution) -> Result<LossSpec> {
    let domain = case.domain();
    let boundary = BoundaryFactor::normalized_for(&domain)?;
    let interval = case.interval();
    let spec = if case.is_hyperbolic() {
        LossSpec::hyperbolic(
            cfg.n,
            interval,
            cfg.train.lambda,
            case.operator(),
            boundary,
            domain.volume(),
            sol.f.clone(),
            sol.g0.clone(),
        )?
    } else {
        LossSpec::parabolic(
            cfg.n,
            interval,
            cfg.train.lambda,
            case.operator(),
            boundary,
            domain.volume(),
            sol.f.clone(),
        )?
    };
    match cfg.time_points {
        Some(p) => spec.with_time_points(p),
        None => Ok(spec),
    }
}

/// Evaluation points are drawn independently of the test set.
fn eval_rng(cfg: &RunConfig) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(cfg.test_seed.wrapping_add(1))
}

fn run_dabg(cfg: &RunConfig, case: &CaseSpec, sol: &ManufacturedSolution) -> Result<(TrainTrace, Fitted)> {
    let spec = galerkin_spec(cfg, case, sol)?;
    let boundary = spec.boundary().clone();
    let init = if cfg.shared_trunk {
        initial_nets(cfg, case.dim, 1, cfg.n)?
    } else {
        initial_nets(cfg, case.dim, cfg.n, 1)?
    };
    let sampler = DomainSampler::new(case.domain())?;
    let spec = match case.lagged_source() {
        Some(source) => spec.with_lagged_source(source),
        None => spec,
    };
    let lagged = spec.has_lagged_source();
    let mut obj = GalerkinObjective::new(spec, sampler, cfg.train.batch_size, cfg.train.sampling);
    if cfg.eval_points > 0 {
        obj = obj.with_eval_points(case.domain().random_points(cfg.eval_points, &mut eval_rng(cfg)));
    }
    let trace = if lagged {
        train_fixed_point(obj, init, &cfg.train, cfg.refresh_every)?
    } else {
        train(&mut obj, init, &cfg.train)?
    };
    let fitted = AdaptiveBasisSolution::new(trace.params.clone(), boundary, case.order(), case.interval())?;
    Ok((trace, Fitted::Dabg(fitted)))
}

fn run_dls(cfg: &RunConfig, case: &CaseSpec, sol: &ManufacturedSolution) -> Result<(TrainTrace, Fitted)> {
    let domain = case.domain();
    let boundary = BoundaryFactor::normalized_for(&domain)?;
    let beta = if case.is_hyperbolic() { 2 } else { 1 };
    let spec = DlsSpec {
        beta,
        operator: case.operator(),
        boundary: boundary.clone(),
        forcing: sol.f.clone(),
        interval: case.interval(),
        volume: domain.volume(),
        nonlinearity: case.pointwise_term(),
    };
    let init = initial_nets(cfg, case.dim + 1, 1, 1)?;
    spec.validate(&init[0])?;
    let sampler = DomainSampler::space_time(domain.clone(), case.t_final)?;
    let mut obj = DlsObjective::new(spec, sampler, cfg.train.batch_size, cfg.train.sampling);
    if cfg.eval_points > 0 {
        let mut rng = eval_rng(cfg);
        let xs = domain.random_points(cfg.eval_points, &mut rng);
        let ts = (0..cfg.eval_points).map(|_| rng.gen_range(0.0..case.t_final)).collect();
        obj = obj.with_eval_points(xs, ts);
    }
    let trace = train(&mut obj, init, &cfg.train)?;
    let fitted = crate::loss::DlsSolution {
        net: trace.params[0].clone(),
        boundary,
        beta,
    };
    Ok((trace, Fitted::Dls(fitted)))
}

/// Relative ℓ² error of `fitted` on the configured test grid.
pub fn evaluate(cfg: &RunConfig, case: &CaseSpec, sol: &ManufacturedSolution, fitted: &Fitted) -> Result<f64> {
    let (xs, ts) = test_sets(&case.domain(), cfg.n_x, cfg.n_t, case.t_final, cfg.test_seed)?;
    let truth = |x: &[f64], t: f64| (sol.u)(x, t);
    match fitted {
        Fitted::Dabg(s) => relative_l2_error(&BasisGrid::new(s, &ts)?, &truth, &xs, case.dim, &ts),
        Fitted::Dls(s) => relative_l2_error(s, &truth, &xs, case.dim, &ts),
    }
}

/// Build case, train, evaluate.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let start = Instant::now();
    let case = cfg.case_spec()?;
    let sol = manufactured_case(&case)?;
    log::info!("case {} method {} N/L {} M {}", cfg.case, cfg.method, cfg.n_or_l(), cfg.m);
    let (trace, fitted) = match cfg.method {
        Method::Dabg => run_dabg(cfg, &case, &sol),
        Method::Dls => run_dls(cfg, &case, &sol),
    }
    .map_err(|e| match e {
        Error::TrainingAborted {
            iteration,
            reason,
            trace,
        } => Error::TrainingAborted {
            iteration,
            reason: format!("case {} ({}): {reason}", cfg.case, cfg.method),
            trace,
        },
        other => other,
    })?;
    let error = evaluate(cfg, &case, &sol, &fitted)?;
    let report = ErrorReport {
        case: cfg.case,
        method: cfg.method.clone(),
        n_or_l: cfg.n_or_l(),
        m: cfg.m,
        error,
        seed: cfg.train.seed,
        runtime_s: start.elapsed().as_secs_f64(),
        t_final: cfg.t_final,
        w: cfg.w,
        final_loss: trace.final_loss().unwrap_or(f64::NAN),
        config: cfg.echo(),
    };
    log::info!("error {:.4e} in {:.1}s", report.error, report.runtime_s);
    Ok(RunOutcome { report, trace, fitted })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    Best,
    Median,
}

impl std::str::FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "best" => Ok(Aggregation::Best),
            "median" => Ok(Aggregation::Median),
            other => Err(Error::Config(format!("unknown aggregation '{other}'"))),
        }
    }
}

/// Grid of runs; empty lists fall back to the base config's value.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    /// `N` values for DABG, depths `L` for DLS.
    pub n_or_l: Vec<usize>,
    pub m: Vec<usize>,
    pub t_final: Vec<f64>,
    pub repeats: usize,
    pub aggregation: Aggregation,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            n_or_l: Vec::new(),
            m: Vec::new(),
            t_final: Vec::new(),
            repeats: 3,
            aggregation: Aggregation::Best,
        }
    }
}

/// One sweep cell after aggregating its repeats.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SweepRow {
    pub case: u32,
    pub method: Method,
    #[serde(rename = "N_or_L")]
    pub n_or_l: usize,
    #[serde(rename = "M")]
    pub m: usize,
    /// Aggregated error.
    pub error: f64,
    /// Seed of the run closest to the aggregate.
    pub seed: u64,
    /// Total over repeats.
    pub runtime_s: f64,
    #[serde(rename = "T")]
    pub t_final: f64,
    pub w: f64,
    pub best_error: f64,
    pub median_error: f64,
    pub repeats: usize,
    pub aggregation: Aggregation,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Aggregates the repeats of one cell.
pub fn aggregate(reports: &[ErrorReport], aggregation: Aggregation) -> Result<SweepRow> {
    let first = reports
        .first()
        .ok_or_else(|| Error::InvalidArgument("no runs to aggregate".into()))?;
    let mut errs: Vec<f64> = reports.iter().map(|r| r.error).collect();
    errs.sort_by(f64::total_cmp);
    let best = errs[0];
    let med = median(&errs);
    let target = match aggregation {
        Aggregation::Best => best,
        Aggregation::Median => med,
    };
    let closest = reports
        .iter()
        .min_by(|a, b| (a.error - target).abs().total_cmp(&(b.error - target).abs()))
        .expect("nonempty");
    Ok(SweepRow {
        case: first.case,
        method: first.method.clone(),
        n_or_l: first.n_or_l,
        m: first.m,
        error: target,
        seed: closest.seed,
        runtime_s: reports.iter().map(|r| r.runtime_s).sum(),
        t_final: first.t_final,
        w: first.w,
        best_error: best,
        median_error: med,
        repeats: reports.len(),
        aggregation,
    })
}

/// Runs every cell of the grid; returns the aggregated rows and all single runs.
pub fn sweep(sweep: &SweepConfig, base: &RunConfig) -> Result<(Vec<SweepRow>, Vec<ErrorReport>)> {
    if sweep.repeats == 0 {
        return Err(Error::Config("repeats must be >= 1".into()));
    }
    let or_base = |v: &[usize], b: usize| if v.is_empty() { vec![b] } else { v.to_vec() };
    let ns = or_base(&sweep.n_or_l, base.n_or_l());
    let ms = or_base(&sweep.m, base.m);
    let ts = if sweep.t_final.is_empty() {
        vec![base.t_final]
    } else {
        sweep.t_final.clone()
    };
    let mut rows = Vec::new();
    let mut all = Vec::new();
    for &t in &ts {
        for &n in &ns {
            for &m in &ms {
                let mut cfg = base.clone();
                cfg.t_final = t;
                cfg.m = m;
                match cfg.method {
                    Method::Dabg => cfg.n = n,
                    Method::Dls => cfg.depth = n,
                }
                let mut cell = Vec::with_capacity(sweep.repeats);
                for r in 0..sweep.repeats {
                    cfg.train.seed = base.train.seed + r as u64;
                    cell.push(run(&cfg)?.report);
                }
                rows.push(aggregate(&cell, sweep.aggregation)?);
                all.extend(cell);
            }
        }
    }
    Ok((rows, all))
}

pub fn write_csv_rows<T: serde::Serialize, W: Write>(rows: &[T], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv_rows<T: serde::de::DeserializeOwned, R: Read>(input: R) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn write_reports<W: Write>(reports: &[ErrorReport], out: W) -> Result<()> {
    write_csv_rows(reports, out)
}

pub fn read_reports<R: Read>(input: R) -> Result<Vec<ErrorReport>> {
    read_csv_rows(input)
}

/// One point of a temporal profile at a fixed probe location.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ProfilePoint {
    pub t: f64,
    pub exact: f64,
    pub approx: f64,
}

/// `u(x, t)` and `û(x, t)` on `count` uniform times in `(0, T]`.
pub fn temporal_profile(
    fitted: &dyn SpaceTimeField,
    exact: &dyn Fn(&[f64], f64) -> f64,
    x: &[f64],
    t_final: f64,
    count: usize,
) -> Result<Vec<ProfilePoint>> {
    let ts: Vec<f64> = (1..=count).map(|k| k as f64 * t_final / count as f64).collect();
    let vals = fitted.values_at(x, &ts)?;
    Ok(ts
        .iter()
        .zip(vals)
        .map(|(&t, approx)| ProfilePoint {
            t,
            exact: exact(x, t),
            approx,
        })
        .collect())
}
