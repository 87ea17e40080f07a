//! Gradient-descent training with learning-rate schedules, plus the
//! objectives wiring losses to the samplers.

use std::io::Write;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::loss::dls::DlsWorkspace;
use crate::loss::{DlsSpec, LaggedFn, LossSpec, Workspace};
use crate::network::MlpParams;
use crate::sampler::DomainSampler;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Schedule {
    Constant,
    /// `lr0 · factor^⌊iter / period⌋`
    StepDecay { factor: f64, period: usize },
    /// `lr0 / (1 + rate · iter)`
    InverseTime { rate: f64 },
}

impl Schedule {
    pub fn lr(&self, lr0: f64, iter: usize) -> f64 {
        match *self {
            Schedule::Constant => lr0,
            Schedule::StepDecay { factor, period } => {
                lr0 * factor.powi((iter / period.max(1)) as i32)
            }
            Schedule::InverseTime { rate } => lr0 / (1.0 + rate * iter as f64),
        }
    }
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule::StepDecay {
            factor: 0.7,
            period: 2000,
        }
    }
}

/// Text form used by configuration files: `constant`, `step:FACTOR:PERIOD`
/// or `inverse:RATE`.
impl std::str::FromStr for Schedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').map(str::trim).collect();
        let bad = || Error::InvalidArgument(format!("bad schedule '{s}'"));
        match parts.as_slice() {
            ["constant"] => Ok(Schedule::Constant),
            ["step"] => Ok(Schedule::default()),
            ["step", f, p] => Ok(Schedule::StepDecay {
                factor: f.parse().map_err(|_| bad())?,
                period: p.parse().map_err(|_| bad())?,
            }),
            ["inverse", r] => Ok(Schedule::InverseTime {
                rate: r.parse().map_err(|_| bad())?,
            }),
            _ => Err(bad()),
        }
    }
}

impl std::fmt::Display for Schedule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Schedule::Constant => write!(f, "constant"),
            Schedule::StepDecay { factor, period } => write!(f, "step:{factor}:{period}"),
            Schedule::InverseTime { rate } => write!(f, "inverse:{rate}"),
        }
    }
}

pub fn lr(schedule: &Schedule, lr0: f64, iter: usize) -> f64 {
    schedule.lr(lr0, iter)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    PlainGd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Optimizer::PlainGd => "gd",
            Optimizer::Adam { .. } => "adam",
        }
    }
}

/// Whether each iteration draws a new batch or reuses the first one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampling {
    Fresh,
    Fixed,
}

impl std::str::FromStr for Optimizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gd" | "plain-gd" | "sgd" => Ok(Optimizer::PlainGd),
            "adam" => Ok(Optimizer::adam()),
            other => Err(Error::InvalidArgument(format!("unknown optimizer '{other}'"))),
        }
    }
}

impl std::str::FromStr for Sampling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fresh" => Ok(Sampling::Fresh),
            "fixed" => Ok(Sampling::Fixed),
            other => Err(Error::InvalidArgument(format!("unknown sampling mode '{other}'"))),
        }
    }
}

impl std::fmt::Display for Sampling {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Sampling::Fresh => "fresh",
            Sampling::Fixed => "fixed",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub schedule: Schedule,
    pub seed: u64,
    pub lambda: f64,
    pub optimizer: Optimizer,
    pub sampling: Sampling,
    /// Checkpoint spacing in iterations.
    pub checkpoint_every: usize,
    /// Abort when the loss exceeds this multiple of the initial loss.
    pub divergence_factor: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 20_000,
            batch_size: 10_000,
            lr0: 1e-3,
            schedule: Schedule::default(),
            seed: 0,
            lambda: 1.0,
            optimizer: Optimizer::PlainGd,
            sampling: Sampling::Fresh,
            checkpoint_every: 100,
            divergence_factor: 1e6,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(Error::InvalidArgument(format!("lr0 must be positive, got {}", self.lr0)));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be >= 1".into()));
        }
        if let Schedule::StepDecay { factor, period } = self.schedule {
            if !(factor > 0.0 && factor <= 1.0) || period == 0 {
                return Err(Error::InvalidArgument(
                    "step decay needs factor in (0, 1] and period >= 1".into(),
                ));
            }
        }
        if let Schedule::InverseTime { rate } = self.schedule {
            if !(rate >= 0.0) {
                return Err(Error::InvalidArgument("inverse-time rate must be >= 0".into()));
            }
        }
        Ok(())
    }
}

/// A differentiable training loss over a list of networks.
pub trait Objective {
    /// Loss at iteration `iter` and its gradient; `grads[i]` is resized to
    /// match `nets[i]` and overwritten.
    fn loss_and_grad(&mut self, iter: usize, nets: &[MlpParams], grads: &mut [Vec<f64>]) -> Result<f64>;

    /// Loss on a fixed evaluation set, recorded at checkpoints when available.
    fn eval_loss(&mut self, _nets: &[MlpParams]) -> Result<Option<f64>> {
        Ok(None)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Checkpoint {
    pub iteration: usize,
    /// Mean batch loss over the iterations since the previous checkpoint.
    pub loss: f64,
    pub lr: f64,
    pub elapsed_ms: f64,
    /// Loss on the objective's fixed evaluation set, if it has one.
    pub eval_loss: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct TrainTrace {
    pub checkpoints: Vec<Checkpoint>,
    pub params: Vec<MlpParams>,
}

impl TrainTrace {
    pub fn final_loss(&self) -> Option<f64> {
        self.checkpoints.last().map(|c| c.loss)
    }

    pub fn initial_loss(&self) -> Option<f64> {
        self.checkpoints.first().map(|c| c.loss)
    }

    /// CSV with columns `iteration,loss,lr,elapsed_ms,eval_loss`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for c in &self.checkpoints {
            w.serialize(c)?;
        }
        w.flush()?;
        Ok(())
    }
}

struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: i32,
}

/// Runs `config.iterations` descent steps from `init`.
pub fn train(objective: &mut dyn Objective, init: Vec<MlpParams>, config: &TrainConfig) -> Result<TrainTrace> {
    config.validate()?;
    let start = Instant::now();
    let mut params = init;
    let mut grads: Vec<Vec<f64>> = params.iter().map(|p| vec![0.0; p.num_params()]).collect();
    let mut adam = AdamState {
        m: grads.clone(),
        v: grads.clone(),
        step: 0,
    };
    let mut trace = TrainTrace::default();
    let mut initial = None;
    let mut window_sum = 0.0;
    let mut window_len = 0usize;
    let every = config.checkpoint_every.max(1);

    for iter in 0..config.iterations {
        let rate = config.schedule.lr(config.lr0, iter);
        let loss = match objective.loss_and_grad(iter, &params, &mut grads) {
            Ok(l) => l,
            Err(Error::NonFinite { what, location }) => {
                trace.params = params;
                return Err(Error::TrainingAborted {
                    iteration: iter,
                    reason: format!("non-finite {what} at {location:?}"),
                    trace: Box::new(trace),
                });
            }
            Err(e) => return Err(e),
        };
        let grads_finite = grads.iter().all(|g| g.iter().all(|v| v.is_finite()));
        if !loss.is_finite() || !grads_finite {
            trace.params = params;
            return Err(Error::TrainingAborted {
                iteration: iter,
                reason: format!("non-finite loss or gradient (loss = {loss})"),
                trace: Box::new(trace),
            });
        }
        let reference = *initial.get_or_insert(loss);
        if reference > 0.0 && loss > config.divergence_factor * reference {
            trace.params = params;
            return Err(Error::TrainingAborted {
                iteration: iter,
                reason: format!("loss {loss:e} exceeds {:e} x initial {reference:e}", config.divergence_factor),
                trace: Box::new(trace),
            });
        }
        window_sum += loss;
        window_len += 1;
        if iter == 0 || (iter + 1) % every == 0 || iter + 1 == config.iterations {
            let c = Checkpoint {
                iteration: iter,
                loss: window_sum / window_len as f64,
                lr: rate,
                elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
                eval_loss: objective.eval_loss(&params)?,
            };
            log::debug!("iter {} loss {:.4e} lr {:.3e}", c.iteration, c.loss, c.lr);
            trace.checkpoints.push(c);
            window_sum = 0.0;
            window_len = 0;
        }

        match config.optimizer {
            Optimizer::PlainGd => {
                for (p, g) in params.iter_mut().zip(&grads) {
                    for (w, dw) in p.as_mut_slice().iter_mut().zip(g) {
                        *w -= rate * dw;
                    }
                }
            }
            Optimizer::Adam { beta1, beta2, eps } => {
                adam.step += 1;
                let c1 = 1.0 - beta1.powi(adam.step);
                let c2 = 1.0 - beta2.powi(adam.step);
                for (i, p) in params.iter_mut().enumerate() {
                    let (m, v) = (&mut adam.m[i], &mut adam.v[i]);
                    for (k, w) in p.as_mut_slice().iter_mut().enumerate() {
                        let g = grads[i][k];
                        m[k] = beta1 * m[k] + (1.0 - beta1) * g;
                        v[k] = beta2 * v[k] + (1.0 - beta2) * g * g;
                        *w -= rate * (m[k] / c1) / ((v[k] / c2).sqrt() + eps);
                    }
                }
            }
        }
    }
    trace.params = params;
    Ok(trace)
}

/// Galerkin loss over Halton batches from the spatial domain.
pub struct GalerkinObjective {
    pub spec: LossSpec,
    sampler: DomainSampler,
    batch_size: usize,
    sampling: Sampling,
    batch: Vec<f64>,
    eval_batch: Vec<f64>,
    workspace: Option<Workspace>,
}

impl GalerkinObjective {
    pub fn new(spec: LossSpec, sampler: DomainSampler, batch_size: usize, sampling: Sampling) -> Self {
        Self {
            spec,
            sampler,
            batch_size,
            sampling,
            batch: Vec::new(),
            eval_batch: Vec::new(),
            workspace: None,
        }
    }

    /// Fixed spatial points (row-major) for the checkpoint evaluation loss.
    pub fn with_eval_points(mut self, points: Vec<f64>) -> Self {
        self.eval_batch = points;
        self
    }

    fn next_batch(&mut self, iter: usize) -> Result<()> {
        if self.sampling == Sampling::Fresh || iter == 0 || self.batch.is_empty() {
            self.batch = self.sampler.sample(self.batch_size)?;
        }
        Ok(())
    }
}

impl Objective for GalerkinObjective {
    fn loss_and_grad(&mut self, iter: usize, nets: &[MlpParams], grads: &mut [Vec<f64>]) -> Result<f64> {
        self.next_batch(iter)?;
        let ws = self.workspace.get_or_insert_with(|| self.spec.workspace(nets));
        self.spec.loss_and_grad(nets, &self.batch, ws, grads)
    }

    fn eval_loss(&mut self, nets: &[MlpParams]) -> Result<Option<f64>> {
        if self.eval_batch.is_empty() {
            return Ok(None);
        }
        self.spec.loss(nets, &self.eval_batch).map(Some)
    }
}

/// DLS loss over space-time Halton batches.
pub struct DlsObjective {
    pub spec: DlsSpec,
    sampler: DomainSampler,
    batch_size: usize,
    sampling: Sampling,
    xs: Vec<f64>,
    ts: Vec<f64>,
    eval_set: (Vec<f64>, Vec<f64>),
    workspace: Option<DlsWorkspace>,
}

impl DlsObjective {
    /// `sampler` must be built with [`DomainSampler::space_time`].
    pub fn new(spec: DlsSpec, sampler: DomainSampler, batch_size: usize, sampling: Sampling) -> Self {
        Self {
            spec,
            sampler,
            batch_size,
            sampling,
            xs: Vec::new(),
            ts: Vec::new(),
            eval_set: (Vec::new(), Vec::new()),
            workspace: None,
        }
    }

    /// Fixed space-time points for the checkpoint evaluation loss.
    pub fn with_eval_points(mut self, xs: Vec<f64>, ts: Vec<f64>) -> Self {
        self.eval_set = (xs, ts);
        self
    }
}

impl Objective for DlsObjective {
    fn loss_and_grad(&mut self, iter: usize, nets: &[MlpParams], grads: &mut [Vec<f64>]) -> Result<f64> {
        if nets.len() != 1 {
            return Err(Error::InvalidArgument("DLS trains exactly one network".into()));
        }
        if self.sampling == Sampling::Fresh || iter == 0 || self.ts.is_empty() {
            let (xs, ts) = self.sampler.sample_space_time(self.batch_size)?;
            self.xs = xs;
            self.ts = ts;
        }
        let ws = self.workspace.get_or_insert_with(|| self.spec.workspace(&nets[0]));
        self.spec.loss_and_grad(&nets[0], &self.xs, &self.ts, ws, &mut grads[0])
    }

    fn eval_loss(&mut self, nets: &[MlpParams]) -> Result<Option<f64>> {
        let (xs, ts) = &self.eval_set;
        if ts.is_empty() {
            return Ok(None);
        }
        self.spec.loss(&nets[0], xs, ts).map(Some)
    }
}

/// Wraps a Galerkin objective so the lagged source reads a snapshot of the
/// networks refreshed every `refresh_every` iterations.
struct SnapshotObjective {
    inner: GalerkinObjective,
    refresh_every: usize,
}

impl Objective for SnapshotObjective {
    fn loss_and_grad(&mut self, iter: usize, nets: &[MlpParams], grads: &mut [Vec<f64>]) -> Result<f64> {
        if iter % self.refresh_every == 0 {
            self.inner.spec.set_lagged_snapshot(Some(nets.to_vec()));
        }
        self.inner.loss_and_grad(iter, nets, grads)
    }

    fn eval_loss(&mut self, nets: &[MlpParams]) -> Result<Option<f64>> {
        self.inner.eval_loss(nets)
    }
}

/// Fixed-point iteration `u_t + L u = f − g(u_prev)` for a parabolic
/// problem with a pointwise nonlinearity `g` moved to the right-hand side.
///
/// `base` must already carry the linear operator (for Allen–Cahn, `−Δ − Id`)
/// and the full forcing. With `refresh_every = 1` the previous iterate is
/// the current parameters at each step (evaluated without gradient);
/// larger values freeze it for that many steps.
pub fn fixed_point_allen_cahn(
    base: LossSpec,
    source: LaggedFn,
    init: Vec<MlpParams>,
    sampler: DomainSampler,
    config: &TrainConfig,
    refresh_every: usize,
) -> Result<TrainTrace> {
    let spec = base.with_lagged_source(source);
    let inner = GalerkinObjective::new(spec, sampler, config.batch_size, config.sampling);
    train_fixed_point(inner, init, config, refresh_every)
}

/// Trains an objective whose spec already carries a lagged source.
pub fn train_fixed_point(
    objective: GalerkinObjective,
    init: Vec<MlpParams>,
    config: &TrainConfig,
    refresh_every: usize,
) -> Result<TrainTrace> {
    if refresh_every <= 1 {
        let mut obj = objective;
        train(&mut obj, init, config)
    } else {
        let mut obj = SnapshotObjective {
            inner: objective,
            refresh_every,
        };
        train(&mut obj, init, config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Activation, MlpShape};
    use approx::assert_relative_eq;

    struct Quadratic {
        target: Vec<f64>,
    }

    impl Objective for Quadratic {
        fn loss_and_grad(&mut self, _: usize, nets: &[MlpParams], grads: &mut [Vec<f64>]) -> Result<f64> {
            let p = nets[0].as_slice();
            grads[0].clear();
            grads[0].extend(p.iter().zip(&self.target).map(|(a, b)| 2.0 * (a - b)));
            Ok(p.iter().zip(&self.target).map(|(a, b)| (a - b) * (a - b)).sum())
        }
    }

    fn small_net() -> MlpParams {
        MlpParams::uniform(MlpShape::new(1, 2, 2, Activation::Sigmoid), 1, 1.0).unwrap()
    }

    #[test]
    fn schedules() {
        let s = Schedule::StepDecay {
            factor: 0.5,
            period: 5000,
        };
        assert_eq!(s.lr(1e-3, 0), 1e-3);
        assert_eq!(s.lr(1e-3, 5000), 5e-4);
        assert_eq!(s.lr(1e-3, 4999), 1e-3);
        let inv = Schedule::InverseTime { rate: 1.0 };
        assert!(inv.lr(1.0, 1_000_000_000) < 1e-8);
        for sched in [s, inv, Schedule::default(), Schedule::Constant] {
            let mut prev = f64::INFINITY;
            for it in (0..50_000).step_by(250) {
                let v = lr(&sched, 0.1, it);
                assert!(v <= prev && v > 0.0);
                prev = v;
            }
        }
    }

    #[test]
    fn quadratic_converges() {
        let net = small_net();
        let target: Vec<f64> = (0..net.num_params()).map(|i| i as f64 * 0.1 - 0.2).collect();
        let mut obj = Quadratic {
            target: target.clone(),
        };
        let cfg = TrainConfig {
            iterations: 5000,
            lr0: 0.1,
            schedule: Schedule::Constant,
            ..Default::default()
        };
        let trace = train(&mut obj, vec![net], &cfg).unwrap();
        for (a, b) in trace.params[0].as_slice().iter().zip(&target) {
            assert!((a - b).abs() < 1e-8);
        }
        assert!(trace.checkpoints.windows(2).all(|w| w[0].iteration < w[1].iteration));
    }

    #[test]
    fn zero_gradient_start_is_stationary() {
        for optimizer in [Optimizer::PlainGd, Optimizer::adam()] {
            let net = small_net();
            let mut obj = Quadratic {
                target: net.as_slice().to_vec(),
            };
            let cfg = TrainConfig {
                iterations: 20,
                optimizer,
                ..Default::default()
            };
            let trace = train(&mut obj, vec![net.clone()], &cfg).unwrap();
            assert_eq!(trace.params[0], net);
            assert_eq!(trace.final_loss(), Some(0.0));
        }
    }

    #[test]
    fn nan_aborts_with_trace() {
        struct Bad;
        impl Objective for Bad {
            fn loss_and_grad(&mut self, iter: usize, _: &[MlpParams], grads: &mut [Vec<f64>]) -> Result<f64> {
                grads[0].iter_mut().for_each(|g| *g = 0.0);
                Ok(if iter < 3 { 1.0 } else { f64::NAN })
            }
        }
        let cfg = TrainConfig {
            iterations: 10,
            checkpoint_every: 1,
            ..Default::default()
        };
        match train(&mut Bad, vec![small_net()], &cfg) {
            Err(Error::TrainingAborted { iteration, trace, .. }) => {
                assert_eq!(iteration, 3);
                assert_eq!(trace.checkpoints.len(), 3);
                assert_eq!(trace.params.len(), 1);
            }
            other => panic!("expected abort, got {other:?}"),
        }
    }

    #[test]
    fn divergence_guard() {
        struct Growing;
        impl Objective for Growing {
            fn loss_and_grad(&mut self, iter: usize, _: &[MlpParams], _: &mut [Vec<f64>]) -> Result<f64> {
                Ok(10f64.powi(iter as i32))
            }
        }
        let cfg = TrainConfig {
            iterations: 20,
            ..Default::default()
        };
        let err = train(&mut Growing, vec![small_net()], &cfg).unwrap_err();
        assert!(matches!(err, Error::TrainingAborted { iteration: 7, .. }));
    }

    #[test]
    fn trace_csv() {
        let trace = TrainTrace {
            checkpoints: vec![Checkpoint {
                iteration: 0,
                loss: 1.5,
                lr: 1e-3,
                elapsed_ms: 2.0,
                eval_loss: None,
            }],
            params: vec![],
        };
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("iteration,loss,lr,elapsed_ms,eval_loss"));
        assert_relative_eq!(trace.final_loss().unwrap(), 1.5);
    }
}
