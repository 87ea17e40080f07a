//! Galerkin residuals `R_j(x)` and the least-squares losses built from them.
//!
//! For the parabolic problem `u_t + L u = f`:
//!
//! ```text
//! R_j = Σ_n a¹_{jn} ŵ_n + b¹_{jn} L ŵ_n − (f, ψ¹_j)
//! J   = |Ω| mean_x [ Σ_j r_j R_j² + λ N⁻⁴ (L ŵ_N)² ]
//! ```
//!
//! and for the hyperbolic problem `u_tt + L u = f`, `u_t(·, 0) = g0`:
//!
//! ```text
//! R_j = Σ_n a²_{jn} ŵ_n − b²_{jn} L ŵ_n + (f, ψ²_j) + g0 ψ²_j(0)
//! I   = (φ²_N, L_N) L ŵ_N − ∫ f L_N dt
//! J   = |Ω| mean_x [ Σ_j R_j² + λ N⁻⁵ I² ]
//! ```

use super::operator::SpatialOperator;
use super::{residual_weights, SpaceTimeFn, SpatialFn};
use crate::error::{Error, Result};
use crate::galerkin::{assemble_first_order, assemble_second_order, BandMatrix};
use crate::network::{BoundaryFactor, Channels, Cotangent, EvalBundle, MlpParams, Tape};
use crate::polybasis::{
    basis_family_at, legendre_all, BasisKind, BasisOrder, QuadratureRule, TemporalBasisId,
    TimeInterval,
};

/// Time projections `(f(x, ·), ψ_j)` evaluated per spatial point by
/// quadrature, plus `∫ f L_N dt` for the hyperbolic regularizer.
#[derive(Clone)]
pub struct ForcingProjection {
    forcing: SpaceTimeFn,
    order: BasisOrder,
    n: usize,
    rule: QuadratureRule,
    /// `[q * n + j - 1] = w_q ψ_j(t_q)`
    test_weights: Vec<f64>,
    /// `w_q L_N(2 t_q / T − 1)`
    last_weights: Vec<f64>,
    /// `[q * n + k - 1] = φ_k(t_q)`
    trial_values: Vec<f64>,
}

impl std::fmt::Debug for ForcingProjection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ForcingProjection")
            .field("order", &self.order)
            .field("n", &self.n)
            .field("nodes", &self.rule.len())
            .finish()
    }
}

impl ForcingProjection {
    pub fn new(forcing: SpaceTimeFn, n: usize, order: BasisOrder, rule: QuadratureRule) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("N must be >= 1".into()));
        }
        let interval = rule.interval();
        let q = rule.len();
        let mut test_weights = vec![0.0; q * n];
        let mut trial_values = vec![0.0; q * n];
        let mut last_weights = vec![0.0; q];
        for (i, (&t, &w)) in rule.nodes.iter().zip(&rule.weights).enumerate() {
            let (psi, _) = basis_family_at(order, BasisKind::Test, n, t, interval)?;
            let (phi, _) = basis_family_at(order, BasisKind::Trial, n, t, interval)?;
            for j in 0..n {
                test_weights[i * n + j] = w * psi[j];
                trial_values[i * n + j] = phi[j];
            }
            last_weights[i] = w * legendre_all(n, interval.to_reference(t)?)?[n];
        }
        Ok(Self {
            forcing,
            order,
            n,
            rule,
            test_weights,
            last_weights,
            trial_values,
        })
    }

    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    pub fn modes(&self) -> usize {
        self.n
    }

    /// `f(x, t_q)` for every node.
    pub fn sample(&self, x: &[f64], out: &mut [f64]) {
        for (o, &t) in out.iter_mut().zip(&self.rule.nodes) {
            *o = (self.forcing)(x, t);
        }
    }

    /// Projections onto `ψ_1..ψ_N` from node samples.
    pub fn project_samples(&self, samples: &[f64], out: &mut [f64]) {
        let n = self.n;
        out.iter_mut().for_each(|v| *v = 0.0);
        for (q, &s) in samples.iter().enumerate() {
            let row = &self.test_weights[q * n..(q + 1) * n];
            for (o, w) in out.iter_mut().zip(row) {
                *o += s * w;
            }
        }
    }

    pub fn last_moment_samples(&self, samples: &[f64]) -> f64 {
        samples.iter().zip(&self.last_weights).map(|(s, w)| s * w).sum()
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let mut s = vec![0.0; self.rule.len()];
        self.sample(x, &mut s);
        let mut out = vec![0.0; self.n];
        self.project_samples(&s, &mut out);
        out
    }

    /// `(f(x, ·), ψ_j)`, `j` 1-based.
    pub fn component(&self, j: usize, x: &[f64]) -> f64 {
        self.project(x)[j - 1]
    }

    /// `∫ f(x, t) L_N(2t/T − 1) dt`
    pub fn last_moment(&self, x: &[f64]) -> f64 {
        let mut s = vec![0.0; self.rule.len()];
        self.sample(x, &mut s);
        self.last_moment_samples(&s)
    }

    /// Adds `source(Σ_k v_k φ_k(t_q))` to each node sample.
    fn add_lagged(&self, v: &[f64], source: &(dyn Fn(f64) -> f64 + Send + Sync), samples: &mut [f64]) {
        let n = self.n;
        for (q, s) in samples.iter_mut().enumerate() {
            let row = &self.trial_values[q * n..(q + 1) * n];
            let u: f64 = row.iter().zip(v).map(|(a, b)| a * b).sum();
            *s += source(u);
        }
    }
}

pub fn f_projection_cache(
    f: SpaceTimeFn,
    n: usize,
    order: BasisOrder,
    rule: QuadratureRule,
) -> Result<ForcingProjection> {
    ForcingProjection::new(f, n, order, rule)
}

/// A source term depending on the previous iterate, treated as data.
pub type LaggedFn = std::sync::Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Everything the residuals need besides the networks.
#[derive(Clone)]
pub struct LossSpec {
    order: BasisOrder,
    n: usize,
    lambda: f64,
    interval: TimeInterval,
    operator: SpatialOperator,
    boundary: BoundaryFactor,
    volume: f64,
    forcing: ForcingProjection,
    g0: Option<SpatialFn>,
    a: BandMatrix,
    b: BandMatrix,
    weights: Vec<f64>,
    psi_at_zero: Vec<f64>,
    /// `(φ²_N, L_N)`, the coefficient of `L ŵ_N` in `I`.
    i_coeff: f64,
    lagged: Option<LaggedFn>,
    /// Networks the lagged source is evaluated with; `None` means the
    /// networks being differentiated.
    snapshot: Option<Vec<MlpParams>>,
}

impl std::fmt::Debug for LossSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LossSpec")
            .field("order", &self.order)
            .field("n", &self.n)
            .field("lambda", &self.lambda)
            .field("interval", &self.interval)
            .field("operator", &self.operator)
            .field("volume", &self.volume)
            .finish_non_exhaustive()
    }
}

/// Residual and regularization parts of a loss value.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub residual: f64,
    pub regularization: f64,
}

impl LossParts {
    pub fn total(&self) -> f64 {
        self.residual + self.regularization
    }
}

impl LossSpec {
    /// Parabolic problem `u_t + L u = f`, `u(·, 0) = 0`.
    #[allow(clippy::too_many_arguments)]
    pub fn parabolic(
        n: usize,
        interval: TimeInterval,
        lambda: f64,
        operator: SpatialOperator,
        boundary: BoundaryFactor,
        volume: f64,
        forcing: SpaceTimeFn,
    ) -> Result<Self> {
        Self::build(BasisOrder::First, n, interval, lambda, operator, boundary, volume, forcing, None)
    }

    /// Hyperbolic problem `u_tt + L u = f`, `u(·, 0) = 0`, `u_t(·, 0) = g0`.
    #[allow(clippy::too_many_arguments)]
    pub fn hyperbolic(
        n: usize,
        interval: TimeInterval,
        lambda: f64,
        operator: SpatialOperator,
        boundary: BoundaryFactor,
        volume: f64,
        forcing: SpaceTimeFn,
        g0: Option<SpatialFn>,
    ) -> Result<Self> {
        Self::build(BasisOrder::Second, n, interval, lambda, operator, boundary, volume, forcing, g0)
    }

    #[allow(clippy::too_many_arguments)]
    fn build(
        order: BasisOrder,
        n: usize,
        interval: TimeInterval,
        lambda: f64,
        operator: SpatialOperator,
        boundary: BoundaryFactor,
        volume: f64,
        forcing: SpaceTimeFn,
        g0: Option<SpatialFn>,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("N must be >= 1".into()));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {lambda}")));
        }
        if !(volume > 0.0 && volume.is_finite()) {
            return Err(Error::InvalidArgument(format!("bad domain volume {volume}")));
        }
        let rule = QuadratureRule::gauss_legendre(QuadratureRule::default_points(n), interval);
        let forcing = ForcingProjection::new(forcing, n, order, rule)?;
        let (a, b) = match order {
            BasisOrder::First => assemble_first_order(n, interval),
            BasisOrder::Second => assemble_second_order(n, interval),
        };
        let weights = match order {
            BasisOrder::First => residual_weights(n).0,
            BasisOrder::Second => vec![1.0; n],
        };
        let psi_at_zero = basis_family_at(order, BasisKind::Test, n, 0.0, interval)?.0;
        let lead = TemporalBasisId::trial(order, n)
            .legendre_terms()
            .into_iter()
            .find(|&(m, _)| m == n)
            .map_or(0.0, |(_, c)| c);
        let i_coeff = lead * interval.length() / (2 * n + 1) as f64;
        Ok(Self {
            order,
            n,
            lambda,
            interval,
            operator,
            boundary,
            volume,
            forcing,
            g0,
            a,
            b,
            weights,
            psi_at_zero,
            i_coeff,
            lagged: None,
            snapshot: None,
        })
    }

    /// Replaces the time quadrature used for the forcing projections.
    pub fn with_time_points(mut self, points: usize) -> Result<Self> {
        let rule = QuadratureRule::gauss_legendre(points, self.interval);
        self.forcing = ForcingProjection::new(self.forcing.forcing.clone(), self.n, self.order, rule)?;
        Ok(self)
    }

    /// Adds `source(û(x, t))` to the forcing, with `û` the current iterate
    /// evaluated without gradient (a lagged, fixed-point treatment).
    pub fn with_lagged_source(mut self, source: LaggedFn) -> Self {
        self.lagged = Some(source);
        self
    }

    pub fn has_lagged_source(&self) -> bool {
        self.lagged.is_some()
    }

    /// Freezes the networks used inside the lagged source.
    pub fn set_lagged_snapshot(&mut self, nets: Option<Vec<MlpParams>>) {
        self.snapshot = nets;
    }

    pub fn order(&self) -> BasisOrder {
        self.order
    }

    pub fn modes(&self) -> usize {
        self.n
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn interval(&self) -> TimeInterval {
        self.interval
    }

    pub fn operator(&self) -> &SpatialOperator {
        &self.operator
    }

    pub fn boundary(&self) -> &BoundaryFactor {
        &self.boundary
    }

    pub fn volume(&self) -> f64 {
        self.volume
    }

    pub fn forcing(&self) -> &ForcingProjection {
        &self.forcing
    }

    pub fn matrices(&self) -> (&BandMatrix, &BandMatrix) {
        (&self.a, &self.b)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn i_coefficient(&self) -> f64 {
        self.i_coeff
    }

    fn check_nets(&self, nets: &[MlpParams]) -> Result<()> {
        let total: usize = nets.iter().map(|n| n.outputs()).sum();
        if total != self.n {
            return Err(Error::InvalidArgument(format!(
                "networks provide {total} spatial functions, loss expects N = {}",
                self.n
            )));
        }
        Ok(())
    }

    /// Fresh scratch space for these networks.
    pub fn workspace(&self, nets: &[MlpParams]) -> Workspace {
        Workspace::new(self, nets)
    }

    /// Residuals `R_1..R_N` at `x`.
    pub fn residuals(&self, nets: &[MlpParams], x: &[f64]) -> Result<Vec<f64>> {
        self.check_nets(nets)?;
        let mut ws = self.workspace(nets);
        ws.forward(self, nets, x)?;
        Ok(ws.res.clone())
    }

    /// Residuals plus, per row, the number of matrix entries used.
    pub fn residuals_with_counts(&self, nets: &[MlpParams], x: &[f64]) -> Result<(Vec<f64>, Vec<usize>)> {
        self.check_nets(nets)?;
        let mut ws = self.workspace(nets);
        ws.forward(self, nets, x)?;
        Ok((ws.res.clone(), ws.counts.clone()))
    }

    /// Loss over a batch of points (row-major), without gradients.
    pub fn loss_parts(&self, nets: &[MlpParams], batch: &[f64]) -> Result<LossParts> {
        self.check_nets(nets)?;
        let mut ws = self.workspace(nets);
        let d = ws.dim;
        let q = batch.len() / d;
        if q == 0 {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let mut parts = LossParts::default();
        for x in batch.chunks(d) {
            let p = ws.forward(self, nets, x)?;
            parts.residual += p.residual;
            parts.regularization += p.regularization;
        }
        let scale = self.volume / q as f64;
        parts.residual *= scale;
        parts.regularization *= scale;
        Ok(parts)
    }

    pub fn loss(&self, nets: &[MlpParams], batch: &[f64]) -> Result<f64> {
        Ok(self.loss_parts(nets, batch)?.total())
    }

    /// Loss and its gradient with respect to every network parameter.
    /// `grads[i]` receives the gradient for `nets[i]` (overwritten).
    pub fn loss_and_grad(
        &self,
        nets: &[MlpParams],
        batch: &[f64],
        ws: &mut Workspace,
        grads: &mut [Vec<f64>],
    ) -> Result<f64> {
        self.check_nets(nets)?;
        let d = ws.dim;
        let q = batch.len() / d;
        if q == 0 {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        for (g, net) in grads.iter_mut().zip(nets) {
            g.clear();
            g.resize(net.num_params(), 0.0);
        }
        let scale = self.volume / q as f64;
        let mut total = 0.0;
        for x in batch.chunks(d) {
            total += ws.forward(self, nets, x)?.total();
            ws.backward(self, nets, scale, grads);
        }
        Ok(total * scale)
    }
}

/// Per-point scratch buffers, reused across points and iterations.
#[derive(Debug, Clone)]
pub struct Workspace {
    dim: usize,
    channels: Channels,
    tapes: Vec<Tape>,
    cots: Vec<Cotangent>,
    nu: EvalBundle,
    grad_a: Vec<f64>,
    a_val: f64,
    /// `[n * d + k]`
    wg: Vec<f64>,
    v: Vec<f64>,
    lv: Vec<f64>,
    samples: Vec<f64>,
    proj: Vec<f64>,
    last: f64,
    i_term: f64,
    res: Vec<f64>,
    counts: Vec<usize>,
    dv: Vec<f64>,
    dlv: Vec<f64>,
}

impl Workspace {
    fn new(spec: &LossSpec, nets: &[MlpParams]) -> Self {
        let d = nets.first().map_or(1, |n| n.input_dim());
        let n = spec.n;
        Self {
            dim: d,
            channels: Channels::laplacian(d),
            tapes: vec![Tape::default(); nets.len()],
            cots: nets.iter().map(|net| Cotangent::zeros(net.outputs(), d, 1)).collect(),
            nu: EvalBundle {
                value: 0.0,
                gradient: vec![0.0; d],
                laplacian: 0.0,
            },
            grad_a: vec![0.0; d],
            a_val: 0.0,
            wg: vec![0.0; n * d],
            v: vec![0.0; n],
            lv: vec![0.0; n],
            samples: vec![0.0; spec.forcing.rule.len()],
            proj: vec![0.0; n],
            last: 0.0,
            i_term: 0.0,
            res: vec![0.0; n],
            counts: vec![0; n],
            dv: vec![0.0; n],
            dlv: vec![0.0; n],
        }
    }

    /// Evaluates everything at `x`; returns the unscaled loss density.
    fn forward(&mut self, spec: &LossSpec, nets: &[MlpParams], x: &[f64]) -> Result<LossParts> {
        let d = self.dim;
        let n_modes = spec.n;
        if self.samples.len() != spec.forcing.rule.len() {
            self.samples.resize(spec.forcing.rule.len(), 0.0);
        }
        self.nu = spec.boundary.bundle(x);
        self.a_val = spec.operator.coefficient(x, &mut self.grad_a);
        let c = spec.operator.reaction;
        let nu = &self.nu;

        let mut idx = 0;
        for (i, net) in nets.iter().enumerate() {
            net.forward(x, &self.channels, &mut self.tapes[i]);
            let tape = &self.tapes[i];
            for o in 0..net.outputs() {
                let phi = tape.value[o];
                let pg = &tape.grad[o * d..(o + 1) * d];
                let pl = tape.second[o];
                let wg = &mut self.wg[idx * d..(idx + 1) * d];
                let mut cross = 0.0;
                let mut drift = 0.0;
                for k in 0..d {
                    wg[k] = phi * nu.gradient[k] + nu.value * pg[k];
                    cross += nu.gradient[k] * pg[k];
                    drift += self.grad_a[k] * wg[k];
                }
                let wv = nu.value * phi;
                let wl = phi * nu.laplacian + 2.0 * cross + nu.value * pl;
                self.v[idx] = wv;
                self.lv[idx] = -(drift + self.a_val * wl) + c * wv;
                idx += 1;
            }
        }

        spec.forcing.sample(x, &mut self.samples);
        if let Some(source) = &spec.lagged {
            match &spec.snapshot {
                None => spec.forcing.add_lagged(&self.v, source.as_ref(), &mut self.samples),
                Some(prev) => {
                    let mut vals = Vec::with_capacity(n_modes);
                    let mut buf = Vec::new();
                    for net in prev {
                        buf.resize(net.outputs(), 0.0);
                        net.forward_values(x, &mut buf);
                        vals.extend(buf.iter().map(|v| nu.value * v));
                    }
                    spec.forcing.add_lagged(&vals, source.as_ref(), &mut self.samples);
                }
            }
        }
        spec.forcing.project_samples(&self.samples, &mut self.proj);

        let (a, b) = (&spec.a, &spec.b);
        let nf = n_modes as f64;
        let regularization;
        match spec.order {
            BasisOrder::First => {
                for j in 1..=n_modes {
                    let (ra, rb) = (a.row(j), b.row(j));
                    let mut r = -self.proj[j - 1];
                    for &(k, val) in ra {
                        r += val * self.v[k - 1];
                    }
                    for &(k, val) in rb {
                        r += val * self.lv[k - 1];
                    }
                    self.res[j - 1] = r;
                    self.counts[j - 1] = ra.len() + rb.len();
                }
                let lvn = self.lv[n_modes - 1];
                regularization = spec.lambda * nf.powi(-4) * lvn * lvn;
            }
            BasisOrder::Second => {
                let g0 = spec.g0.as_ref().map_or(0.0, |g| g(x));
                for j in 1..=n_modes {
                    let (ra, rb) = (a.row(j), b.row(j));
                    let mut r = self.proj[j - 1] + g0 * spec.psi_at_zero[j - 1];
                    for &(k, val) in ra {
                        r += val * self.v[k - 1];
                    }
                    for &(k, val) in rb {
                        r -= val * self.lv[k - 1];
                    }
                    self.res[j - 1] = r;
                    self.counts[j - 1] = ra.len() + rb.len();
                }
                self.last = spec.forcing.last_moment_samples(&self.samples);
                self.i_term = spec.i_coeff * self.lv[n_modes - 1] - self.last;
                regularization = spec.lambda * nf.powi(-5) * self.i_term * self.i_term;
            }
        }
        let residual: f64 = self
            .res
            .iter()
            .zip(&spec.weights)
            .map(|(r, w)| w * r * r)
            .sum();
        if !(residual.is_finite() && regularization.is_finite()) {
            return Err(Error::NonFinite {
                what: "loss density",
                location: x.to_vec(),
            });
        }
        Ok(LossParts {
            residual,
            regularization,
        })
    }

    /// Accumulates `scale ·` (gradient of the last forward density) into `grads`.
    fn backward(&mut self, spec: &LossSpec, nets: &[MlpParams], scale: f64, grads: &mut [Vec<f64>]) {
        let d = self.dim;
        let n_modes = spec.n;
        let nf = n_modes as f64;
        self.dv.iter_mut().for_each(|v| *v = 0.0);
        self.dlv.iter_mut().for_each(|v| *v = 0.0);
        let sign_b = match spec.order {
            BasisOrder::First => 1.0,
            BasisOrder::Second => -1.0,
        };
        for j in 1..=n_modes {
            let dr = 2.0 * scale * spec.weights[j - 1] * self.res[j - 1];
            if dr == 0.0 {
                continue;
            }
            for &(k, val) in spec.a.row(j) {
                self.dv[k - 1] += dr * val;
            }
            for &(k, val) in spec.b.row(j) {
                self.dlv[k - 1] += sign_b * dr * val;
            }
        }
        match spec.order {
            BasisOrder::First => {
                self.dlv[n_modes - 1] +=
                    scale * 2.0 * spec.lambda * nf.powi(-4) * self.lv[n_modes - 1];
            }
            BasisOrder::Second => {
                self.dlv[n_modes - 1] +=
                    scale * 2.0 * spec.lambda * nf.powi(-5) * self.i_term * spec.i_coeff;
            }
        }

        let c = spec.operator.reaction;
        let nu = &self.nu;
        let mut idx = 0;
        for (i, net) in nets.iter().enumerate() {
            let cot = &mut self.cots[i];
            for o in 0..net.outputs() {
                let dlv = self.dlv[idx];
                // cotangents on ŵ = νφ̂ through L ŵ = −(∇a·∇ŵ + aΔŵ) + cŵ
                let c_wv = self.dv[idx] + c * dlv;
                let c_wl = -dlv * self.a_val;
                let mut c_v = c_wv * nu.value + c_wl * nu.laplacian;
                for k in 0..d {
                    let c_wg = -dlv * self.grad_a[k];
                    c_v += c_wg * nu.gradient[k];
                    cot.grad[o * d + k] = c_wg * nu.value + 2.0 * c_wl * nu.gradient[k];
                }
                cot.value[o] = c_v;
                cot.second[o] = c_wl * nu.value;
                idx += 1;
            }
            net.backward(&self.channels, &mut self.tapes[i], cot, &mut grads[i]);
        }
    }
}

fn expect_order(spec: &LossSpec, order: BasisOrder) -> Result<()> {
    if spec.order != order {
        return Err(Error::InvalidArgument(format!(
            "loss spec is {:?}-order, expected {order:?}",
            spec.order
        )));
    }
    Ok(())
}

pub fn residuals_parabolic(spec: &LossSpec, nets: &[MlpParams], x: &[f64]) -> Result<Vec<f64>> {
    expect_order(spec, BasisOrder::First)?;
    spec.residuals(nets, x)
}

pub fn residuals_hyperbolic(spec: &LossSpec, nets: &[MlpParams], x: &[f64]) -> Result<Vec<f64>> {
    expect_order(spec, BasisOrder::Second)?;
    spec.residuals(nets, x)
}

pub fn loss_parabolic(spec: &LossSpec, nets: &[MlpParams], batch: &[f64]) -> Result<f64> {
    expect_order(spec, BasisOrder::First)?;
    spec.loss(nets, batch)
}

pub fn loss_hyperbolic(spec: &LossSpec, nets: &[MlpParams], batch: &[f64]) -> Result<f64> {
    expect_order(spec, BasisOrder::Second)?;
    spec.loss(nets, batch)
}
