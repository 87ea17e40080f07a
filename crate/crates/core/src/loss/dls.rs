//! Deep least-squares baseline: one space-time network, trial function
//! `û(x, t) = t^β ν(x) φ̂(x, t)`, loss `|Ω| T mean (∂_t^β û + L û + g(û) − f)²`.

use super::operator::SpatialOperator;
use super::{Nonlinearity, SpaceTimeFn};
use crate::error::{Error, Result};
use crate::network::{BoundaryFactor, Channels, Cotangent, MlpParams, Tape};
use crate::polybasis::TimeInterval;

#[derive(Clone)]
pub struct DlsSpec {
    /// 1 for `u_t + L u = f`, 2 for `u_tt + L u = f` (with `u_t(·, 0) = 0`).
    pub beta: u8,
    pub operator: SpatialOperator,
    pub boundary: BoundaryFactor,
    pub forcing: SpaceTimeFn,
    pub interval: TimeInterval,
    pub volume: f64,
    pub nonlinearity: Option<Nonlinearity>,
}

impl std::fmt::Debug for DlsSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DlsSpec")
            .field("beta", &self.beta)
            .field("operator", &self.operator)
            .field("interval", &self.interval)
            .field("volume", &self.volume)
            .finish_non_exhaustive()
    }
}

/// Time factor `t^β` and its first two derivatives.
fn time_factor(beta: u8, t: f64) -> (f64, f64, f64) {
    match beta {
        1 => (t, 1.0, 0.0),
        _ => (t * t, 2.0 * t, 2.0),
    }
}

/// Scratch for per-point DLS evaluation.
#[derive(Debug, Clone)]
pub struct DlsWorkspace {
    channels: Channels,
    tape: Tape,
    cot: Cotangent,
    input: Vec<f64>,
    grad_a: Vec<f64>,
}

impl DlsSpec {
    pub fn validate(&self, net: &MlpParams) -> Result<()> {
        if self.beta != 1 && self.beta != 2 {
            return Err(Error::InvalidArgument(format!("beta must be 1 or 2, got {}", self.beta)));
        }
        if net.outputs() != 1 {
            return Err(Error::InvalidArgument("DLS network must be scalar".into()));
        }
        if net.input_dim() < 2 {
            return Err(Error::InvalidArgument("DLS network takes (x, t)".into()));
        }
        Ok(())
    }

    pub fn workspace(&self, net: &MlpParams) -> DlsWorkspace {
        let d = net.input_dim() - 1;
        // spatial Laplacian channel, plus ∂_tt when β = 2
        let mut channel_of = vec![Some(0); d];
        channel_of.push(if self.beta == 2 { Some(1) } else { None });
        let channels = Channels::new(channel_of);
        let k = channels.count();
        DlsWorkspace {
            channels,
            tape: Tape::default(),
            cot: Cotangent::zeros(1, d + 1, k),
            input: vec![0.0; d + 1],
            grad_a: vec![0.0; d],
        }
    }

    /// Equation residual at `(x, t)`; with `grad_scale = Some((s, grad))`,
    /// adds `s · ∂(r²)/∂θ` into `grad`.
    fn point(
        &self,
        net: &MlpParams,
        ws: &mut DlsWorkspace,
        x: &[f64],
        t: f64,
        grad_scale: Option<(f64, &mut [f64])>,
    ) -> Result<f64> {
        let d = x.len();
        ws.input[..d].copy_from_slice(x);
        ws.input[d] = t;
        net.forward(&ws.input, &ws.channels, &mut ws.tape);
        let nu = self.boundary.bundle(x);
        let a = self.operator.coefficient(x, &mut ws.grad_a);
        let c = self.operator.reaction;
        let (p, p1, p2) = time_factor(self.beta, t);

        let tape = &ws.tape;
        let phi = tape.value[0];
        let phi_x = &tape.grad[..d];
        let phi_t = tape.grad[d];
        let lap_x = tape.second[0];
        let phi_tt = if self.beta == 2 { tape.second[1] } else { 0.0 };

        let u = p * nu.value * phi;
        let mut cross = 0.0;
        let mut drift = 0.0;
        for k in 0..d {
            let ux = p * (phi * nu.gradient[k] + nu.value * phi_x[k]);
            drift += ws.grad_a[k] * ux;
            cross += nu.gradient[k] * phi_x[k];
        }
        let uxx = p * (phi * nu.laplacian + 2.0 * cross + nu.value * lap_x);
        let time_term = match self.beta {
            1 => nu.value * (p1 * phi + p * phi_t),
            _ => nu.value * (p2 * phi + 2.0 * p1 * phi_t + p * phi_tt),
        };
        let (g, dg) = self.nonlinearity.as_ref().map_or((0.0, 0.0), |h| h(u));
        let r = time_term - (drift + a * uxx) + c * u + g - (self.forcing)(x, t);
        if !r.is_finite() {
            let mut location = x.to_vec();
            location.push(t);
            return Err(Error::NonFinite {
                what: "DLS residual",
                location,
            });
        }

        if let Some((scale, grad)) = grad_scale {
            let dr = 2.0 * scale * r;
            let c_u = dr * (c + dg);
            let c_uxx = -dr * a;
            let cot = &mut ws.cot;
            let mut c_phi = c_u * p * nu.value + c_uxx * p * nu.laplacian;
            for k in 0..d {
                let c_ux = -dr * ws.grad_a[k];
                c_phi += c_ux * p * nu.gradient[k];
                cot.grad[k] = c_ux * p * nu.value + 2.0 * c_uxx * p * nu.gradient[k];
            }
            cot.second[0] = c_uxx * p * nu.value;
            match self.beta {
                1 => {
                    c_phi += dr * nu.value * p1;
                    cot.grad[d] = dr * nu.value * p;
                }
                _ => {
                    c_phi += dr * nu.value * p2;
                    cot.grad[d] = dr * nu.value * 2.0 * p1;
                    cot.second[1] = dr * nu.value * p;
                }
            }
            cot.value[0] = c_phi;
            net.backward(&ws.channels, &mut ws.tape, &ws.cot, grad);
        }
        Ok(r)
    }

    /// Residual of the equation at one space-time point.
    pub fn residual(&self, net: &MlpParams, x: &[f64], t: f64) -> Result<f64> {
        self.validate(net)?;
        let mut ws = self.workspace(net);
        self.point(net, &mut ws, x, t, None)
    }

    /// Loss over points `xs` (row-major) paired with times `ts`.
    pub fn loss(&self, net: &MlpParams, xs: &[f64], ts: &[f64]) -> Result<f64> {
        self.validate(net)?;
        let mut ws = self.workspace(net);
        let d = net.input_dim() - 1;
        let mut sum = 0.0;
        for (x, &t) in xs.chunks(d).zip(ts) {
            let r = self.point(net, &mut ws, x, t, None)?;
            sum += r * r;
        }
        Ok(self.scale(ts.len())? * sum)
    }

    pub fn loss_and_grad(
        &self,
        net: &MlpParams,
        xs: &[f64],
        ts: &[f64],
        ws: &mut DlsWorkspace,
        grad: &mut Vec<f64>,
    ) -> Result<f64> {
        self.validate(net)?;
        let d = net.input_dim() - 1;
        grad.clear();
        grad.resize(net.num_params(), 0.0);
        let scale = self.scale(ts.len())?;
        let mut sum = 0.0;
        for (x, &t) in xs.chunks(d).zip(ts) {
            let r = self.point(net, ws, x, t, Some((scale, grad.as_mut_slice())))?;
            sum += r * r;
        }
        Ok(scale * sum)
    }

    fn scale(&self, q: usize) -> Result<f64> {
        if q == 0 {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        Ok(self.volume * self.interval.length() / q as f64)
    }
}

pub fn dls_loss(net: &MlpParams, spec: &DlsSpec, xs: &[f64], ts: &[f64]) -> Result<f64> {
    spec.loss(net, xs, ts)
}

/// Trained DLS approximation `t^β ν(x) φ̂(x, t)`.
#[derive(Debug, Clone)]
pub struct DlsSolution {
    pub net: MlpParams,
    pub boundary: BoundaryFactor,
    pub beta: u8,
}

impl DlsSolution {
    pub fn eval(&self, x: &[f64], t: f64) -> f64 {
        let mut input = x.to_vec();
        input.push(t);
        let (p, _, _) = time_factor(self.beta, t);
        p * self.boundary.value(x) * self.net.value(&input)
    }
}
