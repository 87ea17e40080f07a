//! Fully-connected networks `x -> a^T h_{L-1}(... h_1(x))` with exact input
//! derivatives.
//!
//! The forward pass carries, per hidden unit, the value, the Jacobian row with
//! respect to the input and one or more "second-order channels": sums of
//! diagonal Hessian entries over disjoint groups of input coordinates (the
//! full Laplacian for spatial networks, or separate spatial/temporal traces
//! for space-time networks). The backward pass propagates cotangents on all
//! of these back to the parameters.

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Tanh,
    Softplus,
    Arctan,
}

impl Activation {
    /// `(σ, σ', σ'', σ''')` at `z`.
    #[inline]
    pub fn derivatives(self, z: f64) -> (f64, f64, f64, f64) {
        match self {
            Activation::Sigmoid => {
                let s = sigmoid(z);
                let d1 = s * (1.0 - s);
                (s, d1, d1 * (1.0 - 2.0 * s), d1 * (1.0 - 6.0 * s + 6.0 * s * s))
            }
            Activation::Tanh => {
                let t = z.tanh();
                let d1 = 1.0 - t * t;
                (t, d1, -2.0 * t * d1, d1 * (6.0 * t * t - 2.0))
            }
            Activation::Softplus => {
                let s = sigmoid(z);
                let d2 = s * (1.0 - s);
                let value = if z > 30.0 { z } else { z.exp().ln_1p() };
                (value, s, d2, d2 * (1.0 - 2.0 * s))
            }
            Activation::Arctan => {
                let q = 1.0 / (1.0 + z * z);
                (z.atan(), q, -2.0 * z * q * q, (6.0 * z * z - 2.0) * q * q * q)
            }
        }
    }

    #[inline]
    pub fn value(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(z),
            Activation::Tanh => z.tanh(),
            Activation::Softplus => {
                if z > 30.0 {
                    z
                } else {
                    z.exp().ln_1p()
                }
            }
            Activation::Arctan => z.atan(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Softplus => "softplus",
            Activation::Arctan => "arctan",
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            "softplus" => Ok(Activation::Softplus),
            "arctan" | "atan" => Ok(Activation::Arctan),
            other => Err(Error::InvalidArgument(format!("unknown activation '{other}'"))),
        }
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four independent partial sums so the loop vectorizes
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Network architecture, independent of parameter values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpShape {
    pub input_dim: usize,
    /// Hidden widths `M_1 .. M_{L-1}`; depth is `widths.len() + 1`.
    pub widths: Vec<usize>,
    pub outputs: usize,
    pub activation: Activation,
}

impl MlpShape {
    pub fn new(input_dim: usize, width: usize, depth: usize, activation: Activation) -> Self {
        Self {
            input_dim,
            widths: vec![width; depth.saturating_sub(1)],
            outputs: 1,
            activation,
        }
    }

    pub fn with_outputs(mut self, outputs: usize) -> Self {
        self.outputs = outputs;
        self
    }

    pub fn depth(&self) -> usize {
        self.widths.len() + 1
    }

    pub fn max_width(&self) -> usize {
        self.widths.iter().copied().max().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.outputs == 0 {
            return Err(Error::InvalidArgument(
                "network needs at least one input and one output".into(),
            ));
        }
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(Error::InvalidArgument(
                "network depth must be >= 2 with nonzero widths".into(),
            ));
        }
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        let mut prev = self.input_dim;
        let mut total = 0;
        for &m in &self.widths {
            total += m * prev + m;
            prev = m;
        }
        total + self.outputs * prev
    }

    fn layout(&self) -> (Vec<LayerSlot>, usize) {
        let mut prev = self.input_dim;
        let mut offset = 0;
        let mut slots = Vec::with_capacity(self.widths.len());
        for &m in &self.widths {
            slots.push(LayerSlot {
                w: offset,
                b: offset + m * prev,
                rows: m,
                cols: prev,
            });
            offset += m * prev + m;
            prev = m;
        }
        (slots, offset)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct LayerSlot {
    w: usize,
    b: usize,
    rows: usize,
    cols: usize,
}

/// Parameters of one network: per hidden layer a row-major weight matrix
/// followed by its bias, then the row-major output matrix (outputs x M_{L-1}).
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    shape: MlpShape,
    seed: u64,
    data: Vec<f64>,
    slots: Vec<LayerSlot>,
    out_offset: usize,
}

impl MlpParams {
    pub fn from_flat(shape: MlpShape, seed: u64, data: Vec<f64>) -> Result<Self> {
        shape.validate()?;
        if data.len() != shape.num_params() {
            return Err(Error::InvalidArgument(format!(
                "expected {} parameters, got {}",
                shape.num_params(),
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite parameter".into()));
        }
        let (slots, out_offset) = shape.layout();
        Ok(Self {
            shape,
            seed,
            data,
            slots,
            out_offset,
        })
    }

    /// All parameters drawn independently from `U(-bound, bound)`.
    pub fn uniform(shape: MlpShape, seed: u64, bound: f64) -> Result<Self> {
        shape.validate()?;
        if !(bound.is_finite() && bound > 0.0) {
            return Err(Error::InvalidArgument(format!("bad init bound {bound}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = Uniform::new_inclusive(-bound, bound);
        let data = (0..shape.num_params()).map(|_| dist.sample(&mut rng)).collect();
        Self::from_flat(shape, seed, data)
    }

    pub fn zeros(shape: MlpShape) -> Result<Self> {
        let n = shape.num_params();
        Self::from_flat(shape, 0, vec![0.0; n])
    }

    pub fn shape(&self) -> &MlpShape {
        &self.shape
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn input_dim(&self) -> usize {
        self.shape.input_dim
    }

    pub fn outputs(&self) -> usize {
        self.shape.outputs
    }

    pub fn num_params(&self) -> usize {
        self.data.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    fn weights(&self, l: usize) -> &[f64] {
        let s = self.slots[l];
        &self.data[s.w..s.w + s.rows * s.cols]
    }

    fn bias(&self, l: usize) -> &[f64] {
        let s = self.slots[l];
        &self.data[s.b..s.b + s.rows]
    }

    fn output_row(&self, o: usize) -> &[f64] {
        let m = *self.shape.widths.last().unwrap();
        &self.data[self.out_offset + o * m..self.out_offset + (o + 1) * m]
    }

    /// Output values only (no derivatives).
    pub fn forward_values(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.shape.input_dim);
        let act = self.shape.activation;
        let mut h: Vec<f64> = x.to_vec();
        for l in 0..self.slots.len() {
            let s = self.slots[l];
            let w = self.weights(l);
            let b = self.bias(l);
            let next: Vec<f64> = (0..s.rows)
                .map(|i| act.value(b[i] + dot(&w[i * s.cols..(i + 1) * s.cols], &h)))
                .collect();
            h = next;
        }
        for (o, slot) in out.iter_mut().enumerate().take(self.shape.outputs) {
            *slot = dot(self.output_row(o), &h);
        }
    }

    /// Value of output 0.
    pub fn value(&self, x: &[f64]) -> f64 {
        let mut out = vec![0.0; self.shape.outputs];
        self.forward_values(x, &mut out);
        out[0]
    }

    /// Forward pass recording everything the backward pass needs.
    pub fn forward(&self, x: &[f64], channels: &Channels, tape: &mut Tape) {
        let d = self.shape.input_dim;
        debug_assert_eq!(x.len(), d);
        debug_assert_eq!(channels.input_dim(), d);
        let kc = channels.count();
        let nc = 1 + d + kc;
        tape.prepare(&self.shape, kc);
        tape.input.clear();
        tape.input.extend_from_slice(x);
        let act = self.shape.activation;

        for l in 0..self.slots.len() {
            let s = self.slots[l];
            let m = s.rows;
            let w = self.weights(l);
            let b = self.bias(l);
            let (before, rest) = tape.layers.split_at_mut(l);
            let cur = &mut rest[0];
            if l == 0 {
                for i in 0..m {
                    let row = &w[i * d..(i + 1) * d];
                    cur.zx[i] = b[i] + dot(row, x);
                    for k in 0..d {
                        cur.zx[(1 + k) * m + i] = row[k];
                    }
                }
                cur.zx[(1 + d) * m..].iter_mut().for_each(|v| *v = 0.0);
            } else {
                let prev = &before[l - 1];
                gemm(
                    (m, s.cols, nc),
                    (w, s.cols, 1),
                    (&prev.hx, 1, s.cols),
                    0.0,
                    (&mut cur.zx, 1, m),
                );
                for i in 0..m {
                    cur.zx[i] += b[i];
                }
            }
            for i in 0..m {
                let (v, d1, d2, d3) = act.derivatives(cur.zx[i]);
                cur.hx[i] = v;
                cur.s1[i] = d1;
                cur.s2[i] = d2;
                cur.s3[i] = d3;
                for c in 0..kc {
                    cur.sq[c * m + i] = 0.0;
                }
                for k in 0..d {
                    let gzk = cur.zx[(1 + k) * m + i];
                    cur.hx[(1 + k) * m + i] = d1 * gzk;
                    if let Some(c) = channels.channel_of[k] {
                        cur.sq[c * m + i] += gzk * gzk;
                    }
                }
                for c in 0..kc {
                    let lz = cur.zx[(1 + d + c) * m + i];
                    cur.hx[(1 + d + c) * m + i] = d2 * cur.sq[c * m + i] + d1 * lz;
                }
            }
        }

        let last = tape.layers.last().unwrap();
        let m = last.s1.len();
        for o in 0..self.shape.outputs {
            let a = self.output_row(o);
            tape.value[o] = dot(a, &last.hx[..m]);
            for k in 0..d {
                tape.grad[o * d + k] = dot(a, &last.hx[(1 + k) * m..(2 + k) * m]);
            }
            for c in 0..kc {
                tape.second[o * kc + c] = dot(a, &last.hx[(1 + d + c) * m..(2 + d + c) * m]);
            }
        }
    }

    /// Accumulates into `grad` the parameter gradient of
    /// `sum_o cot.value[o] * value_o + cot.grad[o] . grad_o + cot.second[o] . second_o`
    /// at the point recorded in `tape`.
    pub fn backward(&self, channels: &Channels, tape: &mut Tape, cot: &Cotangent, grad: &mut [f64]) {
        let d = self.shape.input_dim;
        let kc = channels.count();
        let nc = 1 + d + kc;
        let nl = self.slots.len();
        debug_assert_eq!(grad.len(), self.data.len());
        let m_last = self.slots[nl - 1].rows;

        {
            let last = &tape.layers[nl - 1];
            let hbar = &mut tape.bars[nl - 1].hbar;
            hbar.iter_mut().for_each(|v| *v = 0.0);
            for o in 0..self.shape.outputs {
                let a = self.output_row(o);
                let abar = &mut grad[self.out_offset + o * m_last..self.out_offset + (o + 1) * m_last];
                let weights = std::iter::once(cot.value[o])
                    .chain(cot.grad[o * d..(o + 1) * d].iter().copied())
                    .chain(cot.second[o * kc..(o + 1) * kc].iter().copied());
                for (c, wc) in weights.enumerate() {
                    if wc != 0.0 {
                        axpy(wc, &last.hx[c * m_last..(c + 1) * m_last], abar);
                        axpy(wc, a, &mut hbar[c * m_last..(c + 1) * m_last]);
                    }
                }
            }
        }

        for l in (0..nl).rev() {
            let s = self.slots[l];
            let m = s.rows;
            let cur = &tape.layers[l];
            let (bars_before, bars_rest) = tape.bars.split_at_mut(l);
            let bar = &mut bars_rest[0];
            let (hb, zb) = (&bar.hbar, &mut bar.zbar);

            for i in 0..m {
                let (s1, s2, s3) = (cur.s1[i], cur.s2[i], cur.s3[i]);
                let mut zbar = hb[i] * s1;
                for k in 0..d {
                    zbar += s2 * hb[(1 + k) * m + i] * cur.zx[(1 + k) * m + i];
                }
                for c in 0..kc {
                    let lb = hb[(1 + d + c) * m + i];
                    zbar += lb * (s3 * cur.sq[c * m + i] + s2 * cur.zx[(1 + d + c) * m + i]);
                    zb[(1 + d + c) * m + i] = lb * s1;
                }
                for k in 0..d {
                    let mut gzb = hb[(1 + k) * m + i] * s1;
                    if let Some(c) = channels.channel_of[k] {
                        gzb += 2.0 * s2 * hb[(1 + d + c) * m + i] * cur.zx[(1 + k) * m + i];
                    }
                    zb[(1 + k) * m + i] = gzb;
                }
                zb[i] = zbar;
            }

            for i in 0..m {
                grad[s.b + i] += zb[i];
            }
            let gw = &mut grad[s.w..s.w + m * s.cols];
            if l == 0 {
                let x = &tape.input;
                for i in 0..m {
                    let row = &mut gw[i * d..(i + 1) * d];
                    let z0 = zb[i];
                    for k in 0..d {
                        row[k] += z0 * x[k] + zb[(1 + k) * m + i];
                    }
                }
            } else {
                let mp = s.cols;
                let prev = &tape.layers[l - 1];
                // dW += Zbar · Hprevᵀ
                gemm((m, nc, mp), (zb, 1, m), (&prev.hx, mp, 1), 1.0, (gw, mp, 1));
                // Hbar_prev = Wᵀ · Zbar
                let w = self.weights(l);
                gemm(
                    (mp, m, nc),
                    (w, 1, mp),
                    (zb, 1, m),
                    0.0,
                    (&mut bars_before[l - 1].hbar, 1, mp),
                );
            }
        }
    }
}

/// `C = A·B + beta·C` with explicit (row, column) strides; dims are `(m, k, n)`.
fn gemm(
    (m, k, n): (usize, usize, usize),
    (a, rsa, csa): (&[f64], usize, usize),
    (b, rsb, csb): (&[f64], usize, usize),
    beta: f64,
    (c, rsc, csc): (&mut [f64], usize, usize),
) {
    let last = |rs: usize, cs: usize, r: usize, cc: usize| (r - 1) * rs + (cc - 1) * cs;
    assert!(m > 0 && k > 0 && n > 0);
    assert!(last(rsa, csa, m, k) < a.len());
    assert!(last(rsb, csb, k, n) < b.len());
    assert!(last(rsc, csc, m, n) < c.len());
    // SAFETY: the asserts above keep every strided access in bounds, and `c`
    // is a unique borrow that cannot alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

/// Assignment of input coordinates to second-derivative channels. Channel
/// `c` of a bundle holds `sum_{k : channel_of[k] = c} ∂²/∂x_k²`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Channels {
    channel_of: Vec<Option<usize>>,
    count: usize,
}

impl Channels {
    /// One channel holding the full Laplacian.
    pub fn laplacian(dim: usize) -> Self {
        Self {
            channel_of: vec![Some(0); dim],
            count: 1,
        }
    }

    pub fn new(channel_of: Vec<Option<usize>>) -> Self {
        let count = channel_of.iter().flatten().map(|c| c + 1).max().unwrap_or(0);
        Self { channel_of, count }
    }

    pub fn input_dim(&self) -> usize {
        self.channel_of.len()
    }

    pub fn count(&self) -> usize {
        self.count
    }
}

/// Cotangents on the outputs of [`MlpParams::forward`].
#[derive(Debug, Clone, Default)]
pub struct Cotangent {
    /// `[outputs]`
    pub value: Vec<f64>,
    /// `[outputs * input_dim]`
    pub grad: Vec<f64>,
    /// `[outputs * channels]`
    pub second: Vec<f64>,
}

impl Cotangent {
    pub fn zeros(outputs: usize, input_dim: usize, channels: usize) -> Self {
        Self {
            value: vec![0.0; outputs],
            grad: vec![0.0; outputs * input_dim],
            second: vec![0.0; outputs * channels],
        }
    }

    pub fn clear(&mut self) {
        self.value.iter_mut().for_each(|v| *v = 0.0);
        self.grad.iter_mut().for_each(|v| *v = 0.0);
        self.second.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// Per-layer record. `zx` and `hx` stack, channel-major (`[c * M + i]`), the
/// pre-activation / activation value (c = 0), input gradient (c = 1..=d) and
/// second-derivative channels (c > d).
#[derive(Debug, Clone, Default)]
struct LayerTape {
    zx: Vec<f64>,
    hx: Vec<f64>,
    s1: Vec<f64>,
    s2: Vec<f64>,
    s3: Vec<f64>,
    /// `[c * M + i]`: squared input gradients summed per channel
    sq: Vec<f64>,
}

/// Cotangents with the same layout as [`LayerTape`].
#[derive(Debug, Clone, Default)]
struct LayerBars {
    hbar: Vec<f64>,
    zbar: Vec<f64>,
}

/// Reusable per-point record of a forward pass, and its outputs.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    layers: Vec<LayerTape>,
    bars: Vec<LayerBars>,
    input: Vec<f64>,
    /// `[outputs]`
    pub value: Vec<f64>,
    /// `[outputs * input_dim]`
    pub grad: Vec<f64>,
    /// `[outputs * channels]`
    pub second: Vec<f64>,
}

impl Tape {
    fn prepare(&mut self, shape: &MlpShape, kc: usize) {
        let d = shape.input_dim;
        let nc = 1 + d + kc;
        let fits = self.layers.len() == shape.widths.len()
            && self
                .layers
                .iter()
                .zip(&shape.widths)
                .all(|(l, &m)| l.s1.len() == m && l.zx.len() == m * nc)
            && self.value.len() == shape.outputs
            && self.grad.len() == shape.outputs * d
            && self.second.len() == shape.outputs * kc;
        if fits {
            return;
        }
        self.layers = shape
            .widths
            .iter()
            .map(|&m| LayerTape {
                zx: vec![0.0; m * nc],
                hx: vec![0.0; m * nc],
                s1: vec![0.0; m],
                s2: vec![0.0; m],
                s3: vec![0.0; m],
                sq: vec![0.0; m * kc],
            })
            .collect();
        self.bars = shape
            .widths
            .iter()
            .map(|&m| LayerBars {
                hbar: vec![0.0; m * nc],
                zbar: vec![0.0; m * nc],
            })
            .collect();
        self.value = vec![0.0; shape.outputs];
        self.grad = vec![0.0; shape.outputs * d];
        self.second = vec![0.0; shape.outputs * kc];
    }
}

/// Value, input gradient and Laplacian of a scalar field at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalBundle {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub laplacian: f64,
}

impl EvalBundle {
    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
            && self.laplacian.is_finite()
            && self.gradient.iter().all(|g| g.is_finite())
    }
}

/// Parameters for a scalar network of depth `depth` and width `width`, all
/// entries drawn from `U(-√M, √M)`.
pub fn init_params(
    seed: u64,
    input_dim: usize,
    width: usize,
    depth: usize,
    activation: Activation,
) -> Result<MlpParams> {
    let shape = MlpShape::new(input_dim, width, depth, activation);
    MlpParams::uniform(shape, seed, (width as f64).sqrt())
}

/// Value, gradient and Laplacian (w.r.t. the input) of every output.
pub fn mlp_bundles(params: &MlpParams, x: &[f64]) -> Vec<EvalBundle> {
    let d = params.input_dim();
    let channels = Channels::laplacian(d);
    let mut tape = Tape::default();
    params.forward(x, &channels, &mut tape);
    (0..params.outputs())
        .map(|o| EvalBundle {
            value: tape.value[o],
            gradient: tape.grad[o * d..(o + 1) * d].to_vec(),
            laplacian: tape.second[o],
        })
        .collect()
}

/// Bundle of output 0.
pub fn mlp_bundle(params: &MlpParams, x: &[f64]) -> EvalBundle {
    mlp_bundles(params, x).swap_remove(0)
}

/// Flat copy of all parameters.
pub fn param_flatten(params: &MlpParams) -> Vec<f64> {
    params.as_slice().to_vec()
}

/// Rebuilds parameters of the given architecture from a flat vector.
pub fn param_unflatten(shape: &MlpShape, seed: u64, flat: Vec<f64>) -> Result<MlpParams> {
    MlpParams::from_flat(shape.clone(), seed, flat)
}

/// `params - step * direction`, elementwise, as a new value.
pub fn param_apply_update(params: &MlpParams, direction: &[f64], step: f64) -> Result<MlpParams> {
    if direction.len() != params.num_params() {
        return Err(Error::InvalidArgument(format!(
            "direction has {} entries, network has {}",
            direction.len(),
            params.num_params()
        )));
    }
    let data = params
        .as_slice()
        .iter()
        .zip(direction)
        .map(|(p, g)| p - step * g)
        .collect();
    MlpParams::from_flat(params.shape.clone(), params.seed, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn single_neuron(a: f64, w: &[f64], b: f64) -> MlpParams {
        let shape = MlpShape::new(w.len(), 1, 2, Activation::Sigmoid);
        let mut data = w.to_vec();
        data.push(b);
        data.push(a);
        MlpParams::from_flat(shape, 0, data).unwrap()
    }

    fn fd_bundle(p: &MlpParams, x: &[f64], h: f64) -> (Vec<f64>, f64) {
        let d = x.len();
        let f0 = p.value(x);
        let mut grad = vec![0.0; d];
        let mut lap = 0.0;
        for k in 0..d {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[k] += h;
            xm[k] -= h;
            let (fp, fm) = (p.value(&xp), p.value(&xm));
            grad[k] = (fp - fm) / (2.0 * h);
            lap += (fp - 2.0 * f0 + fm) / (h * h);
        }
        (grad, lap)
    }

    #[test]
    fn single_neuron_at_origin() {
        let p = single_neuron(1.0, &[1.0, 0.0], 0.0);
        let b = mlp_bundle(&p, &[0.0, 0.0]);
        assert_relative_eq!(b.value, 0.5);
        assert_relative_eq!(b.gradient[0], 0.25);
        assert_eq!(b.gradient[1], 0.0);
        assert!(b.laplacian.abs() < 1e-16);
    }

    #[test]
    fn single_neuron_laplacian() {
        let p = single_neuron(2.0, &[3.0], 0.0);
        let b = mlp_bundle(&p, &[0.1]);
        let (_, _, d2, _) = Activation::Sigmoid.derivatives(0.3);
        assert_relative_eq!(b.laplacian, 2.0 * d2 * 9.0, max_relative = 1e-14);
        let (_, lap) = fd_bundle(&p, &[0.1], 1e-4);
        assert_relative_eq!(b.laplacian, lap, max_relative = 1e-5);
    }

    #[test]
    fn zero_weights_give_constant() {
        let shape = MlpShape::new(3, 4, 3, Activation::Sigmoid);
        let mut p = MlpParams::zeros(shape).unwrap();
        // output weights 1 → value = 4 σ(0)
        let n = p.num_params();
        for v in &mut p.as_mut_slice()[n - 4..] {
            *v = 1.0;
        }
        let b = mlp_bundle(&p, &[0.3, -0.2, 0.9]);
        assert_relative_eq!(b.value, 2.0);
        assert!(b.gradient.iter().all(|g| *g == 0.0));
        assert_eq!(b.laplacian, 0.0);
    }

    #[test]
    fn activation_derivatives_match_fd() {
        for act in [
            Activation::Sigmoid,
            Activation::Tanh,
            Activation::Softplus,
            Activation::Arctan,
        ] {
            for &z in &[-2.3, -0.4, 0.0, 0.7, 3.1] {
                let h = 1e-5;
                let (v, d1, d2, d3) = act.derivatives(z);
                let (vp, d1p, d2p, _) = act.derivatives(z + h);
                let (vm, d1m, d2m, _) = act.derivatives(z - h);
                assert_relative_eq!(v, act.value(z), max_relative = 1e-14);
                assert_relative_eq!(d1, (vp - vm) / (2.0 * h), epsilon = 1e-8);
                assert_relative_eq!(d2, (d1p - d1m) / (2.0 * h), epsilon = 1e-8);
                assert_relative_eq!(d3, (d2p - d2m) / (2.0 * h), epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = init_params(7, 2, 20, 3, Activation::Sigmoid).unwrap();
        let b = init_params(7, 2, 20, 3, Activation::Sigmoid).unwrap();
        let c = init_params(8, 2, 20, 3, Activation::Sigmoid).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.as_slice(), c.as_slice());
        let bound = 20f64.sqrt();
        assert!(a.as_slice().iter().all(|v| v.abs() <= bound));
        assert_eq!(a.num_params(), 2 * 20 + 20 + 20 * 20 + 20 + 20);
    }

    #[test]
    fn flatten_and_update() {
        let p = init_params(1, 3, 5, 4, Activation::Tanh).unwrap();
        let flat = param_flatten(&p);
        let q = param_unflatten(p.shape(), p.seed(), flat.clone()).unwrap();
        assert_eq!(p, q);
        let dir: Vec<f64> = (0..flat.len()).map(|i| (i as f64).sin()).collect();
        assert_eq!(param_apply_update(&p, &dir, 0.0).unwrap(), p);
        let twice = param_apply_update(&param_apply_update(&p, &dir, 0.25).unwrap(), &dir, 0.25)
            .unwrap();
        let once = param_apply_update(&p, &dir, 0.5).unwrap();
        for (a, b) in twice.as_slice().iter().zip(once.as_slice()) {
            assert_relative_eq!(a, b, epsilon = 1e-14);
        }
        assert!(param_apply_update(&p, &dir[1..], 1.0).is_err());
    }

    #[test]
    fn multi_output_matches_separate_rows() {
        let shape = MlpShape::new(2, 6, 3, Activation::Sigmoid).with_outputs(3);
        let p = MlpParams::uniform(shape, 3, 1.0).unwrap();
        let bundles = mlp_bundles(&p, &[0.2, -0.5]);
        assert_eq!(bundles.len(), 3);
        let mut vals = vec![0.0; 3];
        p.forward_values(&[0.2, -0.5], &mut vals);
        for (b, v) in bundles.iter().zip(&vals) {
            assert_relative_eq!(b.value, v, max_relative = 1e-14);
        }
    }

    #[test]
    fn backward_matches_parameter_fd_with_two_channels() {
        let shape = MlpShape::new(3, 5, 4, Activation::Tanh).with_outputs(2);
        let p = MlpParams::uniform(shape, 11, 0.9).unwrap();
        let channels = Channels::new(vec![Some(0), Some(0), Some(1)]);
        let x = [0.3, -0.7, 0.45];
        let mut cot = Cotangent::zeros(2, 3, 2);
        cot.value.copy_from_slice(&[0.7, -1.2]);
        cot.grad.copy_from_slice(&[0.1, 0.5, -0.3, 0.9, 0.2, 0.4]);
        cot.second.copy_from_slice(&[1.1, -0.6, 0.25, 0.8]);
        let objective = |q: &MlpParams| {
            let mut tape = Tape::default();
            q.forward(&x, &channels, &mut tape);
            let mut s = 0.0;
            for o in 0..2 {
                s += cot.value[o] * tape.value[o];
                for k in 0..3 {
                    s += cot.grad[o * 3 + k] * tape.grad[o * 3 + k];
                }
                for c in 0..2 {
                    s += cot.second[o * 2 + c] * tape.second[o * 2 + c];
                }
            }
            s
        };
        let mut tape = Tape::default();
        p.forward(&x, &channels, &mut tape);
        let mut grad = vec![0.0; p.num_params()];
        p.backward(&channels, &mut tape, &cot, &mut grad);
        let h = 1e-6;
        for i in 0..p.num_params() {
            let mut plus = p.clone();
            plus.as_mut_slice()[i] += h;
            let mut minus = p.clone();
            minus.as_mut_slice()[i] -= h;
            let fd = (objective(&plus) - objective(&minus)) / (2.0 * h);
            assert!(
                (fd - grad[i]).abs() <= 1e-6 * fd.abs().max(1.0),
                "param {i}: fd {fd} vs {}",
                grad[i]
            );
        }
    }

    #[test]
    fn split_channels_sum_to_laplacian() {
        let shape = MlpShape::new(4, 7, 3, Activation::Sigmoid);
        let p = MlpParams::uniform(shape, 5, 2.0).unwrap();
        let x = [0.1, 0.2, -0.3, 0.6];
        let full = mlp_bundle(&p, &x);
        let split = Channels::new(vec![Some(0), Some(1), Some(0), Some(1)]);
        let mut tape = Tape::default();
        p.forward(&x, &split, &mut tape);
        assert_relative_eq!(
            tape.second[0] + tape.second[1],
            full.laplacian,
            max_relative = 1e-12
        );
        let (grad, lap) = fd_bundle(&p, &x, 1e-4);
        for k in 0..4 {
            assert_relative_eq!(full.gradient[k], grad[k], max_relative = 1e-6);
        }
        assert_relative_eq!(full.laplacian, lap, max_relative = 1e-5);
    }
}
