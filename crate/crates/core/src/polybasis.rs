//! Legendre polynomials, the temporal trial/test bases built from them, and
//! Gauss-Legendre quadrature on `[0, T]`.
//!
//! Every temporal basis function is a short linear combination of shifted
//! Legendre polynomials `L_m(2t/T - 1)`. Keeping that representation explicit
//! (see [`TemporalBasisId::legendre_terms`]) lets the same coefficients drive
//! point evaluation, derivatives and the quadrature tables used by the loss.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Points this close to the ends of `[-1, 1]` are clamped instead of rejected.
const CLAMP_TOL: f64 = 1e-12;

/// Final time of the evolution problem; the time domain is `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeInterval(f64);

impl TimeInterval {
    pub fn new(t_final: f64) -> Result<Self> {
        if t_final.is_finite() && t_final > 0.0 {
            Ok(Self(t_final))
        } else {
            Err(Error::InvalidArgument(format!(
                "final time must be positive, got {t_final}"
            )))
        }
    }

    #[inline]
    pub fn length(self) -> f64 {
        self.0
    }

    /// Maps `t` in `[0, T]` onto the reference variable `z = 2t/T - 1`.
    pub fn to_reference(self, t: f64) -> Result<f64> {
        let z = 2.0 * t / self.0 - 1.0;
        clamp_reference(z).map_err(|_| {
            Error::InvalidArgument(format!("time {t} lies outside [0, {}]", self.0))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisOrder {
    First,
    Second,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BasisKind {
    Trial,
    Test,
}

/// Identifies one of `phi_n^(1)`, `psi_n^(1)`, `phi_n^(2)`, `psi_n^(2)`.
/// Indices start at 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TemporalBasisId {
    pub order: BasisOrder,
    pub kind: BasisKind,
    pub index: usize,
}

impl TemporalBasisId {
    pub fn new(order: BasisOrder, kind: BasisKind, index: usize) -> Result<Self> {
        if index == 0 {
            return Err(Error::InvalidIndex {
                index,
                max: usize::MAX,
            });
        }
        Ok(Self { order, kind, index })
    }

    pub fn trial(order: BasisOrder, index: usize) -> Self {
        assert!(index >= 1, "basis indices start at 1");
        Self {
            order,
            kind: BasisKind::Trial,
            index,
        }
    }

    pub fn test(order: BasisOrder, index: usize) -> Self {
        assert!(index >= 1, "basis indices start at 1");
        Self {
            order,
            kind: BasisKind::Test,
            index,
        }
    }

    /// The `(degree, coefficient)` pairs with `basis(t) = sum c * L_degree(2t/T - 1)`.
    pub fn legendre_terms(&self) -> Vec<(usize, f64)> {
        let n = self.index;
        match (self.order, self.kind) {
            (BasisOrder::First, BasisKind::Trial) => vec![(n, 1.0), (n - 1, 1.0)],
            (BasisOrder::First, BasisKind::Test) => {
                if n == 1 {
                    vec![(0, 1.0)]
                } else {
                    vec![(n - 1, 1.0), (n - 2, -1.0)]
                }
            }
            (BasisOrder::Second, kind) => {
                let sign = if kind == BasisKind::Trial { 1.0 } else { -1.0 };
                if n == 1 {
                    vec![(1, 1.0), (0, sign)]
                } else {
                    let nf = n as f64;
                    vec![
                        (n, 1.0 - 1.0 / nf),
                        (n - 1, sign * (2.0 - 1.0 / nf)),
                        (n - 2, 1.0),
                    ]
                }
            }
        }
    }

    /// Highest Legendre degree appearing in the combination.
    pub fn degree(&self) -> usize {
        match (self.order, self.kind) {
            (BasisOrder::First, BasisKind::Test) => self.index - 1,
            _ => self.index,
        }
    }
}

fn clamp_reference(z: f64) -> Result<f64> {
    if !z.is_finite() || z.abs() > 1.0 + CLAMP_TOL {
        return Err(Error::OutOfRange { value: z });
    }
    Ok(z.clamp(-1.0, 1.0))
}

/// Fills `out[0..=n]` with `L_0(z) .. L_n(z)` by upward recurrence. No range check.
pub(crate) fn legendre_into(z: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    if out.len() == 1 {
        return;
    }
    out[1] = z;
    for k in 1..out.len() - 1 {
        let kf = k as f64;
        out[k + 1] = ((2.0 * kf + 1.0) * z * out[k] - kf * out[k - 1]) / (kf + 1.0);
    }
}

/// Fills `deriv` with `L_0'(z) .. L_n'(z)` given the values in `vals`.
pub(crate) fn legendre_deriv_into(vals: &[f64], deriv: &mut [f64]) {
    if deriv.is_empty() {
        return;
    }
    deriv[0] = 0.0;
    if deriv.len() == 1 {
        return;
    }
    deriv[1] = 1.0;
    // L'_{k+1} = L'_{k-1} + (2k + 1) L_k
    for k in 1..deriv.len() - 1 {
        deriv[k + 1] = deriv[k - 1] + (2.0 * k as f64 + 1.0) * vals[k];
    }
}

/// Values `L_0(z), ..., L_n(z)`.
pub fn legendre_all(n: usize, z: f64) -> Result<Vec<f64>> {
    let z = clamp_reference(z)?;
    let mut out = vec![0.0; n + 1];
    legendre_into(z, &mut out);
    Ok(out)
}

/// Derivatives `L_0'(z), ..., L_n'(z)`.
pub fn legendre_deriv_all(n: usize, z: f64) -> Result<Vec<f64>> {
    let z = clamp_reference(z)?;
    let mut vals = vec![0.0; n + 1];
    legendre_into(z, &mut vals);
    let mut deriv = vec![0.0; n + 1];
    legendre_deriv_into(&vals, &mut deriv);
    Ok(deriv)
}

fn combine(terms: &[(usize, f64)], table: &[f64]) -> f64 {
    terms.iter().map(|&(m, c)| c * table[m]).sum()
}

/// Value of a temporal basis function at `t` in `[0, T]`.
pub fn eval_basis(id: TemporalBasisId, t: f64, interval: TimeInterval) -> Result<f64> {
    if id.index == 0 {
        return Err(Error::InvalidIndex {
            index: 0,
            max: usize::MAX,
        });
    }
    let z = interval.to_reference(t)?;
    let vals = legendre_all(id.index, z)?;
    Ok(combine(&id.legendre_terms(), &vals))
}

/// Time derivative of a temporal basis function (chain-rule factor `2/T` included).
pub fn eval_basis_deriv(id: TemporalBasisId, t: f64, interval: TimeInterval) -> Result<f64> {
    if id.index == 0 {
        return Err(Error::InvalidIndex {
            index: 0,
            max: usize::MAX,
        });
    }
    let z = interval.to_reference(t)?;
    let deriv = legendre_deriv_all(id.index, z)?;
    Ok(2.0 / interval.length() * combine(&id.legendre_terms(), &deriv))
}

/// All basis functions `1..=n` of one family evaluated at a single time,
/// returned as `(values, time derivatives)`.
pub fn basis_family_at(
    order: BasisOrder,
    kind: BasisKind,
    n: usize,
    t: f64,
    interval: TimeInterval,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let z = interval.to_reference(t)?;
    let mut vals = vec![0.0; n + 1];
    legendre_into(z, &mut vals);
    let mut deriv = vec![0.0; n + 1];
    legendre_deriv_into(&vals, &mut deriv);
    let scale = 2.0 / interval.length();
    let mut v = Vec::with_capacity(n);
    let mut dv = Vec::with_capacity(n);
    for index in 1..=n {
        let terms = TemporalBasisId {
            order,
            kind,
            index,
        }
        .legendre_terms();
        v.push(combine(&terms, &vals));
        dv.push(scale * combine(&terms, &deriv));
    }
    Ok((v, dv))
}

/// Gauss-Legendre nodes and weights on `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    interval: TimeInterval,
}

impl QuadratureRule {
    /// `points`-node Gauss-Legendre rule, exact for degree `2 * points - 1`.
    pub fn gauss_legendre(points: usize, interval: TimeInterval) -> Self {
        assert!(points >= 1, "quadrature needs at least one node");
        let (z, w) = reference_gauss_legendre(points);
        let half = interval.length() / 2.0;
        Self {
            nodes: z.iter().map(|&zi| half * (zi + 1.0)).collect(),
            weights: w.iter().map(|&wi| half * wi).collect(),
            interval,
        }
    }

    /// Node count used for time projections of non-polynomial data with `n`
    /// basis functions: `max(2n + 16, 64)`.
    pub fn default_points(n: usize) -> usize {
        (2 * n + 16).max(64)
    }

    pub fn interval(&self) -> TimeInterval {
        self.interval
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Polynomial degree integrated exactly.
    pub fn exact_degree(&self) -> usize {
        2 * self.nodes.len() - 1
    }

    pub fn integrate(&self, mut g: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&t, &w)| w * g(t))
            .sum()
    }
}

/// Rule on `[0, T]` exact for polynomials up to `degree`.
pub fn gauss_quadrature(degree: usize, interval: TimeInterval) -> QuadratureRule {
    let degree = degree.max(1);
    QuadratureRule::gauss_legendre(degree / 2 + 1, interval)
}

/// Nodes (ascending) and weights on `[-1, 1]` via Newton iteration on `L_n`.
pub(crate) fn reference_gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 1..n {
                let kf = k as f64;
                let p2 = ((2.0 * kf + 1.0) * z * p1 - kf * p0) / (kf + 1.0);
                p0 = p1;
                p1 = p2;
            }
            let (p, pm1) = if n == 1 { (z, 1.0) } else { (p1, p0) };
            dp = nf * (z * p - pm1) / (z * z - 1.0);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        if n == 1 {
            z = 0.0;
            dp = 1.0;
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Quadrature approximation of `∫_0^T g(t) basis(t) dt`.
pub fn time_inner_product(
    mut g: impl FnMut(f64) -> f64,
    id: TemporalBasisId,
    rule: &QuadratureRule,
) -> Result<f64> {
    let terms = id.legendre_terms();
    let mut vals = vec![0.0; id.index + 1];
    let interval = rule.interval();
    let mut acc = 0.0;
    for (&t, &w) in rule.nodes.iter().zip(&rule.weights) {
        legendre_into(interval.to_reference(t)?, &mut vals);
        acc += w * g(t) * combine(&terms, &vals);
    }
    Ok(acc)
}

/// Coefficients `g_n = (2n+1)/T ∫ g L_n(2t/T - 1) dt`, `n = 0..=n_max`, of the
/// L2-orthogonal projection onto polynomials of degree `n_max`.
pub fn project_time(g: impl FnMut(f64) -> f64, n_max: usize, interval: TimeInterval) -> Vec<f64> {
    let rule = QuadratureRule::gauss_legendre(QuadratureRule::default_points(n_max), interval);
    project_time_with(g, n_max, &rule)
}

pub fn project_time_with(
    mut g: impl FnMut(f64) -> f64,
    n_max: usize,
    rule: &QuadratureRule,
) -> Vec<f64> {
    let interval = rule.interval();
    let mut coeffs = vec![0.0; n_max + 1];
    let mut vals = vec![0.0; n_max + 1];
    for (&t, &w) in rule.nodes.iter().zip(&rule.weights) {
        let z = 2.0 * t / interval.length() - 1.0;
        legendre_into(z, &mut vals);
        let gt = g(t);
        for (c, &l) in coeffs.iter_mut().zip(&vals) {
            *c += w * gt * l;
        }
    }
    for (n, c) in coeffs.iter_mut().enumerate() {
        *c *= (2 * n + 1) as f64 / interval.length();
    }
    coeffs
}

/// Evaluates `sum_n coeffs[n] L_n(2t/T - 1)`.
pub fn reconstruct(coeffs: &[f64], t: f64, interval: TimeInterval) -> Result<f64> {
    if coeffs.is_empty() {
        return Ok(0.0);
    }
    let z = interval.to_reference(t)?;
    let mut vals = vec![0.0; coeffs.len()];
    legendre_into(z, &mut vals);
    Ok(coeffs.iter().zip(&vals).map(|(c, l)| c * l).sum())
}
