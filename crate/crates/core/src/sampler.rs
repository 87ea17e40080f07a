//! Halton sequences, mapping onto the spatial domains, and test sets.

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Ball dimensions above this use the radial map instead of rejection.
pub const MAX_REJECTION_DIM: usize = 6;

const MAX_MISSES: usize = 1_000_000;

/// The first `count` primes.
pub fn first_primes(count: usize) -> Vec<u32> {
    let mut primes: Vec<u32> = Vec::with_capacity(count);
    let mut candidate = 2u32;
    while primes.len() < count {
        if primes
            .iter()
            .take_while(|&&p| p * p <= candidate)
            .all(|&p| candidate % p != 0)
        {
            primes.push(candidate);
        }
        candidate += 1;
    }
    primes
}

/// Van der Corput radical inverse of `index` in `base`.
pub fn radical_inverse(mut index: u64, base: u32) -> f64 {
    let b = base as u64;
    let inv = 1.0 / base as f64;
    let mut scale = inv;
    let mut out = 0.0;
    while index > 0 {
        out += (index % b) as f64 * scale;
        index /= b;
        scale *= inv;
    }
    out
}

/// Position in a Halton sequence. A plain value: copying it forks the stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HaltonState {
    bases: Vec<u32>,
    next_index: u64,
}

impl HaltonState {
    pub fn new(dim: usize) -> Self {
        Self::starting_at(dim, 1)
    }

    pub fn starting_at(dim: usize, index: u64) -> Self {
        assert!(dim >= 1, "Halton dimension must be positive");
        Self {
            bases: first_primes(dim),
            next_index: index.max(1),
        }
    }

    pub fn dim(&self) -> usize {
        self.bases.len()
    }

    pub fn next_index(&self) -> u64 {
        self.next_index
    }

    pub fn bases(&self) -> &[u32] {
        &self.bases
    }

    pub fn next_into(&mut self, out: &mut [f64]) {
        for (o, &b) in out.iter_mut().zip(&self.bases) {
            *o = radical_inverse(self.next_index, b);
        }
        self.next_index += 1;
    }

    /// `count` consecutive points, row-major (`count x dim`).
    pub fn take(&mut self, count: usize) -> Vec<f64> {
        let d = self.dim();
        let mut out = vec![0.0; count * d];
        for row in out.chunks_mut(d) {
            self.next_into(row);
        }
        out
    }
}

/// Functional form: the block and the advanced state.
pub fn halton_block(state: &HaltonState, count: usize) -> (Vec<f64>, HaltonState) {
    let mut next = state.clone();
    let points = next.take(count);
    (points, next)
}

#[derive(Debug, Clone, PartialEq)]
pub enum DomainSpec {
    Box { lower: Vec<f64>, upper: Vec<f64> },
    UnitBall { dim: usize },
}

impl DomainSpec {
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Self {
        DomainSpec::Box {
            lower: vec![lo; dim],
            upper: vec![hi; dim],
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DomainSpec::Box { lower, upper } => {
                if lower.is_empty() || lower.len() != upper.len() {
                    return Err(Error::InvalidArgument("box bounds mismatch".into()));
                }
                if lower.iter().zip(upper).any(|(a, b)| !(a < b)) {
                    return Err(Error::InvalidArgument("box needs lower < upper".into()));
                }
                Ok(())
            }
            DomainSpec::UnitBall { dim } if *dim >= 1 => Ok(()),
            DomainSpec::UnitBall { .. } => {
                Err(Error::InvalidArgument("ball dimension must be >= 1".into()))
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DomainSpec::Box { lower, .. } => lower.len(),
            DomainSpec::UnitBall { dim } => *dim,
        }
    }

    /// Lebesgue measure |Ω|.
    pub fn volume(&self) -> f64 {
        match self {
            DomainSpec::Box { lower, upper } => {
                lower.iter().zip(upper).map(|(a, b)| b - a).product()
            }
            DomainSpec::UnitBall { dim } => unit_ball_volume(*dim),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            DomainSpec::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(v, (a, b))| *a < *v && *v < *b),
            DomainSpec::UnitBall { .. } => x.iter().map(|v| v * v).sum::<f64>() < 1.0,
        }
    }

    /// Unit-cube coordinates consumed per candidate point.
    pub fn unit_dim(&self) -> usize {
        match self {
            DomainSpec::UnitBall { dim } if *dim > MAX_REJECTION_DIM => dim + 1,
            _ => self.dim(),
        }
    }

    /// Maps one unit-cube candidate into Ω; `None` means rejected.
    pub fn map_unit(&self, u: &[f64]) -> Option<Vec<f64>> {
        match self {
            DomainSpec::Box { lower, upper } => Some(
                u.iter()
                    .zip(lower.iter().zip(upper))
                    .map(|(s, (a, b))| a + (b - a) * s)
                    .collect(),
            ),
            DomainSpec::UnitBall { dim } if *dim > MAX_REJECTION_DIM => Some(radial_map(u, *dim)),
            DomainSpec::UnitBall { .. } => {
                let x: Vec<f64> = u.iter().map(|s| 2.0 * s - 1.0).collect();
                self.contains(&x).then_some(x)
            }
        }
    }

    /// Random points in the interior of Ω, exact distribution.
    pub fn random_points(&self, count: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let d = self.dim();
        let mut out = Vec::with_capacity(count * d);
        match self {
            DomainSpec::Box { lower, upper } => {
                for _ in 0..count {
                    for k in 0..d {
                        let s: f64 = Uniform::new(0.0, 1.0).sample(rng);
                        out.push(lower[k] + (upper[k] - lower[k]) * s);
                    }
                }
            }
            DomainSpec::UnitBall { .. } => {
                let mut dir = vec![0.0; d];
                for _ in 0..count {
                    let norm = loop {
                        for v in dir.iter_mut() {
                            *v = StandardNormal.sample(rng);
                        }
                        let n = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
                        if n > 1e-300 {
                            break n;
                        }
                    };
                    let s: f64 = Uniform::new(0.0, 1.0).sample(rng);
                    let r = s.powf(1.0 / d as f64);
                    out.extend(dir.iter().map(|v| r * v / norm));
                }
            }
        }
        out
    }
}

/// Volume of the unit ball in `dim` dimensions.
pub fn unit_ball_volume(dim: usize) -> f64 {
    match dim {
        0 => 1.0,
        1 => 2.0,
        _ => unit_ball_volume(dim - 2) * 2.0 * std::f64::consts::PI / dim as f64,
    }
}

/// `u` has `dim + 1` coordinates: `dim` for the direction (through the
/// inverse normal CDF) and one for the radius.
fn radial_map(u: &[f64], dim: usize) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let eps = 1e-12;
    let mut dir: Vec<f64> = u[..dim]
        .iter()
        .map(|s| normal.inverse_cdf(s.clamp(eps, 1.0 - eps)))
        .collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm < 1e-300 {
        dir.iter_mut().for_each(|v| *v = 0.0);
        dir[0] = 1.0;
    } else {
        dir.iter_mut().for_each(|v| *v /= norm);
    }
    // radius strictly below 1 keeps the point inside the open ball
    let r = u[dim].clamp(0.0, 1.0 - 1e-12).powf(1.0 / dim as f64);
    dir.iter().map(|v| r * v).collect()
}

/// Maps one unit-cube point; rejection for small balls returns an error.
pub fn map_to_domain(point: &[f64], domain: &DomainSpec) -> Result<Vec<f64>> {
    if point.len() != domain.unit_dim() {
        return Err(Error::InvalidArgument(format!(
            "expected {} unit coordinates, got {}",
            domain.unit_dim(),
            point.len()
        )));
    }
    domain.map_unit(point).ok_or_else(|| Error::Rejection {
        misses: 1,
        domain: format!("{domain:?}"),
    })
}

/// Streams Halton points mapped into a domain, with rejection where needed.
#[derive(Debug, Clone)]
pub struct DomainSampler {
    domain: DomainSpec,
    state: HaltonState,
    scratch: Vec<f64>,
    t_final: Option<f64>,
}

impl DomainSampler {
    pub fn new(domain: DomainSpec) -> Result<Self> {
        domain.validate()?;
        let state = HaltonState::new(domain.unit_dim());
        let scratch = vec![0.0; domain.unit_dim()];
        Ok(Self {
            domain,
            state,
            scratch,
            t_final: None,
        })
    }

    /// Sampler for `Ω × (0, T)`; time is one extra Halton coordinate.
    pub fn space_time(domain: DomainSpec, t_final: f64) -> Result<Self> {
        domain.validate()?;
        if !(t_final > 0.0 && t_final.is_finite()) {
            return Err(Error::InvalidArgument(format!("bad final time {t_final}")));
        }
        let dim = domain.unit_dim() + 1;
        Ok(Self {
            domain,
            state: HaltonState::new(dim),
            scratch: vec![0.0; dim],
            t_final: Some(t_final),
        })
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn state(&self) -> &HaltonState {
        &self.state
    }

    /// Next `count` points in Ω, row-major.
    pub fn sample(&mut self, count: usize) -> Result<Vec<f64>> {
        self.sample_inner(count, None)
    }

    /// Next `count` space-time points: `(x` row-major`, t)`.
    pub fn sample_space_time(&mut self, count: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let t_final = self.t_final.ok_or_else(|| {
            Error::InvalidArgument("sampler was not built with a time interval".into())
        })?;
        let mut ts = Vec::with_capacity(count);
        let xs = self.sample_inner(count, Some((&mut ts, t_final)))?;
        Ok((xs, ts))
    }

    fn sample_inner(&mut self, count: usize, mut times: Option<(&mut Vec<f64>, f64)>) -> Result<Vec<f64>> {
        let unit_dim = self.domain.unit_dim();
        let mut out = Vec::with_capacity(count * self.domain.dim());
        for _ in 0..count {
            let mut misses = 0;
            loop {
                self.state.next_into(&mut self.scratch);
                if let Some(x) = self.domain.map_unit(&self.scratch[..unit_dim]) {
                    out.extend(x);
                    if let Some((ts, t_final)) = times.as_mut() {
                        ts.push(*t_final * self.scratch[unit_dim]);
                    }
                    break;
                }
                misses += 1;
                if misses > MAX_MISSES {
                    return Err(Error::Rejection {
                        misses,
                        domain: format!("{:?}", self.domain),
                    });
                }
            }
        }
        Ok(out)
    }
}

/// Acceptance probability of cube rejection for the unit ball.
pub fn rejection_rate(dim: usize) -> f64 {
    unit_ball_volume(dim) / 2f64.powi(dim as i32)
}

/// Uniform pseudo-random points in Ω plus the grid `{kT/N_T : k = 1..N_T}`.
pub fn test_sets(
    domain: &DomainSpec,
    n_x: usize,
    n_t: usize,
    t_final: f64,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    domain.validate()?;
    if n_t == 0 || n_x == 0 {
        return Err(Error::InvalidArgument("test sets need N_X, N_T >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs = domain.random_points(n_x, &mut rng);
    let ts = (1..=n_t).map(|k| k as f64 * t_final / n_t as f64).collect();
    Ok((xs, ts))
}
