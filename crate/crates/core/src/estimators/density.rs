//! Analytic 1-D densities (Gaussian, uniform, and their mixtures) used as
//! ground truth by the quadrature oracle and as samplers by the synthetic
//! suites.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::log_sum_exp;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "lowercase")]
pub enum Law {
    Gaussian { mean: f64, std: f64 },
    Uniform { lower: f64, upper: f64 },
}

impl Law {
    fn validate(&self) -> Result<()> {
        match *self {
            Law::Gaussian { mean, std } => {
                if !mean.is_finite() || !(std.is_finite() && std > 0.0) {
                    return Err(Error::Config(format!(
                        "gaussian needs finite mean and positive std, got N({mean}, {std})"
                    )));
                }
            }
            Law::Uniform { lower, upper } => {
                if !(lower.is_finite() && upper.is_finite() && lower < upper) {
                    return Err(Error::Config(format!(
                        "uniform needs lower < upper, got U({lower}, {upper})"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Log-density; `probe` decides uniform membership (pass `x` itself, or
    /// the midpoint of a quadrature segment to get the one-sided limit).
    fn log_density(&self, x: f64, probe: f64) -> f64 {
        match *self {
            Law::Gaussian { mean, std } => {
                let z = (x - mean) / std;
                -0.5 * z * z - (std * (2.0 * PI).sqrt()).ln()
            }
            Law::Uniform { lower, upper } => {
                if (lower..=upper).contains(&probe) {
                    -(upper - lower).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Law::Gaussian { mean, std } => Normal::new(mean, std)
                .expect("validated parameters")
                .sample(rng),
            Law::Uniform { lower, upper } => rng.random_range(lower..upper),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub weight: f64,
    pub law: Law,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DensityKind {
    Gaussian,
    Uniform,
    Mixture,
}

/// A finite mixture of Gaussian and uniform components, optionally
/// multiplied by a positive `scale` (an unnormalized density).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensitySpec {
    components: Vec<Component>,
    scale: f64,
}

impl DensitySpec {
    /// Validates positive weights summing to one (within `1e-12`).
    pub fn new(components: Vec<Component>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Config("density needs at least one component".into()));
        }
        for c in &components {
            if !(c.weight.is_finite() && c.weight > 0.0) {
                return Err(Error::Config(format!(
                    "weight must be positive, got {}",
                    c.weight
                )));
            }
            c.law.validate()?;
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!("weights sum to {total}, expected 1")));
        }
        Ok(Self {
            components,
            scale: 1.0,
        })
    }

    pub fn gaussian(mean: f64, std: f64) -> Result<Self> {
        Self::new(vec![Component {
            weight: 1.0,
            law: Law::Gaussian { mean, std },
        }])
    }

    pub fn uniform(lower: f64, upper: f64) -> Result<Self> {
        Self::new(vec![Component {
            weight: 1.0,
            law: Law::Uniform { lower, upper },
        }])
    }

    /// The density multiplied by `beta > 0`; integrates to `beta`.
    pub fn scaled(&self, beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::Config(format!("scale must be positive, got {beta}")));
        }
        Ok(Self {
            components: self.components.clone(),
            scale: self.scale * beta,
        })
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn kind(&self) -> DensityKind {
        match self.components.as_slice() {
            [Component {
                law: Law::Gaussian { .. },
                ..
            }] => DensityKind::Gaussian,
            [Component {
                law: Law::Uniform { .. },
                ..
            }] => DensityKind::Uniform,
            _ => DensityKind::Mixture,
        }
    }

    pub fn log_density(&self, x: f64) -> f64 {
        self.log_density_probe(x, x)
    }

    pub(crate) fn log_density_probe(&self, x: f64, probe: f64) -> f64 {
        let terms: Vec<f64> = self
            .components
            .iter()
            .map(|c| c.weight.ln() + c.law.log_density(x, probe))
            .collect();
        self.scale.ln() + log_sum_exp(&terms)
    }

    pub fn density(&self, x: f64) -> f64 {
        self.log_density(x).exp()
    }

    /// Draws `n` samples; mixtures pick a component per draw.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        (0..n)
            .map(|_| {
                let law = if self.components.len() == 1 {
                    &self.components[0].law
                } else {
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    let mut chosen = &self.components[self.components.len() - 1].law;
                    for c in &self.components {
                        acc += c.weight;
                        if u < acc {
                            chosen = &c.law;
                            break;
                        }
                    }
                    chosen
                };
                law.sample(rng)
            })
            .collect()
    }

    /// FNV-1a hash of the parameter bits; equal specs hash equally.
    pub fn fingerprint(&self) -> u64 {
        let mut words = vec![self.scale.to_bits()];
        for c in &self.components {
            words.push(c.weight.to_bits());
            match c.law {
                Law::Gaussian { mean, std } => words.extend([1, mean.to_bits(), std.to_bits()]),
                Law::Uniform { lower, upper } => {
                    words.extend([2, lower.to_bits(), upper.to_bits()])
                }
            }
        }
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for w in words {
            for byte in w.to_le_bytes() {
                h ^= u64::from(byte);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }

    /// Uniform bounds, where the density jumps.
    pub(crate) fn breakpoints(&self) -> Vec<f64> {
        self.components
            .iter()
            .filter_map(|c| match c.law {
                Law::Uniform { lower, upper } => Some([lower, upper]),
                Law::Gaussian { .. } => None,
            })
            .flatten()
            .collect()
    }

    /// `(leftmost, rightmost)` support anchor (Gaussian mean or uniform bound)
    /// and the largest Gaussian standard deviation (0 if none).
    pub(crate) fn extent(&self) -> (f64, f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut std_max: f64 = 0.0;
        for c in &self.components {
            match c.law {
                Law::Gaussian { mean, std } => {
                    lo = lo.min(mean);
                    hi = hi.max(mean);
                    std_max = std_max.max(std);
                }
                Law::Uniform { lower, upper } => {
                    lo = lo.min(lower);
                    hi = hi.max(upper);
                }
            }
        }
        (lo, hi, std_max)
    }
}
