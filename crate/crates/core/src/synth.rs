//! Synthetic benchmark data: the ten 1-D densities with scatter range `r`,
//! their multivariate (independent-coordinate) extension, and the suites
//! built from them.
//!
//! With `s = r / 10`:
//!
//! | id | density |
//! |----|---------|
//! | 1 | N(0, 1) |
//! | 2 | N(s, 1) |
//! | 3 | N(-s, 1) |
//! | 4 | U(-s, s) |
//! | 5 | U(-3s, -2s) |
//! | 6 | U(2s, 3s) |
//! | 7 | 0.3 N(-5s, 1) + 0.7 N(3s, 1) |
//! | 8 | 0.3 N(-3s, 1) + 0.7 N(5s, 1) |
//! | 9 | 0.3 U(-4s, -3s) + 0.7 U(s, 2s) |
//! | 10 | 0.3 U(3s, 4s) + 0.7 U(-2s, -s) |
//!
//! Every draw comes from a ChaCha stream keyed by `(seed, r, id, coordinate)`,
//! so adding distributions, dimensions, or suites never perturbs existing
//! streams.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{Component, DensitySpec, Law, MultiSample};
use crate::kernel::SampleSet;

/// Default scatter ranges of the power test.
pub const DEFAULT_R_VALUES: [f64; 5] = [4.0, 8.0, 12.0, 16.0, 20.0];

/// Distribution ids of the dimension test: two Gaussians and one uniform.
pub const DIMENSION_IDS: [u32; 3] = [1, 2, 4];

/// Namespaces for seeded streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamTag {
    Distribution = 1,
    Sweep = 2,
    MonteCarlo = 3,
    ClusterInit = 4,
    Fixture = 5,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a seed with a key path into a new 64-bit seed.
pub fn derive_seed(seed: u64, key: &[u64]) -> u64 {
    key.iter().fold(splitmix64(seed), |h, &k| splitmix64(h ^ k))
}

/// A ChaCha8 stream keyed by `(seed, key...)`.
pub fn stream_rng(seed: u64, key: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, key))
}

fn check_id(id: u32) -> Result<()> {
    if (1..=10).contains(&id) {
        Ok(())
    } else {
        Err(Error::Input(format!(
            "distribution id must be in 1..=10, got {id}"
        )))
    }
}

fn check_r(r: f64) -> Result<()> {
    if r.is_finite() && r > 0.0 {
        Ok(())
    } else {
        Err(Error::Input(format!(
            "scatter range must be positive, got {r}"
        )))
    }
}

/// The analytic density `f_id` at scatter range `r`.
pub fn density_spec(id: u32, r: f64) -> Result<DensitySpec> {
    check_id(id)?;
    check_r(r)?;
    let s = r / 10.0;
    let n = |mean: f64| Law::Gaussian { mean, std: 1.0 };
    let u = |lower: f64, upper: f64| Law::Uniform { lower, upper };
    let mix = |a: Law, b: Law| {
        DensitySpec::new(vec![
            Component {
                weight: 0.3,
                law: a,
            },
            Component {
                weight: 0.7,
                law: b,
            },
        ])
    };
    match id {
        1 => DensitySpec::gaussian(0.0, 1.0),
        2 => DensitySpec::gaussian(s, 1.0),
        3 => DensitySpec::gaussian(-s, 1.0),
        4 => DensitySpec::uniform(-s, s),
        5 => DensitySpec::uniform(-3.0 * s, -2.0 * s),
        6 => DensitySpec::uniform(2.0 * s, 3.0 * s),
        7 => mix(n(-5.0 * s), n(3.0 * s)),
        8 => mix(n(-3.0 * s), n(5.0 * s)),
        9 => mix(u(-4.0 * s, -3.0 * s), u(s, 2.0 * s)),
        10 => mix(u(3.0 * s, 4.0 * s), u(-2.0 * s, -s)),
        _ => unreachable!("id checked"),
    }
}

fn coordinate_draws(id: u32, r: f64, n: usize, seed: u64, stream: u64) -> Result<Vec<f64>> {
    let spec = density_spec(id, r)?;
    let mut rng = stream_rng(
        seed,
        &[
            StreamTag::Distribution as u64,
            r.to_bits(),
            u64::from(id),
            stream,
        ],
    );
    Ok(spec.sample(n, &mut rng))
}

/// `n` i.i.d. draws from `f_id` at scatter range `r`.
pub fn sample_distribution(id: u32, r: f64, n: usize, seed: u64) -> Result<SampleSet> {
    if n == 0 {
        return Err(Error::Input("sample size must be at least 1".into()));
    }
    SampleSet::from_scalars(&coordinate_draws(id, r, n, seed, 0)?)
}

/// `n` draws of a `d`-dimensional vector whose coordinates are independent
/// copies of `f_id`. Coordinate `c` of replica `replica` uses its own stream;
/// coordinate 0 of replica 0 equals [`sample_distribution`].
pub fn sample_product(
    id: u32,
    r: f64,
    n: usize,
    d: usize,
    seed: u64,
    replica: u32,
) -> Result<SampleSet> {
    if n == 0 || d == 0 {
        return Err(Error::Input(format!(
            "sample size and dimension must be positive, got n={n}, d={d}"
        )));
    }
    let mut data = Array2::zeros((n, d));
    for c in 0..d {
        let stream = (u64::from(replica) << 32) | c as u64;
        let col = coordinate_draws(id, r, n, seed, stream)?;
        for (i, v) in col.into_iter().enumerate() {
            data[[i, c]] = v;
        }
    }
    SampleSet::new(data)
}

/// A set of distributions at one scatter range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterSuite {
    pub r: f64,
    pub n_per_dist: usize,
    pub dist_ids: Vec<u32>,
    pub seed: u64,
}

impl ScatterSuite {
    /// All ten distributions.
    pub fn full(r: f64, n_per_dist: usize, seed: u64) -> Self {
        Self {
            r,
            n_per_dist,
            dist_ids: (1..=10).collect(),
            seed,
        }
    }

    pub fn build(&self) -> Result<MultiSample> {
        check_r(self.r)?;
        if self.dist_ids.is_empty() {
            return Err(Error::Input("suite needs at least one distribution".into()));
        }
        let groups = self
            .dist_ids
            .iter()
            .map(|&id| sample_distribution(id, self.r, self.n_per_dist, self.seed))
            .collect::<Result<Vec<_>>>()?;
        MultiSample::new(groups)
    }

    pub fn specs(&self) -> Result<Vec<DensitySpec>> {
        self.dist_ids
            .iter()
            .map(|&id| density_spec(id, self.r))
            .collect()
    }
}

/// One ten-distribution suite per scatter range.
pub fn power_suite(r_values: &[f64], n_per_dist: usize, seed: u64) -> Result<Vec<MultiSample>> {
    if r_values.is_empty() {
        return Err(Error::Input("need at least one scatter range".into()));
    }
    r_values
        .iter()
        .map(|&r| ScatterSuite::full(r, n_per_dist, seed).build())
        .collect()
}

/// One `{f1, f2, f4}` suite per dimension, with independent coordinates.
pub fn dimension_suite(
    d_values: &[usize],
    r: f64,
    n_per_dist: usize,
    seed: u64,
) -> Result<Vec<MultiSample>> {
    d_values
        .iter()
        .map(|&d| {
            let groups = DIMENSION_IDS
                .iter()
                .map(|&id| sample_product(id, r, n_per_dist, d, seed, 0))
                .collect::<Result<Vec<_>>>()?;
            MultiSample::new(groups)
        })
        .collect()
}

/// `m` groups cycling through the ten distributions (replicas beyond ten use
/// fresh streams), `d` independent coordinates each.
pub fn cycled_suite(
    m: usize,
    n_per_dist: usize,
    d: usize,
    r: f64,
    seed: u64,
) -> Result<MultiSample> {
    let groups = (0..m)
        .map(|t| sample_product((t % 10) as u32 + 1, r, n_per_dist, d, seed, (t / 10) as u32))
        .collect::<Result<Vec<_>>>()?;
    MultiSample::new(groups)
}
