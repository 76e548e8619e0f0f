//! Empirical consistency of the GCSD estimator against the quadrature oracle.

use serde::{Deserialize, Serialize};

use super::{gcsd, quadrature_gcsd, DensitySpec, MultiSample, QuadratureGrid};
use crate::error::{Error, Result};
use crate::kernel::{KernelConfig, SampleSet};
use crate::numeric::median;
use crate::synth::{stream_rng, StreamTag};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub sigma: f64,
    pub seed: u64,
    pub estimate: f64,
    pub oracle: f64,
    pub abs_error: f64,
}

/// Cartesian product of sample sizes and bandwidths.
pub fn sweep_grid(n_grid: &[usize], sigma_grid: &[f64]) -> Vec<(usize, f64)> {
    n_grid
        .iter()
        .flat_map(|&n| sigma_grid.iter().map(move |&s| (n, s)))
        .collect()
}

/// For every `(n, σ)` setting and seed, draws `n` points from each density,
/// estimates GCSD at bandwidth `σ`, and reports the absolute error against
/// [`quadrature_gcsd`].
///
/// Draws for a given seed are shared across settings (a larger `n` extends
/// the smaller sample), which keeps comparisons between settings paired.
/// Streams are keyed by density content, so identical densities receive
/// identical samples.
pub fn consistency_sweep(
    specs: &[DensitySpec],
    settings: &[(usize, f64)],
    seeds: &[u64],
) -> Result<Vec<SweepRow>> {
    let oracle = quadrature_gcsd(specs, &QuadratureGrid::default_for(specs))?;
    let n_max = settings.iter().map(|s| s.0).max().unwrap_or(0);
    if settings.iter().any(|&(n, _)| n == 0) {
        return Err(Error::Input("sample size must be positive".into()));
    }
    let mut rows = Vec::with_capacity(settings.len() * seeds.len());
    for &seed in seeds {
        let draws: Vec<Vec<f64>> = specs
            .iter()
            .map(|s| {
                s.sample(
                    n_max,
                    &mut stream_rng(seed, &[StreamTag::Sweep as u64, s.fingerprint()]),
                )
            })
            .collect();
        for &(n, sigma) in settings {
            let groups = draws
                .iter()
                .map(|d| SampleSet::from_scalars(&d[..n]))
                .collect::<Result<Vec<_>>>()?;
            let estimate = gcsd(&MultiSample::new(groups)?, &KernelConfig::new(sigma, 1)?)?;
            rows.push(SweepRow {
                n,
                sigma,
                seed,
                estimate,
                oracle,
                abs_error: (estimate - oracle).abs(),
            });
        }
    }
    Ok(rows)
}

/// Median absolute error per `(n, σ)` setting, in first-seen order.
pub fn median_errors(rows: &[SweepRow]) -> Vec<(usize, f64, f64)> {
    let mut keys: Vec<(usize, f64)> = Vec::new();
    for r in rows {
        if !keys.iter().any(|&(n, s)| n == r.n && s == r.sigma) {
            keys.push((r.n, r.sigma));
        }
    }
    keys.into_iter()
        .map(|(n, s)| {
            let mut errs: Vec<f64> = rows
                .iter()
                .filter(|r| r.n == n && r.sigma == s)
                .map(|r| r.abs_error)
                .collect();
            (n, s, median(&mut errs))
        })
        .collect()
}
