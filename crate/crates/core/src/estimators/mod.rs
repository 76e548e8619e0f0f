//! Sample estimators for the generalized Cauchy-Schwarz divergence and the
//! average-pairwise baselines, plus quadrature ground truth for 1-D densities.
//!
//! | Function | Estimates |
//! |----------|-----------|
//! | [`gcsd`] | `-log V̂₁ + (1/m) Σ_t log V̂₂(t)` over `m` sample sets |
//! | [`csd_pair`] | two-sample Cauchy-Schwarz divergence |
//! | [`mmd_pair`] | squared maximum mean discrepancy |
//! | [`kld_pair`] | KDE plug-in Kullback-Leibler divergence |
//! | [`mean_pairwise`] | `2/(m(m-1)) Σ_{i<j} d(P_i, P_j)` |
//! | [`quadrature_gcsd`] | population GCSD by trapezoid quadrature |
//!
//! The GCSD estimator needs, for every sample `x_j` of every group, the
//! kernel density of every group at `x_j`:
//!
//! ```text
//! V̂₁    = (1/m) Σ_t (1/n_t) Σ_{j∈t} Π_{k≠t} p̂_k(x_j)
//! V̂₂(t) = (1/n_t) Σ_{j∈t} p̂_t(x_j)^(m-1)
//! ```
//!
//! Products of densities are sums of log-densities and the outer means are
//! log-sum-exp reductions, so the estimate stays finite when the densities
//! themselves underflow (large `m`, small `σ`, or high dimension).

mod density;
mod pairwise;
mod quadrature;
mod sweep;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{KernelConfig, Prepared, SampleSet};
use crate::numeric::{lex_cmp, log_mean_exp, pairwise_sum};

pub use density::{Component, DensityKind, DensitySpec, Law};
pub use pairwise::{
    csd_pair, kld_pair, mean_pairwise, mmd_pair, KldDirection, MmdEstimator, PairMetric,
    DENSITY_FLOOR,
};
pub use quadrature::{
    grid_integral, quadrature_csd, quadrature_gcsd, QuadratureGrid, DEFAULT_GRID_POINTS,
    RESOLUTION_TOLERANCE,
};
pub use sweep::{consistency_sweep, median_errors, sweep_grid, SweepRow};

// =============================================================================
// Inputs and outputs
// =============================================================================

/// An ordered list of `m ≥ 2` non-empty sample sets of equal dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiSample {
    groups: Vec<SampleSet>,
}

impl MultiSample {
    pub fn new(groups: Vec<SampleSet>) -> Result<Self> {
        if groups.len() < 2 {
            return Err(Error::Input(format!(
                "need at least 2 groups, got {}",
                groups.len()
            )));
        }
        let d = groups[0].dim();
        for g in &groups {
            if g.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: g.dim(),
                });
            }
        }
        Ok(Self { groups })
    }

    pub fn groups(&self) -> &[SampleSet] {
        &self.groups
    }

    pub fn m(&self) -> usize {
        self.groups.len()
    }

    pub fn dim(&self) -> usize {
        self.groups[0].dim()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.groups.iter().map(SampleSet::len).collect()
    }

    /// All groups stacked in order.
    pub fn pooled(&self) -> SampleSet {
        let refs: Vec<&SampleSet> = self.groups.iter().collect();
        SampleSet::concat(&refs).expect("groups share a dimension")
    }

    /// Groups sorted by content, so order-sensitive float reductions give
    /// the same bits for any permutation of the input.
    pub(crate) fn canonical(&self) -> Vec<&SampleSet> {
        let mut refs: Vec<&SampleSet> = self.groups.iter().collect();
        refs.sort_by(|a, b| {
            a.dim()
                .cmp(&b.dim())
                .then_with(|| lex_cmp(a.as_flat(), b.as_flat()))
        });
        refs
    }
}

/// A divergence value together with the number of density-floor events hit
/// while computing it (only the KLD baseline floors densities).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub floor_events: u64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self {
            value,
            floor_events: 0,
        }
    }
}

/// The four multi-distribution measures compared by the benchmarks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Gcsd,
    Pcsd,
    Pmmd,
    Pkld,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Gcsd, Metric::Pkld, Metric::Pmmd, Metric::Pcsd];

    pub fn name(&self) -> &'static str {
        match self {
            Metric::Gcsd => "gcsd",
            Metric::Pcsd => "pcsd",
            Metric::Pmmd => "pmmd",
            Metric::Pkld => "pkld",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gcsd" => Ok(Metric::Gcsd),
            "pcsd" => Ok(Metric::Pcsd),
            "pmmd" => Ok(Metric::Pmmd),
            "pkld" => Ok(Metric::Pkld),
            other => Err(Error::Input(format!("unknown metric '{other}'"))),
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Estimator variants for the baselines.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricOptions {
    pub mmd: MmdEstimator,
    pub kld: KldDirection,
}

/// Evaluates one of the four measures on a multi-sample.
pub fn evaluate(
    metric: Metric,
    ms: &MultiSample,
    cfg: &KernelConfig,
    opts: &MetricOptions,
) -> Result<Estimate> {
    match metric {
        Metric::Gcsd => gcsd(ms, cfg).map(Estimate::exact),
        Metric::Pcsd => mean_pairwise(&PairMetric::Csd, ms, cfg),
        Metric::Pmmd => mean_pairwise(&PairMetric::Mmd(opts.mmd), ms, cfg),
        Metric::Pkld => mean_pairwise(&PairMetric::Kld(opts.kld), ms, cfg),
    }
}

/// One evaluated metric with the parameters that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceReport {
    pub metric: String,
    /// `None` when the computation failed.
    pub value: Option<f64>,
    pub failed: bool,
    pub floor_events: u64,
    pub m: usize,
    pub n_list: Vec<usize>,
    pub d: usize,
    pub bandwidth: f64,
    pub normalized: bool,
    pub wall_time: f64,
    pub seed: u64,
}

// =============================================================================
// GCSD
// =============================================================================

pub(crate) fn check_dim(cfg: &KernelConfig, d: usize) -> Result<()> {
    if cfg.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: cfg.dim(),
            got: d,
        });
    }
    Ok(())
}

/// `log p̂_k(x_j)` for every row `j` of `target` and every group `k`.
fn log_density_rows(
    target: &SampleSet,
    groups: &[Prepared<'_>],
    cfg: &KernelConfig,
) -> Vec<Vec<f64>> {
    let norms = target.sq_norms();
    (0..target.len())
        .into_par_iter()
        .map(|j| {
            let x = target.row(j);
            groups.iter().map(|g| g.log_kde(x, norms[j], cfg)).collect()
        })
        .collect()
}

/// Kernel estimator of the generalized Cauchy-Schwarz divergence.
///
/// Exactly invariant under any permutation of the groups: groups are put into
/// a canonical content order before any reduction.
pub fn gcsd(ms: &MultiSample, cfg: &KernelConfig) -> Result<f64> {
    check_dim(cfg, ms.dim())?;
    let groups = ms.canonical();
    let m = groups.len();
    let prepared: Vec<Prepared<'_>> = groups.iter().map(|g| Prepared::new(g)).collect();
    let power = (m - 1) as f64;

    let mut log_cross = Vec::with_capacity(m);
    let mut log_power = Vec::with_capacity(m);
    for (t, group) in groups.iter().enumerate() {
        let rows = log_density_rows(group, &prepared, cfg);
        let cross: Vec<f64> = rows
            .iter()
            .map(|ls| {
                let mut acc = 0.0;
                for (k, l) in ls.iter().enumerate() {
                    if k != t {
                        acc += l;
                    }
                }
                acc
            })
            .collect();
        let own: Vec<f64> = rows.iter().map(|ls| power * ls[t]).collect();
        log_cross.push(log_mean_exp(&cross));
        log_power.push(log_mean_exp(&own));
    }
    let log_v1 = log_mean_exp(&log_cross);
    Ok(-log_v1 + pairwise_sum(&log_power) / m as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(xs: &[f64]) -> SampleSet {
        SampleSet::from_scalars(xs).unwrap()
    }

    /// Direct transcription of the estimator in linear space with plain loops.
    fn gcsd_naive(groups: &[Vec<f64>], sigma: f64) -> f64 {
        let m = groups.len();
        let k = |a: f64, b: f64| {
            (-(a - b) * (a - b) / (2.0 * sigma * sigma)).exp()
                / ((2.0 * std::f64::consts::PI).sqrt() * sigma)
        };
        let kde = |x: f64, g: &Vec<f64>| g.iter().map(|&y| k(x, y)).sum::<f64>() / g.len() as f64;
        let mut v1 = 0.0;
        for t in 0..m {
            let mut s = 0.0;
            for &x in &groups[t] {
                let mut prod = 1.0;
                for (kk, g) in groups.iter().enumerate() {
                    if kk != t {
                        prod *= kde(x, g);
                    }
                }
                s += prod;
            }
            v1 += s / groups[t].len() as f64;
        }
        v1 /= m as f64;
        let mut lv2 = 0.0;
        for g in groups {
            let s: f64 = g.iter().map(|&x| kde(x, g).powi(m as i32 - 1)).sum();
            lv2 += (s / g.len() as f64).ln();
        }
        -v1.ln() + lv2 / m as f64
    }

    #[test]
    fn matches_naive_transcription() {
        let groups = vec![
            vec![0.0, 0.3, -0.4, 1.1],
            vec![2.0, 2.5, 1.7],
            vec![-1.0, -1.5, -0.2, 0.1, -2.2],
        ];
        let ms = MultiSample::new(groups.iter().map(|g| set(g)).collect()).unwrap();
        let cfg = KernelConfig::new(0.7, 1).unwrap();
        let fast = gcsd(&ms, &cfg).unwrap();
        let slow = gcsd_naive(&groups, 0.7);
        assert!((fast - slow).abs() < 1e-12, "{fast} vs {slow}");
    }

    #[test]
    fn identical_groups_give_zero() {
        let g = set(&[0.1, 0.7, -1.3, 2.2, 0.0]);
        for m in [2, 3, 6] {
            let ms = MultiSample::new(vec![g.clone(); m]).unwrap();
            let v = gcsd(&ms, &KernelConfig::new(0.5, 1).unwrap()).unwrap();
            assert!(v.abs() < 1e-10, "m={m}: {v}");
        }
    }

    #[test]
    fn permutation_is_bitwise_invariant() {
        let a = set(&[0.0, 0.4, 1.0]);
        let b = set(&[3.0, 2.1]);
        let c = set(&[-1.0, -0.5, -2.0, 0.3]);
        let cfg = KernelConfig::new(0.8, 1).unwrap();
        let base = gcsd(
            &MultiSample::new(vec![a.clone(), b.clone(), c.clone()]).unwrap(),
            &cfg,
        )
        .unwrap();
        for order in [[1, 0, 2], [2, 1, 0], [0, 2, 1], [2, 0, 1]] {
            let all = [&a, &b, &c];
            let groups = order.iter().map(|&i| all[i].clone()).collect();
            let v = gcsd(&MultiSample::new(groups).unwrap(), &cfg).unwrap();
            assert_eq!(v.to_bits(), base.to_bits());
        }
    }

    #[test]
    fn normalization_constant_cancels() {
        let ms = MultiSample::new(vec![
            set(&[0.0, 0.5, 1.0]),
            set(&[2.0, 2.5]),
            set(&[-1.0, 4.0]),
        ])
        .unwrap();
        let cfg = KernelConfig::new(0.9, 1).unwrap();
        let a = gcsd(&ms, &cfg).unwrap();
        let b = gcsd(&ms, &cfg.with_normalized(false)).unwrap();
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn two_groups_reduce_to_csd() {
        let a = set(&[0.0, 0.5, 1.0, -0.3]);
        let b = set(&[1.5, 2.5, 0.8]);
        let cfg = KernelConfig::new(0.6, 1).unwrap();
        let g = gcsd(&MultiSample::new(vec![a.clone(), b.clone()]).unwrap(), &cfg).unwrap();
        let c = csd_pair(&a, &b, &cfg).unwrap().value;
        assert!((g - c).abs() < 1e-12);
    }

    #[test]
    fn finite_when_densities_underflow() {
        // Ten far-apart groups at a tiny bandwidth: every cross density underflows.
        let groups = (0..10)
            .map(|t| set(&[t as f64 * 50.0, t as f64 * 50.0 + 0.01]))
            .collect();
        let ms = MultiSample::new(groups).unwrap();
        let v = gcsd(&ms, &KernelConfig::new(0.05, 1).unwrap()).unwrap();
        assert!(v.is_finite() && v > 1e4);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            MultiSample::new(vec![set(&[1.0])]),
            Err(Error::Input(_))
        ));
        let two_d = SampleSet::from_rows(&[vec![0.0, 1.0]]).unwrap();
        assert!(matches!(
            MultiSample::new(vec![set(&[1.0]), two_d]),
            Err(Error::DimensionMismatch { .. })
        ));
        let ms = MultiSample::new(vec![set(&[1.0]), set(&[2.0])]).unwrap();
        assert!(gcsd(&ms, &KernelConfig::new(1.0, 2).unwrap()).is_err());
    }

    #[test]
    fn metric_names_round_trip() {
        for m in Metric::ALL {
            assert_eq!(Metric::parse(m.name()).unwrap(), m);
        }
        assert!(Metric::parse("hpd").is_err());
    }
}
