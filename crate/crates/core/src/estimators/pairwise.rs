//! Two-sample divergences and their mean over all unordered pairs.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_dim, Estimate, MultiSample};
use crate::error::{Error, Result};
use crate::kernel::{KernelConfig, Prepared, SampleSet};
use crate::numeric::{lex_cmp, log_mean_exp, pairwise_sum};

/// Densities below this value are clamped before taking logs in the KLD
/// estimator; each clamp is counted as a floor event.
pub const DENSITY_FLOOR: f64 = 1e-300;

/// Which MMD estimator to use.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MmdEstimator {
    /// V-statistic, diagonal terms included; never negative.
    #[default]
    Biased,
    /// U-statistic, diagonal terms excluded; needs two samples per set.
    Unbiased,
}

/// Direction of the KDE plug-in KLD.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KldDirection {
    /// `½[KL(a‖b) + KL(b‖a)]`.
    #[default]
    Symmetric,
    /// `KL(a‖b)` only.
    Forward,
}

/// A two-sample divergence usable with [`mean_pairwise`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PairMetric {
    Csd,
    Mmd(MmdEstimator),
    Kld(KldDirection),
}

impl PairMetric {
    pub fn estimate(&self, a: &SampleSet, b: &SampleSet, cfg: &KernelConfig) -> Result<Estimate> {
        match *self {
            PairMetric::Csd => csd_pair(a, b, cfg),
            PairMetric::Mmd(est) => mmd_pair_with(a, b, cfg, est),
            PairMetric::Kld(dir) => kld_pair_with(a, b, cfg, dir),
        }
    }
}

fn check_pair(a: &SampleSet, b: &SampleSet, cfg: &KernelConfig) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    check_dim(cfg, a.dim())
}

/// Orders a pair by content so symmetric formulas are bit-exact under swap.
fn canonical_pair<'a>(a: &'a SampleSet, b: &'a SampleSet) -> (&'a SampleSet, &'a SampleSet) {
    match lex_cmp(a.as_flat(), b.as_flat()) {
        Ordering::Greater => (b, a),
        _ => (a, b),
    }
}

/// `log p̂_source(x)` at every row `x` of `target`.
fn log_kde_at(target: &SampleSet, source: &Prepared<'_>, cfg: &KernelConfig) -> Vec<f64> {
    let norms = target.sq_norms();
    (0..target.len())
        .into_par_iter()
        .map(|j| source.log_kde(target.row(j), norms[j], cfg))
        .collect()
}

fn mean(xs: &[f64]) -> f64 {
    pairwise_sum(xs) / xs.len() as f64
}

/// Plug-in Cauchy-Schwarz divergence
/// `-log(cross) + ½ log(self_a) + ½ log(self_b)`, where `cross` is the mean
/// kernel value over all `(a_i, b_j)` and `self_x` over all ordered pairs
/// within `x`. Evaluated in log space.
pub fn csd_pair(a: &SampleSet, b: &SampleSet, cfg: &KernelConfig) -> Result<Estimate> {
    check_pair(a, b, cfg)?;
    let (a, b) = canonical_pair(a, b);
    let (pa, pb) = (Prepared::new(a), Prepared::new(b));
    let log_cross = log_mean_exp(&log_kde_at(a, &pb, cfg));
    let log_self_a = log_mean_exp(&log_kde_at(a, &pa, cfg));
    let log_self_b = log_mean_exp(&log_kde_at(b, &pb, cfg));
    Ok(Estimate::exact(
        -log_cross + 0.5 * log_self_a + 0.5 * log_self_b,
    ))
}

/// Biased (V-statistic) squared MMD: `mean_aa + mean_bb - 2·mean_ab`.
pub fn mmd_pair(a: &SampleSet, b: &SampleSet, cfg: &KernelConfig) -> Result<Estimate> {
    mmd_pair_with(a, b, cfg, MmdEstimator::Biased)
}

pub fn mmd_pair_with(
    a: &SampleSet,
    b: &SampleSet,
    cfg: &KernelConfig,
    estimator: MmdEstimator,
) -> Result<Estimate> {
    check_pair(a, b, cfg)?;
    let (a, b) = canonical_pair(a, b);
    let unbiased = estimator == MmdEstimator::Unbiased;
    if unbiased && (a.len() < 2 || b.len() < 2) {
        return Err(Error::Input(
            "unbiased MMD needs at least two samples per set".into(),
        ));
    }
    let (pa, pb) = (Prepared::new(a), Prepared::new(b));
    let within = |s: &SampleSet, p: &Prepared<'_>| -> f64 {
        let norms = s.sq_norms();
        let vals: Vec<f64> = (0..s.len())
            .into_par_iter()
            .map(|i| p.kde(s.row(i), norms[i], cfg, unbiased.then_some(i)))
            .collect();
        mean(&vals)
    };
    let aa = within(a, &pa);
    let bb = within(b, &pb);
    let norms_a = a.sq_norms();
    let ab_vals: Vec<f64> = (0..a.len())
        .into_par_iter()
        .map(|i| pb.kde(a.row(i), norms_a[i], cfg, None))
        .collect();
    let ab = mean(&ab_vals);
    let value = aa + bb - 2.0 * ab;
    // Round-off can leave the biased statistic a hair below zero.
    let value = if unbiased { value } else { value.max(0.0) };
    Ok(Estimate::exact(value))
}

/// Symmetrized KDE plug-in KLD,
/// `½[mean_i log(p̂_a(a_i)/p̂_b(a_i)) + mean_j log(p̂_b(b_j)/p̂_a(b_j))]`.
pub fn kld_pair(a: &SampleSet, b: &SampleSet, cfg: &KernelConfig) -> Result<Estimate> {
    kld_pair_with(a, b, cfg, KldDirection::Symmetric)
}

pub fn kld_pair_with(
    a: &SampleSet,
    b: &SampleSet,
    cfg: &KernelConfig,
    direction: KldDirection,
) -> Result<Estimate> {
    check_pair(a, b, cfg)?;
    let (pa, pb) = (Prepared::new(a), Prepared::new(b));
    let log_floor = DENSITY_FLOOR.ln();
    let mut floor_events = 0u64;
    let mut floored = |mut xs: Vec<f64>| -> Vec<f64> {
        for x in xs.iter_mut() {
            if *x < log_floor {
                *x = log_floor;
                floor_events += 1;
            }
        }
        xs
    };
    let directed = |own: &[f64], other: &[f64]| -> f64 {
        let diffs: Vec<f64> = own.iter().zip(other).map(|(p, q)| p - q).collect();
        mean(&diffs)
    };

    let a_own = floored(log_kde_at(a, &pa, cfg));
    let a_other = floored(log_kde_at(a, &pb, cfg));
    let forward = directed(&a_own, &a_other);
    let value = match direction {
        KldDirection::Forward => forward,
        KldDirection::Symmetric => {
            let b_own = floored(log_kde_at(b, &pb, cfg));
            let b_other = floored(log_kde_at(b, &pa, cfg));
            0.5 * (forward + directed(&b_own, &b_other))
        }
    };
    Ok(Estimate {
        value,
        floor_events,
    })
}

/// Mean of a two-sample divergence over all unordered pairs of groups,
/// `2/(m(m-1)) Σ_{i<j} d(g_i, g_j)`.
pub fn mean_pairwise(
    metric: &PairMetric,
    ms: &MultiSample,
    cfg: &KernelConfig,
) -> Result<Estimate> {
    let groups = ms.groups();
    let m = groups.len();
    let mut total = 0.0;
    let mut floor_events = 0;
    for i in 0..m {
        for j in i + 1..m {
            let e = metric.estimate(&groups[i], &groups[j], cfg)?;
            total += e.value;
            floor_events += e.floor_events;
        }
    }
    Ok(Estimate {
        value: total * (2.0 / (m * (m - 1)) as f64),
        floor_events,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(xs: &[f64]) -> SampleSet {
        SampleSet::from_scalars(xs).unwrap()
    }

    fn cfg(sigma: f64) -> KernelConfig {
        KernelConfig::new(sigma, 1).unwrap()
    }

    fn k(x: f64, y: f64, sigma: f64) -> f64 {
        (-(x - y).powi(2) / (2.0 * sigma * sigma)).exp()
            / ((2.0 * std::f64::consts::PI).sqrt() * sigma)
    }

    fn mean_k(a: &[f64], b: &[f64], sigma: f64) -> f64 {
        let mut s = 0.0;
        for &x in a {
            for &y in b {
                s += k(x, y, sigma);
            }
        }
        s / (a.len() * b.len()) as f64
    }

    #[test]
    fn csd_matches_direct_formula() {
        let a = [0.0, 0.4, 1.2];
        let b = [1.0, 2.0, 2.2, 3.1];
        let s = 0.7;
        let direct =
            -mean_k(&a, &b, s).ln() + 0.5 * mean_k(&a, &a, s).ln() + 0.5 * mean_k(&b, &b, s).ln();
        let v = csd_pair(&set(&a), &set(&b), &cfg(s)).unwrap().value;
        assert!((v - direct).abs() < 1e-12);
    }

    #[test]
    fn csd_identity_and_exact_symmetry() {
        let a = set(&[0.0, 0.4, 1.2, -0.7]);
        let b = set(&[1.0, 2.0, 2.2]);
        assert!(csd_pair(&a, &a, &cfg(0.5)).unwrap().value.abs() < 1e-10);
        let ab = csd_pair(&a, &b, &cfg(0.5)).unwrap().value;
        let ba = csd_pair(&b, &a, &cfg(0.5)).unwrap().value;
        assert_eq!(ab.to_bits(), ba.to_bits());
    }

    #[test]
    fn mmd_matches_direct_formula() {
        let a = [0.0, 0.4, 1.2];
        let b = [1.0, 2.0, 2.2, 3.1];
        let s = 0.9;
        let direct = mean_k(&a, &a, s) + mean_k(&b, &b, s) - 2.0 * mean_k(&a, &b, s);
        let v = mmd_pair(&set(&a), &set(&b), &cfg(s)).unwrap().value;
        assert!((v - direct).abs() < 1e-14);
    }

    #[test]
    fn mmd_identity_and_point_masses() {
        let a = set(&[0.0, 0.4, 1.2]);
        assert!(mmd_pair(&a, &a, &cfg(1.0)).unwrap().value.abs() < 1e-12);
        let c = cfg(1.0).with_normalized(false);
        let mut prev = 0.0;
        for t in [0.5, 1.0, 2.0, 4.0] {
            let v = mmd_pair(&set(&[0.0]), &set(&[t]), &c).unwrap().value;
            let closed = 2.0 - 2.0 * (-t * t / 2.0f64).exp();
            assert!((v - closed).abs() < 1e-14);
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn mmd_unbiased_excludes_diagonal() {
        let a = [0.0, 0.4, 1.2];
        let b = [1.0, 2.0, 2.2, 3.1];
        let s = 0.9;
        let u = |x: &[f64]| {
            let mut acc = 0.0;
            for (i, &p) in x.iter().enumerate() {
                for (j, &q) in x.iter().enumerate() {
                    if i != j {
                        acc += k(p, q, s);
                    }
                }
            }
            acc / (x.len() * (x.len() - 1)) as f64
        };
        let direct = u(&a) + u(&b) - 2.0 * mean_k(&a, &b, s);
        let v = mmd_pair_with(&set(&a), &set(&b), &cfg(s), MmdEstimator::Unbiased)
            .unwrap()
            .value;
        assert!((v - direct).abs() < 1e-14);
        assert!(mmd_pair_with(&set(&[1.0]), &set(&b), &cfg(s), MmdEstimator::Unbiased).is_err());
    }

    #[test]
    fn kld_identity_symmetry_and_separation() {
        let a = set(&[0.0, 0.4, 1.2, -0.3]);
        let b = set(&[1.0, 2.0, 2.2]);
        assert!(kld_pair(&a, &a, &cfg(0.5)).unwrap().value.abs() < 1e-10);
        let ab = kld_pair(&a, &b, &cfg(0.5)).unwrap().value;
        let ba = kld_pair(&b, &a, &cfg(0.5)).unwrap().value;
        assert_eq!(ab.to_bits(), ba.to_bits());
        let fwd = kld_pair_with(&a, &b, &cfg(0.5), KldDirection::Forward)
            .unwrap()
            .value;
        let rev = kld_pair_with(&b, &a, &cfg(0.5), KldDirection::Forward)
            .unwrap()
            .value;
        assert!((0.5 * (fwd + rev) - ab).abs() < 1e-14);
    }

    #[test]
    fn kld_counts_floor_events() {
        let a = set(&[0.0, 0.1]);
        let b = set(&[1000.0, 1000.1]);
        let e = kld_pair(&a, &b, &cfg(0.1)).unwrap();
        assert_eq!(e.floor_events, 4);
        assert!(e.value.is_finite());
    }

    #[test]
    fn mean_pairwise_examples() {
        let a = set(&[0.0, 0.4, 1.2]);
        let b = set(&[1.0, 2.0, 2.2]);
        let c = set(&[-1.0, 0.5]);
        let two = MultiSample::new(vec![a.clone(), b.clone()]).unwrap();
        for metric in [
            PairMetric::Csd,
            PairMetric::Mmd(MmdEstimator::Biased),
            PairMetric::Kld(KldDirection::Symmetric),
        ] {
            let mp = mean_pairwise(&metric, &two, &cfg(0.6)).unwrap().value;
            let direct = metric.estimate(&a, &b, &cfg(0.6)).unwrap().value;
            assert_eq!(mp.to_bits(), direct.to_bits());

            let same = MultiSample::new(vec![a.clone(); 4]).unwrap();
            assert!(
                mean_pairwise(&metric, &same, &cfg(0.6))
                    .unwrap()
                    .value
                    .abs()
                    < 1e-10
            );

            // m = 3 with a duplicated group.
            let three = MultiSample::new(vec![a.clone(), a.clone(), c.clone()]).unwrap();
            let pairs = [(&a, &a), (&a, &c), (&a, &c)];
            let avg = pairs
                .iter()
                .map(|(x, y)| metric.estimate(x, y, &cfg(0.6)).unwrap().value)
                .sum::<f64>()
                / 3.0;
            let mp3 = mean_pairwise(&metric, &three, &cfg(0.6)).unwrap().value;
            assert!((mp3 - avg).abs() < 1e-12);
        }
    }
}
