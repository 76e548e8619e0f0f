//! Trapezoid quadrature of products and powers of 1-D densities.
//!
//! The grid is split at every uniform-component bound, and uniform
//! membership on each piece is decided at the piece's midpoint, so
//! piecewise-constant parts integrate exactly and only the smooth Gaussian
//! parts carry discretization error. Integrands are handled as logs
//! throughout, so products of many far-apart densities do not underflow.

use serde::{Deserialize, Serialize};

use super::DensitySpec;
use crate::error::{Error, Result};
use crate::numeric::log_sum_exp;

/// `2^14 + 1` nodes.
pub const DEFAULT_GRID_POINTS: usize = (1 << 14) + 1;

/// A density whose grid integral misses its total mass by more than this
/// (relative) is rejected as under-resolved.
pub const RESOLUTION_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureGrid {
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
}

struct Node {
    x: f64,
    probe: f64,
    log_weight: f64,
}

impl QuadratureGrid {
    pub fn new(lo: f64, hi: f64, steps: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) || steps < 2 {
            return Err(Error::Config(format!(
                "quadrature grid needs lo < hi and at least 2 points, got ({lo}, {hi}, {steps})"
            )));
        }
        Ok(Self { lo, hi, steps })
    }

    /// `[min anchor - 6σ_max, max anchor + 6σ_max]` with
    /// [`DEFAULT_GRID_POINTS`] nodes, where anchors are Gaussian means and
    /// uniform bounds and `σ_max` is the widest Gaussian component.
    pub fn default_for(specs: &[DensitySpec]) -> Self {
        let (mut lo, mut hi, mut std_max) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
        for s in specs {
            let (a, b, sd) = s.extent();
            lo = lo.min(a);
            hi = hi.max(b);
            std_max = std_max.max(sd);
        }
        Self {
            lo: lo - 6.0 * std_max,
            hi: hi + 6.0 * std_max,
            steps: DEFAULT_GRID_POINTS,
        }
    }

    fn nodes(&self, specs: &[DensitySpec]) -> Vec<Node> {
        let mut edges = vec![self.lo, self.hi];
        for s in specs {
            edges.extend(
                s.breakpoints()
                    .into_iter()
                    .filter(|&b| b > self.lo && b < self.hi),
            );
        }
        edges.sort_by(f64::total_cmp);
        edges.dedup();
        let span = self.hi - self.lo;
        let intervals = (self.steps - 1) as f64;
        let mut nodes = Vec::with_capacity(self.steps + 2 * edges.len());
        for w in edges.windows(2) {
            let (a, b) = (w[0], w[1]);
            let k = (((b - a) / span) * intervals).round().max(1.0) as usize;
            let h = (b - a) / k as f64;
            let probe = 0.5 * (a + b);
            for i in 0..=k {
                let x = if i == k { b } else { a + i as f64 * h };
                let w = if i == 0 || i == k { 0.5 * h } else { h };
                nodes.push(Node {
                    x,
                    probe,
                    log_weight: w.ln(),
                });
            }
        }
        nodes
    }
}

/// `log ∫ exp(f(x)) dx` where `f` returns a log-integrand.
fn log_integral(nodes: &[Node], f: impl Fn(f64, f64) -> f64) -> f64 {
    let terms: Vec<f64> = nodes
        .iter()
        .map(|n| n.log_weight + f(n.x, n.probe))
        .collect();
    log_sum_exp(&terms)
}

fn check_resolution(nodes: &[Node], specs: &[DensitySpec]) -> Result<()> {
    for (index, s) in specs.iter().enumerate() {
        let integral = log_integral(nodes, |x, p| s.log_density_probe(x, p)).exp();
        let error = (integral / s.scale() - 1.0).abs();
        if error.is_nan() || error > RESOLUTION_TOLERANCE {
            return Err(Error::OracleResolution {
                index,
                integral,
                expected: s.scale(),
            });
        }
    }
    Ok(())
}

/// Total mass of a density on the grid (used to check normalization).
pub fn grid_integral(spec: &DensitySpec, grid: &QuadratureGrid) -> f64 {
    let nodes = grid.nodes(std::slice::from_ref(spec));
    log_integral(&nodes, |x, p| spec.log_density_probe(x, p)).exp()
}

/// Population GCSD of 1-D densities,
/// `-log ∫ Π_t p_t + (1/m) Σ_t log ∫ p_t^m`.
///
/// Returns `+inf` when the densities have no common support.
pub fn quadrature_gcsd(specs: &[DensitySpec], grid: &QuadratureGrid) -> Result<f64> {
    if specs.len() < 2 {
        return Err(Error::Input(format!(
            "need at least 2 densities, got {}",
            specs.len()
        )));
    }
    let nodes = grid.nodes(specs);
    check_resolution(&nodes, specs)?;
    let m = specs.len() as f64;
    let log_v1 = log_integral(&nodes, |x, p| {
        specs.iter().map(|s| s.log_density_probe(x, p)).sum()
    });
    let log_v2: f64 = specs
        .iter()
        .map(|s| log_integral(&nodes, |x, p| m * s.log_density_probe(x, p)))
        .sum();
    if log_v1 == f64::NEG_INFINITY {
        return Ok(f64::INFINITY);
    }
    Ok(-log_v1 + log_v2 / m)
}

/// Population Cauchy-Schwarz divergence of two 1-D densities,
/// `-log ∫pq + ½ log ∫p² + ½ log ∫q²`.
pub fn quadrature_csd(p: &DensitySpec, q: &DensitySpec, grid: &QuadratureGrid) -> Result<f64> {
    let specs = [p.clone(), q.clone()];
    let nodes = grid.nodes(&specs);
    check_resolution(&nodes, &specs)?;
    let cross = log_integral(&nodes, |x, z| {
        p.log_density_probe(x, z) + q.log_density_probe(x, z)
    });
    let pp = log_integral(&nodes, |x, z| 2.0 * p.log_density_probe(x, z));
    let qq = log_integral(&nodes, |x, z| 2.0 * q.log_density_probe(x, z));
    if cross == f64::NEG_INFINITY {
        return Ok(f64::INFINITY);
    }
    Ok(-cross + 0.5 * pp + 0.5 * qq)
}
