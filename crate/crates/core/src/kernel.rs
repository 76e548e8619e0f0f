//! Gaussian kernel, Gram matrices, and bandwidth selection.
//!
//! | Item | Purpose |
//! |------|---------|
//! | [`gaussian_kernel`] | `c · exp(-‖x-y‖² / 2σ²)` with optional `c = (√(2π)σ)^-d` |
//! | [`gram_matrix`] | Symmetric `K[i,j] = κ(x_i - x_j)` over a pooled sample |
//! | [`median_heuristic_bandwidth`] | `median_{i<j} ‖x_i - x_j‖ / √2` |
//! | [`silverman_bandwidth`] | `1.06 · std · n^(-1/5)` |
//!
//! Squared distances use the direct `Σ (x_k - y_k)²` form below
//! [`EXPANDED_FORM_MIN_DIM`] coordinates and the expanded
//! `‖x‖² + ‖y‖² - 2⟨x,y⟩` form (clamped at zero) above it, where cached
//! norms make the inner loop a single dot product.

use std::f64::consts::PI;

use ndarray::{Array2, ArrayView1, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{dot, median};

/// Dimension at which squared distances switch to the expanded form.
pub const EXPANDED_FORM_MIN_DIM: usize = 16;

/// Pooled samples above this size are strided down before the O(n²)
/// median-of-distances computation.
pub const MEDIAN_MAX_POINTS: usize = 2000;

// =============================================================================
// Sample sets
// =============================================================================

/// An `n × d` matrix of draws from one distribution, with optional labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    data: Array2<f64>,
    labels: Option<Vec<i64>>,
}

impl SampleSet {
    /// Wraps an `n × d` matrix. Rejects empty input and non-finite entries.
    pub fn new(data: Array2<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::Input(format!(
                "sample set must be non-empty, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("sample entry {bad}")));
        }
        let data = data.as_standard_layout().into_owned();
        Ok(Self { data, labels: None })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: bad.len(),
            });
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let data = Array2::from_shape_vec((rows.len(), d), flat)
            .map_err(|e| Error::Input(e.to_string()))?;
        Self::new(data)
    }

    /// One-dimensional sample set from a slice of scalars.
    pub fn from_scalars(xs: &[f64]) -> Result<Self> {
        let data = Array2::from_shape_vec((xs.len(), 1), xs.to_vec())
            .map_err(|e| Error::Input(e.to_string()))?;
        Self::new(data)
    }

    pub fn with_labels(mut self, labels: Vec<i64>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::Input(format!(
                "{} labels for {} samples",
                labels.len(),
                self.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn labels(&self) -> Option<&[i64]> {
        self.labels.as_deref()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let start = i * self.dim();
        &self.as_flat()[start..start + self.dim()]
    }

    /// Row-major contents.
    pub fn as_flat(&self) -> &[f64] {
        self.data
            .as_slice()
            .expect("sample data is kept in standard layout")
    }

    /// Stacks several sets (same dimension) into one pooled set.
    pub fn concat(sets: &[&SampleSet]) -> Result<SampleSet> {
        let first = sets
            .first()
            .ok_or_else(|| Error::Input("nothing to concatenate".into()))?;
        let d = first.dim();
        let mut flat = Vec::with_capacity(sets.iter().map(|s| s.len() * d).sum());
        for s in sets {
            if s.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: s.dim(),
                });
            }
            flat.extend_from_slice(s.as_flat());
        }
        let n = flat.len() / d;
        SampleSet::new(Array2::from_shape_vec((n, d), flat).expect("shape checked"))
    }

    /// Squared Euclidean norm of every row.
    pub(crate) fn sq_norms(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| dot(self.row(i), self.row(i)))
            .collect()
    }
}

// =============================================================================
// Kernel configuration
// =============================================================================

/// Bandwidth, normalization flag, and dimension of the Gaussian kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    bandwidth: f64,
    normalized: bool,
    dim: usize,
}

impl KernelConfig {
    /// Normalized kernel with bandwidth `σ` on `dim` coordinates.
    pub fn new(bandwidth: f64, dim: usize) -> Result<Self> {
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(Error::Config(format!(
                "bandwidth must be positive and finite, got {bandwidth}"
            )));
        }
        if dim == 0 {
            return Err(Error::Config("kernel dimension must be at least 1".into()));
        }
        Ok(Self {
            bandwidth,
            normalized: true,
            dim,
        })
    }

    pub fn with_normalized(mut self, normalized: bool) -> Self {
        self.normalized = normalized;
        self
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn normalized(&self) -> bool {
        self.normalized
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `1 / (2σ²)`.
    #[inline]
    pub fn gamma(&self) -> f64 {
        1.0 / (2.0 * self.bandwidth * self.bandwidth)
    }

    /// `log c`, where `c = (√(2π)σ)^-d` when normalized and `1` otherwise.
    pub fn log_norm_const(&self) -> f64 {
        if self.normalized {
            -(self.dim as f64) * ((2.0 * PI).sqrt() * self.bandwidth).ln()
        } else {
            0.0
        }
    }

    /// `κ_σ(0)`, the largest value the kernel takes.
    pub fn peak(&self) -> f64 {
        self.log_norm_const().exp()
    }
}

/// How the kernel bandwidth is chosen from data.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule", content = "value")]
pub enum BandwidthRule {
    #[default]
    Median,
    Silverman,
    Fixed(f64),
}

impl BandwidthRule {
    /// Resolves the bandwidth on a pooled sample.
    pub fn resolve(&self, pooled: &SampleSet) -> Result<f64> {
        match *self {
            Self::Median => median_heuristic_bandwidth(pooled),
            Self::Silverman => silverman_bandwidth(pooled),
            Self::Fixed(sigma) => {
                if sigma.is_finite() && sigma > 0.0 {
                    Ok(sigma)
                } else {
                    Err(Error::Config(format!(
                        "fixed bandwidth must be positive, got {sigma}"
                    )))
                }
            }
        }
    }
}

// =============================================================================
// Kernel evaluation
// =============================================================================

/// Squared distance between two rows, given their cached squared norms.
#[inline]
pub(crate) fn sq_dist(x: &[f64], x_norm: f64, y: &[f64], y_norm: f64) -> f64 {
    if x.len() < EXPANDED_FORM_MIN_DIM {
        let mut acc = 0.0;
        for (a, b) in x.iter().zip(y) {
            let diff = a - b;
            acc += diff * diff;
        }
        acc
    } else {
        (x_norm + y_norm - 2.0 * dot(x, y)).max(0.0)
    }
}

fn check_point(x: &[f64], cfg: &KernelConfig) -> Result<()> {
    if x.len() != cfg.dim {
        return Err(Error::DimensionMismatch {
            expected: cfg.dim,
            got: x.len(),
        });
    }
    if let Some(bad) = x.iter().find(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("kernel argument {bad}")));
    }
    Ok(())
}

/// `κ_σ(x - y) = c · exp(-‖x-y‖² / (2σ²))`.
pub fn gaussian_kernel(x: &[f64], y: &[f64], cfg: &KernelConfig) -> Result<f64> {
    check_point(x, cfg)?;
    check_point(y, cfg)?;
    let d2 = sq_dist(x, dot(x, x), y, dot(y, y));
    Ok((cfg.log_norm_const() - cfg.gamma() * d2).exp())
}

/// Symmetric matrix of kernel evaluations over all pairs of a pooled sample.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    values: Array2<f64>,
    config: KernelConfig,
}

impl GramMatrix {
    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn config(&self) -> &KernelConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn row(&self, j: usize) -> ArrayView1<'_, f64> {
        self.values.index_axis(Axis(0), j)
    }
}

/// Builds `K[i,j] = κ_σ(x_i - x_j)`; each unordered pair is evaluated once.
pub fn gram_matrix(pooled: &SampleSet, cfg: &KernelConfig) -> Result<GramMatrix> {
    if pooled.dim() != cfg.dim {
        return Err(Error::DimensionMismatch {
            expected: cfg.dim,
            got: pooled.dim(),
        });
    }
    let n = pooled.len();
    let norms = pooled.sq_norms();
    let (log_c, gamma) = (cfg.log_norm_const(), cfg.gamma());
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = pooled.row(i);
            (i..n)
                .map(|j| (log_c - gamma * sq_dist(xi, norms[i], pooled.row(j), norms[j])).exp())
                .collect()
        })
        .collect();
    let mut values = Array2::zeros((n, n));
    for (i, row) in upper.iter().enumerate() {
        for (offset, &v) in row.iter().enumerate() {
            let j = i + offset;
            values[[i, j]] = v;
            values[[j, i]] = v;
        }
    }
    Ok(GramMatrix {
        values,
        config: *cfg,
    })
}

// =============================================================================
// Bandwidth rules
// =============================================================================

/// Median pairwise distance of the pooled sample, divided by `√2`.
///
/// Samples larger than [`MEDIAN_MAX_POINTS`] are strided down to that many
/// rows first.
pub fn median_heuristic_bandwidth(pooled: &SampleSet) -> Result<f64> {
    let n = pooled.len();
    if n < 2 {
        return Err(Error::DegenerateData(
            "median heuristic needs at least two points".into(),
        ));
    }
    let idx: Vec<usize> = if n > MEDIAN_MAX_POINTS {
        (0..MEDIAN_MAX_POINTS)
            .map(|k| k * n / MEDIAN_MAX_POINTS)
            .collect()
    } else {
        (0..n).collect()
    };
    let mut dists = Vec::with_capacity(idx.len() * (idx.len() - 1) / 2);
    for (a, &i) in idx.iter().enumerate() {
        for &j in &idx[a + 1..] {
            let mut acc = 0.0;
            for (x, y) in pooled.row(i).iter().zip(pooled.row(j)) {
                acc += (x - y) * (x - y);
            }
            dists.push(acc.sqrt());
        }
    }
    let med = median(&mut dists);
    if med > 0.0 {
        Ok(med / std::f64::consts::SQRT_2)
    } else {
        Err(Error::DegenerateData(
            "median pairwise distance is zero".into(),
        ))
    }
}

/// Silverman's rule `1.06 · s · n^(-1/5)`, with `s` the sample standard
/// deviation (Bessel-corrected) averaged over coordinates.
pub fn silverman_bandwidth(s: &SampleSet) -> Result<f64> {
    let n = s.len();
    if n < 2 {
        return Err(Error::DegenerateData(
            "Silverman's rule needs at least two samples".into(),
        ));
    }
    let mean = s.data().mean_axis(Axis(0)).expect("non-empty");
    let mut std_sum = 0.0;
    for (k, col) in s.data().axis_iter(Axis(1)).enumerate() {
        let var = col.iter().map(|v| (v - mean[k]).powi(2)).sum::<f64>() / (n - 1) as f64;
        std_sum += var.sqrt();
    }
    let std = std_sum / s.dim() as f64;
    if std > 0.0 {
        Ok(1.06 * std * (n as f64).powf(-0.2))
    } else {
        Err(Error::DegenerateData("sample has zero variance".into()))
    }
}

// =============================================================================
// Kernel density sums
// =============================================================================

/// A sample set with cached row norms, ready for repeated density queries.
pub(crate) struct Prepared<'a> {
    pub set: &'a SampleSet,
    pub norms: Vec<f64>,
}

impl<'a> Prepared<'a> {
    pub fn new(set: &'a SampleSet) -> Self {
        Self {
            norms: set.sq_norms(),
            set,
        }
    }

    pub fn len(&self) -> usize {
        self.set.len()
    }

    /// `log p̂(x) = log((1/n) Σ_i κ_σ(x - y_i))`, including the normalization
    /// constant. Falls back to a max-shifted sum when the plain sum
    /// underflows, so the result is finite for any finite input.
    pub fn log_kde(&self, x: &[f64], x_norm: f64, cfg: &KernelConfig) -> f64 {
        self.log_kde_excluding(x, x_norm, cfg, None)
    }

    /// As [`Self::log_kde`], optionally leaving out one row of the sample.
    pub fn log_kde_excluding(
        &self,
        x: &[f64],
        x_norm: f64,
        cfg: &KernelConfig,
        skip: Option<usize>,
    ) -> f64 {
        let gamma = cfg.gamma();
        let n = self.len() - usize::from(skip.is_some());
        if n == 0 {
            return f64::NEG_INFINITY;
        }
        let mut sum = 0.0;
        for i in 0..self.len() {
            if Some(i) == skip {
                continue;
            }
            sum += (-gamma * sq_dist(x, x_norm, self.set.row(i), self.norms[i])).exp();
        }
        let log_sum = if sum > 1e-200 {
            sum.ln()
        } else {
            let mut d_min = f64::INFINITY;
            for i in 0..self.len() {
                if Some(i) != skip {
                    d_min = d_min.min(sq_dist(x, x_norm, self.set.row(i), self.norms[i]));
                }
            }
            let mut shifted = 0.0;
            for i in 0..self.len() {
                if Some(i) != skip {
                    let d2 = sq_dist(x, x_norm, self.set.row(i), self.norms[i]);
                    shifted += (-gamma * (d2 - d_min)).exp();
                }
            }
            -gamma * d_min + shifted.ln()
        };
        log_sum + cfg.log_norm_const() - (n as f64).ln()
    }

    /// `(1/n) Σ_i κ_σ(x - y_i)` in linear space (may underflow to zero).
    pub fn kde(&self, x: &[f64], x_norm: f64, cfg: &KernelConfig, skip: Option<usize>) -> f64 {
        let gamma = cfg.gamma();
        let n = self.len() - usize::from(skip.is_some());
        let mut sum = 0.0;
        for i in 0..self.len() {
            if Some(i) != skip {
                sum += (-gamma * sq_dist(x, x_norm, self.set.row(i), self.norms[i])).exp();
            }
        }
        sum * cfg.peak() / n as f64
    }
}
