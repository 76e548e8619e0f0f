//! Benchmark harnesses: the scatter-range power test, the dimension test, and
//! wall-clock timing of GCSD against the pairwise baselines.
//!
//! | Harness | Varies | Suite |
//! |---------|--------|-------|
//! | [`run_power_test`] | scatter range `r` | all ten densities |
//! | [`run_dimension_test`] | dimension `d` | `{f1, f2, f4}` with i.i.d. coordinates |
//! | [`run_timing`] | nothing (one cell) | `m` groups cycling through the ten densities |
//!
//! A metric that errors, returns a non-finite value, or floors a density
//! marks its cell instead of aborting the harness.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{evaluate, Metric, MetricOptions, MultiSample};
use crate::kernel::{BandwidthRule, KernelConfig};
use crate::numeric::median;
use crate::synth::{cycled_suite, derive_seed, dimension_suite, ScatterSuite, StreamTag};

/// Largest total sample count `n·m` accepted by [`run_timing`].
pub const TIMING_CAP: usize = 20_000;

/// Fewest timed repetitions per metric in [`run_timing`].
pub const MIN_TIMING_RUNS: usize = 5;

/// Scatter range of the dimension and timing suites unless overridden.
pub const DEFAULT_SUITE_R: f64 = 20.0;

/// Fixed kernel bandwidth of the power test unless overridden. A
/// data-driven bandwidth grows with `r` and cancels part of the separation
/// the test is meant to detect.
pub const DEFAULT_POWER_SIGMA: f64 = 1.0;

// =============================================================================
// Configuration and results
// =============================================================================

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub bandwidth: BandwidthRule,
    pub normalized: bool,
    pub metrics: Vec<Metric>,
    pub options: MetricOptions,
    pub seed: u64,
    /// Evaluate suite parameters concurrently. Results are unchanged; wall
    /// times become less comparable.
    #[serde(default)]
    pub parallel: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            bandwidth: BandwidthRule::Median,
            normalized: true,
            metrics: Metric::ALL.to_vec(),
            options: MetricOptions::default(),
            seed: 0,
            parallel: false,
        }
    }
}

impl BenchConfig {
    fn over<T: Sync, R: Send>(
        &self,
        params: &[T],
        f: impl Fn(&T) -> Result<R> + Sync + Send,
    ) -> Result<Vec<R>> {
        if self.parallel {
            params.par_iter().map(f).collect()
        } else {
            params.iter().map(f).collect()
        }
    }

    fn kernel_for(&self, ms: &MultiSample) -> Result<KernelConfig> {
        let sigma = self.bandwidth.resolve(&ms.pooled())?;
        Ok(KernelConfig::new(sigma, ms.dim())?.with_normalized(self.normalized))
    }
}

/// Outcome of one metric cell, also its `failed_flag` code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellStatus {
    Ok = 0,
    /// Error or non-finite value in at least one run.
    Failed = 1,
    /// Finite, but some density hit the floor, so the value is not
    /// informative.
    Saturated = 2,
}

impl CellStatus {
    pub fn code(&self) -> u8 {
        *self as u8
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricCell {
    pub metric: Metric,
    /// Mean over runs; `None` if any run failed.
    pub value: Option<f64>,
    /// `value` divided by the metric's smallest value across the suite
    /// parameters; `None` when that minimum is not positive.
    pub normalized: Option<f64>,
    /// Mean wall time per run, in seconds.
    pub wall_time: f64,
    pub status: CellStatus,
    pub floor_events: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    /// `r` for the power test, `d` for the dimension test.
    pub suite_param: f64,
    pub cells: Vec<MetricCell>,
    pub runs: usize,
    pub seed: u64,
    /// Bandwidth used in each run.
    pub bandwidths: Vec<f64>,
}

impl BenchResult {
    pub fn cell(&self, metric: Metric) -> Option<&MetricCell> {
        self.cells.iter().find(|c| c.metric == metric)
    }
}

// =============================================================================
// Harness
// =============================================================================

struct Accumulator {
    sum: f64,
    time: f64,
    floor_events: u64,
    failed: bool,
}

fn run_suite(
    param: f64,
    runs: usize,
    cfg: &BenchConfig,
    build: impl Fn(u64) -> Result<MultiSample>,
) -> Result<BenchResult> {
    let mut acc: Vec<Accumulator> = cfg
        .metrics
        .iter()
        .map(|_| Accumulator {
            sum: 0.0,
            time: 0.0,
            floor_events: 0,
            failed: false,
        })
        .collect();
    let mut bandwidths = Vec::with_capacity(runs);
    for run in 0..runs {
        let ms = build(derive_seed(
            cfg.seed,
            &[StreamTag::MonteCarlo as u64, run as u64],
        ))?;
        let kernel = cfg.kernel_for(&ms)?;
        bandwidths.push(kernel.bandwidth());
        for (slot, &metric) in acc.iter_mut().zip(&cfg.metrics) {
            let start = Instant::now();
            let out = evaluate(metric, &ms, &kernel, &cfg.options);
            slot.time += start.elapsed().as_secs_f64();
            match out {
                Ok(e) if e.value.is_finite() => {
                    slot.sum += e.value;
                    slot.floor_events += e.floor_events;
                }
                _ => slot.failed = true,
            }
        }
    }
    let cells = acc
        .into_iter()
        .zip(&cfg.metrics)
        .map(|(a, &metric)| {
            let status = if a.failed {
                CellStatus::Failed
            } else if a.floor_events > 0 {
                CellStatus::Saturated
            } else {
                CellStatus::Ok
            };
            MetricCell {
                metric,
                value: (!a.failed).then(|| a.sum / runs as f64),
                normalized: None,
                wall_time: a.time / runs as f64,
                status,
                floor_events: a.floor_events,
            }
        })
        .collect();
    Ok(BenchResult {
        suite_param: param,
        cells,
        runs,
        seed: cfg.seed,
        bandwidths,
    })
}

/// Divides each metric's series by its smallest value, when that is positive.
fn normalize_by_min(results: &mut [BenchResult]) {
    let Some(first) = results.first() else {
        return;
    };
    let metrics: Vec<Metric> = first.cells.iter().map(|c| c.metric).collect();
    for metric in metrics {
        let min = results
            .iter()
            .filter_map(|r| r.cell(metric).and_then(|c| c.value))
            .fold(f64::INFINITY, f64::min);
        if !(min.is_finite() && min > 0.0) {
            continue;
        }
        for r in results.iter_mut() {
            if let Some(c) = r.cells.iter_mut().find(|c| c.metric == metric) {
                c.normalized = c.value.map(|v| v / min);
            }
        }
    }
}

fn check_runs(runs: usize) -> Result<()> {
    if runs == 0 {
        return Err(Error::Config("runs must be at least 1".into()));
    }
    Ok(())
}

/// For each scatter range, averages every metric over `runs` seeded draws of
/// the ten-distribution suite, then normalizes each metric's series by its
/// minimum across `r`.
pub fn run_power_test(
    r_values: &[f64],
    n_per_dist: usize,
    runs: usize,
    cfg: &BenchConfig,
) -> Result<Vec<BenchResult>> {
    check_runs(runs)?;
    if r_values.is_empty() {
        return Err(Error::Input("need at least one scatter range".into()));
    }
    let mut results = cfg.over(r_values, |&r| {
        run_suite(r, runs, cfg, |seed| {
            ScatterSuite::full(r, n_per_dist, seed).build()
        })
    })?;
    normalize_by_min(&mut results);
    Ok(results)
}

/// For each dimension, averages every metric over `runs` seeded draws of the
/// `{f1, f2, f4}` product suite at scatter range `r`.
pub fn run_dimension_test(
    d_values: &[usize],
    r: f64,
    n_per_dist: usize,
    runs: usize,
    cfg: &BenchConfig,
) -> Result<Vec<BenchResult>> {
    check_runs(runs)?;
    if d_values.is_empty() || d_values.iter().any(|&d| !(1..=10_000).contains(&d)) {
        return Err(Error::Input("dimensions must lie in [1, 10000]".into()));
    }
    let mut results = cfg.over(d_values, |&d| {
        run_suite(d as f64, runs, cfg, |seed| {
            Ok(dimension_suite(&[d], r, n_per_dist, seed)?.remove(0))
        })
    })?;
    normalize_by_min(&mut results);
    Ok(results)
}

// =============================================================================
// Timing
// =============================================================================

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub metric: Metric,
    /// Median wall time in seconds over the timed runs.
    pub median_s: f64,
    pub samples: Vec<f64>,
    /// `median_s / median_s(GCSD)`.
    pub ratio_to_gcsd: f64,
    pub value: Option<f64>,
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingTable {
    pub m: usize,
    pub n: usize,
    pub d: usize,
    pub runs: usize,
    pub seed: u64,
    pub bandwidth: f64,
    pub rows: Vec<TimingRow>,
}

impl TimingTable {
    pub fn row(&self, metric: Metric) -> Option<&TimingRow> {
        self.rows.iter().find(|r| r.metric == metric)
    }
}

/// Median wall time of each metric on one shared suite of `m` groups of `n`
/// points in `d` dimensions. Each metric gets one discarded warm-up call and
/// then `max(runs, 5)` timed calls; kernel work is not shared between
/// metrics. GCSD is always timed, since every ratio is relative to it.
pub fn run_timing(
    m: usize,
    n: usize,
    d: usize,
    runs: usize,
    cfg: &BenchConfig,
) -> Result<TimingTable> {
    check_runs(runs)?;
    if m < 2 || n == 0 || d == 0 {
        return Err(Error::Input(format!(
            "timing needs m >= 2, n >= 1, d >= 1; got m={m}, n={n}, d={d}"
        )));
    }
    if n.saturating_mul(m) > TIMING_CAP {
        return Err(Error::Input(format!(
            "n*m = {} exceeds the timing cap of {TIMING_CAP}",
            n.saturating_mul(m)
        )));
    }
    let runs = runs.max(MIN_TIMING_RUNS);
    let ms = cycled_suite(m, n, d, DEFAULT_SUITE_R, cfg.seed)?;
    let kernel = cfg.kernel_for(&ms)?;
    let mut metrics = vec![Metric::Gcsd];
    metrics.extend(cfg.metrics.iter().copied().filter(|&x| x != Metric::Gcsd));

    let mut rows: Vec<TimingRow> = metrics
        .into_iter()
        .map(|metric| {
            let warm = evaluate(metric, &ms, &kernel, &cfg.options);
            let mut samples = Vec::with_capacity(runs);
            for _ in 0..runs {
                let start = Instant::now();
                let _ = std::hint::black_box(evaluate(metric, &ms, &kernel, &cfg.options));
                samples.push(start.elapsed().as_secs_f64());
            }
            let value = warm.ok().map(|e| e.value).filter(|v| v.is_finite());
            TimingRow {
                metric,
                median_s: median(&mut samples.clone()),
                samples,
                ratio_to_gcsd: f64::NAN,
                value,
                failed: value.is_none(),
            }
        })
        .collect();
    let base = rows[0].median_s;
    for r in rows.iter_mut() {
        r.ratio_to_gcsd = r.median_s / base;
    }
    Ok(TimingTable {
        m,
        n,
        d,
        runs,
        seed: cfg.seed,
        bandwidth: kernel.bandwidth(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> BenchConfig {
        BenchConfig {
            seed: 3,
            ..BenchConfig::default()
        }
    }

    #[test]
    fn power_test_normalizes_to_unit_minimum() {
        let results = run_power_test(&[4.0, 12.0, 20.0], 60, 2, &small_cfg()).unwrap();
        assert_eq!(results.len(), 3);
        for metric in Metric::ALL {
            let normalized: Vec<f64> = results
                .iter()
                .filter_map(|r| r.cell(metric).unwrap().normalized)
                .collect();
            if normalized.len() == 3 {
                let min = normalized.iter().copied().fold(f64::INFINITY, f64::min);
                assert_eq!(min, 1.0, "{metric}");
                assert!(normalized.iter().all(|&v| v >= 1.0));
            }
        }
        assert!(results
            .iter()
            .all(|r| r.bandwidths.len() == 2 && r.runs == 2));
    }

    #[test]
    fn power_test_is_reproducible() {
        let strip = |rs: Vec<BenchResult>| -> Vec<Vec<Option<f64>>> {
            rs.iter()
                .map(|r| r.cells.iter().map(|c| c.value).collect())
                .collect()
        };
        let a = run_power_test(&[8.0, 16.0], 40, 2, &small_cfg()).unwrap();
        let b = run_power_test(&[8.0, 16.0], 40, 2, &small_cfg()).unwrap();
        assert_eq!(strip(a), strip(b));
    }

    #[test]
    fn dimension_test_records_saturation_without_failing() {
        let results = run_dimension_test(&[2, 400], DEFAULT_SUITE_R, 40, 1, &small_cfg()).unwrap();
        let high = &results[1];
        let gcsd = high.cell(Metric::Gcsd).unwrap();
        assert_eq!(gcsd.status, CellStatus::Ok);
        assert!(gcsd.value.unwrap().is_finite());
        let kld = high.cell(Metric::Pkld).unwrap();
        assert_ne!(kld.status, CellStatus::Ok);
        assert!(run_dimension_test(&[0], 1.0, 10, 1, &small_cfg()).is_err());
    }

    #[test]
    fn timing_reports_ratios_and_enforces_cap() {
        let cfg = BenchConfig {
            metrics: vec![Metric::Pcsd],
            ..small_cfg()
        };
        let t = run_timing(3, 30, 1, 1, &cfg).unwrap();
        assert_eq!(t.runs, MIN_TIMING_RUNS);
        assert_eq!(t.rows.len(), 2);
        assert_eq!(t.rows[0].metric, Metric::Gcsd);
        assert_eq!(t.rows[0].ratio_to_gcsd, 1.0);
        assert!(t
            .rows
            .iter()
            .all(|r| r.samples.len() == MIN_TIMING_RUNS && !r.failed));
        assert!(run_timing(100, 300, 1, 5, &cfg).is_err());
        assert!(run_timing(1, 30, 1, 5, &cfg).is_err());
    }

    #[test]
    fn failed_cells_do_not_abort() {
        // Unbiased MMD needs two points per group; with one it errors.
        let cfg = BenchConfig {
            options: MetricOptions {
                mmd: crate::estimators::MmdEstimator::Unbiased,
                ..MetricOptions::default()
            },
            ..small_cfg()
        };
        let results = run_power_test(&[4.0, 8.0], 1, 1, &cfg).unwrap();
        for r in &results {
            let cell = r.cell(Metric::Pmmd).unwrap();
            assert_eq!(cell.status, CellStatus::Failed);
            assert_eq!(cell.value, None);
            assert_eq!(r.cell(Metric::Gcsd).unwrap().status.code(), 0);
        }
    }
}
