use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Value};

use super::io::{self, num, OutputTable};
use super::{Format, KernelChoice, RunConfig, TOOL_VERSION};
use crate::bench::{
    run_dimension_test, run_power_test, run_timing, BenchConfig, BenchResult, CellStatus,
};
use crate::cluster::{acc, fit_assignments, nmi, ClusterLossConfig, OptimizerConfig};
use crate::error::{Error, Result};
use crate::estimators::{evaluate, MultiSample};
use crate::kernel::{KernelConfig, SampleSet};
use crate::synth::{density_spec, sample_product};

/// What a command reports back to the process.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    /// Some requested computation failed.
    pub failed: bool,
    /// Human-readable lines for stderr.
    pub summary: String,
}

const BENCH_COLUMNS: [&str; 8] = [
    "suite_param",
    "metric",
    "value",
    "normalized_value",
    "wall_time_s",
    "failed_flag",
    "runs",
    "seed",
];

fn meta(config: &RunConfig, bandwidth: Value, extra: Value) -> Value {
    let mut m = json!({
        "tool": "gcsd",
        "version": TOOL_VERSION,
        "command": config.name(),
        "config": config,
        "seed": config.seed(),
        "bandwidth": bandwidth,
    });
    if let (Value::Object(dst), Value::Object(src)) = (&mut m, extra) {
        dst.extend(src);
    }
    m
}

fn kernel_for(choice: &KernelChoice, pooled: &SampleSet) -> Result<KernelConfig> {
    let sigma = choice.bandwidth.resolve(pooled)?;
    Ok(KernelConfig::new(sigma, pooled.dim())?.with_normalized(choice.normalized))
}

fn bench_config(
    kernel: &KernelChoice,
    metrics: &super::MetricChoice,
    seed: u64,
    parallel: bool,
) -> BenchConfig {
    BenchConfig {
        parallel,
        bandwidth: kernel.bandwidth,
        normalized: kernel.normalized,
        metrics: metrics.metrics.clone(),
        options: metrics.options,
        seed,
    }
}

/// Runs a resolved configuration, writing its output to `out` (or stdout).
pub fn execute(config: &RunConfig, out: Option<&Path>) -> Result<Outcome> {
    match config {
        RunConfig::Estimate {
            input,
            metrics,
            kernel,
            ..
        } => {
            let (_, ms) = io::read_groups(input)?;
            estimate(config, &ms, metrics, kernel, out)
        }
        RunConfig::Power {
            r_values,
            n,
            runs,
            parallel,
            metrics,
            kernel,
            seed,
            ..
        } => {
            let results = run_power_test(
                r_values,
                *n,
                *runs,
                &bench_config(kernel, metrics, *seed, *parallel),
            )?;
            bench_output(config, &results, "r", out)
        }
        RunConfig::Dim {
            d_values,
            r,
            n,
            runs,
            parallel,
            metrics,
            kernel,
            seed,
            ..
        } => {
            let results = run_dimension_test(
                d_values,
                *r,
                *n,
                *runs,
                &bench_config(kernel, metrics, *seed, *parallel),
            )?;
            bench_output(config, &results, "d", out)
        }
        RunConfig::Time {
            m,
            n,
            d,
            runs,
            metrics,
            kernel,
            seed,
            ..
        } => timing(
            config,
            *m,
            *n,
            *d,
            *runs,
            &bench_config(kernel, metrics, *seed, false),
            out,
        ),
        RunConfig::Cluster { .. } => cluster(config, out),
        RunConfig::Synth {
            r,
            n,
            d,
            ids,
            seed,
            format,
        } => synth(config, *r, *n, *d, ids, *seed, *format, out),
    }
}

// =============================================================================
// estimate
// =============================================================================

fn estimate(
    config: &RunConfig,
    ms: &MultiSample,
    metrics: &super::MetricChoice,
    kernel: &KernelChoice,
    out: Option<&Path>,
) -> Result<Outcome> {
    let kc = kernel_for(kernel, &ms.pooled())?;
    let n_list = ms
        .sizes()
        .iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join(";");
    let mut table = OutputTable::new(&[
        "metric",
        "value",
        "failed_flag",
        "floor_events",
        "m",
        "n_list",
        "d",
        "bandwidth",
        "normalized",
        "wall_time_s",
        "seed",
    ]);
    let mut outcome = Outcome::default();
    for &metric in &metrics.metrics {
        let start = Instant::now();
        let result = evaluate(metric, ms, &kc, &metrics.options);
        let wall = start.elapsed().as_secs_f64();
        let (value, floor_events, status) = match result {
            Ok(e) if e.value.is_finite() => {
                let status = if e.floor_events > 0 {
                    CellStatus::Saturated
                } else {
                    CellStatus::Ok
                };
                (Some(e.value), e.floor_events, status)
            }
            Ok(e) => (None, e.floor_events, CellStatus::Failed),
            Err(e) => {
                let _ = writeln!(outcome.summary, "{metric}: {e}");
                (None, 0, CellStatus::Failed)
            }
        };
        outcome.failed |= status == CellStatus::Failed;
        let _ = writeln!(
            outcome.summary,
            "{metric} = {}",
            value.map_or("failed".to_owned(), |v| v.to_string())
        );
        table.push(vec![
            Value::from(metric.name()),
            num(value),
            Value::from(status.code()),
            Value::from(floor_events),
            Value::from(ms.m()),
            Value::from(n_list.clone()),
            Value::from(ms.dim()),
            num(kc.bandwidth()),
            Value::from(kc.normalized()),
            num(wall),
            Value::from(config.seed()),
        ]);
    }
    io::write_table(
        out,
        config.format(),
        &meta(config, num(kc.bandwidth()), json!({})),
        &table,
    )?;
    Ok(outcome)
}

// =============================================================================
// power / dim
// =============================================================================

fn trend(values: &[Option<f64>]) -> &'static str {
    let Some(vs) = values.iter().copied().collect::<Option<Vec<f64>>>() else {
        return "incomplete";
    };
    if vs.windows(2).all(|w| w[1] > w[0]) {
        "strictly increasing"
    } else if vs.windows(2).all(|w| w[1] >= w[0]) {
        "non-decreasing"
    } else {
        "not monotone"
    }
}

fn bench_output(
    config: &RunConfig,
    results: &[BenchResult],
    param: &str,
    out: Option<&Path>,
) -> Result<Outcome> {
    let mut table = OutputTable::new(&BENCH_COLUMNS);
    let mut outcome = Outcome::default();
    for r in results {
        for c in &r.cells {
            outcome.failed |= c.status == CellStatus::Failed;
            table.push(vec![
                num(r.suite_param),
                Value::from(c.metric.name()),
                num(c.value),
                num(c.normalized),
                num(c.wall_time),
                Value::from(c.status.code()),
                Value::from(r.runs),
                Value::from(r.seed),
            ]);
        }
    }
    if let Some(first) = results.first() {
        for c in &first.cells {
            let series: Vec<Option<f64>> = results
                .iter()
                .map(|r| r.cell(c.metric).and_then(|x| x.value))
                .collect();
            let flags: Vec<u8> = results
                .iter()
                .filter_map(|r| r.cell(c.metric).map(|x| x.status.code()))
                .collect();
            let _ = writeln!(
                outcome.summary,
                "{}: {} in {param} (flags {flags:?})",
                c.metric,
                trend(&series)
            );
        }
    }
    let bandwidths: Vec<Value> = results
        .iter()
        .map(|r| json!({ "suite_param": r.suite_param, "bandwidths": r.bandwidths }))
        .collect();
    io::write_table(
        out,
        config.format(),
        &meta(config, Value::Array(bandwidths), json!({})),
        &table,
    )?;
    Ok(outcome)
}

// =============================================================================
// time
// =============================================================================

fn timing(
    config: &RunConfig,
    m: usize,
    n: usize,
    d: usize,
    runs: usize,
    cfg: &BenchConfig,
    out: Option<&Path>,
) -> Result<Outcome> {
    let t = run_timing(m, n, d, runs, cfg)?;
    let mut table = OutputTable::new(&BENCH_COLUMNS);
    let mut outcome = Outcome::default();
    let _ = writeln!(
        outcome.summary,
        "metric  median_s  time/time(gcsd)   (m={m}, n={n}, d={d})"
    );
    for r in &t.rows {
        outcome.failed |= r.failed;
        let _ = writeln!(
            outcome.summary,
            "{:<7} {:.6}  {:.3}",
            r.metric.name(),
            r.median_s,
            r.ratio_to_gcsd
        );
        table.push(vec![
            Value::from(n),
            Value::from(r.metric.name()),
            num(r.value),
            num(r.ratio_to_gcsd),
            num(r.median_s),
            Value::from(if r.failed {
                CellStatus::Failed.code()
            } else {
                0
            }),
            Value::from(t.runs),
            Value::from(t.seed),
        ]);
    }
    let extra = json!({ "m": m, "n": n, "d": d, "normalized_value": "time / time(gcsd)" });
    io::write_table(
        out,
        config.format(),
        &meta(config, num(t.bandwidth), extra),
        &table,
    )?;
    Ok(outcome)
}

// =============================================================================
// cluster
// =============================================================================

fn sibling(out: &Path, what: &str, format: Format) -> PathBuf {
    let ext = match format {
        Format::Csv => "csv",
        Format::Json => "json",
    };
    out.with_extension(format!("{what}.{ext}"))
}

fn cluster(config: &RunConfig, out: Option<&Path>) -> Result<Outcome> {
    let RunConfig::Cluster {
        input,
        m,
        lambda2,
        lambda3,
        simplex_sign,
        normalize_regularizers,
        learning_rate,
        max_iters,
        tolerance,
        restarts,
        kernel,
        seed,
        format,
    } = config
    else {
        unreachable!("dispatched on the cluster variant");
    };
    let out =
        out.ok_or_else(|| Error::Config("cluster writes three files and needs --out".into()))?;
    let (x, truth) = io::read_points(input)?;
    if *m > x.len() {
        return Err(Error::Input(format!(
            "{m} clusters requested for {} points",
            x.len()
        )));
    }
    let kc = kernel_for(kernel, &x)?;
    let loss_cfg = ClusterLossConfig::new(*lambda2, *lambda3, kc)?
        .with_simplex_sign(*simplex_sign)
        .with_normalized_regularizers(*normalize_regularizers);
    let opt = OptimizerConfig {
        learning_rate: *learning_rate,
        max_iters: *max_iters,
        tolerance: *tolerance,
        seed: *seed,
        restarts: *restarts,
    };
    let fit = fit_assignments(&x, *m, &loss_cfg, &opt)?;
    let labels = fit.assignment.harden();
    let pred: Vec<i64> = labels.iter().map(|&l| l as i64).collect();
    let extra = json!({ "simplex_sign": simplex_sign.name() });
    let meta = meta(config, num(kc.bandwidth()), extra);

    let mut label_table = OutputTable::new(if truth.is_some() {
        &["index", "label", "true_label"][..]
    } else {
        &["index", "label"][..]
    });
    for (i, &l) in labels.iter().enumerate() {
        let mut row = vec![Value::from(i), Value::from(l)];
        if let Some(t) = &truth {
            row.push(Value::from(t[i]));
        }
        label_table.push(row);
    }
    io::write_table(Some(out), *format, &meta, &label_table)?;

    let mut outcome = Outcome::default();
    let mut report = OutputTable::new(&["name", "value"]);
    if let Some(t) = &truth {
        let (a, n) = (acc(&pred, t)?, nmi(&pred, t)?);
        report.push(vec![Value::from("acc"), num(a)]);
        report.push(vec![Value::from("nmi"), num(n)]);
        let _ = writeln!(outcome.summary, "acc = {a}\nnmi = {n}");
    }
    for (name, value) in [
        ("loss", num(fit.loss)),
        ("converged", Value::from(fit.converged)),
        ("stop_reason", serde_json::to_value(fit.stop)?),
        ("restart", Value::from(fit.restart)),
        (
            "accepted_steps",
            Value::from(fit.trace.len().saturating_sub(1)),
        ),
        ("simplex_sign", Value::from(simplex_sign.name())),
        ("bandwidth", num(kc.bandwidth())),
    ] {
        report.push(vec![Value::from(name), value]);
    }
    let _ = writeln!(
        outcome.summary,
        "loss = {}, converged = {}, stop = {:?}, simplex sign = {}",
        fit.loss,
        fit.converged,
        fit.stop,
        simplex_sign.name()
    );
    io::write_table(
        Some(&sibling(out, "metrics", *format)),
        *format,
        &meta,
        &report,
    )?;

    let mut trace = OutputTable::new(&["step", "loss"]);
    for (i, &l) in fit.trace.iter().enumerate() {
        trace.push(vec![Value::from(i), num(l)]);
    }
    io::write_table(
        Some(&sibling(out, "trace", *format)),
        *format,
        &meta,
        &trace,
    )?;
    Ok(outcome)
}

// =============================================================================
// synth
// =============================================================================

#[allow(clippy::too_many_arguments)]
fn synth(
    config: &RunConfig,
    r: f64,
    n: usize,
    d: usize,
    ids: &[u32],
    seed: u64,
    format: Format,
    out: Option<&Path>,
) -> Result<Outcome> {
    for &id in ids {
        density_spec(id, r)?;
    }
    let groups = ids
        .iter()
        .map(|&id| sample_product(id, r, n, d, seed, 0))
        .collect::<Result<Vec<_>>>()?;
    let mut columns = vec!["group_id".to_owned()];
    columns.extend((1..=d).map(|c| format!("x{c}")));
    let mut table = OutputTable::new(&columns);
    for (&id, g) in ids.iter().zip(&groups) {
        for i in 0..g.len() {
            let mut row = vec![Value::from(id)];
            row.extend(g.row(i).iter().map(|&v| num(v)));
            table.push(row);
        }
    }
    io::write_table(out, format, &meta(config, Value::Null, json!({})), &table)?;
    Ok(Outcome::default())
}
