//! The `gcsd` command line: argument parsing, the resolved run
//! configuration, and one function per subcommand.
//!
//! | Subcommand | Output rows |
//! |------------|-------------|
//! | `estimate` | one per metric |
//! | `power`, `dim` | one per (suite parameter, metric) |
//! | `time` | one per metric, with its time relative to GCSD |
//! | `cluster` | one per point (labels), plus a metrics file and a loss trace |
//! | `synth` | one per sample, in the input format |
//! | `rerun` | whatever the embedded configuration produces |
//!
//! Every output embeds the tool version, the resolved [`RunConfig`], the
//! seed, and the bandwidth used; `gcsd rerun <file> --out <new>` executes
//! that configuration again.

mod commands;
pub mod io;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::bench::{DEFAULT_POWER_SIGMA, DEFAULT_SUITE_R};
use crate::cluster::SimplexSign;
use crate::error::{Error, Result};
use crate::estimators::{KldDirection, Metric, MetricOptions, MmdEstimator};
use crate::kernel::BandwidthRule;
use crate::synth::DEFAULT_R_VALUES;

pub use commands::{execute, Outcome};
pub use io::Format;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

// =============================================================================
// Arguments
// =============================================================================

#[derive(Debug, Parser)]
#[command(
    name = "gcsd",
    version,
    about = "Generalized Cauchy-Schwarz divergence toolkit"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Divergences between the groups of an input file.
    Estimate(EstimateArgs),
    /// Divergence against scatter range on the ten-distribution suite.
    Power(PowerArgs),
    /// Divergence against dimension on the {f1, f2, f4} suite.
    Dim(DimArgs),
    /// Wall-clock time of each metric relative to GCSD.
    Time(TimeArgs),
    /// Soft clustering by maximizing GCSD between clusters.
    Cluster(ClusterArgs),
    /// Export a synthetic suite in the input format.
    Synth(SynthArgs),
    /// Re-execute the configuration embedded in an output file.
    Rerun(RerunArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RuleArg {
    Median,
    Silverman,
}

#[derive(Debug, Args)]
pub struct KernelArgs {
    /// Fixed kernel bandwidth.
    #[arg(long, conflicts_with = "bandwidth_rule")]
    pub sigma: Option<f64>,
    /// Data-driven bandwidth rule (default: median).
    #[arg(long, value_enum)]
    pub bandwidth_rule: Option<RuleArg>,
    /// Drop the kernel normalization constant.
    #[arg(long)]
    pub unnormalized_kernel: bool,
}

#[derive(Debug, Args)]
pub struct MetricArgs {
    /// Metric to compute (repeatable): gcsd, pcsd, pmmd, pkld.
    #[arg(long = "metric", value_parser = parse_metric)]
    pub metrics: Vec<Metric>,
    #[arg(long, value_enum, default_value = "biased")]
    pub mmd_estimator: MmdArg,
    #[arg(long, value_enum, default_value = "symmetric")]
    pub kld_direction: KldArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MmdArg {
    Biased,
    Unbiased,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KldArg {
    Symmetric,
    Forward,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file (stdout if omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// CSV with a header; first column group_id, then features.
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub metrics: MetricArgs,
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct PowerArgs {
    #[arg(long, value_delimiter = ',')]
    pub r_values: Option<Vec<f64>>,
    /// Samples per distribution.
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Monte Carlo runs per scatter range.
    #[arg(long, default_value_t = 10)]
    pub runs: usize,
    /// Evaluate suite parameters concurrently (wall times become less comparable).
    #[arg(long)]
    pub parallel: bool,
    #[command(flatten)]
    pub metrics: MetricArgs,
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct DimArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [10usize, 100, 1000])]
    pub d_values: Vec<usize>,
    /// Scatter range of the suite.
    #[arg(long, default_value_t = DEFAULT_SUITE_R)]
    pub r: f64,
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub runs: usize,
    /// Evaluate suite parameters concurrently (wall times become less comparable).
    #[arg(long)]
    pub parallel: bool,
    #[command(flatten)]
    pub metrics: MetricArgs,
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct TimeArgs {
    #[arg(long, default_value_t = 10)]
    pub m: usize,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub d: usize,
    /// Timed repetitions per metric (at least 5 are always made).
    #[arg(long, default_value_t = 5)]
    pub runs: usize,
    #[command(flatten)]
    pub metrics: MetricArgs,
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    /// CSV with a header; an optional first column `label` or `group_id`.
    #[arg(long)]
    pub input: PathBuf,
    /// Number of clusters.
    #[arg(long)]
    pub m: usize,
    #[arg(long, default_value_t = 0.5)]
    pub lambda2: f64,
    #[arg(long, default_value_t = 0.5)]
    pub lambda3: f64,
    #[arg(long, default_value_t = 0.05)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 2000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 5)]
    pub restarts: usize,
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub r: f64,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub d: usize,
    /// Distribution ids (default: all ten).
    #[arg(long, value_delimiter = ',')]
    pub ids: Option<Vec<u32>>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct RerunArgs {
    /// A file written by any subcommand.
    pub from: PathBuf,
    /// Where to write the new output (stdout if omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_metric(s: &str) -> std::result::Result<Metric, String> {
    Metric::parse(s).map_err(|e| e.to_string())
}

// =============================================================================
// Resolved configuration
// =============================================================================

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelChoice {
    pub bandwidth: BandwidthRule,
    pub normalized: bool,
}

impl KernelArgs {
    /// `default` applies when neither `--sigma` nor `--bandwidth-rule` is given.
    fn resolve(&self, default: BandwidthRule) -> Result<KernelChoice> {
        let bandwidth = match (self.sigma, self.bandwidth_rule) {
            (Some(s), _) => {
                if !(s.is_finite() && s > 0.0) {
                    return Err(Error::Config(format!("sigma must be positive, got {s}")));
                }
                BandwidthRule::Fixed(s)
            }
            (None, Some(RuleArg::Silverman)) => BandwidthRule::Silverman,
            (None, Some(RuleArg::Median)) => BandwidthRule::Median,
            (None, None) => default,
        };
        Ok(KernelChoice {
            bandwidth,
            normalized: !self.unnormalized_kernel,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricChoice {
    pub metrics: Vec<Metric>,
    pub options: MetricOptions,
}

impl MetricArgs {
    fn resolve(&self, default: &[Metric]) -> MetricChoice {
        let mut metrics = Vec::new();
        for m in if self.metrics.is_empty() {
            default
        } else {
            &self.metrics
        } {
            if !metrics.contains(m) {
                metrics.push(*m);
            }
        }
        MetricChoice {
            metrics,
            options: MetricOptions {
                mmd: match self.mmd_estimator {
                    MmdArg::Biased => MmdEstimator::Biased,
                    MmdArg::Unbiased => MmdEstimator::Unbiased,
                },
                kld: match self.kld_direction {
                    KldArg::Symmetric => KldDirection::Symmetric,
                    KldArg::Forward => KldDirection::Forward,
                },
            },
        }
    }
}

/// Everything that determines a run's values, as embedded in its output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum RunConfig {
    Estimate {
        input: PathBuf,
        metrics: MetricChoice,
        kernel: KernelChoice,
        seed: u64,
        format: Format,
    },
    Power {
        r_values: Vec<f64>,
        n: usize,
        runs: usize,
        #[serde(default)]
        parallel: bool,
        metrics: MetricChoice,
        kernel: KernelChoice,
        seed: u64,
        format: Format,
    },
    Dim {
        d_values: Vec<usize>,
        r: f64,
        n: usize,
        runs: usize,
        #[serde(default)]
        parallel: bool,
        metrics: MetricChoice,
        kernel: KernelChoice,
        seed: u64,
        format: Format,
    },
    Time {
        m: usize,
        n: usize,
        d: usize,
        runs: usize,
        metrics: MetricChoice,
        kernel: KernelChoice,
        seed: u64,
        format: Format,
    },
    Cluster {
        input: PathBuf,
        m: usize,
        lambda2: f64,
        lambda3: f64,
        simplex_sign: SimplexSign,
        normalize_regularizers: bool,
        learning_rate: f64,
        max_iters: usize,
        tolerance: f64,
        restarts: usize,
        kernel: KernelChoice,
        seed: u64,
        format: Format,
    },
    Synth {
        r: f64,
        n: usize,
        d: usize,
        ids: Vec<u32>,
        seed: u64,
        format: Format,
    },
}

impl RunConfig {
    pub fn name(&self) -> &'static str {
        match self {
            RunConfig::Estimate { .. } => "estimate",
            RunConfig::Power { .. } => "power",
            RunConfig::Dim { .. } => "dim",
            RunConfig::Time { .. } => "time",
            RunConfig::Cluster { .. } => "cluster",
            RunConfig::Synth { .. } => "synth",
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            RunConfig::Estimate { seed, .. }
            | RunConfig::Power { seed, .. }
            | RunConfig::Dim { seed, .. }
            | RunConfig::Time { seed, .. }
            | RunConfig::Cluster { seed, .. }
            | RunConfig::Synth { seed, .. } => *seed,
        }
    }

    pub fn format(&self) -> Format {
        match self {
            RunConfig::Estimate { format, .. }
            | RunConfig::Power { format, .. }
            | RunConfig::Dim { format, .. }
            | RunConfig::Time { format, .. }
            | RunConfig::Cluster { format, .. }
            | RunConfig::Synth { format, .. } => *format,
        }
    }

    /// Reads the configuration embedded in an output file.
    pub fn from_output(path: &Path) -> Result<Self> {
        let meta = io::read_meta(path)?;
        let config = meta.get("config").cloned().ok_or_else(|| {
            Error::Input(format!("{} has no embedded configuration", path.display()))
        })?;
        Ok(serde_json::from_value(config)?)
    }
}

/// Resolves parsed arguments into a configuration and an output path.
/// `rerun` yields the configuration read from its source file.
pub fn resolve(command: &Command) -> Result<(RunConfig, Option<PathBuf>)> {
    let all = Metric::ALL;
    Ok(match command {
        Command::Estimate(a) => (
            RunConfig::Estimate {
                input: a.input.clone(),
                metrics: a.metrics.resolve(&[Metric::Gcsd]),
                kernel: a.kernel.resolve(BandwidthRule::Median)?,
                seed: a.output.seed,
                format: a.output.format,
            },
            a.output.out.clone(),
        ),
        Command::Power(a) => (
            RunConfig::Power {
                r_values: a
                    .r_values
                    .clone()
                    .unwrap_or_else(|| DEFAULT_R_VALUES.to_vec()),
                n: a.n,
                runs: a.runs,
                parallel: a.parallel,
                metrics: a.metrics.resolve(&all),
                kernel: a
                    .kernel
                    .resolve(BandwidthRule::Fixed(DEFAULT_POWER_SIGMA))?,
                seed: a.output.seed,
                format: a.output.format,
            },
            a.output.out.clone(),
        ),
        Command::Dim(a) => (
            RunConfig::Dim {
                d_values: a.d_values.clone(),
                r: a.r,
                n: a.n,
                runs: a.runs,
                parallel: a.parallel,
                metrics: a.metrics.resolve(&all),
                kernel: a.kernel.resolve(BandwidthRule::Median)?,
                seed: a.output.seed,
                format: a.output.format,
            },
            a.output.out.clone(),
        ),
        Command::Time(a) => (
            RunConfig::Time {
                m: a.m,
                n: a.n,
                d: a.d,
                runs: a.runs,
                metrics: a.metrics.resolve(&all),
                kernel: a.kernel.resolve(BandwidthRule::Median)?,
                seed: a.output.seed,
                format: a.output.format,
            },
            a.output.out.clone(),
        ),
        Command::Cluster(a) => (
            RunConfig::Cluster {
                input: a.input.clone(),
                m: a.m,
                lambda2: a.lambda2,
                lambda3: a.lambda3,
                simplex_sign: SimplexSign::default(),
                normalize_regularizers: true,
                learning_rate: a.learning_rate,
                max_iters: a.max_iters,
                tolerance: a.tolerance,
                restarts: a.restarts,
                kernel: a.kernel.resolve(BandwidthRule::Median)?,
                seed: a.output.seed,
                format: a.output.format,
            },
            a.output.out.clone(),
        ),
        Command::Synth(a) => (
            RunConfig::Synth {
                r: a.r,
                n: a.n,
                d: a.d,
                ids: a.ids.clone().unwrap_or_else(|| (1..=10).collect()),
                seed: a.output.seed,
                format: a.output.format,
            },
            a.output.out.clone(),
        ),
        Command::Rerun(a) => (RunConfig::from_output(&a.from)?, a.out.clone()),
    })
}

/// Parses `args`, runs the command, and returns the process exit code:
/// 0 on success, 1 if a requested computation failed, 2 on errors.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = resolve(&cli.command).and_then(|(config, out)| execute(&config, out.as_deref()));
    match result {
        Ok(outcome) => {
            if !outcome.summary.is_empty() {
                eprint!("{}", outcome.summary);
            }
            i32::from(outcome.failed)
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}
