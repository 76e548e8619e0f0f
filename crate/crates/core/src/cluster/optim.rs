//! Adam on row-softmax logits with a monotone acceptance rule.
//!
//! A proposed step is accepted only if the loss does not increase and every
//! cluster keeps a column mass of at least [`MIN_COLUMN_MASS`]; otherwise the
//! step is discarded (moments included) and the learning rate halved. The
//! recorded trace therefore never increases.

use ndarray::Array2;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::loss::loss_and_gradient;
use super::{softmax_rows, AssignmentMatrix, ClusterLossConfig};
use crate::error::{Error, Result};
use crate::kernel::{gram_matrix, GramMatrix, SampleSet};
use crate::synth::{stream_rng, StreamTag};

/// Iterates with a cluster lighter than this are rejected.
pub const MIN_COLUMN_MASS: f64 = 1e-8;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPSILON: f64 = 1e-8;
/// The learning rate may shrink by at most this factor before giving up.
const MIN_LR_FACTOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub max_iters: usize,
    /// Stop once an accepted step lowers the loss by less than this.
    pub tolerance: f64,
    pub seed: u64,
    pub restarts: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            max_iters: 2000,
            tolerance: 1e-8,
            seed: 0,
            restarts: 5,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(Error::Config(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iters == 0 || self.restarts == 0 {
            return Err(Error::Config(
                "max_iters and restarts must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Loss change fell below the tolerance.
    Tolerance,
    /// Every step was rejected until the learning rate vanished.
    StepCollapse,
    /// Iteration budget exhausted.
    MaxIters,
    /// All points coincide; no partition is preferable.
    Degenerate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub assignment: AssignmentMatrix,
    /// Loss after initialization and after every accepted step.
    pub trace: Vec<f64>,
    pub loss: f64,
    pub converged: bool,
    pub stop: StopReason,
    /// Index of the restart that produced the result.
    pub restart: usize,
    /// Final loss of every restart.
    pub restart_losses: Vec<f64>,
}

struct Run {
    logits: Array2<f64>,
    trace: Vec<f64>,
    stop: StopReason,
}

fn light_cluster(logits: &Array2<f64>) -> bool {
    softmax_rows(logits)
        .sum_axis(ndarray::Axis(0))
        .iter()
        .any(|&mass| mass < MIN_COLUMN_MASS)
}

fn run_once(
    k: &GramMatrix,
    m: usize,
    cfg: &ClusterLossConfig,
    opt: &OptimizerConfig,
    restart: usize,
) -> Result<Run> {
    let n = k.len();
    let mut rng = stream_rng(opt.seed, &[StreamTag::ClusterInit as u64, restart as u64]);
    let mut z = Array2::from_shape_fn((n, m), |_| StandardNormal.sample(&mut rng));
    let (mut loss, mut grad) = loss_and_gradient(k, &z, cfg)?;
    let mut trace = vec![loss];
    let mut m1 = Array2::<f64>::zeros((n, m));
    let mut v = Array2::<f64>::zeros((n, m));
    let mut steps = 0i32;
    let mut lr = opt.learning_rate;
    let mut stop = StopReason::MaxIters;

    for _ in 0..opt.max_iters {
        let t = steps + 1;
        let m1_next = &m1 * BETA1 + &grad * (1.0 - BETA1);
        let v_next = &v * BETA2 + &grad.mapv(|g| g * g) * (1.0 - BETA2);
        let (c1, c2) = (1.0 - BETA1.powi(t), 1.0 - BETA2.powi(t));
        let step = ndarray::Zip::from(&m1_next)
            .and(&v_next)
            .map_collect(|&mm, &vv| lr * (mm / c1) / ((vv / c2).sqrt() + EPSILON));
        let z_next = &z - &step;

        let candidate = if light_cluster(&z_next) {
            None
        } else {
            match loss_and_gradient(k, &z_next, cfg) {
                Ok((l, g)) if l.is_finite() && l <= loss => Some((l, g)),
                Ok(_) | Err(Error::DegenerateCluster { .. }) => None,
                Err(e) => return Err(e),
            }
        };
        match candidate {
            Some((l, g)) => {
                let change = loss - l;
                z = z_next;
                m1 = m1_next;
                v = v_next;
                steps = t;
                loss = l;
                grad = g;
                trace.push(loss);
                if change < opt.tolerance {
                    stop = StopReason::Tolerance;
                    break;
                }
            }
            None => {
                lr *= 0.5;
                if lr < opt.learning_rate * MIN_LR_FACTOR {
                    stop = StopReason::StepCollapse;
                    break;
                }
            }
        }
    }
    Ok(Run {
        logits: z,
        trace,
        stop,
    })
}

fn all_rows_equal(x: &SampleSet) -> bool {
    (1..x.len()).all(|i| x.row(i) == x.row(0))
}

/// Fits a soft `m`-cluster assignment of `x` by minimizing
/// [`total_loss`](super::total_loss) over row-softmax logits.
///
/// Each restart draws standard-normal logits from its own seeded stream and
/// runs Adam (`β₁ = 0.9`, `β₂ = 0.999`). The restart with the lowest final
/// loss wins, ties going to the earliest. Restarts run in parallel but are
/// individually sequential, so results do not depend on the thread count.
///
/// If every point is identical there is nothing to separate: the uniform
/// assignment is returned, flagged as not converged.
pub fn fit_assignments(
    x: &SampleSet,
    m: usize,
    loss_cfg: &ClusterLossConfig,
    opt_cfg: &OptimizerConfig,
) -> Result<FitResult> {
    opt_cfg.validate()?;
    let n = x.len();
    if m < 2 {
        return Err(Error::Input(format!("need at least 2 clusters, got {m}")));
    }
    if n < m {
        return Err(Error::Input(format!("{n} points cannot fill {m} clusters")));
    }
    if all_rows_equal(x) {
        return Ok(FitResult {
            assignment: AssignmentMatrix::uniform(n, m)?,
            trace: Vec::new(),
            loss: f64::NAN,
            converged: false,
            stop: StopReason::Degenerate,
            restart: 0,
            restart_losses: Vec::new(),
        });
    }
    let k = gram_matrix(x, &loss_cfg.kernel)?;
    let runs: Vec<Run> = (0..opt_cfg.restarts)
        .into_par_iter()
        .map(|r| run_once(&k, m, loss_cfg, opt_cfg, r))
        .collect::<Result<_>>()?;
    let restart_losses: Vec<f64> = runs
        .iter()
        .map(|r| *r.trace.last().expect("non-empty trace"))
        .collect();
    let mut best = 0;
    for (r, &l) in restart_losses.iter().enumerate() {
        if l < restart_losses[best] {
            best = r;
        }
    }
    let run = runs.into_iter().nth(best).expect("at least one restart");
    Ok(FitResult {
        assignment: AssignmentMatrix::from_logits(&run.logits)?,
        loss: restart_losses[best],
        trace: run.trace,
        converged: matches!(run.stop, StopReason::Tolerance | StopReason::StepCollapse),
        stop: run.stop,
        restart: best,
        restart_losses,
    })
}
