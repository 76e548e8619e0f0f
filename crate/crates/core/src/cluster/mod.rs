//! Clustering by maximizing the GCSD between the clusters of a soft
//! partition.
//!
//! A soft partition of `n` points into `m` clusters is a row-stochastic
//! [`AssignmentMatrix`] `A`. With a Gram matrix `K` over the points and
//! `B = K·A` (so `B[j,k]` is the kernel mass that cluster `k` places on
//! point `j`), the divergence between the clusters is
//!
//! ```text
//! V₁    = 1/(m nᵐ) Σ_t Σ_j a[j,t]^(m-1) Π_{k≠t} B[j,k]
//! V₂(t) = 1/nᵐ    Σ_j (a[j,t] B[j,t])^(m-1)
//! G(A)  = -log V₁ + (1/m) Σ_t log V₂(t)
//! ```
//!
//! | Item | Role |
//! |------|------|
//! | [`cluster_gcsd`] | `G(A)` |
//! | [`reg_orthogonality`] | `tr(AAᵀ) = Σ a²` |
//! | [`reg_simplex`] | `tr(QQᵀ)` with `Q[i,j] = exp(-‖α_i - e_j‖²)` |
//! | [`total_loss`] | `-G(A)` plus the weighted regularizers, to be minimized |
//! | [`loss_gradient`] | gradient of [`total_loss`] with respect to the logits of `A` |
//! | [`fit_assignments`] | Adam on row-softmax logits, best of several restarts |
//! | [`acc`], [`nmi`] | external clustering quality |

mod loss;
mod metrics;
mod optim;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelConfig;

pub use loss::{cluster_gcsd, loss_gradient, reg_orthogonality, reg_simplex, total_loss};
pub use metrics::{acc, nmi};
pub use optim::{fit_assignments, FitResult, OptimizerConfig, StopReason, MIN_COLUMN_MASS};

/// Row sums must equal one within this tolerance.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

// =============================================================================
// Assignment matrix
// =============================================================================

/// An `n × m` row-stochastic matrix of soft cluster memberships.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentMatrix {
    values: Array2<f64>,
}

impl AssignmentMatrix {
    /// Validates entries in `[0, 1]` and unit row sums.
    pub fn new(values: Array2<f64>) -> Result<Self> {
        let (n, m) = values.dim();
        if n == 0 || m == 0 {
            return Err(Error::Input(format!(
                "assignment matrix must be non-empty, got {n}x{m}"
            )));
        }
        for (i, row) in values.rows().into_iter().enumerate() {
            if row.iter().any(|&a| !(0.0..=1.0).contains(&a)) {
                return Err(Error::Input(format!("row {i} has an entry outside [0, 1]")));
            }
            let s: f64 = row.sum();
            if (s - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::Input(format!("row {i} sums to {s}, expected 1")));
            }
        }
        Ok(Self { values })
    }

    /// Row-wise softmax of finite logits.
    pub fn from_logits(logits: &Array2<f64>) -> Result<Self> {
        if logits.iter().any(|z| !z.is_finite()) {
            return Err(Error::Domain("logits must be finite".into()));
        }
        Self::new(softmax_rows(logits))
    }

    /// One-hot rows: point `i` belongs to cluster `labels[i]`.
    pub fn one_hot(labels: &[usize], m: usize) -> Result<Self> {
        let mut values = Array2::zeros((labels.len(), m));
        for (i, &l) in labels.iter().enumerate() {
            if l >= m {
                return Err(Error::Input(format!(
                    "label {l} out of range for {m} clusters"
                )));
            }
            values[[i, l]] = 1.0;
        }
        Self::new(values)
    }

    /// Every entry `1/m`.
    pub fn uniform(n: usize, m: usize) -> Result<Self> {
        Self::new(Array2::from_elem((n, m), 1.0 / m as f64))
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn m(&self) -> usize {
        self.values.ncols()
    }

    /// Row argmax; ties go to the lowest cluster index.
    pub fn harden(&self) -> Vec<usize> {
        self.values
            .rows()
            .into_iter()
            .map(|row| {
                let mut best = 0;
                for (k, &a) in row.iter().enumerate() {
                    if a > row[best] {
                        best = k;
                    }
                }
                best
            })
            .collect()
    }
}

pub(crate) fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|z| (z - max).exp());
        let s: f64 = row.sum();
        row.mapv_inplace(|e| e / s);
    }
    out
}

// =============================================================================
// Loss configuration
// =============================================================================

/// How the simplex regularizer enters the minimized loss.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimplexSign {
    /// `-λ₃ tr(QQᵀ)`: larger `tr(QQᵀ)` is rewarded.
    #[default]
    Reward,
    /// `+λ₃ tr(QQᵀ)`: larger `tr(QQᵀ)` is penalized.
    Penalty,
}

impl SimplexSign {
    pub fn factor(&self) -> f64 {
        match self {
            SimplexSign::Reward => -1.0,
            SimplexSign::Penalty => 1.0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SimplexSign::Reward => "reward",
            SimplexSign::Penalty => "penalty",
        }
    }
}

/// Regularizer weights, kernel, and the simplex sign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterLossConfig {
    pub lambda2: f64,
    pub lambda3: f64,
    pub kernel: KernelConfig,
    pub simplex_sign: SimplexSign,
    pub normalize_regularizers: bool,
}

impl ClusterLossConfig {
    pub fn new(lambda2: f64, lambda3: f64, kernel: KernelConfig) -> Result<Self> {
        for (name, v) in [("lambda2", lambda2), ("lambda3", lambda3)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(Self {
            lambda2,
            lambda3,
            kernel,
            simplex_sign: SimplexSign::default(),
            normalize_regularizers: true,
        })
    }

    pub fn with_simplex_sign(mut self, sign: SimplexSign) -> Self {
        self.simplex_sign = sign;
        self
    }

    pub fn with_normalized_regularizers(mut self, on: bool) -> Self {
        self.normalize_regularizers = on;
        self
    }
}
