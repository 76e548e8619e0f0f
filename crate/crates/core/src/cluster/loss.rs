//! The assignment-matrix divergence, the two regularizers, and the analytic
//! gradient of the combined loss through the row softmax.

use ndarray::{Array2, Axis};

use super::{softmax_rows, AssignmentMatrix, ClusterLossConfig};
use crate::error::{Error, Result};
use crate::kernel::GramMatrix;
use crate::numeric::{lex_cmp, log_sum_exp, scaled_log};

fn check_shapes(k: &GramMatrix, n: usize, m: usize) -> Result<()> {
    if k.len() != n {
        return Err(Error::DimensionMismatch {
            expected: k.len(),
            got: n,
        });
    }
    if m < 2 {
        return Err(Error::Input(format!("need at least 2 clusters, got {m}")));
    }
    Ok(())
}

fn check_columns(a: &Array2<f64>) -> Result<()> {
    for (cluster, col) in a.columns().into_iter().enumerate() {
        if col.iter().all(|&v| v == 0.0) {
            return Err(Error::DegenerateCluster { cluster });
        }
    }
    Ok(())
}

/// `log (K·A)`, the log kernel mass of each cluster at each point.
fn log_mass(k: &GramMatrix, a: &Array2<f64>) -> Array2<f64> {
    k.values().dot(a).mapv(f64::ln)
}

/// `Σ_{k ∉ skip} row[k]`.
#[inline]
fn sum_except(row: &[f64], skip: &[usize]) -> f64 {
    row.iter()
        .enumerate()
        .filter(|(k, _)| !skip.contains(k))
        .map(|(_, &v)| v)
        .sum()
}

/// Log-domain pieces shared by the value and the gradient.
struct Parts {
    log_a: Array2<f64>,
    log_b: Array2<f64>,
    /// `log Σ_{j,t} T[j,t]` with `T[j,t] = a[j,t]^(m-1) Π_{k≠t} B[j,k]`
    log_sum_t: f64,
    /// `log Σ_j U[j,t]` with `U[j,t] = (a[j,t] B[j,t])^(m-1)`
    log_sum_u: Vec<f64>,
}

fn parts(k: &GramMatrix, a: &Array2<f64>) -> Parts {
    let (n, m) = a.dim();
    let p = (m - 1) as f64;
    let log_a = a.mapv(f64::ln);
    let log_b = log_mass(k, a);
    let mut log_t = Array2::zeros((n, m));
    let mut log_u = Array2::zeros((n, m));
    for j in 0..n {
        let lb = log_b.row(j).to_vec();
        for t in 0..m {
            log_t[[j, t]] = scaled_log(p, log_a[[j, t]]) + sum_except(&lb, &[t]);
            log_u[[j, t]] = scaled_log(p, log_a[[j, t]] + lb[t]);
        }
    }
    let log_sum_t = log_sum_exp(log_t.as_slice().expect("standard layout"));
    let log_sum_u = log_u
        .columns()
        .into_iter()
        .map(|c| log_sum_exp(&c.to_vec()))
        .collect();
    Parts {
        log_a,
        log_b,
        log_sum_t,
        log_sum_u,
    }
}

fn value_from(parts: &Parts, n: usize, m: usize) -> f64 {
    let (nf, mf) = (n as f64, m as f64);
    let log_v1 = parts.log_sum_t - mf.ln() - mf * nf.ln();
    let log_v2: f64 = parts.log_sum_u.iter().map(|s| s - mf * nf.ln()).sum();
    -log_v1 + log_v2 / mf
}

/// Columns sorted by content, so relabeling the clusters leaves every
/// floating-point reduction unchanged.
fn canonical_columns(a: &Array2<f64>) -> Array2<f64> {
    let cols: Vec<Vec<f64>> = a.columns().into_iter().map(|c| c.to_vec()).collect();
    let mut order: Vec<usize> = (0..cols.len()).collect();
    order.sort_by(|&x, &y| lex_cmp(&cols[x], &cols[y]));
    let mut out = Array2::zeros(a.dim());
    for (dst, &src) in order.iter().enumerate() {
        out.column_mut(dst).assign(&a.column(src));
    }
    out
}

// =============================================================================
// Divergence and regularizers
// =============================================================================

/// GCSD between the soft clusters of `A`, including the `1/(m nᵐ)` and
/// `1/nᵐ` constants. Exactly invariant under relabeling the clusters.
///
/// For one-hot `A` with equal cluster sizes the constants cancel and the
/// value equals [`gcsd`](crate::estimators::gcsd) on the induced partition.
pub fn cluster_gcsd(k: &GramMatrix, a: &AssignmentMatrix) -> Result<f64> {
    let (n, m) = (a.n(), a.m());
    check_shapes(k, n, m)?;
    check_columns(a.values())?;
    let sorted = canonical_columns(a.values());
    Ok(value_from(&parts(k, &sorted), n, m))
}

/// `tr(AAᵀ) = Σ_{i,t} a[i,t]²`, between `n/m` (uniform) and `n` (one-hot).
pub fn reg_orthogonality(a: &AssignmentMatrix) -> f64 {
    a.values().iter().map(|v| v * v).sum()
}

/// `‖α_i - e_j‖²` for every row `i` and corner `j`.
fn corner_sq_dists(a: &Array2<f64>) -> Array2<f64> {
    let (n, m) = a.dim();
    let mut d = Array2::zeros((n, m));
    for i in 0..n {
        let norm: f64 = a.row(i).iter().map(|v| v * v).sum();
        for j in 0..m {
            d[[i, j]] = norm - 2.0 * a[[i, j]] + 1.0;
        }
    }
    d
}

/// `tr(QQᵀ) = Σ_{i,j} exp(-2 ‖α_i - e_j‖²)`.
pub fn reg_simplex(a: &AssignmentMatrix) -> f64 {
    corner_sq_dists(a.values())
        .iter()
        .map(|d| (-2.0 * d).exp())
        .sum()
}

fn reg_weight(cfg: &ClusterLossConfig, n: usize) -> f64 {
    if cfg.normalize_regularizers {
        1.0 / n as f64
    } else {
        1.0
    }
}

/// `-G(A) + λ₂ tr(AAᵀ) ∓ λ₃ tr(QQᵀ)`, to be minimized. The sign of the
/// simplex term follows `cfg.simplex_sign`; with `normalize_regularizers`
/// both regularizers are averaged over rows instead of summed.
pub fn total_loss(k: &GramMatrix, a: &AssignmentMatrix, cfg: &ClusterLossConfig) -> Result<f64> {
    let g = cluster_gcsd(k, a)?;
    let w = reg_weight(cfg, a.n());
    let mut loss = -g;
    if cfg.lambda2 != 0.0 {
        loss += w * cfg.lambda2 * reg_orthogonality(a);
    }
    if cfg.lambda3 != 0.0 {
        loss += w * cfg.simplex_sign.factor() * cfg.lambda3 * reg_simplex(a);
    }
    Ok(loss)
}

// =============================================================================
// Gradient
// =============================================================================

/// `∂G/∂A` at a strictly positive `A`.
fn gcsd_grad_a(k: &GramMatrix, a: &Array2<f64>, parts: &Parts) -> Array2<f64> {
    let (n, m) = a.dim();
    let p = (m - 1) as f64;
    let q = (m as f64) - 2.0;
    let (la, lb) = (&parts.log_a, &parts.log_b);

    // ∂ log V₁: direct dependence on a[j,t] plus dependence through B.
    let mut direct1 = Array2::zeros((n, m));
    let mut w1 = Array2::zeros((n, m));
    // ∂ log V₂(t): direct plus through B[·,t].
    let mut direct2 = Array2::zeros((n, m));
    let mut w2 = Array2::zeros((n, m));
    for j in 0..n {
        let lb_row = lb.row(j).to_vec();
        for c in 0..m {
            direct1[[j, c]] = (p.ln() + scaled_log(q, la[[j, c]]) + sum_except(&lb_row, &[c])
                - parts.log_sum_t)
                .exp();
            w1[[j, c]] = (0..m)
                .filter(|&t| t != c)
                .map(|t| {
                    (scaled_log(p, la[[j, t]]) + sum_except(&lb_row, &[t, c]) - parts.log_sum_t)
                        .exp()
                })
                .sum::<f64>();
            direct2[[j, c]] =
                (scaled_log(q, la[[j, c]]) + scaled_log(p, lb_row[c]) - parts.log_sum_u[c]).exp();
            w2[[j, c]] =
                (scaled_log(p, la[[j, c]]) + scaled_log(q, lb_row[c]) - parts.log_sum_u[c]).exp();
        }
    }
    let kv = k.values();
    let d_log_v1 = direct1 + kv.dot(&w1);
    let d_log_v2 = (direct2 + kv.dot(&w2)) * p;
    d_log_v2 / m as f64 - d_log_v1
}

/// `∂ tr(QQᵀ) / ∂a[i,k] = Σ_j -4 Q[i,j]² (a[i,k] - δ_jk)`.
fn simplex_grad_a(a: &Array2<f64>) -> Array2<f64> {
    let (n, m) = a.dim();
    let q2 = corner_sq_dists(a).mapv(|d| (-2.0 * d).exp());
    let mut g = Array2::zeros((n, m));
    for i in 0..n {
        let total: f64 = q2.row(i).sum();
        for kk in 0..m {
            g[[i, kk]] = -4.0 * (a[[i, kk]] * total - q2[[i, kk]]);
        }
    }
    g
}

/// Pulls `∂L/∂A` back through the row softmax.
fn softmax_pullback(a: &Array2<f64>, g: &Array2<f64>) -> Array2<f64> {
    let inner = (a * g).sum_axis(Axis(1));
    let mut out = g.clone();
    for (i, mut row) in out.rows_mut().into_iter().enumerate() {
        row -= inner[i];
    }
    out * a
}

/// Loss and its gradient with respect to the logits, in one pass.
pub(crate) fn loss_and_gradient(
    k: &GramMatrix,
    logits: &Array2<f64>,
    cfg: &ClusterLossConfig,
) -> Result<(f64, Array2<f64>)> {
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(Error::Domain("logits must be finite".into()));
    }
    let a = softmax_rows(logits);
    let (n, m) = a.dim();
    check_shapes(k, n, m)?;
    check_columns(&a)?;
    let pr = parts(k, &a);
    let w = reg_weight(cfg, n);
    let s3 = w * cfg.simplex_sign.factor() * cfg.lambda3;
    let q2_sum: f64 = corner_sq_dists(&a).iter().map(|d| (-2.0 * d).exp()).sum();
    let loss = -value_from(&pr, n, m)
        + w * cfg.lambda2 * a.iter().map(|v| v * v).sum::<f64>()
        + s3 * q2_sum;
    let mut g = -gcsd_grad_a(k, &a, &pr);
    g.scaled_add(2.0 * w * cfg.lambda2, &a);
    g.scaled_add(s3, &simplex_grad_a(&a));
    Ok((loss, softmax_pullback(&a, &g)))
}

/// Gradient of [`total_loss`] with respect to the logits `Z`, where
/// `A = softmax(Z)` row by row.
pub fn loss_gradient(
    k: &GramMatrix,
    logits: &Array2<f64>,
    cfg: &ClusterLossConfig,
) -> Result<Array2<f64>> {
    loss_and_gradient(k, logits, cfg).map(|(_, g)| g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::SimplexSign;
    use crate::estimators::{gcsd, MultiSample};
    use crate::kernel::{gram_matrix, KernelConfig, SampleSet};
    use crate::synth::{stream_rng, StreamTag};
    use ndarray::array;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand_distr::{Distribution, StandardNormal};

    fn random_instance(
        seed: u64,
        n: usize,
        m: usize,
        d: usize,
    ) -> (GramMatrix, Array2<f64>, SampleSet) {
        let mut rng = stream_rng(seed, &[StreamTag::Fixture as u64]);
        let x = Array2::from_shape_fn((n, d), |_| {
            2.0 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
        });
        let z = Array2::from_shape_fn((n, m), |_| StandardNormal.sample(&mut rng));
        let set = SampleSet::new(x).unwrap();
        let k = gram_matrix(&set, &KernelConfig::new(1.0, d).unwrap()).unwrap();
        (k, z, set)
    }

    fn loss_at(k: &GramMatrix, z: &Array2<f64>, cfg: &ClusterLossConfig) -> f64 {
        total_loss(k, &AssignmentMatrix::from_logits(z).unwrap(), cfg).unwrap()
    }

    /// Largest relative error of the analytic gradient against central
    /// differences with step `1e-5`.
    fn max_fd_error(k: &GramMatrix, z: &Array2<f64>, cfg: &ClusterLossConfig) -> f64 {
        let g = loss_gradient(k, z, cfg).unwrap();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for idx in ndarray::indices(z.dim()) {
            let (mut zp, mut zm) = (z.clone(), z.clone());
            zp[idx] += h;
            zm[idx] -= h;
            let fd = (loss_at(k, &zp, cfg) - loss_at(k, &zm, cfg)) / (2.0 * h);
            let scale = g[idx].abs().max(fd.abs()).max(1e-8);
            worst = worst.max((g[idx] - fd).abs() / scale);
        }
        worst
    }

    fn partition(sizes: &[usize]) -> (Vec<usize>, usize) {
        let labels: Vec<usize> = sizes
            .iter()
            .enumerate()
            .flat_map(|(t, &s)| vec![t; s])
            .collect();
        (labels, sizes.len())
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let kc = KernelConfig::new(1.0, 1).unwrap();
        for seed in 0..6 {
            for (m, sign) in [
                (2, SimplexSign::Reward),
                (3, SimplexSign::Penalty),
                (4, SimplexSign::Reward),
            ] {
                let (k, z, _) = random_instance(seed, 10, m, 1);
                for normalize in [true, false] {
                    let cfg = ClusterLossConfig::new(0.5, 0.5, kc)
                        .unwrap()
                        .with_simplex_sign(sign)
                        .with_normalized_regularizers(normalize);
                    let err = max_fd_error(&k, &z, &cfg);
                    assert!(err < 1e-4, "seed {seed} m {m}: {err}");
                }
            }
        }
    }

    #[test]
    fn gradient_rows_are_orthogonal_to_ones() {
        let (k, z, _) = random_instance(11, 12, 3, 2);
        let cfg = ClusterLossConfig::new(0.5, 0.5, *k.config()).unwrap();
        let g = loss_gradient(&k, &z, &cfg).unwrap();
        for row in g.rows() {
            assert!(row.sum().abs() < 1e-8);
        }
    }

    #[test]
    fn saturated_assignments_have_vanishing_divergence_gradient() {
        let (k, _, _) = random_instance(5, 12, 3, 1);
        let z = Array2::from_shape_fn((12, 3), |(i, t)| if i % 3 == t { 20.0 } else { -20.0 });
        let cfg = ClusterLossConfig::new(0.0, 0.0, *k.config()).unwrap();
        let g = loss_gradient(&k, &z, &cfg).unwrap();
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm < 1e-6, "{norm}");
    }

    #[test]
    fn hard_balanced_assignment_matches_sample_estimator() {
        for (seed, sizes) in [
            (1u64, vec![5, 5]),
            (2, vec![7, 7, 7]),
            (3, vec![20, 20, 20]),
        ] {
            let n: usize = sizes.iter().sum();
            let (k, _, set) = random_instance(seed, n, sizes.len(), 2);
            let (mut labels, m) = partition(&sizes);
            labels.shuffle(&mut stream_rng(seed, &[9]));
            let a = AssignmentMatrix::one_hot(&labels, m).unwrap();
            let groups: Vec<SampleSet> = (0..m)
                .map(|t| {
                    let rows: Vec<Vec<f64>> = (0..n)
                        .filter(|&i| labels[i] == t)
                        .map(|i| set.row(i).to_vec())
                        .collect();
                    SampleSet::from_rows(&rows).unwrap()
                })
                .collect();
            let direct = gcsd(&MultiSample::new(groups).unwrap(), k.config()).unwrap();
            let v = cluster_gcsd(&k, &a).unwrap();
            assert!((v - direct).abs() < 1e-9, "{v} vs {direct}");
        }
    }

    /// With one-hot rows the size factors `n_t / n` enter both terms with the
    /// same total power and cancel, so unequal clusters match as well.
    #[test]
    fn hard_unequal_assignment_matches_sample_estimator() {
        for (seed, sizes) in [(4u64, vec![3, 9]), (5, vec![2, 6, 13]), (6, vec![30, 5, 11, 4])] {
            let n: usize = sizes.iter().sum();
            let (k, _, set) = random_instance(seed, n, sizes.len(), 2);
            let (mut labels, m) = partition(&sizes);
            labels.shuffle(&mut stream_rng(seed, &[9]));
            let groups: Vec<SampleSet> = (0..m)
                .map(|t| {
                    let rows: Vec<Vec<f64>> = (0..n)
                        .filter(|&i| labels[i] == t)
                        .map(|i| set.row(i).to_vec())
                        .collect();
                    SampleSet::from_rows(&rows).unwrap()
                })
                .collect();
            let direct = gcsd(&MultiSample::new(groups).unwrap(), k.config()).unwrap();
            let v = cluster_gcsd(&k, &AssignmentMatrix::one_hot(&labels, m).unwrap()).unwrap();
            assert!((v - direct).abs() < 1e-9, "{sizes:?}: {v} vs {direct}");
        }
    }

    #[test]
    fn matching_blobs_beat_mixed_assignment() {
        let set = SampleSet::from_scalars(&[0.0, 0.1, 5.0, 5.1]).unwrap();
        let k = gram_matrix(&set, &KernelConfig::new(1.0, 1).unwrap()).unwrap();
        let good = cluster_gcsd(&k, &AssignmentMatrix::one_hot(&[0, 0, 1, 1], 2).unwrap()).unwrap();
        let mixed =
            cluster_gcsd(&k, &AssignmentMatrix::one_hot(&[0, 1, 0, 1], 2).unwrap()).unwrap();
        assert!(good > mixed, "{good} vs {mixed}");
    }

    #[test]
    fn soft_value_matches_direct_transcription() {
        let (k, z, _) = random_instance(21, 7, 3, 1);
        let a = softmax_rows(&z);
        let kv = k.values();
        let (n, m) = a.dim();
        let b = kv.dot(&a);
        let (nf, mf) = (n as f64, m as f64);
        let mut v1 = 0.0;
        for t in 0..m {
            for j in 0..n {
                let prod: f64 = (0..m).filter(|&q| q != t).map(|q| b[[j, q]]).product();
                v1 += a[[j, t]].powi(m as i32 - 1) * prod;
            }
        }
        v1 /= mf * nf.powi(m as i32);
        let mut v2 = 0.0;
        for t in 0..m {
            let s: f64 = (0..n)
                .map(|j| (a[[j, t]] * b[[j, t]]).powi(m as i32 - 1))
                .sum();
            v2 += (s / nf.powi(m as i32)).ln();
        }
        let direct = -v1.ln() + v2 / mf;
        let v = cluster_gcsd(&k, &AssignmentMatrix::new(a).unwrap()).unwrap();
        assert!((v - direct).abs() < 1e-12, "{v} vs {direct}");
    }

    #[test]
    fn degenerate_and_mismatched_inputs() {
        let (k, _, _) = random_instance(1, 4, 2, 1);
        let a = AssignmentMatrix::one_hot(&[0, 0, 0, 0], 2).unwrap();
        assert!(matches!(
            cluster_gcsd(&k, &a),
            Err(Error::DegenerateCluster { cluster: 1 })
        ));
        let short = AssignmentMatrix::one_hot(&[0, 1, 0], 2).unwrap();
        assert!(cluster_gcsd(&k, &short).is_err());
        let single = AssignmentMatrix::one_hot(&[0, 0, 0, 0], 1).unwrap();
        assert!(cluster_gcsd(&k, &single).is_err());
    }

    #[test]
    fn regularizer_examples() {
        let one_hot = AssignmentMatrix::one_hot(&[0, 1, 1, 2], 3).unwrap();
        assert_eq!(reg_orthogonality(&one_hot), 4.0);
        let uniform = AssignmentMatrix::uniform(6, 3).unwrap();
        assert!((reg_orthogonality(&uniform) - 2.0).abs() < 1e-15);
        let mixed = AssignmentMatrix::new(array![[1.0, 0.0], [0.5, 0.5]]).unwrap();
        assert_eq!(reg_orthogonality(&mixed), 1.5);

        let corner = AssignmentMatrix::one_hot(&[0], 2).unwrap();
        assert!((reg_simplex(&corner) - (1.0 + (-4.0f64).exp())).abs() < 1e-15);
        let centre = AssignmentMatrix::uniform(1, 2).unwrap();
        assert!((reg_simplex(&centre) - 2.0 * (-1.0f64).exp()).abs() < 1e-15);
        assert!(reg_simplex(&centre) < reg_simplex(&corner));
        let q = corner_sq_dists(AssignmentMatrix::uniform(1, 4).unwrap().values());
        assert!(q.iter().all(|&v| v == q[[0, 0]]));
    }

    #[test]
    fn unregularized_loss_is_negated_divergence() {
        let (k, z, _) = random_instance(3, 9, 3, 1);
        let a = AssignmentMatrix::from_logits(&z).unwrap();
        let cfg = ClusterLossConfig::new(0.0, 0.0, *k.config()).unwrap();
        assert_eq!(
            total_loss(&k, &a, &cfg).unwrap(),
            -cluster_gcsd(&k, &a).unwrap()
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn relabeling_clusters_is_exact(seed in 0u64..1000, m in 2usize..5, shift in 1usize..4) {
            let (k, z, _) = random_instance(seed, 9, m, 2);
            let a = softmax_rows(&z);
            let mut permuted = a.clone();
            for t in 0..m {
                permuted.column_mut((t + shift) % m).assign(&a.column(t));
            }
            let v = cluster_gcsd(&k, &AssignmentMatrix::new(a).unwrap()).unwrap();
            let w = cluster_gcsd(&k, &AssignmentMatrix::new(permuted).unwrap()).unwrap();
            prop_assert_eq!(v.to_bits(), w.to_bits());
        }

        #[test]
        fn balanced_partitions_match(seed in 0u64..1000, m in 2usize..4, per in 2usize..15) {
            let n = m * per;
            let (k, _, set) = random_instance(seed, n, m, 1);
            let (mut labels, _) = partition(&vec![per; m]);
            labels.shuffle(&mut stream_rng(seed, &[4]));
            let groups: Vec<SampleSet> = (0..m)
                .map(|t| SampleSet::from_rows(
                    &(0..n).filter(|&i| labels[i] == t).map(|i| set.row(i).to_vec()).collect::<Vec<_>>(),
                ).unwrap())
                .collect();
            let direct = gcsd(&MultiSample::new(groups).unwrap(), k.config()).unwrap();
            let v = cluster_gcsd(&k, &AssignmentMatrix::one_hot(&labels, m).unwrap()).unwrap();
            prop_assert!((v - direct).abs() < 1e-9);
        }
    }
}
