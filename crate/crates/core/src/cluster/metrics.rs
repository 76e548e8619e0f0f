//! External clustering quality: accuracy under the best cluster-to-class
//! matching, and normalized mutual information.

use std::collections::BTreeMap;

use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;

use crate::error::{Error, Result};

/// Contingency counts with rows indexed by predicted cluster and columns by
/// true class, in sorted label order.
fn contingency(pred: &[i64], truth: &[i64]) -> Result<Vec<Vec<u64>>> {
    if pred.len() != truth.len() {
        return Err(Error::Input(format!(
            "label vectors differ in length: {} vs {}",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Input("label vectors are empty".into()));
    }
    let index = |xs: &[i64]| -> BTreeMap<i64, usize> {
        let mut map = BTreeMap::new();
        for &x in xs {
            let next = map.len();
            map.entry(x).or_insert(next);
        }
        // Renumber in sorted order.
        map.keys()
            .copied()
            .enumerate()
            .map(|(i, k)| (k, i))
            .collect()
    };
    let (pi, ti) = (index(pred), index(truth));
    let mut table = vec![vec![0u64; ti.len()]; pi.len()];
    for (p, t) in pred.iter().zip(truth) {
        table[pi[p]][ti[t]] += 1;
    }
    Ok(table)
}

/// Fraction of points correctly labeled under the one-to-one map from
/// clusters to classes that maximizes that fraction.
pub fn acc(pred: &[i64], truth: &[i64]) -> Result<f64> {
    let table = contingency(pred, truth)?;
    let size = table.len().max(table[0].len());
    let mut weights = Matrix::new_square(size, 0i64);
    for (r, row) in table.iter().enumerate() {
        for (c, &count) in row.iter().enumerate() {
            weights[(r, c)] = count as i64;
        }
    }
    let (matched, _) = kuhn_munkres(&weights);
    Ok(matched as f64 / pred.len() as f64)
}

fn entropy(counts: impl Iterator<Item = u64>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// `2 I(l, c) / (H(l) + H(c))` with natural logarithms, or `0` when both
/// partitions are constant.
pub fn nmi(pred: &[i64], truth: &[i64]) -> Result<f64> {
    let table = contingency(pred, truth)?;
    let n = pred.len() as f64;
    let rows: Vec<u64> = table.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<u64> = (0..table[0].len())
        .map(|c| table.iter().map(|r| r[c]).sum())
        .collect();
    let (hp, ht) = (
        entropy(rows.iter().copied(), n),
        entropy(cols.iter().copied(), n),
    );
    if hp + ht == 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for (r, row) in table.iter().enumerate() {
        for (c, &count) in row.iter().enumerate() {
            if count > 0 {
                let pij = count as f64 / n;
                mi += pij * (pij * n * n / (rows[r] as f64 * cols[c] as f64)).ln();
            }
        }
    }
    Ok((2.0 * mi / (hp + ht)).clamp(0.0, 1.0))
}
