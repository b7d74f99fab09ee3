//! Projection and embedding-space quality measures.
//!
//! * `q_knn_error`: leave-one-out kNN error on model-predicted labels in 2D.
//! * `q_data_error`: disagreement between predicted labels and the decision
//!   grid under each point.
//! * `neighborhood_curves`: Q_NN(k), LCMC(k) and their summaries K_max,
//!   Q_local and AUC for two representations of the same items.
//! * `confusion_matrix`.

use std::io::Write;

use ndarray::ArrayView2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inverse::DecisionGrid;

fn sq_euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// For every row, all other rows sorted by ascending Euclidean distance with
/// ties broken by lower index.
pub fn neighbor_order(repr: ArrayView2<'_, f64>) -> Vec<Vec<usize>> {
    let repr = repr.as_standard_layout();
    let n = repr.nrows();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let a = repr.row(i);
            let a = a.as_slice().expect("standard layout");
            let mut d: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (sq_euclidean(a, repr.row(j).as_slice().expect("standard layout")), j))
                .collect();
            d.sort_unstable_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
            d.into_iter().map(|(_, j)| j).collect()
        })
        .collect()
}

fn top_k(repr: ArrayView2<'_, f64>, i: usize, k: usize) -> Vec<usize> {
    let a = repr.row(i);
    let mut d: Vec<(f64, usize)> = (0..repr.nrows())
        .filter(|&j| j != i)
        .map(|j| {
            let s: f64 = a.iter().zip(repr.row(j).iter()).map(|(x, y)| (x - y) * (x - y)).sum();
            (s, j)
        })
        .collect();
    let cmp = |x: &(f64, usize), y: &(f64, usize)| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1));
    if k < d.len() {
        d.select_nth_unstable_by(k, cmp);
        d.truncate(k);
    }
    d.sort_unstable_by(cmp);
    d.into_iter().map(|(_, j)| j).collect()
}

/// Majority label among `neighbors` (nearest first); ties go to the label
/// of the nearest neighbor.
pub fn majority_vote(neighbors: &[usize], labels: &[usize]) -> usize {
    let n_labels = neighbors.iter().map(|&j| labels[j]).max().map_or(1, |m| m + 1);
    let mut counts = vec![0usize; n_labels];
    for &j in neighbors {
        counts[labels[j]] += 1;
    }
    let best = *counts.iter().max().unwrap_or(&0);
    let nearest = labels[neighbors[0]];
    if counts[nearest] == best {
        nearest
    } else {
        counts.iter().position(|&c| c == best).unwrap_or(0)
    }
}

/// Leave-one-out kNN error of `predicted_labels` over `coords`.
pub fn q_knn_error(coords: ArrayView2<'_, f64>, predicted_labels: &[usize], k: usize) -> Result<f64> {
    let n = coords.nrows();
    if predicted_labels.len() != n {
        return Err(Error::RecordCount {
            records: predicted_labels.len(),
            rows: n,
        });
    }
    if k == 0 || n <= k {
        return Err(Error::Config(format!("q_knn needs N > k >= 1 (N={n}, k={k})")));
    }
    let wrong: usize = (0..n)
        .into_par_iter()
        .map(|i| usize::from(majority_vote(&top_k(coords, i, k), predicted_labels) != predicted_labels[i]))
        .sum();
    Ok(wrong as f64 / n as f64)
}

/// Fraction of points whose predicted label differs from the grid label of
/// the cell containing them.
pub fn q_data_error(coords: ArrayView2<'_, f64>, predicted_labels: &[usize], grid: &DecisionGrid) -> Result<f64> {
    let n = coords.nrows();
    if predicted_labels.len() != n {
        return Err(Error::RecordCount {
            records: predicted_labels.len(),
            rows: n,
        });
    }
    if n == 0 {
        return Ok(0.0);
    }
    let wrong = coords
        .outer_iter()
        .zip(predicted_labels)
        .filter(|(p, &l)| grid.label_at(p[0], p[1]) != l)
        .count();
    Ok(wrong as f64 / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodCurves {
    pub ks: Vec<usize>,
    pub q_nn: Vec<f64>,
    pub lcmc: Vec<f64>,
    pub k_max: usize,
    pub q_local: f64,
    pub auc: f64,
}

impl NeighborhoodCurves {
    /// `k, q_nn, lcmc` rows with a header.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "k,q_nn,lcmc")?;
        for ((k, q), l) in self.ks.iter().zip(&self.q_nn).zip(&self.lcmc) {
            writeln!(out, "{k},{q},{l}")?;
        }
        Ok(())
    }

    /// Mean chance level `k / (N - 1)` over all `k`.
    pub fn chance_auc(&self) -> f64 {
        let m = self.ks.len() as f64;
        self.ks.iter().map(|&k| k as f64 / m).sum::<f64>() / m
    }
}

/// Shared-neighbor curves between two representations of the same rows.
///
/// `q_nn[k-1] = (1 / (N k)) * sum_i |kNN_a(i) ∩ kNN_b(i)|` for `k = 1..N-1`,
/// computed incrementally from full neighbor orders.
pub fn neighborhood_curves(repr_a: ArrayView2<'_, f64>, repr_b: ArrayView2<'_, f64>) -> Result<NeighborhoodCurves> {
    let n = repr_a.nrows();
    if repr_b.nrows() != n {
        return Err(Error::RecordCount {
            records: repr_b.nrows(),
            rows: n,
        });
    }
    if n < 3 {
        return Err(Error::Config(format!("neighborhood curves need N >= 3, got {n}")));
    }
    let order_a = neighbor_order(repr_a);
    let order_b = neighbor_order(repr_b);
    let kmax = n - 1;

    // overlap[k-1] summed over all points
    let overlap: Vec<u64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rank_a = vec![usize::MAX; n];
            let mut rank_b = vec![usize::MAX; n];
            for (r, &j) in order_a[i].iter().enumerate() {
                rank_a[j] = r;
            }
            for (r, &j) in order_b[i].iter().enumerate() {
                rank_b[j] = r;
            }
            let mut counts = vec![0u64; kmax];
            let mut shared = 0u64;
            for k in 1..=kmax {
                let a_new = order_a[i][k - 1];
                let b_new = order_b[i][k - 1];
                // a_new joins when b already ranks it within the first k
                if rank_b[a_new] < k {
                    shared += 1;
                }
                // b_new joins when a ranked it strictly earlier
                if rank_a[b_new] < k - 1 {
                    shared += 1;
                }
                counts[k - 1] = shared;
            }
            counts
        })
        .reduce(
            || vec![0u64; kmax],
            |mut acc, c| {
                acc.iter_mut().zip(c).for_each(|(a, b)| *a += b);
                acc
            },
        );

    let ks: Vec<usize> = (1..=kmax).collect();
    let q_nn: Vec<f64> = ks
        .iter()
        .zip(&overlap)
        .map(|(&k, &c)| c as f64 / (n as f64 * k as f64))
        .collect();
    let lcmc: Vec<f64> = ks
        .iter()
        .zip(&q_nn)
        .map(|(&k, &q)| q - k as f64 / (n - 1) as f64)
        .collect();
    let mut best = 0;
    for (i, v) in lcmc.iter().enumerate() {
        if *v > lcmc[best] {
            best = i;
        }
    }
    let k_max = ks[best];
    let q_local = q_nn[..k_max].iter().sum::<f64>() / k_max as f64;
    let auc = q_nn.iter().sum::<f64>() / q_nn.len() as f64;
    Ok(NeighborhoodCurves {
        ks,
        q_nn,
        lcmc,
        k_max,
        q_local,
        auc,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub pair: String,
    pub a: String,
    pub b: String,
    pub q_local: f64,
    pub k_max: usize,
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCurves {
    pub a: String,
    pub b: String,
    pub curves: NeighborhoodCurves,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub pairs: Vec<PairCurves>,
    pub summary: Vec<SummaryRow>,
}

/// Curves for every unordered pair, in input order `(0,1), (0,2), ..., (1,2), ...`.
pub fn compare_models(inputs: &[(String, ArrayView2<'_, f64>)]) -> Result<Comparison> {
    if let Some(first) = inputs.first() {
        let n = first.1.nrows();
        if let Some((name, m)) = inputs.iter().find(|(_, m)| m.nrows() != n) {
            return Err(Error::Config(format!(
                "row misalignment: {name} has {} rows, {} has {n}",
                m.nrows(),
                first.0
            )));
        }
    }
    let mut pairs = Vec::new();
    let mut summary = Vec::new();
    for i in 0..inputs.len() {
        for j in (i + 1)..inputs.len() {
            let curves = neighborhood_curves(inputs[i].1, inputs[j].1)?;
            summary.push(SummaryRow {
                pair: format!("{} vs {}", inputs[i].0, inputs[j].0),
                a: inputs[i].0.clone(),
                b: inputs[j].0.clone(),
                q_local: curves.q_local,
                k_max: curves.k_max,
                auc: curves.auc,
            });
            pairs.push(PairCurves {
                a: inputs[i].0.clone(),
                b: inputs[j].0.clone(),
                curves,
            });
        }
    }
    Ok(Comparison { pairs, summary })
}

/// Rows are true labels, columns predicted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<usize>>,
    pub class_names: Vec<String>,
}

impl ConfusionMatrix {
    /// Largest off-diagonal cell as `(true, predicted, count)`; ties go to
    /// the first in row-major order.
    pub fn largest_off_diagonal(&self) -> Option<(usize, usize, usize)> {
        let mut best: Option<(usize, usize, usize)> = None;
        for (t, row) in self.counts.iter().enumerate() {
            for (p, &c) in row.iter().enumerate() {
                if t != p && best.is_none_or(|b| c > b.2) {
                    best = Some((t, p, c));
                }
            }
        }
        best
    }
}

pub fn confusion_matrix(
    true_labels: &[usize],
    predicted_labels: &[usize],
    class_names: Vec<String>,
) -> Result<ConfusionMatrix> {
    let c = class_names.len();
    if true_labels.len() != predicted_labels.len() {
        return Err(Error::RecordCount {
            records: predicted_labels.len(),
            rows: true_labels.len(),
        });
    }
    let mut counts = vec![vec![0usize; c]; c];
    for (row, (&t, &p)) in true_labels.iter().zip(predicted_labels).enumerate() {
        if t >= c || p >= c {
            return Err(Error::InvalidRecord {
                row,
                message: format!("label pair ({t}, {p}) outside [0, {c})"),
            });
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix { counts, class_names })
}
