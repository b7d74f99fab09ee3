//! UMAP over a precomputed distance matrix.
//!
//! Exact kNN graph, smooth-kNN membership strengths symmetrized with the
//! probabilistic t-conorm, spectral (or random) initialization and a
//! single-threaded SGD layout with negative sampling.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

const SMOOTH_KNN_TOLERANCE: f64 = 1e-5;
const SMOOTH_KNN_ITERATIONS: usize = 64;
const MIN_K_DIST_SCALE: f64 = 1e-3;
const GRADIENT_CLIP: f64 = 4.0;
const SPREAD: f64 = 1.0;
const INIT_EXTENT: f64 = 10.0;

const STREAM_INIT: u64 = 1;
const STREAM_LAYOUT: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum InitKind {
    #[default]
    Spectral,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UmapConfig {
    pub n_neighbors: usize,
    pub min_dist: f64,
    pub n_epochs: usize,
    pub negative_samples: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub init: InitKind,
}

impl Default for UmapConfig {
    fn default() -> Self {
        Self {
            n_neighbors: 15,
            min_dist: 0.1,
            n_epochs: 500,
            negative_samples: 5,
            learning_rate: 1.0,
            seed: 0,
            init: InitKind::Spectral,
        }
    }
}

impl UmapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_neighbors < 2 {
            return Err(Error::Config(format!(
                "n_neighbors must be >= 2, got {}",
                self.n_neighbors
            )));
        }
        if self.n_epochs == 0 {
            return Err(Error::Config("n_epochs must be >= 1".into()));
        }
        if !(self.min_dist >= 0.0 && self.min_dist.is_finite()) {
            return Err(Error::Config(format!("invalid min_dist {}", self.min_dist)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("invalid learning_rate {}", self.learning_rate)));
        }
        Ok(())
    }

    pub fn validate_for(&self, n: usize) -> Result<()> {
        self.validate()?;
        if self.n_neighbors >= n {
            return Err(Error::Config(format!(
                "n_neighbors ({}) must be < N ({n})",
                self.n_neighbors
            )));
        }
        Ok(())
    }
}

/// `k` nearest neighbors per row, nearest first, self excluded.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighbors {
    pub indices: Vec<Vec<usize>>,
    pub distances: Vec<Vec<f64>>,
}

impl Neighbors {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn k(&self) -> usize {
        self.indices.first().map_or(0, Vec::len)
    }
}

/// Exact kNN from a square distance matrix; distance ties go to the lower
/// index.
pub fn knn_from_matrix(dm: ArrayView2<'_, f64>, k: usize) -> Result<Neighbors> {
    let n = dm.nrows();
    if dm.ncols() != n {
        return Err(Error::Dimension {
            expected: n,
            actual: dm.ncols(),
        });
    }
    if k == 0 || k >= n {
        return Err(Error::Config(format!("k={k} must lie in [1, N) with N={n}")));
    }
    let rows: Vec<(Vec<usize>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let row = dm.row(i);
            let mut cand: Vec<(f64, usize)> = (0..n).filter(|&j| j != i).map(|j| (row[j], j)).collect();
            let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            if k < cand.len() {
                cand.select_nth_unstable_by(k, cmp);
                cand.truncate(k);
            }
            cand.sort_unstable_by(cmp);
            cand.into_iter().map(|(d, j)| (j, d)).unzip()
        })
        .collect();
    let (indices, distances) = rows.into_iter().unzip();
    Ok(Neighbors { indices, distances })
}

/// Symmetric fuzzy neighborhood graph. `edges` lists both directions of
/// every undirected edge, sorted by `(i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyGraph {
    pub n_vertices: usize,
    pub edges: Vec<(usize, usize, f64)>,
    pub rho: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl FuzzyGraph {
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.edges
            .binary_search_by(|e| (e.0, e.1).cmp(&(i, j)))
            .map(|p| self.edges[p].2)
            .unwrap_or(0.0)
    }

    /// Connected components as a label per vertex, numbered by lowest member.
    pub fn components(&self) -> Vec<usize> {
        let mut parent: Vec<usize> = (0..self.n_vertices).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for &(i, j, _) in &self.edges {
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            if a != b {
                let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                parent[hi] = lo;
            }
        }
        let roots: Vec<usize> = (0..self.n_vertices).map(|v| find(&mut parent, v)).collect();
        let mut ids = BTreeMap::new();
        roots
            .iter()
            .map(|r| {
                let next = ids.len();
                *ids.entry(*r).or_insert(next)
            })
            .collect()
    }
}

/// Sum of unsymmetrized memberships at bandwidth `sigma`.
pub fn membership_sum(distances: &[f64], rho: f64, sigma: f64) -> f64 {
    distances
        .iter()
        .map(|&d| {
            let excess = d - rho;
            if excess <= 0.0 {
                1.0
            } else {
                (-excess / sigma).exp()
            }
        })
        .sum()
}

fn smooth_knn_sigma(distances: &[f64], rho: f64, target: f64) -> f64 {
    let (mut lo, mut hi, mut mid) = (0.0f64, f64::INFINITY, 1.0f64);
    for _ in 0..SMOOTH_KNN_ITERATIONS {
        let psum = membership_sum(distances, rho, mid);
        if (psum - target).abs() < SMOOTH_KNN_TOLERANCE {
            break;
        }
        if psum > target {
            hi = mid;
            mid = (lo + hi) / 2.0;
        } else {
            lo = mid;
            mid = if hi.is_infinite() { mid * 2.0 } else { (lo + hi) / 2.0 };
        }
    }
    let mean = distances.iter().sum::<f64>() / distances.len() as f64;
    if rho > 0.0 {
        mid.max(MIN_K_DIST_SCALE * mean)
    } else {
        mid
    }
}

pub fn build_fuzzy_graph(neighbors: &Neighbors, k: usize) -> Result<FuzzyGraph> {
    let n = neighbors.len();
    if k == 0 || neighbors.indices.iter().any(|r| r.len() != k) || neighbors.distances.iter().any(|r| r.len() != k) {
        return Err(Error::Config(format!("neighbor lists must all have length k={k}")));
    }
    if let Some(bad) = neighbors.indices.iter().flatten().find(|&&j| j >= n) {
        return Err(Error::Config(format!("neighbor index {bad} out of range")));
    }
    let target = (k as f64).log2();
    let (rho, sigma): (Vec<f64>, Vec<f64>) = neighbors
        .distances
        .par_iter()
        .map(|d| {
            let rho = d[0];
            (rho, smooth_knn_sigma(d, rho, target))
        })
        .unzip();

    let mut directed: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for i in 0..n {
        for (&j, &d) in neighbors.indices[i].iter().zip(&neighbors.distances[i]) {
            if j == i {
                continue;
            }
            let excess = d - rho[i];
            let w = if excess <= 0.0 || sigma[i] == 0.0 {
                1.0
            } else {
                (-excess / sigma[i]).exp()
            };
            directed.insert((i, j), w);
        }
    }
    let mut sym: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (&(i, j), &w1) in &directed {
        let w2 = directed.get(&(j, i)).copied().unwrap_or(0.0);
        let w = t_conorm(w1, w2);
        if w > 0.0 {
            sym.insert((i, j), w);
            sym.insert((j, i), w);
        }
    }
    Ok(FuzzyGraph {
        n_vertices: n,
        edges: sym.into_iter().map(|((i, j), w)| (i, j, w)).collect(),
        rho,
        sigma,
    })
}

/// Probabilistic t-conorm `a + b - ab`.
pub fn t_conorm(a: f64, b: f64) -> f64 {
    a + b - a * b
}

/// Fits `1 / (1 + a x^(2b))` to the offset-exponential target curve by
/// Levenberg-Marquardt on 300 points in `[0, 3 * spread]`.
pub fn fit_curve_params(min_dist: f64) -> (f64, f64) {
    let xs: Vec<f64> = (0..300).map(|i| 3.0 * SPREAD * i as f64 / 299.0).collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|&x| {
            if x < min_dist {
                1.0
            } else {
                (-(x - min_dist) / SPREAD).exp()
            }
        })
        .collect();
    let sse = |a: f64, b: f64| -> f64 {
        xs.iter()
            .zip(&ys)
            .map(|(&x, &y)| {
                let r = 1.0 / (1.0 + a * x.powf(2.0 * b)) - y;
                r * r
            })
            .sum()
    };
    let (mut a, mut b) = (1.0f64, 1.0f64);
    let mut damping = 1e-3;
    let mut err = sse(a, b);
    for _ in 0..500 {
        // normal equations J^T J and J^T r
        let (mut jaa, mut jab, mut jbb, mut ga, mut gb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&x, &y) in xs.iter().zip(&ys) {
            if x <= 0.0 {
                continue;
            }
            let p = x.powf(2.0 * b);
            let den = 1.0 + a * p;
            let f = 1.0 / den;
            let r = f - y;
            let da = -p / (den * den);
            let db = -a * p * 2.0 * x.ln() / (den * den);
            jaa += da * da;
            jab += da * db;
            jbb += db * db;
            ga += da * r;
            gb += db * r;
        }
        let mut improved = false;
        for _ in 0..30 {
            let (m11, m22) = (jaa * (1.0 + damping), jbb * (1.0 + damping));
            let det = m11 * m22 - jab * jab;
            if det.abs() < 1e-300 {
                damping *= 10.0;
                continue;
            }
            let step_a = -(m22 * ga - jab * gb) / det;
            let step_b = -(m11 * gb - jab * ga) / det;
            let (na, nb) = (a + step_a, b + step_b);
            if na > 0.0 && nb > 0.0 {
                let ne = sse(na, nb);
                if ne < err {
                    let rel = (err - ne) / err.max(1e-300);
                    a = na;
                    b = nb;
                    err = ne;
                    damping = (damping / 10.0).max(1e-12);
                    improved = rel > 1e-15;
                    break;
                }
            }
            damping *= 10.0;
        }
        if !improved {
            break;
        }
    }
    (a, b)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub coords: Array2<f64>,
    pub config: UmapConfig,
    pub source_lambda: f64,
}

fn scale_axes(coords: &mut Array2<f64>) {
    for mut col in coords.columns_mut() {
        let max = col.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if max > 0.0 {
            col.mapv_inplace(|v| v * INIT_EXTENT / max);
        }
    }
}

fn random_init(graph: &FuzzyGraph, seed: u64) -> Array2<f64> {
    let comps = graph.components();
    let n_comp = comps.iter().max().map_or(0, |m| m + 1);
    let mut rng = SeededRng::derive(seed, STREAM_INIT);
    let mut coords = Array2::zeros((graph.n_vertices, 2));
    let radius = if n_comp > 1 { 6.0 } else { 0.0 };
    let spread = if n_comp > 1 { 2.0 } else { INIT_EXTENT };
    for (v, &c) in comps.iter().enumerate() {
        let angle = 2.0 * std::f64::consts::PI * c as f64 / n_comp.max(1) as f64;
        coords[[v, 0]] = radius * angle.cos() + rng.uniform(-spread, spread);
        coords[[v, 1]] = radius * angle.sin() + rng.uniform(-spread, spread);
    }
    coords
}

const POWER_TOLERANCE: f64 = 1e-6;
const POWER_MAX_ITER: usize = 1000;

/// Two leading non-trivial eigenvectors of the symmetric normalized
/// Laplacian, each scaled to `[-10, 10]`. Falls back to seeded random
/// placement around per-component centers for disconnected graphs or when
/// power iteration does not converge.
pub fn spectral_init(graph: &FuzzyGraph, seed: u64) -> Array2<f64> {
    let n = graph.n_vertices;
    if n < 3 {
        return random_init(graph, seed);
    }
    let comps = graph.components();
    if comps.iter().any(|&c| c != 0) {
        log::info!("graph is disconnected; using random initialization");
        return random_init(graph, seed);
    }
    match spectral_vectors(graph, seed) {
        Some(mut coords) => {
            scale_axes(&mut coords);
            coords
        }
        None => {
            log::info!("spectral initialization did not converge; using random initialization");
            random_init(graph, seed)
        }
    }
}

fn spectral_vectors(graph: &FuzzyGraph, seed: u64) -> Option<Array2<f64>> {
    let n = graph.n_vertices;
    let mut degree = vec![0.0; n];
    for &(i, _, w) in &graph.edges {
        degree[i] += w;
    }
    let inv_sqrt: Vec<f64> = degree.iter().map(|d| 1.0 / d.sqrt()).collect();
    // M = I + D^-1/2 W D^-1/2 = 2I - L shares eigenvectors with L and is PSD
    let apply = |v: &[f64], out: &mut [f64]| {
        out.copy_from_slice(v);
        for &(i, j, w) in &graph.edges {
            out[i] += w * inv_sqrt[i] * inv_sqrt[j] * v[j];
        }
    };
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(3);
    let trivial: Vec<f64> = degree.iter().map(|d| d.sqrt()).collect();
    let tn = norm(&trivial);
    basis.push(trivial.iter().map(|x| x / tn).collect());

    let orthogonalize = |v: &mut [f64], basis: &[Vec<f64>]| {
        for u in basis {
            let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= dot * b);
        }
    };

    let mut rng = SeededRng::derive(seed, STREAM_INIT);
    let mut out = Array2::zeros((n, 2));
    let mut mv = vec![0.0; n];
    for axis in 0..2 {
        let mut v: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
        orthogonalize(&mut v, &basis);
        let vn = norm(&v);
        if vn == 0.0 {
            return None;
        }
        v.iter_mut().for_each(|x| *x /= vn);
        let mut converged = false;
        for _ in 0..POWER_MAX_ITER {
            apply(&v, &mut mv);
            orthogonalize(&mut mv, &basis);
            let theta: f64 = v.iter().zip(&mv).map(|(a, b)| a * b).sum();
            let residual = mv
                .iter()
                .zip(&v)
                .map(|(a, b)| (a - theta * b).powi(2))
                .sum::<f64>()
                .sqrt();
            let mn = norm(&mv);
            if mn == 0.0 {
                return None;
            }
            v.iter_mut().zip(&mv).for_each(|(a, b)| *a = b / mn);
            if residual < POWER_TOLERANCE {
                converged = true;
                break;
            }
        }
        if !converged {
            return None;
        }
        // sign: largest-magnitude entry positive
        let (mut best, mut best_abs) = (0, 0.0);
        for (i, x) in v.iter().enumerate() {
            if x.abs() > best_abs + 1e-12 {
                best = i;
                best_abs = x.abs();
            }
        }
        if v[best] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        out.column_mut(axis).assign(&Array1::from(v.clone()));
        basis.push(v);
    }
    Some(out)
}

/// SGD on the UMAP fuzzy cross-entropy.
pub fn optimize_layout(graph: &FuzzyGraph, cfg: &UmapConfig) -> Result<Projection> {
    optimize_layout_from(graph, cfg, None)
}

pub(crate) fn optimize_layout_from(
    graph: &FuzzyGraph,
    cfg: &UmapConfig,
    source_lambda: Option<f64>,
) -> Result<Projection> {
    cfg.validate()?;
    if graph.edges.is_empty() {
        return Err(Error::Config("fuzzy graph has no edges".into()));
    }
    let n = graph.n_vertices;
    let mut coords = match cfg.init {
        InitKind::Spectral => spectral_init(graph, cfg.seed),
        InitKind::Random => {
            let mut c = random_init(graph, cfg.seed);
            scale_axes(&mut c);
            c
        }
    };
    let (a, b) = fit_curve_params(cfg.min_dist);
    let n_epochs = cfg.n_epochs as f64;

    let max_w = graph.edges.iter().fold(0.0f64, |m, e| m.max(e.2));
    let active: Vec<(usize, usize, f64)> = graph
        .edges
        .iter()
        .copied()
        .filter(|e| e.2 >= max_w / n_epochs)
        .collect();
    let epochs_per_sample: Vec<f64> = active.iter().map(|e| max_w / e.2).collect();
    let neg_rate = cfg.negative_samples.max(1) as f64;
    let epochs_per_negative: Vec<f64> = epochs_per_sample.iter().map(|e| e / neg_rate).collect();
    let mut next_sample = epochs_per_sample.clone();
    let mut next_negative = epochs_per_negative.clone();

    let mut rng = SeededRng::derive(cfg.seed, STREAM_LAYOUT);
    let clip = |g: f64| g.clamp(-GRADIENT_CLIP, GRADIENT_CLIP);
    for epoch in 0..cfg.n_epochs {
        let alpha = cfg.learning_rate * (1.0 - epoch as f64 / n_epochs);
        let ep = epoch as f64;
        for (e, &(head, tail, _)) in active.iter().enumerate() {
            if next_sample[e] > ep {
                continue;
            }
            let dx = coords[[head, 0]] - coords[[tail, 0]];
            let dy = coords[[head, 1]] - coords[[tail, 1]];
            let dist_sq = dx * dx + dy * dy;
            let coeff = if dist_sq > 0.0 {
                -2.0 * a * b * dist_sq.powf(b - 1.0) / (a * dist_sq.powf(b) + 1.0)
            } else {
                0.0
            };
            let (gx, gy) = (clip(coeff * dx), clip(coeff * dy));
            coords[[head, 0]] += alpha * gx;
            coords[[head, 1]] += alpha * gy;
            coords[[tail, 0]] -= alpha * gx;
            coords[[tail, 1]] -= alpha * gy;
            next_sample[e] += epochs_per_sample[e];

            if cfg.negative_samples == 0 {
                continue;
            }
            let n_neg = ((ep - next_negative[e]) / epochs_per_negative[e]).floor().max(0.0) as usize;
            for _ in 0..n_neg {
                let other = rng.below(n);
                if other == head {
                    continue;
                }
                let dx = coords[[head, 0]] - coords[[other, 0]];
                let dy = coords[[head, 1]] - coords[[other, 1]];
                let dist_sq = dx * dx + dy * dy;
                if dist_sq <= 0.0 {
                    continue;
                }
                let coeff = 2.0 * b / ((0.001 + dist_sq) * (a * dist_sq.powf(b) + 1.0));
                coords[[head, 0]] += alpha * clip(coeff * dx);
                coords[[head, 1]] += alpha * clip(coeff * dy);
            }
            next_negative[e] += n_neg as f64 * epochs_per_negative[e];
        }
    }
    if coords.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("layout produced non-finite coordinates".into()));
    }
    Ok(Projection {
        coords,
        config: *cfg,
        source_lambda: source_lambda.unwrap_or(f64::NAN),
    })
}

/// kNN graph, fuzzy set and layout in one call.
pub fn project_matrix(dm: ArrayView2<'_, f64>, cfg: &UmapConfig, source_lambda: f64) -> Result<Projection> {
    cfg.validate_for(dm.nrows())?;
    let neighbors = knn_from_matrix(dm, cfg.n_neighbors)?;
    let graph = build_fuzzy_graph(&neighbors, cfg.n_neighbors)?;
    optimize_layout_from(&graph, cfg, Some(source_lambda))
}
