//! 2D -> data-space inverse projection and decision-grid sampling.
//!
//! The inverse map is a Gaussian RBF network
//! `y(p) = intercept + sum_k w_k exp(-gamma |p - c_k|^2)` fitted by ridge
//! regression on centered targets. The kernel width uses the median
//! heuristic: `gamma = 1 / (2 m^2)` with `m` the median pairwise distance
//! between centers.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{argmax, Classifier};
use crate::dd::{self, Dd};
use crate::error::{Error, Result};
use crate::rng::SeededRng;

pub const MAX_CENTERS: usize = 1000;
pub const DEFAULT_RIDGE: f64 = 1e-3;
pub const DEFAULT_MARGIN: f64 = 0.05;
pub const DEFAULT_RESOLUTION: (usize, usize) = (100, 100);
const GRID_BATCH: usize = 1024;
const STREAM_CENTERS: u64 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct RbfInverseMap {
    pub centers: Array2<f64>,
    pub widths: Vec<f64>,
    pub weights: Array2<f64>,
    pub intercept: Array1<f64>,
    pub ridge: f64,
    /// Low-order parts of double-double weights. Present only for exact
    /// (ridge = 0, square) fits, whose weights are too large to sum in f64.
    pub weights_lo: Option<Array2<f64>>,
}

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn fit_inverse(
    coords: ArrayView2<'_, f64>,
    embeddings: ArrayView2<'_, f64>,
    ridge: f64,
    seed: u64,
) -> Result<RbfInverseMap> {
    let n = coords.nrows();
    if coords.ncols() != 2 {
        return Err(Error::Dimension {
            expected: 2,
            actual: coords.ncols(),
        });
    }
    if embeddings.nrows() != n {
        return Err(Error::RecordCount {
            records: embeddings.nrows(),
            rows: n,
        });
    }
    if n < 3 {
        return Err(Error::Config(format!("inverse map needs at least 3 points, got {n}")));
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::Config(format!("invalid ridge {ridge}")));
    }
    if coords.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("non-finite 2D coordinates".into()));
    }

    let center_rows: Vec<usize> = if n <= MAX_CENTERS {
        (0..n).collect()
    } else {
        let mut s = SeededRng::derive(seed, STREAM_CENTERS).sample_indices(n, MAX_CENTERS);
        s.sort_unstable();
        s
    };
    let centers = coords.select(Axis(0), &center_rows);
    let k = centers.nrows();

    let mut pairwise = Vec::with_capacity(k * (k - 1) / 2);
    for i in 0..k {
        for j in (i + 1)..k {
            pairwise.push(sq_dist(centers.row(i), centers.row(j)).sqrt());
        }
    }
    let m = median(pairwise);
    if m <= 0.0 {
        return Err(Error::Degenerate(
            "median pairwise distance between 2D coordinates is zero".into(),
        ));
    }
    let gamma = 1.0 / (2.0 * m * m);

    let intercept = embeddings.mean_axis(Axis(0)).expect("n >= 3");
    let d = embeddings.ncols();
    let phi = DMatrix::from_fn(n, k, |r, c| (-gamma * sq_dist(coords.row(r), centers.row(c))).exp());
    let targets = DMatrix::from_fn(n, d, |r, c| embeddings[[r, c]] - intercept[c]);

    let (weights, weights_lo) = if ridge == 0.0 && phi.is_square() {
        let (hi, lo) = solve_exact(&phi, &targets)?;
        (hi, Some(lo))
    } else {
        let solution = solve_ridge(&phi, &targets, ridge)?;
        (Array2::from_shape_fn((k, d), |(r, c)| solution[(r, c)]), None)
    };
    if weights.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate(
            "inverse-map solve produced non-finite weights".into(),
        ));
    }
    Ok(RbfInverseMap {
        centers,
        widths: vec![gamma; k],
        weights,
        intercept,
        ridge,
        weights_lo,
    })
}

/// Interpolation weights solved in double-double precision, split into high
/// and low parts.
fn solve_exact(phi: &DMatrix<f64>, targets: &DMatrix<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
    let (n, m) = (phi.nrows(), targets.ncols());
    let a = (0..n * n).map(|i| Dd::from(phi[(i / n, i % n)])).collect();
    let b = (0..n * m).map(|i| Dd::from(targets[(i / m, i % m)])).collect();
    let x = dd::lu_solve(a, b, n, m).ok_or_else(|| Error::Degenerate("singular RBF system".into()))?;
    let hi = Array2::from_shape_fn((n, m), |(r, c)| x[r * m + c].hi);
    let lo = Array2::from_shape_fn((n, m), |(r, c)| x[r * m + c].lo);
    Ok((hi, lo))
}

/// Solves `(Phi^T Phi + ridge I) W = Phi^T Y`; without ridge, a rectangular
/// system by QR least squares.
fn solve_ridge(phi: &DMatrix<f64>, targets: &DMatrix<f64>, ridge: f64) -> Result<DMatrix<f64>> {
    let singular = || Error::Degenerate("singular RBF system".into());
    if ridge > 0.0 {
        let mut gram = phi.tr_mul(phi);
        for i in 0..gram.nrows() {
            gram[(i, i)] += ridge;
        }
        let rhs = phi.tr_mul(targets);
        if let Some(chol) = gram.clone().cholesky() {
            return Ok(chol.solve(&rhs));
        }
        return gram.lu().solve(&rhs).ok_or_else(singular);
    }
    if phi.is_square() {
        return phi.clone().lu().solve(targets).ok_or_else(singular);
    }
    let qr = phi.clone().qr();
    let qty = qr.q().tr_mul(targets);
    qr.r().solve_upper_triangular(&qty).ok_or_else(singular)
}

impl RbfInverseMap {
    pub fn gamma(&self) -> f64 {
        self.widths.first().copied().unwrap_or(0.0)
    }

    pub fn output_dim(&self) -> usize {
        self.intercept.len()
    }

    fn kernel(&self, k: usize, p: [f64; 2]) -> (f64, f64, f64) {
        let c = self.centers.row(k);
        let dx = p[0] - c[0];
        let dy = p[1] - c[1];
        (dx, dy, (-self.widths[k] * (dx * dx + dy * dy)).exp())
    }

    /// Sums `sum_k w_k * scale_k(p)` in double-double precision.
    fn exact_sum(&self, lo: &Array2<f64>, p: [f64; 2], scale: impl Fn(f64, f64, f64, f64) -> f64, out: &mut [f64]) {
        let mut acc = vec![Dd::ZERO; out.len()];
        for k in 0..self.centers.nrows() {
            let (dx, dy, phi) = self.kernel(k, p);
            let s = scale(dx, dy, phi, self.widths[k]);
            if s == 0.0 {
                continue;
            }
            for (o, a) in acc.iter_mut().enumerate() {
                *a = a.mul_add_f64(Dd::new(self.weights[[k, o]], lo[[k, o]]), s);
            }
        }
        for (o, a) in out.iter_mut().zip(acc) {
            *o = (Dd::from(*o) + a).hi;
        }
    }

    fn eval_into(&self, p: [f64; 2], out: &mut [f64]) {
        if let Some(lo) = &self.weights_lo {
            out.copy_from_slice(self.intercept.as_slice().expect("contiguous"));
            self.exact_sum(lo, p, |_, _, phi, _| phi, out);
            return;
        }
        out.copy_from_slice(self.intercept.as_slice().expect("contiguous"));
        for (k, c) in self.centers.outer_iter().enumerate() {
            let dx = p[0] - c[0];
            let dy = p[1] - c[1];
            let phi = (-self.widths[k] * (dx * dx + dy * dy)).exp();
            if phi == 0.0 {
                continue;
            }
            for (o, w) in out.iter_mut().zip(self.weights.row(k).iter()) {
                *o += w * phi;
            }
        }
    }

    /// `D x 2` Jacobian of the map at `p`.
    pub fn jacobian(&self, p: [f64; 2]) -> Array2<f64> {
        let d = self.output_dim();
        let mut jac = Array2::zeros((d, 2));
        if let Some(lo) = &self.weights_lo {
            let mut col = vec![0.0; d];
            for axis in 0..2 {
                col.iter_mut().for_each(|v| *v = 0.0);
                self.exact_sum(lo, p, |dx, dy, phi, g| -2.0 * g * [dx, dy][axis] * phi, &mut col);
                jac.column_mut(axis).assign(&Array1::from(col.clone()));
            }
            return jac;
        }
        for (k, c) in self.centers.outer_iter().enumerate() {
            let dx = p[0] - c[0];
            let dy = p[1] - c[1];
            let g = self.widths[k];
            let phi = (-g * (dx * dx + dy * dy)).exp();
            for (o, w) in self.weights.row(k).iter().enumerate() {
                jac[[o, 0]] += -2.0 * g * dx * phi * w;
                jac[[o, 1]] += -2.0 * g * dy * phi * w;
            }
        }
        jac
    }
}

pub fn apply_inverse(map: &RbfInverseMap, points_2d: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if points_2d.ncols() != 2 {
        return Err(Error::Dimension {
            expected: 2,
            actual: points_2d.ncols(),
        });
    }
    let d = map.output_dim();
    let g = points_2d.nrows();
    let mut flat = vec![0.0; g * d];
    flat.par_chunks_mut(d.max(1)).enumerate().for_each(|(i, row)| {
        if i < g {
            map.eval_into([points_2d[[i, 0]], points_2d[[i, 1]]], row);
        }
    });
    Ok(Array2::from_shape_vec((g, d), flat).expect("shape"))
}

/// Classified regular grid over the projection plane. Arrays are row-major
/// with row 0 at `y0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionGrid {
    pub x0: f64,
    pub y0: f64,
    pub dx: f64,
    pub dy: f64,
    pub width: usize,
    pub height: usize,
    pub labels: Vec<usize>,
    pub certainty: Vec<f64>,
}

impl DecisionGrid {
    pub fn cell_center(&self, col: usize, row: usize) -> [f64; 2] {
        [
            self.x0 + (col as f64 + 0.5) * self.dx,
            self.y0 + (row as f64 + 0.5) * self.dy,
        ]
    }

    /// Row-major index of the cell containing `(x, y)`; floor indexing,
    /// clamped to the grid.
    pub fn cell_index(&self, x: f64, y: f64) -> usize {
        let clamp = |v: f64, n: usize| -> usize {
            if v.is_nan() || v < 0.0 {
                0
            } else {
                (v.floor() as usize).min(n - 1)
            }
        };
        let col = clamp((x - self.x0) / self.dx, self.width);
        let row = clamp((y - self.y0) / self.dy, self.height);
        row * self.width + col
    }

    pub fn label_at(&self, x: f64, y: f64) -> usize {
        self.labels[self.cell_index(x, y)]
    }

    pub fn certainty_at(&self, x: f64, y: f64) -> f64 {
        self.certainty[self.cell_index(x, y)]
    }

    pub fn check_invariants(&self) -> Result<()> {
        let cells = self.width * self.height;
        if self.labels.len() != cells || self.certainty.len() != cells {
            return Err(Error::Degenerate(format!(
                "grid arrays ({}, {}) do not match {}x{}",
                self.labels.len(),
                self.certainty.len(),
                self.width,
                self.height
            )));
        }
        if self.certainty.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::Degenerate("certainty outside [0, 1]".into()));
        }
        Ok(())
    }
}

/// Normalized max-probability: 0 at chance, 1 when one-hot.
pub fn certainty(probs: &[f64]) -> f64 {
    let c = probs.len() as f64;
    let pmax = probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    ((pmax - 1.0 / c) / (1.0 - 1.0 / c)).clamp(0.0, 1.0)
}

/// Bounding box of `coords` expanded by `margin * extent` on each side. A
/// zero-extent axis is widened to unit extent around its value.
pub fn grid_bounds(coords: ArrayView2<'_, f64>, margin: f64) -> ([f64; 2], [f64; 2]) {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in coords.outer_iter() {
        for a in 0..2 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    for a in 0..2 {
        let mut extent = hi[a] - lo[a];
        if extent <= 0.0 {
            lo[a] -= 0.5;
            hi[a] += 0.5;
            extent = 1.0;
        }
        lo[a] -= margin * extent;
        hi[a] += margin * extent;
    }
    (lo, hi)
}

pub fn sample_decision_grid(
    map: &RbfInverseMap,
    coords: ArrayView2<'_, f64>,
    f: &dyn Classifier,
    resolution: (usize, usize),
    margin: f64,
) -> Result<DecisionGrid> {
    let (width, height) = resolution;
    if width < 2 || height < 2 {
        return Err(Error::Config(format!(
            "grid resolution must be at least 2x2, got {width}x{height}"
        )));
    }
    if !(margin >= 0.0 && margin.is_finite()) {
        return Err(Error::Config(format!("margin must be >= 0, got {margin}")));
    }
    if coords.nrows() == 0 {
        return Err(Error::Config("no coordinates to grid".into()));
    }
    if map.output_dim() != f.info().input_dim {
        return Err(Error::Dimension {
            expected: f.info().input_dim,
            actual: map.output_dim(),
        });
    }
    let (lo, hi) = grid_bounds(coords, margin);
    let mut grid = DecisionGrid {
        x0: lo[0],
        y0: lo[1],
        dx: (hi[0] - lo[0]) / width as f64,
        dy: (hi[1] - lo[1]) / height as f64,
        width,
        height,
        labels: Vec::with_capacity(width * height),
        certainty: Vec::with_capacity(width * height),
    };
    let centers = Array2::from_shape_fn((width * height, 2), |(cell, a)| {
        grid.cell_center(cell % width, cell / width)[a]
    });
    let lifted = apply_inverse(map, centers.view())?;
    for (b, chunk) in lifted.axis_chunks_iter(Axis(0), GRID_BATCH).enumerate() {
        let probs = f.predict_batch(chunk).map_err(|e| Error::Cell {
            cell: b * GRID_BATCH,
            source: Box::new(e),
        })?;
        for row in probs.outer_iter() {
            let p = row.as_slice().expect("contiguous");
            grid.labels.push(argmax(p));
            grid.certainty.push(certainty(p));
        }
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::MlpClassifier;
    use ndarray::array;

    #[test]
    fn single_center_interpolates() {
        // three points, the targets differ only at one: ridge 0 solves exactly
        let coords = array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let y = array![[1.0, 2.0], [3.0, -1.0], [0.5, 0.5]];
        let map = fit_inverse(coords.view(), y.view(), 0.0, 0).unwrap();
        let back = apply_inverse(&map, coords.view()).unwrap();
        for (a, b) in back.iter().zip(y.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn degenerate_coords_error() {
        let coords = array![[1.0, 1.0], [1.0, 1.0], [1.0, 1.0]];
        let y = array![[1.0], [2.0], [3.0]];
        let err = fit_inverse(coords.view(), y.view(), 1e-3, 0).unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)));
    }

    #[test]
    fn far_point_is_intercept() {
        let coords = array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let y = array![[1.0, 0.0], [3.0, 1.0], [0.0, 2.0], [4.0, 5.0]];
        let map = fit_inverse(coords.view(), y.view(), 1e-3, 0).unwrap();
        let out = apply_inverse(&map, array![[1e4, -1e4]].view()).unwrap();
        assert!((out[[0, 0]] - 2.0).abs() < 1e-12);
        assert!((out[[0, 1]] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn grid_bounds_with_margin() {
        let coords = array![[0.0, 0.0], [10.0, 10.0], [5.0, 2.0]];
        let (lo, hi) = grid_bounds(coords.view(), 0.05);
        assert_eq!(lo, [-0.5, -0.5]);
        assert_eq!(hi, [10.5, 10.5]);
    }

    #[test]
    fn cell_lookup_clamps() {
        let g = DecisionGrid {
            x0: 0.0,
            y0: 0.0,
            dx: 1.0,
            dy: 1.0,
            width: 2,
            height: 2,
            labels: vec![0, 1, 2, 3],
            certainty: vec![0.0; 4],
        };
        assert_eq!(g.cell_index(0.5, 0.5), 0);
        assert_eq!(g.cell_index(1.5, 0.5), 1);
        assert_eq!(g.cell_index(2.0, 2.0), 3);
        assert_eq!(g.cell_index(-1.0, 1.0), 2);
    }

    #[test]
    fn constant_and_one_hot_certainty() {
        assert_eq!(certainty(&[0.5, 0.5]), 0.0);
        assert_eq!(certainty(&[0.25; 4]), 0.0);
        assert_eq!(certainty(&[0.0, 1.0, 0.0]), 1.0);
        let coords = array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let y = array![[1.0, 2.0], [3.0, -1.0], [0.5, 0.5]];
        let map = fit_inverse(coords.view(), y.view(), 1e-3, 0).unwrap();
        let constant = MlpClassifier::linear_softmax(vec![vec![0.0; 2]; 3], vec![0.0; 3]).unwrap();
        let g = sample_decision_grid(&map, coords.view(), &constant, (4, 3), 0.05).unwrap();
        assert!(g.labels.iter().all(|&l| l == 0));
        assert!(g.certainty.iter().all(|&c| c == 0.0));
        g.check_invariants().unwrap();
        assert!(sample_decision_grid(&map, coords.view(), &constant, (1, 3), 0.05).is_err());
    }
}
