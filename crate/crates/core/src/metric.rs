//! Jensen-Shannon arc distance between inputs of a classifier.
//!
//! The distance between `x` and `y` walks the straight segment between them
//! in `n` equal steps and sums, per step, a mix of the Jensen-Shannon distance
//! between the classifier outputs at both ends of the step and an
//! unsupervised base distance between the step's endpoints:
//!
//! `d(x, y) = sum_i (1 - lambda) * JS(f(p_{i-1}), f(p_i)) + lambda * d_S(p_{i-1}, p_i)`
//!
//! with `p_i = (1 - i/n) x + (i/n) y`.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{sha256_hex, Classifier};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BaseMetric {
    #[default]
    Cosine,
    Euclidean,
}

impl std::str::FromStr for BaseMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(BaseMetric::Cosine),
            "euclidean" => Ok(BaseMetric::Euclidean),
            other => Err(Error::Config(format!("unknown base metric {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiscriminativeMetricConfig {
    pub lambda: f64,
    pub n_segments: usize,
    pub base_metric: BaseMetric,
    pub normalize_components: bool,
}

impl Default for DiscriminativeMetricConfig {
    fn default() -> Self {
        Self {
            lambda: 0.8,
            n_segments: 5,
            base_metric: BaseMetric::Cosine,
            normalize_components: false,
        }
    }
}

impl DiscriminativeMetricConfig {
    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!("lambda out of range [0, 1]: {}", self.lambda)));
        }
        if self.n_segments == 0 {
            return Err(Error::Config("n_segments must be at least 1".into()));
        }
        Ok(())
    }

    fn needs_js(&self) -> bool {
        self.lambda < 1.0 || self.normalize_components
    }

    fn needs_base(&self) -> bool {
        self.lambda > 0.0 || self.normalize_components
    }
}

/// Jensen-Shannon distance with base-2 logarithms, so the result lies in
/// `[0, 1]`. Zero-probability terms contribute nothing.
pub fn js_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Dimension {
            expected: p.len(),
            actual: q.len(),
        });
    }
    let mut div = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let m = 0.5 * (a + b);
        let term = |v: f64| if v > 0.0 { v * (v / m).log2() } else { 0.0 };
        // added pairwise so swapping p and q gives the same bits
        div += term(a) + term(b);
    }
    // KL sums can dip a hair below zero from rounding
    Ok((0.5 * div).max(0.0).sqrt().min(1.0))
}

pub fn base_distance(x: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>, kind: BaseMetric) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Dimension {
            expected: x.len(),
            actual: y.len(),
        });
    }
    match kind {
        BaseMetric::Euclidean => Ok(x
            .iter()
            .zip(y.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()),
        BaseMetric::Cosine => {
            let (mut dot, mut nx, mut ny) = (0.0, 0.0, 0.0);
            for (a, b) in x.iter().zip(y.iter()) {
                dot += a * b;
                nx += a * a;
                ny += b * b;
            }
            if nx == 0.0 || ny == 0.0 {
                return Err(Error::Degenerate("zero vector under cosine distance".into()));
            }
            Ok((1.0 - dot / (nx.sqrt() * ny.sqrt())).clamp(0.0, 2.0))
        }
    }
}

/// Raw per-pair sums before lambda mixing.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ArcComponents {
    pub js: f64,
    pub base: f64,
}

impl ArcComponents {
    pub fn mix(&self, lambda: f64) -> f64 {
        (1.0 - lambda) * self.js + lambda * self.base
    }
}

/// `p_s = (1 - s/n) x + (s/n) y` for `s` in `range`, one row each.
fn interpolate_into(
    out: &mut Vec<f64>,
    x: ArrayView1<'_, f64>,
    y: ArrayView1<'_, f64>,
    n: usize,
    range: std::ops::Range<usize>,
) {
    for s in range {
        let t = s as f64 / n as f64;
        out.extend(x.iter().zip(y.iter()).map(|(a, b)| (1.0 - t) * a + t * b));
    }
}

fn predict_in_batches(f: &dyn Classifier, points: ArrayView2<'_, f64>, batch_size: usize) -> Result<Array2<f64>> {
    let batch_size = batch_size.max(1);
    if points.nrows() <= batch_size {
        return f.predict_batch(points);
    }
    let mut parts = Vec::with_capacity(points.nrows().div_ceil(batch_size));
    for chunk in points.axis_chunks_iter(Axis(0), batch_size) {
        parts.push(f.predict_batch(chunk)?);
    }
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    Ok(ndarray::concatenate(Axis(0), &views).expect("equal widths"))
}

/// Sums the per-step terms along the path whose `n + 1` points are the rows
/// of `path`, with `probs` holding the classifier output at each row.
fn path_components(
    path: ArrayView2<'_, f64>,
    probs: Option<ArrayView2<'_, f64>>,
    cfg: &DiscriminativeMetricConfig,
    pair: (usize, usize),
) -> Result<ArcComponents> {
    let mut acc = ArcComponents::default();
    for s in 1..path.nrows() {
        if let Some(probs) = probs {
            let a = probs.row(s - 1);
            let b = probs.row(s);
            acc.js += js_distance(a.as_slice().expect("row-major"), b.as_slice().expect("row-major"))?;
        }
        if cfg.needs_base() {
            acc.base += base_distance(path.row(s - 1), path.row(s), cfg.base_metric)
                .map_err(|_| Error::ZeroVector { pair, segment: s })?;
        }
    }
    Ok(acc)
}

/// Raw (unmixed) components for one pair.
pub fn arc_components(
    x: ArrayView1<'_, f64>,
    y: ArrayView1<'_, f64>,
    f: &dyn Classifier,
    cfg: &DiscriminativeMetricConfig,
) -> Result<ArcComponents> {
    cfg.validate()?;
    if x.len() != y.len() {
        return Err(Error::Dimension {
            expected: x.len(),
            actual: y.len(),
        });
    }
    let n = cfg.n_segments;
    let mut buf = Vec::with_capacity((n + 1) * x.len());
    interpolate_into(&mut buf, x, y, n, 0..n + 1);
    // endpoints are exact copies, not interpolations
    let d = x.len();
    buf[..d].copy_from_slice(x.as_slice().unwrap_or(&x.to_vec()));
    buf[n * d..].copy_from_slice(y.as_slice().unwrap_or(&y.to_vec()));
    let path = Array2::from_shape_vec((n + 1, d), buf).expect("shape");
    let probs = if cfg.needs_js() {
        Some(f.predict_batch(path.view())?)
    } else {
        None
    };
    path_components(path.view(), probs.as_ref().map(|p| p.view()), cfg, (0, 1))
}

pub fn discriminative_distance(
    x: ArrayView1<'_, f64>,
    y: ArrayView1<'_, f64>,
    f: &dyn Classifier,
    cfg: &DiscriminativeMetricConfig,
) -> Result<f64> {
    Ok(arc_components(x, y, f, cfg)?.mix(cfg.lambda))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixProvenance {
    pub config: DiscriminativeMetricConfig,
    pub classifier_hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub values: Array2<f64>,
    pub lambda: f64,
    pub provenance: MatrixProvenance,
}

impl DistanceMatrix {
    pub fn size(&self) -> usize {
        self.values.nrows()
    }

    /// Symmetric within 1e-9, zero diagonal, finite and non-negative.
    pub fn check_invariants(&self) -> Result<()> {
        let n = self.size();
        for i in 0..n {
            if self.values[[i, i]] != 0.0 {
                return Err(Error::Degenerate(format!("non-zero diagonal at {i}")));
            }
            for j in 0..n {
                let v = self.values[[i, j]];
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::Degenerate(format!("invalid entry {v} at ({i}, {j})")));
                }
                if (v - self.values[[j, i]]).abs() > 1e-9 {
                    return Err(Error::Degenerate(format!("asymmetric at ({i}, {j})")));
                }
            }
        }
        Ok(())
    }
}

const PAIR_CHUNK: usize = 128;

/// Full pairwise matrix over the rows of `embeddings`.
///
/// Endpoint predictions are computed once per row; interior path points are
/// classified in batches of at most `batch_size`. Pairs are processed in
/// fixed chunks on the ambient rayon pool and every entry is produced by the
/// same sequence of float operations, so the result does not depend on
/// `batch_size` or the thread count.
pub fn build_distance_matrix(
    embeddings: ArrayView2<'_, f64>,
    f: &dyn Classifier,
    cfg: &DiscriminativeMetricConfig,
    batch_size: usize,
) -> Result<DistanceMatrix> {
    cfg.validate()?;
    let n_points = embeddings.nrows();
    if n_points < 2 {
        return Err(Error::Config(format!("distance matrix needs N >= 2, got {n_points}")));
    }
    if embeddings.ncols() != f.info().input_dim {
        return Err(Error::Dimension {
            expected: f.info().input_dim,
            actual: embeddings.ncols(),
        });
    }
    let embeddings = embeddings.as_standard_layout();
    let d = embeddings.ncols();
    let n = cfg.n_segments;

    let endpoint_probs = if cfg.needs_js() {
        Some(
            predict_in_batches(f, embeddings.view(), batch_size).map_err(|e| Error::Pair {
                pair: (0, 0),
                source: Box::new(e),
            })?,
        )
    } else {
        None
    };

    let pairs: Vec<(usize, usize)> = (0..n_points)
        .flat_map(|i| ((i + 1)..n_points).map(move |j| (i, j)))
        .collect();

    let chunk_results: Vec<Result<Vec<ArcComponents>>> = pairs
        .par_chunks(PAIR_CHUNK)
        .map(|chunk| {
            let interior_probs = match (&endpoint_probs, n > 1) {
                (Some(_), true) => {
                    let mut buf = Vec::with_capacity(chunk.len() * (n - 1) * d);
                    for &(i, j) in chunk {
                        interpolate_into(&mut buf, embeddings.row(i), embeddings.row(j), n, 1..n);
                    }
                    let pts = Array2::from_shape_vec((chunk.len() * (n - 1), d), buf).expect("shape");
                    Some(predict_in_batches(f, pts.view(), batch_size).map_err(|e| Error::Pair {
                        pair: chunk[0],
                        source: Box::new(e),
                    })?)
                }
                _ => None,
            };
            let c = f.info().n_classes;
            let mut out = Vec::with_capacity(chunk.len());
            let mut path = Vec::with_capacity((n + 1) * d);
            let mut probs = Vec::with_capacity((n + 1) * c);
            for (slot, &(i, j)) in chunk.iter().enumerate() {
                path.clear();
                path.extend(embeddings.row(i).iter());
                interpolate_into(&mut path, embeddings.row(i), embeddings.row(j), n, 1..n);
                path.extend(embeddings.row(j).iter());
                let path_view = ArrayView2::from_shape((n + 1, d), &path).expect("shape");
                let probs_view = if let Some(ep) = &endpoint_probs {
                    probs.clear();
                    probs.extend(ep.row(i).iter());
                    if let Some(ip) = &interior_probs {
                        let rows = ip.slice(ndarray::s![slot * (n - 1)..(slot + 1) * (n - 1), ..]);
                        probs.extend(rows.iter());
                    }
                    probs.extend(ep.row(j).iter());
                    Some(ArrayView2::from_shape((n + 1, c), &probs).expect("shape"))
                } else {
                    None
                };
                out.push(path_components(path_view, probs_view, cfg, (i, j))?);
            }
            Ok(out)
        })
        .collect();

    let mut components = Vec::with_capacity(pairs.len());
    for r in chunk_results {
        components.extend(r?);
    }

    let (js_scale, base_scale) = if cfg.normalize_components {
        let count = components.len() as f64;
        let js_mean = components.iter().map(|c| c.js).sum::<f64>() / count;
        let base_mean = components.iter().map(|c| c.base).sum::<f64>() / count;
        (
            if js_mean > 0.0 { js_mean } else { 1.0 },
            if base_mean > 0.0 { base_mean } else { 1.0 },
        )
    } else {
        (1.0, 1.0)
    };

    let mut values = Array2::zeros((n_points, n_points));
    for (&(i, j), comp) in pairs.iter().zip(&components) {
        let scaled = ArcComponents {
            js: comp.js / js_scale,
            base: comp.base / base_scale,
        };
        let v = scaled.mix(cfg.lambda);
        values[[i, j]] = v;
        values[[j, i]] = v;
    }
    Ok(DistanceMatrix {
        values,
        lambda: cfg.lambda,
        provenance: MatrixProvenance {
            config: *cfg,
            classifier_hash: f.identity_hash(),
        },
    })
}

// --- on-disk cache ----------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CacheManifest {
    n: usize,
    dtype: String,
    byte_order: String,
    layout: String,
    bundle_hash: String,
    classifier_hash: String,
    config: DiscriminativeMetricConfig,
    data: String,
}

pub fn cache_key(bundle_hash: &str, classifier_hash: &str, cfg: &DiscriminativeMetricConfig) -> String {
    let cfg_json = serde_json::to_string(cfg).expect("config serializes");
    sha256_hex(format!("{bundle_hash}\n{classifier_hash}\n{cfg_json}").as_bytes())[..32].to_string()
}

/// Stores the strict upper triangle as little-endian `f32` next to a JSON
/// manifest. Returns the manifest path.
pub fn save_cached_matrix(dm: &DistanceMatrix, bundle_hash: &str, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let key = cache_key(bundle_hash, &dm.provenance.classifier_hash, &dm.provenance.config);
    let n = dm.size();
    let mut bytes = Vec::with_capacity(n * n.saturating_sub(1) * 2);
    for i in 0..n {
        for j in (i + 1)..n {
            bytes.extend_from_slice(&(dm.values[[i, j]] as f32).to_le_bytes());
        }
    }
    let data = format!("{key}.f32");
    let blob = dir.join(&data);
    fs::write(&blob, bytes).map_err(|e| Error::io(&blob, e))?;
    let manifest = CacheManifest {
        n,
        dtype: "f32".into(),
        byte_order: "little".into(),
        layout: "upper_triangle".into(),
        bundle_hash: bundle_hash.to_string(),
        classifier_hash: dm.provenance.classifier_hash.clone(),
        config: dm.provenance.config,
        data,
    };
    let path = dir.join(format!("{key}.json"));
    fs::write(
        &path,
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )
    .map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Looks up a cached matrix; `Ok(None)` when no entry matches the key.
pub fn load_cached_matrix(
    dir: impl AsRef<Path>,
    bundle_hash: &str,
    classifier_hash: &str,
    cfg: &DiscriminativeMetricConfig,
) -> Result<Option<DistanceMatrix>> {
    let dir = dir.as_ref();
    let key = cache_key(bundle_hash, classifier_hash, cfg);
    let path = dir.join(format!("{key}.json"));
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: CacheManifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
        what: "matrix cache manifest",
        path: path.clone(),
        message: e.to_string(),
    })?;
    if manifest.bundle_hash != bundle_hash || manifest.classifier_hash != classifier_hash || manifest.config != *cfg {
        return Ok(None);
    }
    let blob_path = dir.join(&manifest.data);
    let bytes = fs::read(&blob_path).map_err(|e| Error::io(&blob_path, e))?;
    let n = manifest.n;
    let expected = n * n.saturating_sub(1) / 2 * 4;
    if bytes.len() != expected {
        return Err(Error::ByteLength {
            n_rows: n,
            n_cols: n,
            expected,
            actual: bytes.len(),
        });
    }
    let mut values = Array2::zeros((n, n));
    let mut it = bytes.chunks_exact(4);
    for i in 0..n {
        for j in (i + 1)..n {
            let c = it.next().expect("length checked");
            let v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64;
            values[[i, j]] = v;
            values[[j, i]] = v;
        }
    }
    Ok(Some(DistanceMatrix {
        values,
        lambda: cfg.lambda,
        provenance: MatrixProvenance {
            config: *cfg,
            classifier_hash: classifier_hash.to_string(),
        },
    }))
}
