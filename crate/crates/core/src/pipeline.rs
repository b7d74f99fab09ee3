//! End-to-end run: distance matrix, projection, inverse map, decision grid
//! and quality scores, assembled into a serializable [`VisPayload`].

use std::io::Write;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::classifier::{argmax, Classifier};
use crate::data::DatasetBundle;
use crate::error::{Error, Result};
use crate::eval::{q_data_error, q_knn_error};
use crate::inverse::{self, DecisionGrid, DEFAULT_MARGIN, DEFAULT_RESOLUTION, DEFAULT_RIDGE};
use crate::metric::{build_distance_matrix, DiscriminativeMetricConfig, DistanceMatrix};
use crate::projector::{project_matrix, UmapConfig};

pub const Q_KNN_K: usize = 5;
pub const CLASSIFIER_BATCH: usize = 256;

/// Default sweep grid, strongest unsupervised weight first.
pub const DEFAULT_LAMBDAS: [f64; 6] = [1.0, 0.8, 0.6, 0.4, 0.2, 0.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub metric: DiscriminativeMetricConfig,
    pub umap: UmapConfig,
    pub grid_resolution: (usize, usize),
    pub margin: f64,
    pub inverse_ridge: f64,
    /// Overrides `umap.seed`; drives every stochastic stage.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            metric: DiscriminativeMetricConfig::default(),
            umap: UmapConfig::default(),
            grid_resolution: DEFAULT_RESOLUTION,
            margin: DEFAULT_MARGIN,
            inverse_ridge: DEFAULT_RIDGE,
            seed: 0,
        }
    }
}

impl RunConfig {
    /// Copy with `umap.seed` set from `seed`, as actually used by a run.
    pub fn resolved(&self) -> Self {
        let mut c = *self;
        c.umap.seed = self.seed;
        c
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.metric.lambda = lambda;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.metric.validate()?;
        self.umap.validate()?;
        let (w, h) = self.grid_resolution;
        if w < 2 || h < 2 {
            return Err(Error::Config(format!(
                "grid resolution must be at least 2x2, got {w}x{h}"
            )));
        }
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return Err(Error::Config(format!("margin must be >= 0, got {}", self.margin)));
        }
        if !(self.inverse_ridge >= 0.0 && self.inverse_ridge.is_finite()) {
            return Err(Error::Config(format!(
                "inverse ridge must be >= 0, got {}",
                self.inverse_ridge
            )));
        }
        Ok(())
    }

    /// Short stable key for this configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(&self.resolved()).expect("config serializes");
        crate::classifier::sha256_hex(&json)[..16].to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayloadPoint {
    pub id: String,
    pub x: f64,
    pub y: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_label: Option<usize>,
    pub predicted: usize,
    pub prob_max: f64,
    pub mismatch: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub q_knn_error: f64,
    pub q_data_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub run_config: RunConfig,
    pub classifier_hash: String,
    pub bundle_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisPayload {
    pub points: Vec<PayloadPoint>,
    pub grid: DecisionGrid,
    pub class_names: Vec<String>,
    pub metrics: Metrics,
    pub provenance: Provenance,
}

impl VisPayload {
    /// Canonical compact JSON; equal payloads give equal bytes.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("payload serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: VisPayload = serde_json::from_str(text).map_err(|e| Error::Parse {
            what: "payload",
            path: "<payload>".into(),
            message: e.to_string(),
        })?;
        p.validate()?;
        Ok(p)
    }

    /// Structural checks a consumer relies on.
    pub fn validate(&self) -> Result<()> {
        self.grid.check_invariants()?;
        let c = self.class_names.len();
        if c < 2 {
            return Err(Error::Config("payload needs at least 2 class names".into()));
        }
        if let Some(bad) = self.grid.labels.iter().find(|&&l| l >= c) {
            return Err(Error::Config(format!("grid label {bad} outside [0, {c})")));
        }
        if !(self.grid.dx > 0.0 && self.grid.dy > 0.0 && self.grid.x0.is_finite() && self.grid.y0.is_finite()) {
            return Err(Error::Config(
                "grid geometry must be finite with positive cell sizes".into(),
            ));
        }
        for (row, p) in self.points.iter().enumerate() {
            if !(p.x.is_finite() && p.y.is_finite()) {
                return Err(Error::NonFinite { row, col: 0 });
            }
            if p.predicted >= c || p.true_label.is_some_and(|l| l >= c) {
                return Err(Error::InvalidRecord {
                    row,
                    message: "label outside class range".into(),
                });
            }
            if p.mismatch != (p.predicted != self.grid.label_at(p.x, p.y)) {
                return Err(Error::InvalidRecord {
                    row,
                    message: "mismatch flag disagrees with grid".into(),
                });
            }
        }
        for (name, v) in [
            ("q_knn_error", self.metrics.q_knn_error),
            ("q_data_error", self.metrics.q_data_error),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} = {v} outside [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn coords(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.points.len(), 2), |(i, a)| {
            if a == 0 {
                self.points[i].x
            } else {
                self.points[i].y
            }
        })
    }
}

fn check_compatible(bundle: &DatasetBundle, f: &dyn Classifier) -> Result<()> {
    if bundle.dim() != f.info().input_dim {
        return Err(Error::Dimension {
            expected: f.info().input_dim,
            actual: bundle.dim(),
        });
    }
    let c = f.info().n_classes;
    if let Some((row, _)) = bundle
        .records()
        .iter()
        .enumerate()
        .find(|(_, r)| r.label.is_some_and(|l| l >= c))
    {
        return Err(Error::InvalidRecord {
            row,
            message: format!("label outside classifier range [0, {c})"),
        });
    }
    Ok(())
}

pub fn run_deepview(bundle: &DatasetBundle, f: &dyn Classifier, cfg: &RunConfig) -> Result<VisPayload> {
    cfg.validate()?;
    check_compatible(bundle, f)?;
    let dm = build_distance_matrix(bundle.embeddings().view(), f, &cfg.metric, CLASSIFIER_BATCH)
        .map_err(|e| e.in_stage("distance_matrix"))?;
    run_from_matrix(bundle, f, cfg, &dm)
}

/// Runs the remaining stages on an already built (for example cached)
/// distance matrix.
pub fn run_from_matrix(
    bundle: &DatasetBundle,
    f: &dyn Classifier,
    cfg: &RunConfig,
    dm: &DistanceMatrix,
) -> Result<VisPayload> {
    cfg.validate()?;
    check_compatible(bundle, f)?;
    let cfg = cfg.resolved();
    if dm.size() != bundle.size() {
        return Err(Error::Dimension {
            expected: bundle.size(),
            actual: dm.size(),
        });
    }
    let projection =
        project_matrix(dm.values.view(), &cfg.umap, cfg.metric.lambda).map_err(|e| e.in_stage("projection"))?;
    let coords = projection.coords;

    let map = inverse::fit_inverse(coords.view(), bundle.embeddings().view(), cfg.inverse_ridge, cfg.seed)
        .map_err(|e| e.in_stage("inverse_map"))?;
    let grid = inverse::sample_decision_grid(&map, coords.view(), f, cfg.grid_resolution, cfg.margin)
        .map_err(|e| e.in_stage("grid"))?;

    let mut predicted = Vec::with_capacity(bundle.size());
    let mut prob_max = Vec::with_capacity(bundle.size());
    for chunk in bundle.embeddings().axis_chunks_iter(ndarray::Axis(0), CLASSIFIER_BATCH) {
        let probs = f.predict_batch(chunk).map_err(|e| e.in_stage("predictions"))?;
        for row in probs.outer_iter() {
            let p = row.as_slice().expect("contiguous");
            predicted.push(argmax(p));
            prob_max.push(p[argmax(p)]);
        }
    }

    let q_knn = q_knn_error(coords.view(), &predicted, Q_KNN_K).map_err(|e| e.in_stage("metrics"))?;
    let q_data = q_data_error(coords.view(), &predicted, &grid).map_err(|e| e.in_stage("metrics"))?;

    let points = bundle
        .records()
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let (x, y) = (coords[[i, 0]], coords[[i, 1]]);
            PayloadPoint {
                id: r.id.clone(),
                x,
                y,
                true_label: r.label,
                predicted: predicted[i],
                prob_max: prob_max[i],
                mismatch: predicted[i] != grid.label_at(x, y),
            }
        })
        .collect();

    Ok(VisPayload {
        points,
        grid,
        class_names: f.info().class_names.clone(),
        metrics: Metrics {
            q_knn_error: q_knn,
            q_data_error: q_data,
        },
        provenance: Provenance {
            run_config: cfg,
            classifier_hash: f.identity_hash(),
            bundle_hash: bundle.content_hash(),
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub q_knn_error: f64,
    pub q_data_error: f64,
}

/// One full run per lambda, all with the same seed, in the given order.
pub fn sweep_lambda(
    bundle: &DatasetBundle,
    f: &dyn Classifier,
    cfg: &RunConfig,
    lambdas: &[f64],
) -> Result<Vec<SweepRow>> {
    if lambdas.is_empty() {
        return Err(Error::Config("empty lambda list".into()));
    }
    if let Some(bad) = lambdas.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return Err(Error::Config(format!("lambda out of range [0, 1]: {bad}")));
    }
    lambdas
        .iter()
        .map(|&lambda| {
            let payload = run_deepview(bundle, f, &cfg.with_lambda(lambda)).map_err(|e| Error::Sweep {
                lambda,
                source: Box::new(e),
            })?;
            Ok(SweepRow {
                lambda,
                q_knn_error: payload.metrics.q_knn_error,
                q_data_error: payload.metrics.q_data_error,
            })
        })
        .collect()
}

/// CSV with a leading `# provenance:` comment line.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], provenance: &serde_json::Value, mut out: W) -> std::io::Result<()> {
    writeln!(out, "# provenance: {provenance}")?;
    writeln!(out, "lambda,q_knn_error,q_data_error")?;
    for r in rows {
        writeln!(out, "{},{},{}", r.lambda, r.q_knn_error, r.q_data_error)?;
    }
    Ok(())
}
