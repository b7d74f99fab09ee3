//! Probabilistic classifiers.
//!
//! Anything implementing [`Classifier`] maps a `B x D` input matrix to a
//! `B x C` matrix of probability rows. Three implementations ship here: a
//! dense feed-forward network read from a JSON weights file, a kNN vote
//! classifier over an in-memory reference set, and a blocking HTTP client for
//! models served behind the `/v1/info` + `/v1/predict` protocol.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::DatasetBundle;
use crate::error::{Error, Result};

/// Probability vector over `C` classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProbDist(Vec<f64>);

impl ProbDist {
    /// Clamps tiny negative rounding noise to zero and renormalizes.
    pub fn new(mut probs: Vec<f64>) -> Result<Self> {
        normalize_row(&mut probs)?;
        Ok(Self(probs))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }
}

fn normalize_row(row: &mut [f64]) -> Result<()> {
    for v in row.iter_mut() {
        if !v.is_finite() || *v < -1e-9 {
            return Err(Error::Config(format!("invalid probability component {v}")));
        }
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let sum: f64 = row.iter().sum();
    if sum <= 0.0 {
        return Err(Error::Config("probability row sums to zero".into()));
    }
    if sum != 1.0 {
        row.iter_mut().for_each(|v| *v /= sum);
    }
    Ok(())
}

/// Index of the largest entry; ties resolve to the lower index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifierInfo {
    pub input_dim: usize,
    pub n_classes: usize,
    #[serde(default)]
    pub class_names: Vec<String>,
}

impl ClassifierInfo {
    pub fn new(input_dim: usize, class_names: Vec<String>) -> Result<Self> {
        let info = Self {
            input_dim,
            n_classes: class_names.len(),
            class_names,
        };
        info.validate()?;
        Ok(info)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(Error::Config(format!(
                "classifier needs at least 2 classes, got {}",
                self.n_classes
            )));
        }
        if self.class_names.len() != self.n_classes {
            return Err(Error::Config(format!(
                "{} class names for {} classes",
                self.class_names.len(),
                self.n_classes
            )));
        }
        Ok(())
    }
}

pub trait Classifier: Send + Sync {
    fn info(&self) -> &ClassifierInfo;

    /// One probability row per input row. Implementations must give
    /// row-for-row identical results however the inputs are batched.
    fn predict_batch(&self, inputs: ArrayView2<'_, f64>) -> Result<Array2<f64>>;

    /// Stable content hash used for provenance and cache keys.
    fn identity_hash(&self) -> String;

    fn predict(&self, input: ArrayView1<'_, f64>) -> Result<ProbDist> {
        let row = input.insert_axis(ndarray::Axis(0));
        let out = self.predict_batch(row)?;
        ProbDist::new(out.row(0).to_vec())
    }
}

pub(crate) fn check_width(info: &ClassifierInfo, inputs: &ArrayView2<'_, f64>) -> Result<()> {
    if inputs.ncols() != info.input_dim {
        return Err(Error::Dimension {
            expected: info.input_dim,
            actual: inputs.ncols(),
        });
    }
    Ok(())
}

// --- built-in dense network -------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Softmax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    /// `out x in`
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct WeightsFile {
    input_dim: usize,
    layers: Vec<DenseLayer>,
    #[serde(default)]
    class_names: Vec<String>,
}

/// Stack of dense layers ending in softmax.
#[derive(Debug, Clone)]
pub struct MlpClassifier {
    info: ClassifierInfo,
    layers: Vec<DenseLayer>,
    hash: String,
}

impl MlpClassifier {
    pub fn new(input_dim: usize, layers: Vec<DenseLayer>, class_names: Vec<String>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::LayerShape {
                layer: 0,
                message: "no layers".into(),
            });
        }
        let mut width = input_dim;
        let last = layers.len() - 1;
        for (idx, layer) in layers.iter().enumerate() {
            let layer_no = idx + 1;
            let out = layer.weights.len();
            if out == 0 {
                return Err(Error::LayerShape {
                    layer: layer_no,
                    message: "layer has no outputs".into(),
                });
            }
            if let Some(bad) = layer.weights.iter().position(|r| r.len() != width) {
                return Err(Error::LayerShape {
                    layer: layer_no,
                    message: format!(
                        "weight row {bad} has width {} but layer input width is {width}",
                        layer.weights[bad].len()
                    ),
                });
            }
            if layer.bias.len() != out {
                return Err(Error::LayerShape {
                    layer: layer_no,
                    message: format!("bias length {} != output width {out}", layer.bias.len()),
                });
            }
            if layer
                .weights
                .iter()
                .flatten()
                .chain(&layer.bias)
                .any(|v| !v.is_finite())
            {
                return Err(Error::LayerShape {
                    layer: layer_no,
                    message: "non-finite parameter".into(),
                });
            }
            match (layer.activation, idx == last) {
                (Activation::Softmax, false) => {
                    return Err(Error::LayerShape {
                        layer: layer_no,
                        message: "softmax is only allowed on the final layer".into(),
                    })
                }
                (a, true) if a != Activation::Softmax => {
                    return Err(Error::LayerShape {
                        layer: layer_no,
                        message: "final layer must use softmax".into(),
                    })
                }
                _ => {}
            }
            width = out;
        }
        let class_names = if class_names.is_empty() {
            (0..width).map(|c| format!("class_{c}")).collect()
        } else {
            class_names
        };
        if class_names.len() != width {
            return Err(Error::LayerShape {
                layer: layers.len(),
                message: format!("{} class names for {width} outputs", class_names.len()),
            });
        }
        let info = ClassifierInfo::new(input_dim, class_names)?;
        let file = WeightsFile {
            input_dim,
            layers,
            class_names: info.class_names.clone(),
        };
        let hash = sha256_hex(&serde_json::to_vec(&file).expect("weights serialize"));
        Ok(Self {
            info,
            layers: file.layers,
            hash,
        })
    }

    /// Single softmax layer `softmax(W x + b)`.
    pub fn linear_softmax(weights: Vec<Vec<f64>>, bias: Vec<f64>) -> Result<Self> {
        let input_dim = weights.first().map_or(0, Vec::len);
        Self::new(
            input_dim,
            vec![DenseLayer {
                weights,
                bias,
                activation: Activation::Softmax,
            }],
            Vec::new(),
        )
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    fn forward(&self, input: ArrayView1<'_, f64>) -> Vec<f64> {
        let mut x: Vec<f64> = input.to_vec();
        for layer in &self.layers {
            let mut y: Vec<f64> = layer
                .weights
                .iter()
                .zip(&layer.bias)
                .map(|(w, b)| w.iter().zip(&x).fold(*b, |acc, (wi, xi)| acc + wi * xi))
                .collect();
            match layer.activation {
                Activation::Identity => {}
                Activation::Relu => y.iter_mut().for_each(|v| *v = v.max(0.0)),
                Activation::Softmax => softmax_in_place(&mut y),
            }
            x = y;
        }
        x
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = WeightsFile {
            input_dim: self.info.input_dim,
            layers: self.layers.clone(),
            class_names: self.info.class_names.clone(),
        };
        let text = serde_json::to_string_pretty(&file).expect("weights serialize");
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

pub fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    v.iter_mut().for_each(|x| *x /= sum);
}

pub fn load_builtin(weights_path: impl AsRef<Path>) -> Result<MlpClassifier> {
    let path = weights_path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: WeightsFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        what: "weights file",
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    MlpClassifier::new(file.input_dim, file.layers, file.class_names)
}

impl Classifier for MlpClassifier {
    fn info(&self) -> &ClassifierInfo {
        &self.info
    }

    fn predict_batch(&self, inputs: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        check_width(&self.info, &inputs)?;
        let c = self.info.n_classes;
        let mut out = Array2::zeros((inputs.nrows(), c));
        for (i, row) in inputs.outer_iter().enumerate() {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    row: i,
                    col: row.iter().position(|v| !v.is_finite()).unwrap_or(0),
                });
            }
            let p = self.forward(row);
            out.row_mut(i).assign(&ArrayView1::from(&p));
        }
        Ok(out)
    }

    fn identity_hash(&self) -> String {
        self.hash.clone()
    }
}

// --- kNN vote classifier ----------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    TrueLabel,
    DatasetTag,
}

impl std::str::FromStr for LabelSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "true_label" | "label" => Ok(LabelSource::TrueLabel),
            "dataset_tag" | "tag" => Ok(LabelSource::DatasetTag),
            other => Err(Error::Config(format!("unknown label source {other:?}"))),
        }
    }
}

/// Neighbor-vote classifier: probabilities are vote fractions among the `k`
/// Euclidean-nearest reference rows (distance ties go to the lower row).
#[derive(Debug, Clone)]
pub struct KnnClassifierModel {
    reference_points: Array2<f64>,
    reference_labels: Vec<usize>,
    k: usize,
    info: ClassifierInfo,
    hash: String,
}

impl KnnClassifierModel {
    pub fn new(
        reference_points: Array2<f64>,
        reference_labels: Vec<usize>,
        k: usize,
        class_names: Vec<String>,
    ) -> Result<Self> {
        let m = reference_points.nrows();
        if reference_labels.len() != m {
            return Err(Error::RecordCount {
                records: reference_labels.len(),
                rows: m,
            });
        }
        if k == 0 || k > m {
            return Err(Error::Config(format!("k={k} must lie in [1, {m}]")));
        }
        let info = ClassifierInfo::new(reference_points.ncols(), class_names)?;
        if let Some(bad) = reference_labels.iter().position(|&l| l >= info.n_classes) {
            return Err(Error::InvalidRecord {
                row: bad,
                message: format!("label {} outside [0, {})", reference_labels[bad], info.n_classes),
            });
        }
        let mut h = Sha256::new();
        h.update(b"knn");
        h.update((k as u64).to_le_bytes());
        for v in reference_points.iter() {
            h.update(v.to_le_bytes());
        }
        for l in &reference_labels {
            h.update((*l as u64).to_le_bytes());
        }
        for n in &info.class_names {
            h.update(n.as_bytes());
            h.update([0]);
        }
        Ok(Self {
            reference_points,
            reference_labels,
            k,
            info,
            hash: hex::encode(h.finalize()),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn reference_labels(&self) -> &[usize] {
        &self.reference_labels
    }

    /// Indices of the `k` nearest reference rows in ascending (distance,
    /// index) order, skipping `exclude`.
    fn neighbors(&self, query: ArrayView1<'_, f64>, exclude: Option<usize>) -> Vec<usize> {
        let mut dists: Vec<(f64, usize)> = self
            .reference_points
            .outer_iter()
            .enumerate()
            .filter(|(j, _)| Some(*j) != exclude)
            .map(|(j, r)| {
                let d: f64 = r.iter().zip(query.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                (d, j)
            })
            .collect();
        let k = self.k.min(dists.len());
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < dists.len() {
            dists.select_nth_unstable_by(k, cmp);
            dists.truncate(k);
        }
        dists.sort_unstable_by(cmp);
        dists.into_iter().map(|(_, j)| j).collect()
    }

    fn vote(&self, neighbors: &[usize]) -> (Vec<f64>, usize) {
        let mut counts = vec![0usize; self.info.n_classes];
        for &j in neighbors {
            counts[self.reference_labels[j]] += 1;
        }
        let best = *counts.iter().max().unwrap_or(&0);
        let nearest = self.reference_labels[neighbors[0]];
        let label = if counts[nearest] == best {
            nearest
        } else {
            counts.iter().position(|&c| c == best).unwrap_or(0)
        };
        let total = neighbors.len() as f64;
        (counts.iter().map(|&c| c as f64 / total).collect(), label)
    }

    /// Majority label per row; vote ties go to the single nearest neighbor.
    pub fn predict_labels(&self, inputs: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
        check_width(&self.info, &inputs)?;
        Ok(inputs
            .outer_iter()
            .map(|q| self.vote(&self.neighbors(q, None)).1)
            .collect())
    }

    /// Leave-one-out labels for the reference rows themselves.
    pub fn loo_labels(&self) -> Result<Vec<usize>> {
        if self.k >= self.reference_points.nrows() {
            return Err(Error::Config(format!(
                "leave-one-out needs k < {} reference rows",
                self.reference_points.nrows()
            )));
        }
        Ok(self
            .reference_points
            .outer_iter()
            .enumerate()
            .map(|(i, q)| self.vote(&self.neighbors(q, Some(i))).1)
            .collect())
    }
}

impl Classifier for KnnClassifierModel {
    fn info(&self) -> &ClassifierInfo {
        &self.info
    }

    fn predict_batch(&self, inputs: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        check_width(&self.info, &inputs)?;
        let mut out = Array2::zeros((inputs.nrows(), self.info.n_classes));
        for (i, q) in inputs.outer_iter().enumerate() {
            let (fractions, _) = self.vote(&self.neighbors(q, None));
            out.row_mut(i).assign(&ArrayView1::from(&fractions));
        }
        Ok(out)
    }

    fn identity_hash(&self) -> String {
        self.hash.clone()
    }
}

/// Class indices and names for the chosen label source. Dataset tags map to
/// indices in sorted tag order.
pub fn labels_from_bundle(bundle: &DatasetBundle, source: LabelSource) -> Result<(Vec<usize>, Vec<String>)> {
    match source {
        LabelSource::TrueLabel => {
            let mut labels = Vec::with_capacity(bundle.size());
            for (row, r) in bundle.records().iter().enumerate() {
                labels.push(r.label.ok_or_else(|| Error::InvalidRecord {
                    row,
                    message: "missing label".into(),
                })?);
            }
            let c = labels.iter().max().map_or(2, |m| (m + 1).max(2));
            Ok((labels, (0..c).map(|i| i.to_string()).collect()))
        }
        LabelSource::DatasetTag => {
            let mut tags = Vec::with_capacity(bundle.size());
            for (row, r) in bundle.records().iter().enumerate() {
                tags.push(r.dataset_tag.clone().ok_or_else(|| Error::InvalidRecord {
                    row,
                    message: "missing dataset_tag".into(),
                })?);
            }
            let mut names = tags.clone();
            names.sort();
            names.dedup();
            if names.len() < 2 {
                names.push(format!("{}_other", names.first().map_or("tag", |s| s)));
            }
            let labels = tags
                .iter()
                .map(|t| names.binary_search(t).expect("tag present"))
                .collect();
            Ok((labels, names))
        }
    }
}

pub fn fit_knn(bundle: &DatasetBundle, label_source: LabelSource, k: usize) -> Result<KnnClassifierModel> {
    let (labels, names) = labels_from_bundle(bundle, label_source)?;
    KnnClassifierModel::new(bundle.embeddings().clone(), labels, k, names)
}

// --- remote client ----------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
pub struct PredictRequest {
    pub inputs: Vec<Vec<f32>>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PredictResponse {
    pub probabilities: Vec<Vec<f32>>,
}

/// Client for a model served over the JSON prediction protocol.
pub struct RemoteClassifier {
    base_url: String,
    client: reqwest::blocking::Client,
    info: ClassifierInfo,
    max_retries: usize,
    request_rows: usize,
    hash: String,
}

impl std::fmt::Debug for RemoteClassifier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteClassifier")
            .field("base_url", &self.base_url)
            .field("info", &self.info)
            .finish()
    }
}

pub const DEFAULT_MAX_RETRIES: usize = 3;

impl RemoteClassifier {
    pub fn connect(base_url: &str) -> Result<Self> {
        Self::connect_with(base_url, DEFAULT_MAX_RETRIES, Duration::from_secs(60))
    }

    pub fn connect_with(base_url: &str, max_retries: usize, timeout: Duration) -> Result<Self> {
        let base_url = base_url.trim_end_matches('/').to_string();
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::Transport {
                endpoint: base_url.clone(),
                batch: 0,
                message: e.to_string(),
            })?;
        let endpoint = format!("{base_url}/v1/info");
        let mut info: ClassifierInfo = client
            .get(&endpoint)
            .send()
            .and_then(|r| r.error_for_status())
            .and_then(|r| r.json())
            .map_err(|e| Error::Transport {
                endpoint: endpoint.clone(),
                batch: 0,
                message: e.to_string(),
            })?;
        if info.class_names.is_empty() {
            info.class_names = (0..info.n_classes).map(|i| format!("class_{i}")).collect();
        }
        info.validate()?;
        let hash = sha256_hex(
            format!(
                "remote\n{base_url}\n{}",
                serde_json::to_string(&info).expect("info serializes")
            )
            .as_bytes(),
        );
        Ok(Self {
            base_url,
            client,
            info,
            max_retries,
            request_rows: 512,
            hash,
        })
    }

    pub fn with_request_rows(mut self, rows: usize) -> Self {
        self.request_rows = rows.max(1);
        self
    }

    fn post_chunk(&self, endpoint: &str, batch: usize, rows: ArrayView2<'_, f64>) -> Result<Vec<Vec<f32>>> {
        let body = PredictRequest {
            inputs: rows
                .outer_iter()
                .map(|r| r.iter().map(|v| *v as f32).collect())
                .collect(),
        };
        let mut last = String::new();
        for attempt in 0..=self.max_retries {
            if attempt > 0 {
                log::warn!("retrying {endpoint} batch {batch} (attempt {attempt}): {last}");
            }
            let res = self
                .client
                .post(endpoint)
                .json(&body)
                .send()
                .and_then(|r| r.error_for_status())
                .and_then(|r| r.json::<PredictResponse>());
            match res {
                Ok(resp) => return Ok(resp.probabilities),
                Err(e) => last = e.to_string(),
            }
        }
        Err(Error::Transport {
            endpoint: endpoint.to_string(),
            batch,
            message: last,
        })
    }
}

impl Classifier for RemoteClassifier {
    fn info(&self) -> &ClassifierInfo {
        &self.info
    }

    fn predict_batch(&self, inputs: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        check_width(&self.info, &inputs)?;
        let endpoint = format!("{}/v1/predict", self.base_url);
        let c = self.info.n_classes;
        let mut out = Array2::zeros((inputs.nrows(), c));
        let mut start = 0;
        let mut batch = 0;
        while start < inputs.nrows() {
            let end = (start + self.request_rows).min(inputs.nrows());
            let rows = inputs.slice(ndarray::s![start..end, ..]);
            let probs = self.post_chunk(&endpoint, batch, rows)?;
            if probs.len() != end - start {
                return Err(Error::Transport {
                    endpoint: endpoint.clone(),
                    batch,
                    message: format!("expected {} rows, got {}", end - start, probs.len()),
                });
            }
            for (i, p) in probs.into_iter().enumerate() {
                if p.len() != c {
                    return Err(Error::Transport {
                        endpoint: endpoint.clone(),
                        batch,
                        message: format!("row {i} has {} probabilities, expected {c}", p.len()),
                    });
                }
                let mut row: Vec<f64> = p.into_iter().map(f64::from).collect();
                normalize_row(&mut row).map_err(|e| Error::Transport {
                    endpoint: endpoint.clone(),
                    batch,
                    message: e.to_string(),
                })?;
                out.row_mut(start + i).assign(&ArrayView1::from(&row));
            }
            start = end;
            batch += 1;
        }
        Ok(out)
    }

    fn identity_hash(&self) -> String {
        self.hash.clone()
    }
}

// --- spec strings -----------------------------------------------------------

/// How to obtain a classifier: a weights file, a remote endpoint, or a kNN
/// model fitted on the bundle itself (`knn:<true_label|dataset_tag>[:k]`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum ClassifierSpec {
    Builtin(PathBuf),
    Remote(String),
    Knn { source: LabelSource, k: usize },
}

impl std::str::FromStr for ClassifierSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(rest) = s.strip_prefix("knn:") {
            let mut parts = rest.split(':');
            let source = parts.next().unwrap_or("").parse()?;
            let k = match parts.next() {
                Some(k) => k
                    .parse()
                    .map_err(|_| Error::Config(format!("invalid k in classifier spec {s:?}")))?,
                None => 5,
            };
            if parts.next().is_some() {
                return Err(Error::Config(format!("malformed classifier spec {s:?}")));
            }
            return Ok(ClassifierSpec::Knn { source, k });
        }
        if s.starts_with("http://") || s.starts_with("https://") {
            return Ok(ClassifierSpec::Remote(s.to_string()));
        }
        if s.is_empty() {
            return Err(Error::Config("empty classifier spec".into()));
        }
        Ok(ClassifierSpec::Builtin(PathBuf::from(s)))
    }
}

impl std::fmt::Display for ClassifierSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ClassifierSpec::Builtin(p) => write!(f, "{}", p.display()),
            ClassifierSpec::Remote(u) => f.write_str(u),
            ClassifierSpec::Knn { source, k } => {
                let s = match source {
                    LabelSource::TrueLabel => "true_label",
                    LabelSource::DatasetTag => "dataset_tag",
                };
                write!(f, "knn:{s}:{k}")
            }
        }
    }
}

impl From<ClassifierSpec> for String {
    fn from(s: ClassifierSpec) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for ClassifierSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl ClassifierSpec {
    /// `bundle` is the fitting set for kNN specs.
    pub fn build(&self, bundle: &DatasetBundle) -> Result<Box<dyn Classifier>> {
        Ok(match self {
            ClassifierSpec::Builtin(p) => Box::new(load_builtin(p)?),
            ClassifierSpec::Remote(u) => Box::new(RemoteClassifier::connect(u)?),
            ClassifierSpec::Knn { source, k } => Box::new(fit_knn(bundle, *source, *k)?),
        })
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
