//! Synthetic bundles and matching classifiers for demos and tests.

use ndarray::Array2;

use crate::classifier::MlpClassifier;
use crate::data::{DatasetBundle, Record};
use crate::error::Result;
use crate::rng::SeededRng;

/// Isotropic Gaussian blobs, `n_per_class` rows per center, labelled by
/// center index. Rows are interleaved by class.
pub fn gaussian_blobs(centers: &Array2<f64>, n_per_class: usize, noise_sd: f64, seed: u64) -> Result<DatasetBundle> {
    let (c, d) = centers.dim();
    let n = c * n_per_class;
    let mut rng = SeededRng::new(seed);
    let mut emb = Array2::zeros((n, d));
    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % c;
        for j in 0..d {
            emb[[i, j]] = centers[[label, j]] + noise_sd * rng.normal();
        }
        records.push(
            Record::new(format!("pt{i:05}"))
                .with_label(label)
                .with_text(format!("synthetic sample {i} from class {label}")),
        );
    }
    DatasetBundle::new(emb, records)
}

/// `scale * e_c` centers in `d` dimensions.
pub fn axis_centers(n_classes: usize, d: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((n_classes, d), |(c, j)| if c == j { scale } else { 0.0 })
}

/// Linear softmax scoring `sharpness * (mu_c . x - |mu_c|^2 / 2)`, the
/// nearest-mean rule in logit form.
pub fn nearest_mean_classifier(centers: &Array2<f64>, sharpness: f64) -> Result<MlpClassifier> {
    let weights = centers
        .outer_iter()
        .map(|m| m.iter().map(|v| sharpness * v).collect())
        .collect();
    let bias = centers
        .outer_iter()
        .map(|m| -sharpness * 0.5 * m.iter().map(|v| v * v).sum::<f64>())
        .collect();
    MlpClassifier::linear_softmax(weights, bias)
}

/// Two classes separated only along the first `signal_dims` axes (means
/// `+-separation` per axis, unit variance); the remaining axes are zero-mean
/// nuisance with `nuisance_variance`.
pub fn nuisance_dominated(
    n: usize,
    d: usize,
    signal_dims: usize,
    separation: f64,
    nuisance_variance: f64,
    seed: u64,
) -> Result<DatasetBundle> {
    let mut rng = SeededRng::new(seed);
    let nuisance_sd = nuisance_variance.sqrt();
    let mut emb = Array2::zeros((n, d));
    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % 2;
        let sign = if label == 0 { -1.0 } else { 1.0 };
        for j in 0..d {
            emb[[i, j]] = if j < signal_dims {
                sign * separation + rng.normal()
            } else {
                nuisance_sd * rng.normal()
            };
        }
        records.push(Record::new(format!("s{i:05}")).with_label(label));
    }
    DatasetBundle::new(emb, records)
}

/// Linear softmax over the first `signal_dims` axes: logits
/// `+-sharpness * sum_j x_j`.
pub fn signal_classifier(d: usize, signal_dims: usize, sharpness: f64) -> Result<MlpClassifier> {
    let w: Vec<f64> = (0..d).map(|j| if j < signal_dims { sharpness } else { 0.0 }).collect();
    MlpClassifier::linear_softmax(vec![w.iter().map(|v| -v).collect(), w], vec![0.0, 0.0])
}
