#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use axum::Router;
use deepview_core::classifier::MlpClassifier;
use deepview_core::data::{save_bundle, DatasetBundle, Record};
use deepview_core::rng::SeededRng;
use deepview_core::synthetic::{axis_centers, gaussian_blobs, nearest_mean_classifier};
use ndarray::Array2;

/// Serves `router` on an ephemeral port from a background runtime.
pub fn spawn(router: Router) -> String {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    listener.set_nonblocking(true).unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener).unwrap();
            axum::serve(listener, router).await.unwrap();
        });
    });
    format!("http://{addr}")
}

/// A URL nothing listens on.
pub fn dead_url() -> String {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    format!("http://{addr}")
}

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub manifest: PathBuf,
    pub weights: PathBuf,
    pub bundle: DatasetBundle,
    pub classifier: MlpClassifier,
}

/// Two separable blobs in 16 dimensions; odd rows carry no text.
pub fn two_blob_fixture(n_per_class: usize) -> Fixture {
    let centers = axis_centers(2, 16, 6.0);
    let blobs = gaussian_blobs(&centers, n_per_class, 1.0, 1).unwrap();
    let records = blobs
        .records()
        .iter()
        .enumerate()
        .map(|(i, r)| {
            if i % 2 == 1 {
                Record::new(r.id.clone()).with_label(r.label.unwrap())
            } else {
                r.clone()
            }
        })
        .collect();
    let bundle = DatasetBundle::new(blobs.embeddings().clone(), records).unwrap();
    let classifier = nearest_mean_classifier(&centers, 0.3).unwrap();
    write_fixture(bundle, classifier)
}

pub fn write_fixture(bundle: DatasetBundle, classifier: MlpClassifier) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let manifest = save_bundle(&bundle, dir.path().join("bundle")).unwrap();
    let weights = dir.path().join("weights.json");
    classifier.save(&weights).unwrap();
    Fixture {
        dir,
        manifest,
        weights,
        bundle,
        classifier,
    }
}

pub fn random_rows(n: usize, d: usize, seed: u64) -> Array2<f64> {
    let mut rng = SeededRng::new(seed);
    Array2::from_shape_fn((n, d), |_| rng.uniform(-3.0, 3.0))
}

pub fn wait_until<T>(timeout: Duration, mut poll: impl FnMut() -> Option<T>) -> T {
    let start = Instant::now();
    loop {
        if let Some(v) = poll() {
            return v;
        }
        assert!(start.elapsed() < timeout, "timed out after {timeout:?}");
        std::thread::sleep(Duration::from_millis(25));
    }
}

pub fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("golden")
        .join(name)
}
