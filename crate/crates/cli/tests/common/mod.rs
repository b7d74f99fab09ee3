#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use deepview_core::classifier::MlpClassifier;
use deepview_core::data::{save_bundle, DatasetBundle};
use deepview_core::pipeline::RunConfig;
use deepview_core::projector::UmapConfig;
use deepview_core::synthetic::{axis_centers, gaussian_blobs, nearest_mean_classifier};

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub bundle_dir: PathBuf,
    pub manifest: PathBuf,
    pub weights: PathBuf,
    pub bundle: DatasetBundle,
    pub classifier: MlpClassifier,
}

impl Fixture {
    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

/// Two separable blobs in 16 dimensions with a nearest-mean classifier.
pub fn two_blobs(n_per_class: usize) -> Fixture {
    let centers = axis_centers(2, 16, 6.0);
    let bundle = gaussian_blobs(&centers, n_per_class, 1.0, 1).unwrap();
    let classifier = nearest_mean_classifier(&centers, 0.3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = save_bundle(&bundle, dir.path().join("bundle")).unwrap();
    let weights = dir.path().join("weights.json");
    classifier.save(&weights).unwrap();
    Fixture {
        bundle_dir: manifest.parent().unwrap().to_path_buf(),
        dir,
        manifest,
        weights,
        bundle,
        classifier,
    }
}

/// Small settings that keep runs fast; mirrored by [`quick_config`].
pub const QUICK: [&str; 4] = ["--epochs=150", "--grid=24x24", "--neighbors=10", "--seed=3"];

pub fn quick_config(lambda: f64) -> RunConfig {
    let mut cfg = RunConfig {
        umap: UmapConfig {
            n_neighbors: 10,
            n_epochs: 150,
            ..UmapConfig::default()
        },
        grid_resolution: (24, 24),
        seed: 3,
        ..RunConfig::default()
    };
    cfg.metric.lambda = lambda;
    cfg
}

pub fn deepview() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_deepview"));
    // keep ambient settings from leaking into tests
    for (k, _) in std::env::vars() {
        if k.starts_with("DEEPVIEW_") {
            c.env_remove(k);
        }
    }
    c
}

pub fn run<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    deepview().args(args).output().unwrap()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn ok(o: &Output) {
    assert!(o.status.success(), "exit {:?}: {}", o.status.code(), stderr(o));
}

pub fn project(fx: &Fixture, lambda: f64, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "project".to_string(),
        format!("--bundle={}", fx.bundle_dir.display()),
        format!("--classifier={}", fx.weights.display()),
        format!("--lambda={lambda}"),
        format!("--out={}", out.display()),
    ];
    args.extend(QUICK.iter().map(|s| s.to_string()));
    args.extend(extra.iter().map(|s| s.to_string()));
    run(args)
}
