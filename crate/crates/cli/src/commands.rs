use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use deepview_core::classifier::{argmax, fit_knn, labels_from_bundle, load_builtin, Classifier, LabelSource};
use deepview_core::data::{load_bundle, subsample, DatasetBundle, SampleSpec};
use deepview_core::error::{Error, Result};
use deepview_core::eval::{compare_models, confusion_matrix, neighborhood_curves, q_data_error, q_knn_error};
use deepview_core::metric::{
    build_distance_matrix, load_cached_matrix, save_cached_matrix, DiscriminativeMetricConfig,
};
use deepview_core::pipeline::{run_from_matrix, write_sweep_csv, RunConfig, SweepRow, VisPayload, CLASSIFIER_BATCH};
use deepview_core::projector::UmapConfig;
use deepview_core::render::render_svg;
use ndarray::{Array2, Axis};
use serde_json::json;

use crate::{CompareArgs, ConfusionArgs, EvalArgs, ProjectArgs, RenderArgs, RunArgs, ServeArgs, SweepArgs};

pub fn exit_code(e: &Error) -> u8 {
    if e.is_transport() {
        2
    } else if e.is_io() {
        3
    } else {
        1
    }
}

/// Accepts either a manifest or the directory holding `manifest.json`.
fn manifest_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join("manifest.json")
    } else {
        p.to_path_buf()
    }
}

fn read_bundle(p: &Path) -> Result<DatasetBundle> {
    load_bundle(manifest_path(p))
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

fn read_payload(p: &Path) -> Result<VisPayload> {
    let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
    VisPayload::from_json(&text).map_err(|e| match e {
        Error::Parse { what, message, .. } => Error::Parse {
            what,
            path: p.to_path_buf(),
            message,
        },
        other => other,
    })
}

fn run_config(a: &RunArgs, lambda: f64) -> RunConfig {
    RunConfig {
        metric: DiscriminativeMetricConfig {
            lambda,
            n_segments: a.segments,
            base_metric: a.base_metric,
            normalize_components: a.normalize,
        },
        umap: UmapConfig {
            n_neighbors: a.neighbors,
            min_dist: a.min_dist,
            n_epochs: a.epochs,
            ..UmapConfig::default()
        },
        grid_resolution: a.grid,
        margin: a.margin,
        inverse_ridge: a.ridge,
        seed: a.seed,
    }
}

/// Bundle (sampled if asked) and the classifier built for it.
fn prepare(a: &RunArgs) -> Result<(DatasetBundle, Box<dyn Classifier>)> {
    let mut bundle = read_bundle(&a.bundle)?;
    if let Some(count) = a.sample {
        bundle = subsample(&bundle, SampleSpec { count, seed: a.seed })?;
    }
    let f = a.classifier.build(&bundle)?;
    Ok((bundle, f))
}

fn run_one(a: &RunArgs, bundle: &DatasetBundle, f: &dyn Classifier, cfg: &RunConfig) -> Result<VisPayload> {
    cfg.validate()?;
    let bundle_hash = bundle.content_hash();
    let cached = match &a.cache_dir {
        Some(dir) => load_cached_matrix(dir, &bundle_hash, &f.identity_hash(), &cfg.metric)?,
        None => None,
    };
    let dm = match cached {
        Some(dm) => {
            log::info!("reusing cached distance matrix");
            dm
        }
        None => {
            let dm = build_distance_matrix(bundle.embeddings().view(), f, &cfg.metric, CLASSIFIER_BATCH)?;
            if let Some(dir) = &a.cache_dir {
                save_cached_matrix(&dm, &bundle_hash, dir)?;
            }
            dm
        }
    };
    run_from_matrix(bundle, f, cfg, &dm)
}

pub fn project(a: ProjectArgs) -> Result<()> {
    let cfg = run_config(&a.run, a.lambda);
    cfg.validate()?;
    let (bundle, f) = prepare(&a.run)?;
    let payload = run_one(&a.run, &bundle, f.as_ref(), &cfg)?;
    fs::write(&a.out, payload.to_json()).map_err(|e| Error::io(&a.out, e))?;
    eprintln!(
        "q_knn_error={} q_data_error={}",
        payload.metrics.q_knn_error, payload.metrics.q_data_error
    );
    Ok(())
}

fn parse_lambdas(s: &str) -> Result<Vec<f64>> {
    let lambdas = s
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::Config(format!("invalid lambda {t:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if lambdas.is_empty() {
        return Err(Error::Config("empty lambda list".into()));
    }
    if let Some(bad) = lambdas.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return Err(Error::Config(format!("lambda out of range [0, 1]: {bad}")));
    }
    Ok(lambdas)
}

pub fn sweep(a: SweepArgs) -> Result<()> {
    let lambdas = parse_lambdas(&a.lambdas)?;
    let base = run_config(&a.run, lambdas[0]);
    base.validate()?;
    let (bundle, f) = prepare(&a.run)?;
    let mut rows = Vec::with_capacity(lambdas.len());
    for &lambda in &lambdas {
        let payload = run_one(&a.run, &bundle, f.as_ref(), &base.with_lambda(lambda)).map_err(|e| Error::Sweep {
            lambda,
            source: Box::new(e),
        })?;
        eprintln!(
            "lambda={lambda} q_knn_error={} q_data_error={}",
            payload.metrics.q_knn_error, payload.metrics.q_data_error
        );
        rows.push(SweepRow {
            lambda,
            q_knn_error: payload.metrics.q_knn_error,
            q_data_error: payload.metrics.q_data_error,
        });
    }
    let provenance = json!({
        "bundle_hash": bundle.content_hash(),
        "classifier_hash": f.identity_hash(),
        "run_config": base.resolved(),
        "lambdas": lambdas,
    });
    let mut buf = Vec::new();
    write_sweep_csv(&rows, &provenance, &mut buf).map_err(|e| Error::io("<buffer>", e))?;
    write_output(a.out.as_deref(), &String::from_utf8(buf).expect("csv is utf-8"))
}

/// Bundle rows reordered to match the payload points by id.
fn aligned_embeddings(bundle: &DatasetBundle, payload: &VisPayload) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((payload.points.len(), bundle.dim()));
    for (i, p) in payload.points.iter().enumerate() {
        let row = bundle
            .records()
            .iter()
            .position(|r| r.id == p.id)
            .ok_or_else(|| Error::Config(format!("payload point {:?} not found in bundle", p.id)))?;
        out.row_mut(i).assign(&bundle.row(row));
    }
    Ok(out)
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let payload = read_payload(&a.payload)?;
    let coords = payload.coords();
    let predicted: Vec<usize> = payload.points.iter().map(|p| p.predicted).collect();
    let q_knn = q_knn_error(coords.view(), &predicted, a.k)?;
    let q_data = q_data_error(coords.view(), &predicted, &payload.grid)?;
    let mut report = json!({
        "k": a.k,
        "q_knn_error": q_knn,
        "q_data_error": q_data,
        "provenance": payload.provenance,
    });
    if let Some(b) = &a.bundle {
        let bundle = read_bundle(b)?;
        let high = aligned_embeddings(&bundle, &payload)?;
        let curves = neighborhood_curves(high.view(), coords.view())?;
        report["neighborhood"] = json!({
            "k_max": curves.k_max,
            "q_local": curves.q_local,
            "auc": curves.auc,
            "chance_auc": curves.chance_auc(),
        });
        if let Some(path) = &a.curves {
            let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
            curves
                .write_csv(std::io::BufWriter::new(file))
                .map_err(|e| Error::io(path, e))?;
        }
    } else if a.curves.is_some() {
        return Err(Error::Config("--curves needs --bundle".into()));
    }
    write_output(
        a.out.as_deref(),
        &format!("{}\n", serde_json::to_string_pretty(&report).expect("json")),
    )
}

pub fn compare(a: CompareArgs) -> Result<()> {
    if a.embeddings.len() < 2 {
        return Err(Error::Config("compare needs at least two embeddings".into()));
    }
    let mut bundles = Vec::with_capacity(a.embeddings.len());
    for (name, path) in &a.embeddings {
        bundles.push((name.clone(), read_bundle(path)?));
    }
    for (name, b) in &bundles[1..] {
        let ids_match = b
            .records()
            .iter()
            .zip(bundles[0].1.records())
            .all(|(x, y)| x.id == y.id);
        if b.size() != bundles[0].1.size() || !ids_match {
            return Err(Error::Config(format!(
                "row misalignment: {name} does not list the same ids as {}",
                bundles[0].0
            )));
        }
    }
    let views: Vec<_> = bundles
        .iter()
        .map(|(n, b)| (n.clone(), b.embeddings().view()))
        .collect();
    let cmp = compare_models(&views)?;

    if let Some(dir) = &a.curves_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for pair in &cmp.pairs {
            let path = dir.join(format!("{}_vs_{}.csv", pair.a, pair.b));
            let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            pair.curves
                .write_csv(std::io::BufWriter::new(file))
                .map_err(|e| Error::io(&path, e))?;
        }
    }

    let provenance = json!({
        "inputs": bundles
            .iter()
            .map(|(n, b)| json!({"name": n, "bundle_hash": b.content_hash()}))
            .collect::<Vec<_>>(),
    });
    let mut text = format!("# provenance: {provenance}\npair,a,b,q_local,k_max,auc\n");
    for r in &cmp.summary {
        text.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.pair, r.a, r.b, r.q_local, r.k_max, r.auc
        ));
    }
    write_output(a.out.as_deref(), &text)
}

pub fn confusion(a: ConfusionArgs) -> Result<()> {
    let bundle = read_bundle(&a.bundle)?;
    let (truth, predicted, names, source) = match &a.classifier {
        Some(spec) => {
            let f = spec.build(&bundle)?;
            let (truth, _) = labels_from_bundle(&bundle, LabelSource::TrueLabel)?;
            let mut predicted = Vec::with_capacity(bundle.size());
            for chunk in bundle.embeddings().axis_chunks_iter(Axis(0), CLASSIFIER_BATCH) {
                let probs = f.predict_batch(chunk)?;
                predicted.extend(probs.outer_iter().map(|r| argmax(r.as_slice().expect("contiguous"))));
            }
            let names = f.info().class_names.clone();
            (
                truth,
                predicted,
                names,
                json!({"classifier": spec.to_string(), "classifier_hash": f.identity_hash()}),
            )
        }
        None => {
            let model = fit_knn(&bundle, a.label_source, a.k)?;
            let predicted = model.loo_labels()?;
            let truth = model.reference_labels().to_vec();
            let names = model.info().class_names.clone();
            let src = match a.label_source {
                LabelSource::TrueLabel => "true_label",
                LabelSource::DatasetTag => "dataset_tag",
            };
            (
                truth,
                predicted,
                names,
                json!({"knn_loo": {"k": a.k, "label_source": src}}),
            )
        }
    };
    let cm = confusion_matrix(&truth, &predicted, names)?;
    let report = json!({
        "class_names": cm.class_names,
        "counts": cm.counts,
        "largest_off_diagonal": cm.largest_off_diagonal().map(|(t, p, c)| json!({"true": t, "predicted": p, "count": c})),
        "provenance": {"bundle_hash": bundle.content_hash(), "predictions": source},
    });
    write_output(
        a.out.as_deref(),
        &format!("{}\n", serde_json::to_string_pretty(&report).expect("json")),
    )
}

pub fn render(a: RenderArgs) -> Result<()> {
    let payload = read_payload(&a.payload)?;
    fs::write(&a.out, render_svg(&payload)).map_err(|e| Error::io(&a.out, e))
}

pub fn serve(a: ServeArgs) -> Result<()> {
    let model: Option<Arc<dyn Classifier>> = match &a.model {
        Some(p) => Some(Arc::new(load_builtin(p)?)),
        None => None,
    };
    let config = deepview_service::ServiceConfig {
        data_dir: a.data_dir,
        static_dir: a.static_dir,
    };
    let rt = tokio::runtime::Runtime::new().map_err(|e| Error::io("<runtime>", e))?;
    rt.block_on(deepview_service::serve(a.addr, config, model))
        .map_err(|e| Error::io(a.addr.to_string(), e))
}
