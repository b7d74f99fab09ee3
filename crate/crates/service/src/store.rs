//! On-disk project registry. Layout under the data directory:
//!
//! ```text
//! projects/<id>/project.json          bundle manifest path + classifier spec
//! projects/<id>/runs/<run_id>.json    finished payload
//! projects/<id>/runs/<run_id>.status  failure message for failed runs
//! ```

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use deepview_core::classifier::{Classifier, ClassifierSpec};
use deepview_core::data::{load_bundle, DatasetBundle};
use deepview_core::pipeline::{run_deepview, RunConfig, VisPayload};
use deepview_core::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum RunState {
    Queued,
    Running,
    Done,
    Failed { message: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ProjectFile {
    id: String,
    bundle_manifest: PathBuf,
    classifier_spec: ClassifierSpec,
}

pub struct Project {
    pub id: String,
    pub bundle: Arc<DatasetBundle>,
    pub classifier: Arc<dyn Classifier>,
    dir: PathBuf,
    runs: Mutex<HashMap<String, RunState>>,
    active: Mutex<Option<String>>,
}

impl Project {
    pub fn run_state(&self, run_id: &str) -> Option<RunState> {
        self.runs.lock().unwrap().get(run_id).cloned()
    }

    pub fn payload_path(&self, run_id: &str) -> PathBuf {
        self.dir.join("runs").join(format!("{run_id}.json"))
    }

    pub fn load_payload(&self, run_id: &str) -> Result<VisPayload> {
        let path = self.payload_path(run_id);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        VisPayload::from_json(&text)
    }

    fn set_state(&self, run_id: &str, state: RunState) {
        self.runs.lock().unwrap().insert(run_id.to_string(), state);
    }
}

/// Outcome of asking for a run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunStart {
    Started(String),
    AlreadyDone(String),
    Busy(String),
}

pub struct ProjectStore {
    root: PathBuf,
    projects: Mutex<HashMap<String, Arc<Project>>>,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

impl ProjectStore {
    /// Opens (creating if needed) the data directory and reloads every
    /// project whose bundle and classifier are still available.
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let projects_dir = root.join("projects");
        fs::create_dir_all(&projects_dir).map_err(|e| Error::io(&projects_dir, e))?;
        let store = ProjectStore {
            root,
            projects: Mutex::new(HashMap::new()),
        };
        let entries = fs::read_dir(&projects_dir).map_err(|e| Error::io(&projects_dir, e))?;
        for entry in entries.flatten() {
            let file = entry.path().join("project.json");
            match store.reload(&file) {
                Ok(p) => {
                    store.projects.lock().unwrap().insert(p.id.clone(), p);
                }
                Err(e) => log::warn!("skipping project at {}: {e}", entry.path().display()),
            }
        }
        Ok(store)
    }

    fn reload(&self, file: &Path) -> Result<Arc<Project>> {
        let text = fs::read_to_string(file).map_err(|e| Error::io(file, e))?;
        let pf: ProjectFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
            what: "project file",
            path: file.to_path_buf(),
            message: e.to_string(),
        })?;
        let bundle = load_bundle(&pf.bundle_manifest)?;
        let classifier = pf.classifier_spec.build(&bundle)?;
        let dir = file.parent().expect("project file has a parent").to_path_buf();
        let mut runs = HashMap::new();
        if let Ok(entries) = fs::read_dir(dir.join("runs")) {
            for entry in entries.flatten() {
                let path = entry.path();
                let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
                    continue;
                };
                match path.extension().and_then(|e| e.to_str()) {
                    Some("json") => {
                        runs.insert(stem.to_string(), RunState::Done);
                    }
                    Some("status") => {
                        let message = fs::read_to_string(&path).unwrap_or_default();
                        runs.entry(stem.to_string()).or_insert(RunState::Failed { message });
                    }
                    _ => {}
                }
            }
        }
        Ok(Arc::new(Project {
            id: pf.id,
            bundle: Arc::new(bundle),
            classifier: Arc::from(classifier),
            dir,
            runs: Mutex::new(runs),
            active: Mutex::new(None),
        }))
    }

    /// Loads the bundle, connects the classifier and registers the pair.
    /// The id is derived from the bundle and classifier hashes, so the same
    /// inputs map to the same project. Blocking.
    pub fn create(&self, bundle_manifest: &Path, spec: &ClassifierSpec) -> Result<Arc<Project>> {
        let bundle = load_bundle(bundle_manifest)?;
        let classifier: Arc<dyn Classifier> = Arc::from(spec.build(&bundle)?);
        let info = classifier.info();
        if info.input_dim != bundle.dim() {
            return Err(Error::Dimension {
                expected: info.input_dim,
                actual: bundle.dim(),
            });
        }
        let digest = deepview_core::classifier::sha256_hex(
            format!("{}\n{}", bundle.content_hash(), classifier.identity_hash()).as_bytes(),
        );
        let id = digest[..16].to_string();
        if let Some(existing) = self.get(&id) {
            return Ok(existing);
        }
        let dir = self.root.join("projects").join(&id);
        let runs_dir = dir.join("runs");
        fs::create_dir_all(&runs_dir).map_err(|e| Error::io(&runs_dir, e))?;
        let manifest = fs::canonicalize(bundle_manifest).map_err(|e| Error::io(bundle_manifest, e))?;
        let pf = ProjectFile {
            id: id.clone(),
            bundle_manifest: manifest,
            classifier_spec: spec.clone(),
        };
        let json = serde_json::to_string_pretty(&pf).expect("project file serializes");
        write_atomic(&dir.join("project.json"), json.as_bytes())?;
        let project = Arc::new(Project {
            id: id.clone(),
            bundle: Arc::new(bundle),
            classifier,
            dir,
            runs: Mutex::new(HashMap::new()),
            active: Mutex::new(None),
        });
        self.projects.lock().unwrap().insert(id, project.clone());
        Ok(project)
    }

    pub fn get(&self, id: &str) -> Option<Arc<Project>> {
        self.projects.lock().unwrap().get(id).cloned()
    }

    /// Claims the project's run slot for `cfg`. The caller must follow a
    /// `Started` with [`ProjectStore::execute`].
    pub fn begin_run(&self, project: &Project, cfg: &RunConfig) -> RunStart {
        let run_id = cfg.resolved().hash();
        let mut active = project.active.lock().unwrap();
        if let Some(current) = active.as_ref() {
            return RunStart::Busy(current.clone());
        }
        if project.run_state(&run_id) == Some(RunState::Done) {
            return RunStart::AlreadyDone(run_id);
        }
        *active = Some(run_id.clone());
        project.set_state(&run_id, RunState::Queued);
        RunStart::Started(run_id)
    }

    /// Runs the pipeline and records the outcome. Blocking.
    pub fn execute(&self, project: &Project, run_id: &str, cfg: &RunConfig) {
        project.set_state(run_id, RunState::Running);
        let outcome = run_deepview(&project.bundle, project.classifier.as_ref(), cfg)
            .and_then(|payload| write_atomic(&project.payload_path(run_id), payload.to_json().as_bytes()));
        let status_path = project.dir.join("runs").join(format!("{run_id}.status"));
        match outcome {
            Ok(()) => {
                let _ = fs::remove_file(&status_path);
                project.set_state(run_id, RunState::Done);
            }
            Err(e) => {
                let message = e.to_string();
                log::warn!("run {run_id} of project {} failed: {message}", project.id);
                if let Err(io) = write_atomic(&status_path, message.as_bytes()) {
                    log::warn!("could not persist failure status: {io}");
                }
                project.set_state(run_id, RunState::Failed { message });
            }
        }
        *project.active.lock().unwrap() = None;
    }
}
