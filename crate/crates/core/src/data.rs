//! Dataset bundles: an embedding matrix plus one record per row.
//!
//! On disk a bundle is a JSON manifest pointing at a little-endian `f32`
//! row-major blob and a JSON Lines records file. Relative paths in the
//! manifest resolve against the manifest's directory.

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_tag: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted: Option<usize>,
}

impl Record {
    pub fn new(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: None,
            label: None,
            dataset_tag: None,
            predicted: None,
        }
    }

    pub fn with_label(mut self, label: usize) -> Self {
        self.label = Some(label);
        self
    }

    pub fn with_text(mut self, text: impl Into<String>) -> Self {
        self.text = Some(text.into());
        self
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.dataset_tag = Some(tag.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub n_rows: usize,
    pub n_cols: usize,
    #[serde(default = "default_dtype")]
    pub dtype: String,
    #[serde(default = "default_byte_order")]
    pub byte_order: String,
    pub data: String,
    pub records: String,
}

fn default_dtype() -> String {
    "f32".to_string()
}

fn default_byte_order() -> String {
    "little".to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleSpec {
    pub count: usize,
    pub seed: u64,
}

/// Embeddings and their records. Values are held as `f64` but always
/// originate from `f32`, so writing them back is bit-exact.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    embeddings: Array2<f64>,
    records: Vec<Record>,
}

impl DatasetBundle {
    /// Validates shape, finiteness and id uniqueness. Values are rounded
    /// through `f32`, the storage precision.
    pub fn new(embeddings: Array2<f64>, records: Vec<Record>) -> Result<Self> {
        if embeddings.nrows() != records.len() {
            return Err(Error::RecordCount {
                records: records.len(),
                rows: embeddings.nrows(),
            });
        }
        for (row, values) in embeddings.outer_iter().enumerate() {
            if let Some(col) = values.iter().position(|v| !(*v as f32).is_finite()) {
                return Err(Error::NonFinite { row, col });
            }
        }
        let mut seen = HashSet::with_capacity(records.len());
        for (row, r) in records.iter().enumerate() {
            if !seen.insert(r.id.as_str()) {
                return Err(Error::DuplicateId { id: r.id.clone(), row });
            }
        }
        let embeddings = embeddings.mapv(|v| v as f32 as f64);
        Ok(Self { embeddings, records })
    }

    pub fn size(&self) -> usize {
        self.records.len()
    }

    pub fn dim(&self) -> usize {
        self.embeddings.ncols()
    }

    pub fn embeddings(&self) -> &Array2<f64> {
        &self.embeddings
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.embeddings.row(i)
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn record_by_id(&self, id: &str) -> Option<&Record> {
        self.records.iter().find(|r| r.id == id)
    }

    /// True labels, if every record carries one.
    pub fn labels(&self) -> Option<Vec<usize>> {
        self.records.iter().map(|r| r.label).collect()
    }

    /// Little-endian `f32` row-major bytes.
    pub fn blob_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.embeddings.len() * 4);
        for v in self.embeddings.iter() {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        out
    }

    /// SHA-256 over the blob bytes and the serialized records.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.size() as u64).to_le_bytes());
        h.update((self.dim() as u64).to_le_bytes());
        h.update(self.blob_bytes());
        for r in &self.records {
            h.update(serde_json::to_vec(r).expect("record serializes"));
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }

    fn select(&self, rows: &[usize]) -> DatasetBundle {
        let embeddings = self.embeddings.select(Axis(0), rows);
        let records = rows.iter().map(|&i| self.records[i].clone()).collect();
        DatasetBundle { embeddings, records }
    }
}

pub fn load_bundle(manifest_path: impl AsRef<Path>) -> Result<DatasetBundle> {
    let manifest_path = manifest_path.as_ref();
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
        what: "manifest",
        path: manifest_path.to_path_buf(),
        message: e.to_string(),
    })?;
    if manifest.dtype != "f32" || manifest.byte_order != "little" {
        return Err(Error::Parse {
            what: "manifest",
            path: manifest_path.to_path_buf(),
            message: format!(
                "unsupported dtype/byte_order {}/{}; only f32/little is supported",
                manifest.dtype, manifest.byte_order
            ),
        });
    }
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let data_path = base.join(&manifest.data);
    let records_path = base.join(&manifest.records);

    let blob = fs::read(&data_path).map_err(|e| Error::io(&data_path, e))?;
    let expected = manifest.n_rows * manifest.n_cols * 4;
    if blob.len() != expected {
        return Err(Error::ByteLength {
            n_rows: manifest.n_rows,
            n_cols: manifest.n_cols,
            expected,
            actual: blob.len(),
        });
    }
    let values: Vec<f64> = blob
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let embeddings = Array2::from_shape_vec((manifest.n_rows, manifest.n_cols), values).expect("length checked above");

    let records = read_records(&records_path)?;
    DatasetBundle::new(embeddings, records)
}

fn read_records(path: &Path) -> Result<Vec<Record>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (row, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(&line).map_err(|e| Error::InvalidRecord {
            row,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

/// Writes `manifest.json`, `embeddings.f32` and `records.jsonl` into `dir`
/// and returns the manifest path.
pub fn save_bundle(bundle: &DatasetBundle, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = Manifest {
        n_rows: bundle.size(),
        n_cols: bundle.dim(),
        dtype: default_dtype(),
        byte_order: default_byte_order(),
        data: "embeddings.f32".into(),
        records: "records.jsonl".into(),
    };
    let data_path = dir.join(&manifest.data);
    fs::write(&data_path, bundle.blob_bytes()).map_err(|e| Error::io(&data_path, e))?;

    let records_path = dir.join(&manifest.records);
    let mut f = fs::File::create(&records_path).map_err(|e| Error::io(&records_path, e))?;
    for r in bundle.records() {
        let line = serde_json::to_string(r).expect("record serializes");
        writeln!(f, "{line}").map_err(|e| Error::io(&records_path, e))?;
    }

    let manifest_path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&manifest_path, text).map_err(|e| Error::io(&manifest_path, e))?;
    Ok(manifest_path)
}

/// Uniform sample without replacement. Selected rows keep their original
/// relative order.
pub fn subsample(bundle: &DatasetBundle, spec: SampleSpec) -> Result<DatasetBundle> {
    if spec.count > bundle.size() {
        return Err(Error::Config(format!(
            "sample count {} exceeds bundle size {}",
            spec.count,
            bundle.size()
        )));
    }
    let mut rows = SeededRng::new(spec.seed).sample_indices(bundle.size(), spec.count);
    rows.sort_unstable();
    Ok(bundle.select(&rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn write_fixture(dir: &Path, n_rows: usize, n_cols: usize, blob: &[u8], lines: &[&str]) -> PathBuf {
        fs::write(dir.join("e.bin"), blob).unwrap();
        fs::write(dir.join("r.jsonl"), lines.join("\n")).unwrap();
        let m = format!(
            r#"{{"n_rows":{n_rows},"n_cols":{n_cols},"dtype":"f32","byte_order":"little","data":"e.bin","records":"r.jsonl"}}"#
        );
        let p = dir.join("manifest.json");
        fs::write(&p, m).unwrap();
        p
    }

    fn floats(v: &[f32]) -> Vec<u8> {
        v.iter().flat_map(|x| x.to_le_bytes()).collect()
    }

    #[test]
    fn loads_two_by_three() {
        let dir = tempfile::tempdir().unwrap();
        let blob = floats(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(blob.len(), 24);
        let p = write_fixture(dir.path(), 2, 3, &blob, &[r#"{"id":"a"}"#, r#"{"id":"b","label":1}"#]);
        let b = load_bundle(&p).unwrap();
        assert_eq!(b.size(), 2);
        assert_eq!(b.dim(), 3);
        assert_eq!(b.row(1)[2], 6.0);
        assert_eq!(b.records()[1].label, Some(1));
    }

    #[test]
    fn short_blob_is_byte_length_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_fixture(dir.path(), 2, 3, &[0u8; 20], &[r#"{"id":"a"}"#, r#"{"id":"b"}"#]);
        let err = load_bundle(&p).unwrap_err();
        assert!(matches!(
            err,
            Error::ByteLength {
                expected: 24,
                actual: 20,
                ..
            }
        ));
        assert!(err.to_string().contains("byte-length mismatch"));
    }

    #[test]
    fn nan_names_row() {
        let dir = tempfile::tempdir().unwrap();
        let blob = floats(&[1.0, 2.0, 3.0, 4.0, f32::NAN, 6.0]);
        let p = write_fixture(dir.path(), 2, 3, &blob, &[r#"{"id":"a"}"#, r#"{"id":"b"}"#]);
        let err = load_bundle(&p).unwrap_err();
        assert!(matches!(err, Error::NonFinite { row: 1, col: 1 }));
        assert!(err.to_string().contains("row 1"));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let blob = floats(&[0.0; 6]);
        let p = write_fixture(dir.path(), 2, 3, &blob, &[r#"{"id":"a"}"#, r#"{"id":"a"}"#]);
        assert!(matches!(load_bundle(&p), Err(Error::DuplicateId { row: 1, .. })));
    }

    #[test]
    fn missing_manifest_is_io() {
        let err = load_bundle("/nonexistent/manifest.json").unwrap_err();
        assert!(err.is_io());
        assert!(err.to_string().contains("/nonexistent/manifest.json"));
    }

    #[test]
    fn record_count_checked() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_fixture(dir.path(), 2, 3, &floats(&[0.0; 6]), &[r#"{"id":"a"}"#]);
        assert!(matches!(load_bundle(&p), Err(Error::RecordCount { .. })));
    }

    fn sample_bundle(n: usize) -> DatasetBundle {
        let emb = Array2::from_shape_fn((n, 3), |(i, j)| (i * 3 + j) as f64 * 0.5);
        let recs = (0..n).map(|i| Record::new(format!("r{i}"))).collect();
        DatasetBundle::new(emb, recs).unwrap()
    }

    #[test]
    fn subsample_full_and_empty() {
        let b = sample_bundle(10);
        let full = subsample(&b, SampleSpec { count: 10, seed: 1 }).unwrap();
        assert_eq!(full, b);
        let empty = subsample(&b, SampleSpec { count: 0, seed: 1 }).unwrap();
        assert_eq!(empty.size(), 0);
        assert_eq!(empty.dim(), 3);
        assert!(subsample(&b, SampleSpec { count: 11, seed: 1 }).is_err());
    }

    #[test]
    fn subsample_is_reproducible() {
        let b = sample_bundle(1000);
        let spec = SampleSpec { count: 250, seed: 7 };
        let ids = |x: &DatasetBundle| x.records().iter().map(|r| r.id.clone()).collect::<Vec<_>>();
        let a = subsample(&b, spec).unwrap();
        let c = subsample(&b, spec).unwrap();
        assert_eq!(a.size(), 250);
        assert_eq!(ids(&a), ids(&c));
        let other = subsample(&b, SampleSpec { count: 250, seed: 8 }).unwrap();
        assert_ne!(ids(&a), ids(&other));
    }

    #[test]
    fn save_load_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let emb = array![[0.1f32 as f64, -3.25], [1e-30, 7.0e12]];
        let recs = vec![Record::new("x").with_text("hi"), Record::new("y").with_label(1)];
        let b = DatasetBundle::new(emb, recs).unwrap();
        let p = save_bundle(&b, dir.path()).unwrap();
        let blob = fs::read(dir.path().join("embeddings.f32")).unwrap();
        let back = load_bundle(&p).unwrap();
        assert_eq!(back, b);
        save_bundle(&back, dir.path().join("again")).unwrap();
        assert_eq!(fs::read(dir.path().join("again/embeddings.f32")).unwrap(), blob);
    }
}
