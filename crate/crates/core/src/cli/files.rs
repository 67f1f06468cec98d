//! On-disk formats: headerless CSV datasets, JSON model files, and the
//! two-column ELBO trace.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalgen::{builtin_model, GroundTruthModel};
use crate::inference::FitResult;
use crate::model::{ElboTrace, MixtureEstimate, PositiveDataset, PriorConfig, VariationalPosterior};
use crate::specfun::InvertedDirichletParams;

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.display().to_string(), source }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| io_error(path, e))
}

/// Reads a headerless CSV of positive reals. Cell errors carry zero-based
/// row and column indices.
pub fn read_dataset(path: &Path) -> Result<PositiveDataset> {
    let file = File::open(path).map_err(|e| io_error(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(file);
    let mut values = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        if *width.get_or_insert(record.len()) != record.len() {
            return Err(Error::Cell {
                row,
                column: record.len().min(width.unwrap_or(0)),
                message: format!("row has {} cells, expected {}", record.len(), width.unwrap_or(0)),
            });
        }
        for (column, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Cell {
                row,
                column,
                message: format!("{cell:?} is not a number"),
            })?;
            values.push(v);
        }
        rows += 1;
    }
    let width = width.ok_or_else(|| Error::Domain(format!("{}: dataset is empty", path.display())))?;
    let values = Array2::from_shape_vec((rows, width), values).expect("rows share one width");
    PositiveDataset::new(values)
}

/// Writes one observation per line with 17 significant digits, which
/// round-trips every `f64` exactly.
pub fn write_dataset(path: &Path, data: &PositiveDataset) -> Result<()> {
    let mut out = create(path)?;
    for row in data.values().outer_iter() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(out, "{}", line.join(",")).map_err(|e| io_error(path, e))?;
    }
    out.flush().map_err(|e| io_error(path, e))
}

pub fn write_trace(path: &Path, trace: &ElboTrace) -> Result<()> {
    let mut out = create(path)?;
    writeln!(out, "iteration,elbo").map_err(|e| io_error(path, e))?;
    for &(i, v) in trace.records() {
        writeln!(out, "{i},{v:.16e}").map_err(|e| io_error(path, e))?;
    }
    out.flush().map_err(|e| io_error(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| io_error(path, e))?;
    serde_json::from_reader(std::io::BufReader::new(file))
        .map_err(|source| Error::Json { path: path.display().to_string(), source })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value)
        .map_err(|source| Error::Json { path: path.display().to_string(), source })?;
    writeln!(out).map_err(|e| io_error(path, e))?;
    out.flush().map_err(|e| io_error(path, e))
}

/// Builtin model name, else a path to a ground-truth JSON file.
pub fn resolve_model(spec: &str) -> Result<GroundTruthModel> {
    if let Some(m) = builtin_model(spec) {
        return Ok(m);
    }
    let path = Path::new(spec);
    if !path.exists() {
        return Err(Error::Config(format!("unknown model {spec:?} (expected A, B, C, corrected-A or a JSON file)")));
    }
    read_json(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorFile {
    pub g: Vec<f64>,
    pub h: Vec<f64>,
    pub s: Vec<f64>,
    pub t: Vec<f64>,
    pub u: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl From<&VariationalPosterior> for PosteriorFile {
    fn from(p: &VariationalPosterior) -> Self {
        let rows = |a: &Array2<f64>| a.outer_iter().map(|r| r.to_vec()).collect();
        Self { g: p.g.to_vec(), h: p.h.to_vec(), s: p.s.to_vec(), t: p.t.to_vec(), u: rows(&p.u), v: rows(&p.v) }
    }
}

/// Everything a fit produces except the responsibilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub weights: Vec<f64>,
    pub alphas: Vec<Vec<f64>>,
    #[serde(rename = "K")]
    pub k: usize,
    /// Index of each surviving component among the truncated posterior's.
    pub source_components: Vec<usize>,
    pub posterior: PosteriorFile,
    pub elbo_final: f64,
    pub iterations: usize,
    pub converged: bool,
    pub runtime_seconds: f64,
    pub seed: u64,
    pub config: PriorConfig,
}

impl ModelFile {
    pub fn from_fit(result: &FitResult, config: &PriorConfig, runtime_seconds: f64) -> Self {
        let est = &result.estimate;
        Self {
            weights: est.weights.clone(),
            alphas: est.components.iter().map(|c| c.alpha().to_vec()).collect(),
            k: est.k(),
            source_components: est.source_components.clone(),
            posterior: PosteriorFile::from(&result.posterior),
            elbo_final: result.elbo_final,
            iterations: result.iterations,
            converged: result.converged,
            runtime_seconds,
            seed: config.seed.0,
            config: config.clone(),
        }
    }

    pub fn estimate(&self) -> Result<MixtureEstimate> {
        if self.k == 0 || self.weights.len() != self.alphas.len() || self.k != self.weights.len() {
            return Err(Error::Domain(format!(
                "model file lists K = {} with {} weights and {} parameter vectors",
                self.k,
                self.weights.len(),
                self.alphas.len()
            )));
        }
        let components = self
            .alphas
            .iter()
            .map(|a| InvertedDirichletParams::new(a.clone()))
            .collect::<Result<Vec<_>>>()?;
        if components.iter().any(|c| c.dim() != components[0].dim()) {
            return Err(Error::Domain("model file components differ in dimension".into()));
        }
        Ok(MixtureEstimate {
            weights: self.weights.clone(),
            components,
            source_components: self.source_components.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    #[test]
    fn dataset_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let awkward = [0.1, 1.0 / 3.0, 1e-300, 123456789.123456789, f64::MIN_POSITIVE, 2f64.sqrt()];
        let data = PositiveDataset::new(Array2::from_shape_vec((3, 2), awkward.to_vec()).unwrap()).unwrap();
        write_dataset(&path, &data).unwrap();
        let back = read_dataset(&path).unwrap();
        assert_eq!(back, data);
        assert!(back.values().iter().zip(data.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn dataset_errors_name_the_cell() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        fs::write(&path, "1,2\n3,0\n").unwrap();
        assert!(matches!(read_dataset(&path), Err(Error::Cell { row: 1, column: 1, .. })));
        fs::write(&path, "1,2\n3,abc\n").unwrap();
        assert!(matches!(read_dataset(&path), Err(Error::Cell { row: 1, column: 1, .. })));
        fs::write(&path, "1,2\n3\n").unwrap();
        assert!(matches!(read_dataset(&path), Err(Error::Cell { row: 1, .. })));
        fs::write(&path, "").unwrap();
        assert!(read_dataset(&path).is_err());
        assert!(matches!(read_dataset(&dir.path().join("missing.csv")), Err(Error::Io { .. })));
    }

    #[test]
    fn trace_format() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let mut trace = ElboTrace::default();
        trace.push(-2.5);
        trace.push(-1.25);
        write_trace(&path, &trace).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "iteration,elbo");
        assert_eq!(lines[1].split(',').next(), Some("1"));
        assert_eq!(lines[2].split(',').nth(1).unwrap().parse::<f64>().unwrap(), -1.25);
    }

    #[test]
    fn resolve_names_and_files() {
        assert_eq!(resolve_model("B").unwrap().k(), 4);
        assert!(matches!(resolve_model("nope"), Err(Error::Config(_))));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        write_json(&path, &builtin_model("corrected-A").unwrap()).unwrap();
        assert_eq!(resolve_model(path.to_str().unwrap()).unwrap(), builtin_model("corrected-A").unwrap());
    }
}
