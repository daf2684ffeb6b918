//! File formats: measures (JSON or CSV), fitted models, and JSON configs.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::kernels::DistributionKernel;
use crate::measures::DiscreteMeasure;
use crate::rkhs::Expansion;

/// `{"dim": d, "points": [[…], …], "weights": […]}`; weights default to uniform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureFile {
    pub dim: usize,
    pub points: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

impl MeasureFile {
    pub fn to_measure(&self) -> Result<DiscreteMeasure> {
        if let Some(p) = self.points.iter().find(|p| p.len() != self.dim) {
            return Err(Error::DimensionMismatch { expected: self.dim, got: p.len() });
        }
        DiscreteMeasure::from_points(&self.points, self.weights.clone())
    }

    pub fn from_measure(mu: &DiscreteMeasure) -> Self {
        MeasureFile {
            dim: mu.dim(),
            points: mu.atoms().map(<[f64]>::to_vec).collect(),
            weights: Some(mu.weights().to_vec()),
        }
    }
}

/// One point per row, comma separated, uniform weights. Blank lines and
/// `#` comments are skipped.
pub fn parse_measure_csv(text: &str) -> Result<DiscreteMeasure> {
    let mut points = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(',')
            .map(|c| c.trim().parse::<f64>().map_err(|e| Error::Parse(format!("csv line {}: {e}", n + 1))))
            .collect::<Result<Vec<f64>>>()?;
        points.push(row);
    }
    if points.is_empty() {
        return Err(Error::EmptySupport);
    }
    if let Some(p) = points.iter().find(|p| p.len() != points[0].len()) {
        return Err(Error::DimensionMismatch { expected: points[0].len(), got: p.len() });
    }
    DiscreteMeasure::from_points(&points, None)
}

/// Reads a measure; files ending in `.csv` are parsed as CSV, anything
/// else as JSON.
pub fn read_measure(path: &Path) -> Result<DiscreteMeasure> {
    let text = fs::read_to_string(path)?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        parse_measure_csv(&text)
    } else {
        let file: MeasureFile =
            serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        file.to_measure()
    }
}

pub fn write_measure(path: &Path, mu: &DiscreteMeasure) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(&MeasureFile::from_measure(mu))? + "\n")?;
    Ok(())
}

/// Reads a JSON document into `T`; every decoding failure, including
/// unknown keys, becomes [`Error::Parse`].
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

/// A fitted kernel ridge model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub kernel: DistributionKernel,
    pub centers: Vec<MeasureFile>,
    pub coefficients: Vec<f64>,
    pub lambda: f64,
    #[serde(default)]
    pub jitter: f64,
    #[serde(default)]
    pub metadata: Value,
}

impl ModelFile {
    pub fn from_expansion(f: &Expansion, lambda: f64, jitter: f64, metadata: Value) -> Self {
        ModelFile {
            kernel: f.kernel().clone(),
            centers: f.centers().iter().map(MeasureFile::from_measure).collect(),
            coefficients: f.coefficients().to_vec(),
            lambda,
            jitter,
            metadata,
        }
    }

    pub fn to_expansion(&self) -> Result<Expansion> {
        let centers = self.centers.iter().map(MeasureFile::to_measure).collect::<Result<Vec<_>>>()?;
        Expansion::new(self.kernel.clone(), centers, self.coefficients.clone())
    }
}
