//! Self-contained model files. A KDE needs every training sample at
//! prediction time, so the file embeds the data next to the bandwidth and a
//! fingerprint that is checked on load.

use std::path::Path;
use std::sync::Arc;

use kdecorrect::bandwidth::LocalFactors;
use kdecorrect::dataset::covariance_decomposition;
use kdecorrect::{BandwidthSpec, CriterionReport, Dataset, FittedModel, Selection};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};
use crate::output::write_json;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub rows: usize,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    /// SHA-256 over the column names and the little-endian bytes of every value.
    pub sha256: String,
}

impl Fingerprint {
    pub fn of(data: &Dataset) -> Self {
        let mut hasher = Sha256::new();
        for name in data.columns() {
            hasher.update(name.as_bytes());
            hasher.update([0u8]);
        }
        for v in data.values() {
            hasher.update(v.to_le_bytes());
        }
        Self {
            rows: data.len(),
            means: data.means(),
            stds: data.stds(),
            sha256: hex::encode(hasher.finalize()),
        }
    }
}

/// Criterion values recorded when the model was fitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub selection: Selection,
    pub lscv: f64,
    pub mcse: f64,
    pub evaluations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredLocals {
    pub alpha: f64,
    pub lambdas: Vec<f64>,
    pub log_pilot: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub columns: Vec<String>,
    pub output_column: String,
    pub spec: BandwidthSpec,
    pub summary: FitSummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub fingerprint: Fingerprint,
    pub data: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub local_factors: Option<StoredLocals>,
}

impl ModelFile {
    pub fn new(model: &FittedModel, report: &CriterionReport, seed: Option<u64>) -> Self {
        let data = model.data();
        Self {
            format_version: FORMAT_VERSION,
            columns: data.columns().to_vec(),
            output_column: data.output_name().to_string(),
            spec: model.spec().clone(),
            summary: FitSummary {
                selection: report.selection,
                lscv: report.lscv,
                mcse: report.mcse,
                evaluations: report.evaluations,
                converged: report.converged,
            },
            seed,
            fingerprint: Fingerprint::of(data),
            data: (0..data.len()).map(|i| data.row(i).to_vec()).collect(),
            local_factors: model.locals().map(|l| StoredLocals {
                alpha: l.alpha,
                lambdas: l.lambdas.clone(),
                log_pilot: l.log_pilot.clone(),
            }),
        }
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
        let file: ModelFile = serde_json::from_str(&text)
            .map_err(|e| CliError::Data(format!("invalid model file {}: {e}", path.display())))?;
        if file.format_version != FORMAT_VERSION {
            return Err(CliError::Data(format!(
                "unsupported model format version {}",
                file.format_version
            )));
        }
        Ok(file)
    }

    pub fn dataset(&self) -> CliResult<Dataset> {
        let d = self.columns.len();
        if self.data.iter().any(|r| r.len() != d) {
            return Err(CliError::Data("embedded data rows do not match the column list".into()));
        }
        let output = self
            .columns
            .iter()
            .position(|c| *c == self.output_column)
            .ok_or_else(|| CliError::Data(format!("output column `{}` not in model", self.output_column)))?;
        let values = self.data.iter().flatten().copied().collect();
        let data = Dataset::new(self.columns.clone(), values, output)?;
        if Fingerprint::of(&data) != self.fingerprint {
            return Err(CliError::Data("model fingerprint does not match its embedded data".into()));
        }
        Ok(data)
    }

    /// Rebuilds the fitted model. Stored local factors are used as-is so the
    /// reloaded model predicts exactly what the saved one did.
    pub fn to_model(&self) -> CliResult<FittedModel> {
        let data = Arc::new(self.dataset()?);
        let decomp = covariance_decomposition(&data)?;
        let bandwidth = self.spec.bandwidth_matrix(&decomp, data.output_index())?;
        let locals = match (&self.local_factors, self.spec.alpha()) {
            (Some(l), Some(alpha)) => {
                if l.lambdas.len() != data.len() || l.log_pilot.len() != data.len() || l.alpha != alpha {
                    return Err(CliError::Data("stored local factors do not match the model".into()));
                }
                Some(LocalFactors {
                    lambdas: l.lambdas.clone(),
                    alpha: l.alpha,
                    log_pilot: l.log_pilot.clone(),
                })
            }
            (None, None) => None,
            _ => {
                return Err(CliError::Data(
                    "local factors must be stored exactly for adaptive methods".into(),
                ))
            }
        };
        Ok(FittedModel::from_parts(data, self.spec.clone(), bandwidth, locals)?)
    }

    pub fn input_columns(&self) -> Vec<&str> {
        self.columns
            .iter()
            .filter(|c| **c != self.output_column)
            .map(String::as_str)
            .collect()
    }
}
