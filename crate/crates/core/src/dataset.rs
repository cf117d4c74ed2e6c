//! Sample matrices, CSV ingestion, train/validation splits and the sample
//! covariance eigendecomposition every bandwidth regime is built from.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{KdeError, Result};

/// Largest accepted covariance condition number.
pub const MAX_CONDITION: f64 = 1e12;

/// Column-labeled sample matrix, stored row-major. One row per observation.
///
/// [`Dataset::new`] only checks shape and finiteness so that tiny analytic
/// sample sets can be built for kernel sums. The statistical invariants
/// (`M >= 2`, `d >= 2`, positive column variances) are enforced by
/// [`Dataset::validate`], which ingestion, the generators and
/// [`covariance_decomposition`] all run.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    columns: Vec<String>,
    values: Vec<f64>,
    rows: usize,
    output_index: usize,
}

/// Row accounting from [`load_csv`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoadStats {
    pub retained: usize,
    pub dropped: usize,
}

impl Dataset {
    pub fn new(columns: Vec<String>, values: Vec<f64>, output_index: usize) -> Result<Self> {
        let dims = columns.len();
        if dims == 0 {
            return Err(KdeError::TooFewColumns(0));
        }
        if !values.len().is_multiple_of(dims) {
            return Err(KdeError::DimensionMismatch {
                expected: dims,
                got: values.len() % dims,
            });
        }
        if output_index >= dims {
            return Err(KdeError::InvalidArgument(format!(
                "output index {output_index} out of range for {dims} columns"
            )));
        }
        let rows = values.len() / dims;
        if rows == 0 {
            return Err(KdeError::TooFewRows { needed: 1, found: 0 });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(KdeError::NonFinite {
                column: columns[pos % dims].clone(),
                row: pos / dims,
            });
        }
        Ok(Self {
            columns,
            values,
            rows,
            output_index,
        })
    }

    /// Builds a dataset from row vectors, with generated column names `x0, x1, ...`
    /// and the output in the last column.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dims = rows.first().map(Vec::len).unwrap_or(0);
        let mut values = Vec::with_capacity(rows.len() * dims);
        for r in rows {
            if r.len() != dims {
                return Err(KdeError::DimensionMismatch {
                    expected: dims,
                    got: r.len(),
                });
            }
            values.extend_from_slice(r);
        }
        let columns = (0..dims).map(|k| format!("x{k}")).collect();
        Self::new(columns, values, dims.saturating_sub(1))
    }

    /// Checks the statistical invariants required for bandwidth construction.
    pub fn validate(&self) -> Result<()> {
        if self.dims() < 2 {
            return Err(KdeError::TooFewColumns(self.dims()));
        }
        if self.rows < 2 {
            return Err(KdeError::TooFewRows {
                needed: 2,
                found: self.rows,
            });
        }
        let means = self.means();
        for (k, name) in self.columns.iter().enumerate() {
            let var: f64 = self.column(k).map(|v| (v - means[k]).powi(2)).sum();
            if var.is_nan() || var <= 0.0 {
                return Err(KdeError::ZeroVariance(name.clone()));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn dims(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn output_index(&self) -> usize {
        self.output_index
    }

    pub fn output_name(&self) -> &str {
        &self.columns[self.output_index]
    }

    /// Indices of all columns except the output.
    pub fn input_indices(&self) -> Vec<usize> {
        (0..self.dims()).filter(|&k| k != self.output_index).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.dims();
        &self.values[i * d..(i + 1) * d]
    }

    pub fn column(&self, k: usize) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().skip(k).step_by(self.dims()).copied()
    }

    pub fn output(&self, i: usize) -> f64 {
        self.row(i)[self.output_index]
    }

    /// Input part of row `i`, in column order with the output removed.
    pub fn inputs(&self, i: usize) -> Vec<f64> {
        let row = self.row(i);
        self.input_indices().iter().map(|&k| row[k]).collect()
    }

    pub fn means(&self) -> Vec<f64> {
        let n = self.rows as f64;
        (0..self.dims())
            .map(|k| self.column(k).sum::<f64>() / n)
            .collect()
    }

    /// Unbiased (divide by `M - 1`) per-column standard deviations.
    pub fn stds(&self) -> Vec<f64> {
        let means = self.means();
        let denom = (self.rows.max(2) - 1) as f64;
        (0..self.dims())
            .map(|k| {
                (self.column(k).map(|v| (v - means[k]).powi(2)).sum::<f64>() / denom).sqrt()
            })
            .collect()
    }

    /// New dataset made of the given rows, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(idx.len() * self.dims());
        for &i in idx {
            values.extend_from_slice(self.row(i));
        }
        Self::new(self.columns.clone(), values, self.output_index)
    }

    /// Same data with the output moved to another column.
    pub fn with_output(mut self, output_index: usize) -> Result<Self> {
        if output_index >= self.dims() {
            return Err(KdeError::InvalidArgument(format!(
                "output index {output_index} out of range"
            )));
        }
        self.output_index = output_index;
        Ok(self)
    }

    /// Writes the dataset as CSV using shortest round-trip float formatting,
    /// so that [`load_csv`] reproduces the values bit for bit.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|source| KdeError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.write_csv_to(file)
    }

    pub fn write_csv_to<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.columns)?;
        for i in 0..self.rows {
            w.write_record(self.row(i).iter().map(|v| format!("{v:?}")))?;
        }
        w.flush().map_err(|e| KdeError::Csv(e.into()))?;
        Ok(())
    }
}

/// Loads a header-first CSV. Rows with a blank or non-numeric cell are
/// dropped and counted. `output_column` defaults to the last column.
pub fn load_csv(path: &Path, output_column: Option<&str>) -> Result<(Dataset, LoadStats)> {
    let file = File::open(path).map_err(|source| KdeError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv(file, output_column)
}

pub fn read_csv<R: std::io::Read>(
    input: R,
    output_column: Option<&str>,
) -> Result<(Dataset, LoadStats)> {
    let (columns, values, stats) = read_numeric_table(input)?;
    let output_index = match output_column {
        Some(name) => columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| KdeError::MissingColumn(name.to_string()))?,
        None => columns.len().saturating_sub(1),
    };
    if columns.len() < 2 {
        return Err(KdeError::TooFewColumns(columns.len()));
    }
    if stats.retained < 2 {
        return Err(KdeError::TooFewRows {
            needed: 2,
            found: stats.retained,
        });
    }
    let data = Dataset::new(columns, values, output_index)?;
    data.validate()?;
    Ok((data, stats))
}

/// Header plus the complete numeric rows of a CSV, with no statistical checks.
/// An input with only a header yields zero rows.
pub fn read_numeric_table<R: std::io::Read>(
    input: R,
) -> Result<(Vec<String>, Vec<f64>, LoadStats)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(input);
    let columns: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
    let dims = columns.len();
    let mut values = Vec::new();
    let mut stats = LoadStats {
        retained: 0,
        dropped: 0,
    };
    let mut row = Vec::with_capacity(dims);
    for record in rdr.records() {
        let record = record?;
        row.clear();
        let complete = record.len() == dims
            && record.iter().all(|cell| match cell.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => {
                    row.push(v);
                    true
                }
                _ => false,
            });
        if complete {
            values.extend_from_slice(&row);
            stats.retained += 1;
        } else {
            stats.dropped += 1;
        }
    }
    Ok((columns, values, stats))
}

/// Random train/validation partition. The validation part holds
/// `floor((1 - fraction) * M)` rows drawn uniformly without replacement;
/// both parts keep the original row order.
pub fn split_train_validation(
    data: &Dataset,
    fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    let (train_idx, val_idx) = split_indices(data.len(), fraction, seed)?;
    Ok((data.select_rows(&train_idx)?, data.select_rows(&val_idx)?))
}

/// Index form of [`split_train_validation`]: `(train, validation)`, both sorted.
pub fn split_indices(m: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(KdeError::InvalidArgument(format!(
            "split fraction {fraction} outside (0, 1)"
        )));
    }
    // The small offset absorbs representation error such as (1 - 0.8) * 10 = 1.9999999999999996.
    let n_val = ((1.0 - fraction) * m as f64 + 1e-9).floor() as usize;
    let n_train = m - n_val.min(m);
    if n_val < 1 || n_train < 2 {
        return Err(KdeError::InvalidArgument(format!(
            "split fraction {fraction} leaves {n_train} training and {n_val} validation rows"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut val: Vec<usize> = index::sample(&mut rng, m, n_val).into_vec();
    val.sort_unstable();
    let mut is_val = vec![false; m];
    for &i in &val {
        is_val[i] = true;
    }
    let train = (0..m).filter(|&i| !is_val[i]).collect();
    Ok((train, val))
}

/// Sample covariance with its eigendecomposition `cov = Q diag(eigvals) Q^T`.
///
/// Eigenpairs are sorted by ascending eigenvalue and each eigenvector is
/// flipped so that its largest-magnitude component is non-negative. With
/// repeated eigenvalues the basis inside the degenerate subspace is whatever
/// the solver produced, so per-direction factors are not uniquely
/// interpretable there.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceDecomposition {
    pub cov: DMatrix<f64>,
    pub eigvecs: DMatrix<f64>,
    pub eigvals: DVector<f64>,
}

impl CovarianceDecomposition {
    /// Decomposes an arbitrary symmetric positive-definite matrix.
    pub fn from_covariance(cov: DMatrix<f64>) -> Result<Self> {
        let d = cov.nrows();
        if cov.ncols() != d {
            return Err(KdeError::DimensionMismatch {
                expected: d,
                got: cov.ncols(),
            });
        }
        let eig = SymmetricEigen::new(cov.clone());
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

        let mut eigvecs = DMatrix::zeros(d, d);
        let mut eigvals = DVector::zeros(d);
        for (dst, &src) in order.iter().enumerate() {
            let mut v = eig.eigenvectors.column(src).into_owned();
            let lead = v.iter().copied().fold(0.0_f64, |acc, x| {
                if x.abs() > acc.abs() {
                    x
                } else {
                    acc
                }
            });
            if lead < 0.0 {
                v.neg_mut();
            }
            eigvecs.set_column(dst, &v);
            eigvals[dst] = eig.eigenvalues[src];
        }

        let smallest = eigvals[0];
        let largest = eigvals[d - 1];
        if !(smallest > 0.0) || largest / smallest > MAX_CONDITION {
            let cond = if smallest > 0.0 {
                largest / smallest
            } else {
                f64::INFINITY
            };
            return Err(KdeError::DegenerateSample(cond));
        }
        Ok(Self {
            cov,
            eigvecs,
            eigvals,
        })
    }

    pub fn dims(&self) -> usize {
        self.eigvals.len()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.eigvecs * DMatrix::from_diagonal(&self.eigvals) * self.eigvecs.transpose()
    }
}

/// Unbiased sample covariance matrix of all columns.
pub fn sample_covariance(data: &Dataset) -> DMatrix<f64> {
    let d = data.dims();
    let means = data.means();
    let mut cov = DMatrix::zeros(d, d);
    for i in 0..data.len() {
        let row = data.row(i);
        for a in 0..d {
            let da = row[a] - means[a];
            for b in a..d {
                cov[(a, b)] += da * (row[b] - means[b]);
            }
        }
    }
    let denom = (data.len() - 1) as f64;
    for a in 0..d {
        for b in a..d {
            let v = cov[(a, b)] / denom;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    cov
}

pub fn covariance_decomposition(data: &Dataset) -> Result<CovarianceDecomposition> {
    data.validate()?;
    CovarianceDecomposition::from_covariance(sample_covariance(data))
}
