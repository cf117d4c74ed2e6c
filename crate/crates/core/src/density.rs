//! Joint KDE evaluation: full-sample, leave-one-out and the integrated
//! squared density used by least-squares cross-validation.
//!
//! Every kernel sum is accumulated in log space through a max-shifted
//! log-sum-exp over a buffer filled in sample order, and every parallel fan
//! out collects per-row results before a sequential reduction, so values do
//! not depend on the worker count.

use std::ops::Deref;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::bandwidth::{local_factors, BandwidthMatrix, BandwidthSpec, LocalFactors};
use crate::dataset::{covariance_decomposition, CovarianceDecomposition, Dataset};
use crate::error::{KdeError, Result};
use crate::kernel::{log_sum_exp, lower_mul, sq_dist, whiten_rows};

/// `ln N(delta; 0, H)`
pub fn log_kernel_eval(delta: &[f64], h: &BandwidthMatrix) -> Result<f64> {
    if delta.len() != h.dims() {
        return Err(KdeError::DimensionMismatch {
            expected: h.dims(),
            got: delta.len(),
        });
    }
    Ok(h.log_norm() - 0.5 * h.mahalanobis(delta))
}

/// `N(delta; 0, H)`
pub fn kernel_eval(delta: &[f64], h: &BandwidthMatrix) -> Result<f64> {
    log_kernel_eval(delta, h).map(f64::exp)
}

/// Kernel density estimator over a sample set with a shared bandwidth and
/// optional per-sample scale factors (`H_i = lambda_i^2 H`).
#[derive(Debug, Clone)]
pub struct Kde {
    data: Arc<Dataset>,
    bandwidth: BandwidthMatrix,
    lambdas: Option<Vec<f64>>,
    /// `L^-1 X_i`, row-major, width `d`.
    white: Vec<f64>,
    /// `L_xx^-1 x_i` over the input columns, width `d - 1`.
    white_inputs: Vec<f64>,
}

impl Kde {
    pub fn new(data: Arc<Dataset>, bandwidth: BandwidthMatrix, lambdas: Option<Vec<f64>>) -> Result<Self> {
        let d = data.dims();
        if bandwidth.dims() != d {
            return Err(KdeError::DimensionMismatch {
                expected: d,
                got: bandwidth.dims(),
            });
        }
        if bandwidth.partition().output_index != data.output_index() {
            return Err(KdeError::InvalidArgument(
                "bandwidth partition does not match the dataset output column".to_string(),
            ));
        }
        if let Some(l) = &lambdas {
            if l.len() != data.len() {
                return Err(KdeError::DimensionMismatch {
                    expected: data.len(),
                    got: l.len(),
                });
            }
            if l.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(KdeError::InvalidArgument(
                    "local factors must be positive".to_string(),
                ));
            }
        }
        let all: Vec<usize> = (0..d).collect();
        let white = whiten_rows(data.values(), d, &all, bandwidth.inv_chol());
        let part = bandwidth.partition();
        let white_inputs = whiten_rows(data.values(), d, &part.inputs, &part.inv_chol_xx);
        Ok(Self {
            data,
            bandwidth,
            lambdas,
            white,
            white_inputs,
        })
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn data_arc(&self) -> &Arc<Dataset> {
        &self.data
    }

    pub fn bandwidth(&self) -> &BandwidthMatrix {
        &self.bandwidth
    }

    pub fn lambdas(&self) -> Option<&[f64]> {
        self.lambdas.as_deref()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.data.dims()
    }

    pub fn lambda(&self, i: usize) -> f64 {
        self.lambdas.as_ref().map_or(1.0, |l| l[i])
    }

    pub(crate) fn white_row(&self, i: usize) -> &[f64] {
        let d = self.dims();
        &self.white[i * d..(i + 1) * d]
    }

    pub(crate) fn white_input_row(&self, i: usize) -> &[f64] {
        let dx = self.dims() - 1;
        &self.white_inputs[i * dx..(i + 1) * dx]
    }

    /// Whitened input part of an arbitrary query.
    pub(crate) fn whiten_inputs(&self, x: &[f64]) -> Vec<f64> {
        let part = self.bandwidth.partition();
        let mut out = vec![0.0; x.len()];
        lower_mul(&part.inv_chol_xx, x.len(), x, &mut out);
        out
    }

    /// `ln K_j(r)` for a squared whitened distance `r` to sample `j`.
    #[inline]
    fn log_kernel_at(&self, j: usize, r: f64) -> f64 {
        match &self.lambdas {
            None => -0.5 * r,
            Some(l) => {
                let lj = l[j];
                -0.5 * r / (lj * lj) - self.dims() as f64 * lj.ln()
            }
        }
    }

    fn log_density_white(&self, w: &[f64], skip: Option<usize>, buf: &mut Vec<f64>) -> f64 {
        let d = self.dims();
        buf.clear();
        for j in 0..self.len() {
            if Some(j) == skip {
                continue;
            }
            let r = sq_dist(w, &self.white[j * d..(j + 1) * d]);
            buf.push(self.log_kernel_at(j, r));
        }
        let count = buf.len() as f64;
        log_sum_exp(buf) + self.bandwidth.log_norm() - count.ln()
    }

    /// `ln f(x)`
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        let d = self.dims();
        if x.len() != d {
            return Err(KdeError::DimensionMismatch {
                expected: d,
                got: x.len(),
            });
        }
        let mut w = vec![0.0; d];
        lower_mul(self.bandwidth.inv_chol(), d, x, &mut w);
        Ok(self.log_density_white(&w, None, &mut Vec::with_capacity(self.len())))
    }

    pub fn density(&self, x: &[f64]) -> Result<f64> {
        self.log_density(x).map(f64::exp)
    }

    /// `ln f_{-i}(X_i)`
    pub fn loo_log_density(&self, i: usize) -> Result<f64> {
        if self.len() < 2 {
            return Err(KdeError::TooFewRows {
                needed: 2,
                found: self.len(),
            });
        }
        if i >= self.len() {
            return Err(KdeError::InvalidArgument(format!("row {i} out of range")));
        }
        Ok(self.log_density_white(self.white_row(i), Some(i), &mut Vec::with_capacity(self.len())))
    }

    /// Leave-one-out log densities at every sample, in row order.
    pub fn loo_log_densities(&self) -> Result<Vec<f64>> {
        let m = self.len();
        if m < 2 {
            return Err(KdeError::TooFewRows { needed: 2, found: m });
        }
        Ok((0..m)
            .into_par_iter()
            .map_init(
                || Vec::with_capacity(m),
                |buf, i| self.log_density_white(self.white_row(i), Some(i), buf),
            )
            .collect())
    }

    /// `ln` of the integral of `f^2`, exact for Gaussian kernels:
    /// `(1/M^2) sum_ij N(X_i - X_j; (lambda_i^2 + lambda_j^2) H)`.
    pub fn log_squared_integral(&self) -> f64 {
        let m = self.len();
        let d = self.dims() as f64;
        let rows: Vec<f64> = (0..m)
            .into_par_iter()
            .map_init(
                || vec![0.0; m],
                |buf, i| {
                    let wi = self.white_row(i);
                    let li2 = self.lambda(i).powi(2);
                    for (j, slot) in buf.iter_mut().enumerate() {
                        let r = sq_dist(wi, self.white_row(j));
                        let s = li2 + self.lambda(j).powi(2);
                        *slot = -0.5 * r / s - 0.5 * d * s.ln();
                    }
                    log_sum_exp(buf)
                },
            )
            .collect();
        log_sum_exp(&rows) + self.bandwidth.log_norm() - 2.0 * (m as f64).ln()
    }

    /// Marginal KDE over a subset of columns. Exact for Gaussian kernels:
    /// drop the other coordinates from the samples and from `H`.
    pub fn marginal(&self, cols: &[usize]) -> Result<Kde> {
        let d = self.dims();
        if cols.is_empty() || cols.iter().any(|&c| c >= d) {
            return Err(KdeError::InvalidArgument(format!(
                "marginal columns {cols:?} out of range for dimension {d}"
            )));
        }
        let h = self.bandwidth.matrix();
        let sub = DMatrix::from_fn(cols.len(), cols.len(), |a, b| h[(cols[a], cols[b])]);
        let mut values = Vec::with_capacity(self.len() * cols.len());
        for i in 0..self.len() {
            let row = self.data.row(i);
            values.extend(cols.iter().map(|&c| row[c]));
        }
        let names = cols.iter().map(|&c| self.data.columns()[c].clone()).collect();
        let out = cols.len() - 1;
        let data = Dataset::new(names, values, out)?;
        Kde::new(Arc::new(data), BandwidthMatrix::new(sub, out)?, self.lambdas.clone())
    }
}

/// Densities at many query points (parallel, order preserving).
pub fn kde_evaluate(kde: &Kde, points: &[Vec<f64>]) -> Result<Vec<f64>> {
    points
        .par_iter()
        .map(|p| kde.density(p))
        .collect()
}

/// `f_{-i}(X_i)`; the adaptive regime keeps the full-sample local factors.
pub fn kde_loo_evaluate(kde: &Kde, i: usize) -> Result<f64> {
    kde.loo_log_density(i).map(f64::exp)
}

pub fn squared_integral(kde: &Kde) -> f64 {
    kde.log_squared_integral().exp()
}

/// A dataset together with a bandwidth spec and everything derived from it.
#[derive(Debug, Clone)]
pub struct FittedModel {
    spec: BandwidthSpec,
    locals: Option<LocalFactors>,
    kde: Kde,
}

impl FittedModel {
    pub fn fit(data: Arc<Dataset>, spec: BandwidthSpec) -> Result<Self> {
        let decomp = covariance_decomposition(&data)?;
        Self::fit_with(data, &decomp, spec)
    }

    /// Fits with a precomputed decomposition of `data`'s covariance.
    pub fn fit_with(
        data: Arc<Dataset>,
        decomp: &CovarianceDecomposition,
        spec: BandwidthSpec,
    ) -> Result<Self> {
        let bandwidth = spec.bandwidth_matrix(decomp, data.output_index())?;
        let locals = match spec.alpha() {
            Some(alpha) => Some(local_factors(&data, &bandwidth, alpha)?),
            None => None,
        };
        Self::from_parts(data, spec, bandwidth, locals)
    }

    /// Assembles a model from stored parts without recomputing anything.
    pub fn from_parts(
        data: Arc<Dataset>,
        spec: BandwidthSpec,
        bandwidth: BandwidthMatrix,
        locals: Option<LocalFactors>,
    ) -> Result<Self> {
        if spec.method().is_adaptive() != locals.is_some() {
            return Err(KdeError::InvalidArgument(format!(
                "local factors must be present exactly for adaptive methods ({})",
                spec.method()
            )));
        }
        let lambdas = locals.as_ref().map(|l| l.lambdas.clone());
        let kde = Kde::new(data, bandwidth, lambdas)?;
        Ok(Self { spec, locals, kde })
    }

    pub fn spec(&self) -> &BandwidthSpec {
        &self.spec
    }

    pub fn locals(&self) -> Option<&LocalFactors> {
        self.locals.as_ref()
    }

    pub fn kde(&self) -> &Kde {
        &self.kde
    }
}

impl Deref for FittedModel {
    type Target = Kde;

    fn deref(&self) -> &Kde {
        &self.kde
    }
}

impl AsRef<Kde> for FittedModel {
    fn as_ref(&self) -> &Kde {
        &self.kde
    }
}
