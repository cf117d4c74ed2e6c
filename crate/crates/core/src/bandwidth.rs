//! Kernel covariance construction for the four bandwidth regimes:
//!
//! | tag | regime              | parameters          |
//! |-----|---------------------|---------------------|
//! | FW  | fixed               | `h`                 |
//! | AW  | adaptive            | `h`, `alpha`        |
//! | SW  | selective           | `h_1 .. h_d`        |
//! | SAW | selective-adaptive  | `h_1 .. h_d`, `alpha` |
//!
//! Fixed: `H = h^2 K`. Selective: `H = Q diag(h_k^2 l_k) Q^T` where
//! `K = Q diag(l_k) Q^T` is the sample covariance with eigenvalues sorted in
//! ascending order, so `h_1` scales the narrowest direction of the data. Adaptive regimes scale the kernel at sample `i` by a
//! local factor, `H_i = lambda_i^2 H`, with `lambda_i = (f(X_i) / g)^-alpha`
//! from a pilot density `f` and its geometric mean `g`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{CovarianceDecomposition, Dataset};
use crate::error::{KdeError, Result};
use crate::kernel::{log_sum_exp, lower_mul, sq_dist, whiten_rows, LN_2PI};

/// Default adaptive sensitivity.
pub const DEFAULT_ALPHA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "FW")]
    Fixed,
    #[serde(rename = "AW")]
    Adaptive,
    #[serde(rename = "SW")]
    Selective,
    #[serde(rename = "SAW")]
    SelectiveAdaptive,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Fixed,
        Method::Adaptive,
        Method::Selective,
        Method::SelectiveAdaptive,
    ];

    pub fn is_adaptive(self) -> bool {
        matches!(self, Method::Adaptive | Method::SelectiveAdaptive)
    }

    pub fn is_selective(self) -> bool {
        matches!(self, Method::Selective | Method::SelectiveAdaptive)
    }

    /// The scalar-factor regime with the same adaptivity.
    pub fn scalar_counterpart(self) -> Method {
        if self.is_adaptive() {
            Method::Adaptive
        } else {
            Method::Fixed
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Method::Fixed => "FW",
            Method::Adaptive => "AW",
            Method::Selective => "SW",
            Method::SelectiveAdaptive => "SAW",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = KdeError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fw" => Ok(Method::Fixed),
            "aw" => Ok(Method::Adaptive),
            "sw" => Ok(Method::Selective),
            "saw" => Ok(Method::SelectiveAdaptive),
            other => Err(KdeError::InvalidArgument(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PluginRule {
    Scott,
    Silverman,
}

/// Scott: `M^(-1/(d+4))`. Silverman: `(M (d+2) / 4)^(-1/(d+4))`.
pub fn plugin_factor(m: usize, d: usize, rule: PluginRule) -> f64 {
    let exponent = -1.0 / (d as f64 + 4.0);
    let base = match rule {
        PluginRule::Scott => m as f64,
        PluginRule::Silverman => m as f64 * (d as f64 + 2.0) / 4.0,
    };
    base.powf(exponent)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BandwidthFactor {
    Scalar(f64),
    Selective(Vec<f64>),
}

impl BandwidthFactor {
    /// Per-direction factors, replicating a scalar `d` times.
    pub fn components(&self, d: usize) -> Vec<f64> {
        match self {
            BandwidthFactor::Scalar(h) => vec![*h; d],
            BandwidthFactor::Selective(hs) => hs.clone(),
        }
    }
}

impl fmt::Display for BandwidthFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BandwidthFactor::Scalar(h) => write!(f, "{h}"),
            BandwidthFactor::Selective(hs) => {
                let parts: Vec<String> = hs.iter().map(|h| h.to_string()).collect();
                write!(f, "[{}]", parts.join(" "))
            }
        }
    }
}

/// A validated choice of regime and its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthSpec {
    method: Method,
    factor: BandwidthFactor,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
}

impl BandwidthSpec {
    pub fn fixed(h: f64) -> Result<Self> {
        Self::new(Method::Fixed, BandwidthFactor::Scalar(h), None)
    }

    pub fn adaptive(h: f64, alpha: f64) -> Result<Self> {
        Self::new(Method::Adaptive, BandwidthFactor::Scalar(h), Some(alpha))
    }

    pub fn selective(hs: Vec<f64>) -> Result<Self> {
        Self::new(Method::Selective, BandwidthFactor::Selective(hs), None)
    }

    pub fn selective_adaptive(hs: Vec<f64>, alpha: f64) -> Result<Self> {
        Self::new(
            Method::SelectiveAdaptive,
            BandwidthFactor::Selective(hs),
            Some(alpha),
        )
    }

    /// Builds a spec of `method` from per-direction factors, collapsing them
    /// to a scalar for FW/AW (all components must then be equal).
    pub fn from_components(method: Method, hs: Vec<f64>, alpha: f64) -> Result<Self> {
        let alpha = method.is_adaptive().then_some(alpha);
        let factor = if method.is_selective() {
            BandwidthFactor::Selective(hs)
        } else {
            let first = *hs.first().ok_or_else(|| {
                KdeError::InvalidArgument("empty bandwidth factor".to_string())
            })?;
            if hs.iter().any(|&h| h != first) {
                return Err(KdeError::InvalidArgument(format!(
                    "{method} takes a single scalar factor"
                )));
            }
            BandwidthFactor::Scalar(first)
        };
        Self::new(method, factor, alpha)
    }

    pub fn new(method: Method, factor: BandwidthFactor, alpha: Option<f64>) -> Result<Self> {
        match (&factor, method.is_selective()) {
            (BandwidthFactor::Scalar(h), false) => {
                if !(*h > 0.0 && h.is_finite()) {
                    return Err(KdeError::InvalidArgument(format!(
                        "bandwidth factor {h} must be positive"
                    )));
                }
            }
            (BandwidthFactor::Selective(hs), true) => {
                if hs.is_empty() || hs.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
                    return Err(KdeError::InvalidArgument(format!(
                        "selective factors {hs:?} must all be positive"
                    )));
                }
            }
            _ => {
                return Err(KdeError::InvalidArgument(format!(
                    "factor kind does not match method {method}"
                )))
            }
        }
        match (alpha, method.is_adaptive()) {
            (Some(a), true) if (0.0..=1.0).contains(&a) => {}
            (None, false) => {}
            (Some(a), true) => {
                return Err(KdeError::InvalidArgument(format!(
                    "alpha {a} outside [0, 1]"
                )))
            }
            (None, true) => {
                return Err(KdeError::InvalidArgument(format!(
                    "{method} requires alpha"
                )))
            }
            (Some(_), false) => {
                return Err(KdeError::InvalidArgument(format!(
                    "{method} takes no alpha"
                )))
            }
        }
        Ok(Self {
            method,
            factor,
            alpha,
        })
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn factor(&self) -> &BandwidthFactor {
        &self.factor
    }

    pub fn alpha(&self) -> Option<f64> {
        self.alpha
    }

    /// Kernel covariance for this spec (before any local scaling).
    pub fn bandwidth_matrix(
        &self,
        decomp: &CovarianceDecomposition,
        output_index: usize,
    ) -> Result<BandwidthMatrix> {
        match &self.factor {
            BandwidthFactor::Scalar(h) => fixed_bandwidth(decomp, *h, output_index),
            BandwidthFactor::Selective(hs) => selective_bandwidth(decomp, hs, output_index),
        }
    }
}

/// Symmetric positive-definite kernel covariance with its Cholesky factor
/// and the input/output partition used for conditioning.
#[derive(Debug, Clone)]
pub struct BandwidthMatrix {
    h: DMatrix<f64>,
    chol: DMatrix<f64>,
    /// `L^-1`, row-major.
    inv_chol: Vec<f64>,
    log_det: f64,
    partition: Partition,
}

/// Blocks of `H` split into inputs `x` and output `y`.
#[derive(Debug, Clone)]
pub struct Partition {
    pub output_index: usize,
    pub inputs: Vec<usize>,
    /// Inverse Cholesky factor of `H_xx`, row-major.
    pub inv_chol_xx: Vec<f64>,
    pub log_det_xx: f64,
    /// `H_yx H_xx^-1`
    pub gain: Vec<f64>,
    /// `H_yy - H_yx H_xx^-1 H_xy`
    pub cond_var: f64,
}

fn lower_inverse(chol: &DMatrix<f64>) -> Vec<f64> {
    let d = chol.nrows();
    let inv = chol
        .clone()
        .solve_lower_triangular(&DMatrix::identity(d, d))
        .expect("Cholesky factor has a positive diagonal");
    let mut flat = vec![0.0; d * d];
    for r in 0..d {
        for c in 0..=r {
            flat[r * d + c] = inv[(r, c)];
        }
    }
    flat
}

impl BandwidthMatrix {
    pub fn new(h: DMatrix<f64>, output_index: usize) -> Result<Self> {
        let d = h.nrows();
        if h.ncols() != d || d == 0 {
            return Err(KdeError::DimensionMismatch {
                expected: d,
                got: h.ncols(),
            });
        }
        if output_index >= d {
            return Err(KdeError::InvalidArgument(format!(
                "output index {output_index} out of range for dimension {d}"
            )));
        }
        let scale = h.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        for a in 0..d {
            for b in 0..a {
                if (h[(a, b)] - h[(b, a)]).abs() > 1e-12 * scale {
                    return Err(KdeError::SingularBandwidth);
                }
            }
        }
        if h.iter().any(|v| !v.is_finite()) {
            return Err(KdeError::SingularBandwidth);
        }
        let chol = Cholesky::new(h.clone())
            .ok_or(KdeError::SingularBandwidth)?
            .unpack();
        let log_det = 2.0 * chol.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        if !log_det.is_finite() {
            return Err(KdeError::SingularBandwidth);
        }
        let inv_chol = lower_inverse(&chol);

        let inputs: Vec<usize> = (0..d).filter(|&k| k != output_index).collect();
        let dx = inputs.len();
        let hxx = DMatrix::from_fn(dx, dx, |a, b| h[(inputs[a], inputs[b])]);
        let hxy = nalgebra::DVector::from_fn(dx, |a, _| h[(inputs[a], output_index)]);
        let (inv_chol_xx, log_det_xx, gain, cond_var) = if dx == 0 {
            (Vec::new(), 0.0, Vec::new(), h[(output_index, output_index)])
        } else {
            let chol_xx = Cholesky::new(hxx).ok_or(KdeError::SingularBandwidth)?;
            let solved = chol_xx.solve(&hxy);
            let cond_var = h[(output_index, output_index)] - hxy.dot(&solved);
            let l = chol_xx.unpack();
            let log_det_xx = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
            (lower_inverse(&l), log_det_xx, solved.iter().copied().collect(), cond_var)
        };
        if !(cond_var > 0.0) {
            return Err(KdeError::SingularConditional);
        }

        Ok(Self {
            h,
            chol,
            inv_chol,
            log_det,
            partition: Partition {
                output_index,
                inputs,
                inv_chol_xx,
                log_det_xx,
                gain,
                cond_var,
            },
        })
    }

    pub fn dims(&self) -> usize {
        self.h.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn chol(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub(crate) fn inv_chol(&self) -> &[f64] {
        &self.inv_chol
    }

    /// `delta^T H^-1 delta`
    pub fn mahalanobis(&self, delta: &[f64]) -> f64 {
        let d = self.dims();
        let mut y = vec![0.0; d];
        lower_mul(&self.inv_chol, d, delta, &mut y);
        y.iter().map(|v| v * v).sum()
    }

    /// `ln N(delta; 0, H)` minus the quadratic term.
    pub fn log_norm(&self) -> f64 {
        -0.5 * (self.dims() as f64 * LN_2PI + self.log_det)
    }

    /// Same matrix multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(&self.h * c, self.partition.output_index)
    }
}

/// `H = h^2 K`
pub fn fixed_bandwidth(
    decomp: &CovarianceDecomposition,
    h: f64,
    output_index: usize,
) -> Result<BandwidthMatrix> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(KdeError::InvalidArgument(format!(
            "bandwidth factor {h} must be positive"
        )));
    }
    BandwidthMatrix::new(&decomp.cov * (h * h), output_index)
}

/// `H = Q diag(h_k^2 l_k) Q^T`, built symmetric by construction.
pub fn selective_bandwidth(
    decomp: &CovarianceDecomposition,
    hs: &[f64],
    output_index: usize,
) -> Result<BandwidthMatrix> {
    let d = decomp.dims();
    if hs.len() != d {
        return Err(KdeError::DimensionMismatch {
            expected: d,
            got: hs.len(),
        });
    }
    if hs.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
        return Err(KdeError::InvalidArgument(format!(
            "selective factors {hs:?} must all be positive"
        )));
    }
    let q = &decomp.eigvecs;
    let scaled: Vec<f64> = hs
        .iter()
        .zip(decomp.eigvals.iter())
        .map(|(h, l)| h * h * l)
        .collect();
    let mut h = DMatrix::zeros(d, d);
    for a in 0..d {
        for b in a..d {
            let v: f64 = (0..d).map(|k| q[(a, k)] * scaled[k] * q[(b, k)]).sum();
            h[(a, b)] = v;
            h[(b, a)] = v;
        }
    }
    BandwidthMatrix::new(h, output_index)
}

/// Per-sample adaptive scale factors.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalFactors {
    pub lambdas: Vec<f64>,
    pub alpha: f64,
    /// `ln f(X_i)` of the pilot density at each sample.
    pub log_pilot: Vec<f64>,
}

impl LocalFactors {
    pub fn pilot_density(&self) -> Vec<f64> {
        self.log_pilot.iter().map(|v| v.exp()).collect()
    }

    pub fn geometric_mean(&self) -> f64 {
        let n = self.lambdas.len() as f64;
        (self.lambdas.iter().map(|l| l.ln()).sum::<f64>() / n).exp()
    }
}

/// Local factors from a fixed-bandwidth pilot KDE evaluated at every sample
/// point (self term included). Row sums are computed independently and
/// reduced in row order, so the result does not depend on the thread count.
pub fn local_factors(data: &Dataset, base: &BandwidthMatrix, alpha: f64) -> Result<LocalFactors> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(KdeError::InvalidArgument(format!(
            "alpha {alpha} outside [0, 1]"
        )));
    }
    let d = data.dims();
    if base.dims() != d {
        return Err(KdeError::DimensionMismatch {
            expected: d,
            got: base.dims(),
        });
    }
    let m = data.len();
    let cols: Vec<usize> = (0..d).collect();
    let white = whiten_rows(data.values(), d, &cols, base.inv_chol());
    let offset = base.log_norm() - (m as f64).ln();
    let log_pilot: Vec<f64> = (0..m)
        .into_par_iter()
        .map_init(
            || vec![0.0; m],
            |buf, i| {
                let wi = &white[i * d..(i + 1) * d];
                for (j, slot) in buf.iter_mut().enumerate() {
                    *slot = -0.5 * sq_dist(wi, &white[j * d..(j + 1) * d]);
                }
                log_sum_exp(buf) + offset
            },
        )
        .collect();
    if let Some(i) = log_pilot.iter().position(|v| !v.is_finite()) {
        return Err(KdeError::PilotUnderflow(i));
    }
    let mean_log = log_pilot.iter().sum::<f64>() / m as f64;
    let lambdas = log_pilot
        .iter()
        .map(|l| (-alpha * (l - mean_log)).exp())
        .collect();
    Ok(LocalFactors {
        lambdas,
        alpha,
        log_pilot,
    })
}
