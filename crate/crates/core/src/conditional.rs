//! Conditional density of the output given the inputs.
//!
//! With Gaussian kernels the conditional `f(y | x)` is exactly a mixture of
//! `M` univariate Gaussians. Kernel `i` contributes weight proportional to
//! `N(x - x_i; 0, lambda_i^2 H_xx)`, mean `y_i + H_yx H_xx^-1 (x - x_i)` and
//! variance `lambda_i^2 (H_yy - H_yx H_xx^-1 H_xy)`. Expectations are then
//! closed form and quantiles come from bisection on the mixture CDF.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::density::Kde;
use crate::error::{KdeError, Result};
use crate::kernel::{log_sum_exp, sq_dist, LN_2PI};

/// Queries whose largest log input-kernel density falls below this are
/// treated as having no evidence (about `ln 1e-300`).
pub const LOG_EVIDENCE_FLOOR: f64 = -690.0;

pub const DEFAULT_LEVEL: f64 = 0.90;

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalMixture {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    pub log_evidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionalResult {
    pub expectation: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub evidence: f64,
}

impl ConditionalMixture {
    /// Marginal input density at the query.
    pub fn evidence(&self) -> f64 {
        self.log_evidence.exp()
    }

    pub fn pdf(&self, y: f64) -> f64 {
        let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.variances)
            .map(|((w, m), v)| {
                let s = v.sqrt();
                w * norm / s * (-0.5 * (y - m) * (y - m) / v).exp()
            })
            .sum()
    }

    pub fn cdf(&self, y: f64) -> f64 {
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.variances)
            .filter(|((w, _), _)| **w > 0.0)
            .map(|((w, m), v)| w * normal_cdf((y - m) / v.sqrt()))
            .sum()
    }

    /// Total variance of the mixture.
    pub fn variance(&self) -> f64 {
        let mean = conditional_expectation(self);
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.variances)
            .map(|((w, m), v)| w * (v + (m - mean) * (m - mean)))
            .sum()
    }

    /// Bracket holding all but a negligible tail of every component.
    pub fn support(&self, width: f64) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for ((w, m), v) in self.weights.iter().zip(&self.means).zip(&self.variances) {
            if *w > 0.0 {
                let s = v.sqrt();
                lo = lo.min(m - width * s);
                hi = hi.max(m + width * s);
            }
        }
        (lo, hi)
    }
}

fn check_inputs(kde: &Kde, x: &[f64]) -> Result<()> {
    let dx = kde.dims() - 1;
    if x.len() != dx {
        return Err(KdeError::DimensionMismatch {
            expected: dx,
            got: x.len(),
        });
    }
    Ok(())
}

/// Per-kernel unnormalized log input weights and means at `x`, skipping `skip`.
fn mixture_terms(
    kde: &Kde,
    x: &[f64],
    skip: Option<usize>,
    log_w: &mut Vec<f64>,
    means: &mut Vec<f64>,
) {
    let part = kde.bandwidth().partition();
    let data = kde.data();
    let dx = x.len() as f64;
    let u = kde.whiten_inputs(x);
    let log_norm = -0.5 * (dx * LN_2PI + part.log_det_xx);
    log_w.clear();
    means.clear();
    for j in 0..kde.len() {
        if Some(j) == skip {
            continue;
        }
        let r = sq_dist(&u, kde.white_input_row(j));
        let lj = kde.lambda(j);
        log_w.push(log_norm - 0.5 * r / (lj * lj) - dx * lj.ln());
        let row = data.row(j);
        let shift: f64 = part
            .gain
            .iter()
            .zip(&part.inputs)
            .zip(x)
            .map(|((g, &c), xv)| g * (xv - row[c]))
            .sum();
        means.push(row[part.output_index] + shift);
    }
}

/// Conditional mixture of the output at input vector `x`.
pub fn condition(kde: &Kde, x: &[f64]) -> Result<ConditionalMixture> {
    check_inputs(kde, x)?;
    let mut log_w = Vec::with_capacity(kde.len());
    let mut means = Vec::with_capacity(kde.len());
    mixture_terms(kde, x, None, &mut log_w, &mut means);
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max >= LOG_EVIDENCE_FLOOR) {
        return Err(KdeError::NoEvidence);
    }
    let total = log_sum_exp(&log_w);
    let weights = log_w.iter().map(|l| (l - total).exp()).collect();
    let cond_var = kde.bandwidth().partition().cond_var;
    let variances = (0..kde.len())
        .map(|j| kde.lambda(j).powi(2) * cond_var)
        .collect();
    Ok(ConditionalMixture {
        weights,
        means,
        variances,
        log_evidence: total - (kde.len() as f64).ln(),
    })
}

/// Conditional expectation at the inputs of row `i` with row `i` removed
/// from the mixture. `None` when the remaining kernels carry no evidence.
pub fn loo_conditional_expectation(kde: &Kde, i: usize) -> Option<f64> {
    let x = kde.data().inputs(i);
    let mut log_w = Vec::with_capacity(kde.len());
    let mut means = Vec::with_capacity(kde.len());
    loo_expectation_with(kde, i, &x, &mut log_w, &mut means)
}

pub(crate) fn loo_expectation_with(
    kde: &Kde,
    i: usize,
    x: &[f64],
    log_w: &mut Vec<f64>,
    means: &mut Vec<f64>,
) -> Option<f64> {
    mixture_terms(kde, x, Some(i), log_w, means);
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max >= LOG_EVIDENCE_FLOOR) {
        return None;
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (l, m) in log_w.iter().zip(means.iter()) {
        let w = (l - max).exp();
        num += w * m;
        den += w;
    }
    Some(num / den)
}

pub fn conditional_expectation(mix: &ConditionalMixture) -> f64 {
    mix.weights.iter().zip(&mix.means).map(|(w, m)| w * m).sum()
}

/// Solves `CDF(q) = p` by bisection on a bracket 10 component deviations
/// wide. Bisection runs to floating-point resolution, well past the
/// `1e-9 x (mixture std)` target.
pub fn conditional_quantile(mix: &ConditionalMixture, p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(KdeError::InvalidArgument(format!(
            "probability {p} outside (0, 1)"
        )));
    }
    let parts: Vec<(f64, f64, f64)> = mix
        .weights
        .iter()
        .zip(&mix.means)
        .zip(&mix.variances)
        .filter(|((w, _), _)| **w > 0.0)
        .map(|((w, m), v)| (*w, *m, 1.0 / v.sqrt()))
        .collect();
    let cdf = |y: f64| -> f64 {
        parts
            .iter()
            .map(|(w, m, inv_s)| w * normal_cdf((y - m) * inv_s))
            .sum()
    };
    let (mut lo, mut hi) = mix.support(10.0);
    for _ in 0..2100 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Equal-tail interval holding `level` of the conditional mass. The tail
/// probability is snapped to 12 decimals so that a level of 0.90 uses exactly
/// the 0.05 and 0.95 quantiles.
pub fn credible_interval(mix: &ConditionalMixture, level: f64) -> Result<(f64, f64)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(KdeError::InvalidArgument(format!(
            "credible level {level} outside (0, 1)"
        )));
    }
    let tail = ((1.0 - level) * 1e12).round() / 2e12;
    Ok((
        conditional_quantile(mix, tail)?,
        conditional_quantile(mix, 1.0 - tail)?,
    ))
}

pub fn correct_one(kde: &Kde, x: &[f64], level: f64) -> Result<ConditionalResult> {
    let mix = condition(kde, x)?;
    let (lower, upper) = credible_interval(&mix, level)?;
    Ok(ConditionalResult {
        expectation: conditional_expectation(&mix),
        lower,
        upper,
        level,
        evidence: mix.evidence(),
    })
}

/// Corrects every input row. Rows without evidence come back as
/// `Err(KdeError::NoEvidence)` in place; the batch itself never fails.
pub fn correct_batch(kde: &Kde, inputs: &[Vec<f64>], level: f64) -> Vec<Result<ConditionalResult>> {
    inputs
        .par_iter()
        .map(|x| correct_one(kde, x, level))
        .collect()
}
