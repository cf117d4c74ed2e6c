//! Bandwidth selection criteria (LSCV, MCSE) and the search that minimizes
//! them for each regime.
//!
//! Scalar regimes (FW, AW) use golden-section search over
//! `h in [lo, hi] x Scott`. Selective regimes (SW, SAW) run Nelder-Mead over
//! `ln h_k`, seeded at the scalar optimum of the matching non-selective
//! regime, so their criterion value is never worse than the scalar one.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bandwidth::{plugin_factor, BandwidthFactor, BandwidthSpec, Method, PluginRule};
use crate::conditional::loo_expectation_with;
use crate::dataset::{covariance_decomposition, CovarianceDecomposition, Dataset};
use crate::density::FittedModel;
use crate::error::{KdeError, Result};
use crate::kernel::log_sum_exp;
use crate::optimize::{golden_section_minimize, nelder_mead_minimize, NelderMeadOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Lscv,
    Mcse,
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::Lscv => "lscv",
            Criterion::Mcse => "mcse",
        })
    }
}

impl FromStr for Criterion {
    type Err = KdeError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lscv" => Ok(Criterion::Lscv),
            "mcse" => Ok(Criterion::Mcse),
            other => Err(KdeError::InvalidArgument(format!(
                "unknown criterion `{other}`"
            ))),
        }
    }
}

/// How a reported bandwidth was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selection {
    Scott,
    Silverman,
    Lscv,
    Mcse,
}

impl From<Criterion> for Selection {
    fn from(c: Criterion) -> Self {
        match c {
            Criterion::Lscv => Selection::Lscv,
            Criterion::Mcse => Selection::Mcse,
        }
    }
}

impl fmt::Display for Selection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Selection::Scott => "scott",
            Selection::Silverman => "silverman",
            Selection::Lscv => "lscv",
            Selection::Mcse => "mcse",
        })
    }
}

impl FromStr for Selection {
    type Err = KdeError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "scott" => Ok(Selection::Scott),
            "silverman" => Ok(Selection::Silverman),
            other => other.parse::<Criterion>().map(Selection::from),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    /// Golden-section bracket as multiples of the Scott factor.
    pub scalar_bracket: (f64, f64),
    /// Relative bracket width at which golden-section stops.
    pub scalar_tol: f64,
    /// Relative size of the initial simplex around the warm start.
    pub simplex_init_spread: f64,
    /// Objective spread at which Nelder-Mead stops. `None` picks 1e-6 for
    /// LSCV and 1e-4 for MCSE.
    pub simplex_ftol: Option<f64>,
    /// Vertex spread in `ln h` required alongside the objective spread.
    pub simplex_xtol: f64,
    /// Evaluation budget per Nelder-Mead run; `None` means `200 d`.
    pub max_evals: Option<usize>,
    /// Sensitivity for the adaptive regimes.
    pub alpha: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            scalar_bracket: (0.05, 3.0),
            scalar_tol: 1e-3,
            simplex_init_spread: 0.2,
            simplex_ftol: None,
            simplex_xtol: 1e-3,
            max_evals: None,
            alpha: crate::bandwidth::DEFAULT_ALPHA,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.scalar_bracket;
        let ok = lo > 0.0
            && lo < hi
            && self.scalar_tol > 0.0
            && self.simplex_init_spread > 0.0
            && self.simplex_ftol.is_none_or(|t| t > 0.0)
            && self.simplex_xtol > 0.0
            && self.max_evals.is_none_or(|n| n > 0)
            && (0.0..=1.0).contains(&self.alpha);
        if ok {
            Ok(())
        } else {
            Err(KdeError::InvalidArgument(format!(
                "invalid optimizer configuration {self:?}"
            )))
        }
    }

    fn ftol(&self, criterion: Criterion) -> f64 {
        self.simplex_ftol.unwrap_or(match criterion {
            Criterion::Lscv => 1e-6,
            Criterion::Mcse => 1e-4,
        })
    }
}

/// MCSE with the number of rows that fell back to the prior mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McseOutcome {
    pub value: f64,
    pub fallback_rows: usize,
}

/// Least-squares cross-validation score of a fitted model:
/// `int f^2 - (2/M) sum_i f_{-i}(X_i)`.
pub fn lscv_of(model: &FittedModel) -> Result<f64> {
    let m = model.len() as f64;
    let loo = model.loo_log_densities()?;
    let mean_loo = (log_sum_exp(&loo) - m.ln()).exp();
    Ok(model.log_squared_integral().exp() - 2.0 * mean_loo)
}

/// Mean conditional squared error of a fitted model, with row `i` left out
/// of the conditional mixture used to predict `Y_i`. Rows without evidence
/// are predicted by the mean output of the remaining rows.
pub fn mcse_of(model: &FittedModel) -> Result<McseOutcome> {
    let m = model.len();
    if m < 3 {
        return Err(KdeError::TooFewRows { needed: 3, found: m });
    }
    let data = model.data();
    let total_y: f64 = (0..m).map(|i| data.output(i)).sum();
    let per_row: Vec<(f64, bool)> = (0..m)
        .into_par_iter()
        .map_init(
            || (Vec::with_capacity(m), Vec::with_capacity(m)),
            |(log_w, means), i| {
                let x = data.inputs(i);
                let y = data.output(i);
                match loo_expectation_with(model, i, &x, log_w, means) {
                    Some(e) => ((e - y) * (e - y), false),
                    None => {
                        let prior = (total_y - y) / (m - 1) as f64;
                        ((prior - y) * (prior - y), true)
                    }
                }
            },
        )
        .collect();
    let value = per_row.iter().map(|(e, _)| e).sum::<f64>() / m as f64;
    let fallback_rows = per_row.iter().filter(|(_, f)| *f).count();
    Ok(McseOutcome {
        value,
        fallback_rows,
    })
}

pub fn lscv(data: Arc<Dataset>, spec: &BandwidthSpec) -> Result<f64> {
    lscv_of(&FittedModel::fit(data, spec.clone())?)
}

pub fn mcse(data: Arc<Dataset>, spec: &BandwidthSpec) -> Result<f64> {
    Ok(mcse_of(&FittedModel::fit(data, spec.clone())?)?.value)
}

/// A dataset with its covariance decomposition cached, for scoring many
/// candidate bandwidths.
#[derive(Debug, Clone)]
pub struct Objective {
    data: Arc<Dataset>,
    decomp: CovarianceDecomposition,
}

impl Objective {
    pub fn new(data: Arc<Dataset>) -> Result<Self> {
        let decomp = covariance_decomposition(&data)?;
        Ok(Self { data, decomp })
    }

    pub fn data(&self) -> &Arc<Dataset> {
        &self.data
    }

    pub fn decomposition(&self) -> &CovarianceDecomposition {
        &self.decomp
    }

    pub fn fit(&self, spec: &BandwidthSpec) -> Result<FittedModel> {
        FittedModel::fit_with(self.data.clone(), &self.decomp, spec.clone())
    }

    pub fn score(&self, spec: &BandwidthSpec, criterion: Criterion) -> Result<f64> {
        let model = self.fit(spec)?;
        match criterion {
            Criterion::Lscv => lscv_of(&model),
            Criterion::Mcse => Ok(mcse_of(&model)?.value),
        }
    }

    /// Both criteria at `spec`, packaged as a report row.
    pub fn report(
        &self,
        spec: &BandwidthSpec,
        selection: Selection,
        evaluations: usize,
        converged: bool,
    ) -> Result<CriterionReport> {
        let model = self.fit(spec)?;
        let lscv = lscv_of(&model)?;
        let mcse = mcse_of(&model)?;
        Ok(CriterionReport {
            method: spec.method(),
            selection,
            factor: spec.factor().clone(),
            alpha: spec.alpha(),
            lscv,
            mcse: mcse.value,
            mcse_fallback_rows: mcse.fallback_rows,
            evaluations,
            converged,
        })
    }
}

/// Outcome of one bandwidth selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub method: Method,
    pub selection: Selection,
    pub factor: BandwidthFactor,
    pub alpha: Option<f64>,
    pub lscv: f64,
    pub mcse: f64,
    pub mcse_fallback_rows: usize,
    pub evaluations: usize,
    pub converged: bool,
}

impl CriterionReport {
    pub fn spec(&self) -> Result<BandwidthSpec> {
        BandwidthSpec::new(self.method, self.factor.clone(), self.alpha)
    }

    /// Value of the criterion the bandwidth was selected by, if any.
    pub fn criterion_value(&self) -> Option<f64> {
        match self.selection {
            Selection::Lscv => Some(self.lscv),
            Selection::Mcse => Some(self.mcse),
            Selection::Scott | Selection::Silverman => None,
        }
    }
}

/// Report for a plug-in bandwidth (no search).
pub fn plugin_report(objective: &Objective, method: Method, rule: PluginRule, alpha: f64) -> Result<CriterionReport> {
    let data = objective.data();
    let h = plugin_factor(data.len(), data.dims(), rule);
    let spec = BandwidthSpec::from_components(method, vec![h; data.dims()], alpha)?;
    let selection = match rule {
        PluginRule::Scott => Selection::Scott,
        PluginRule::Silverman => Selection::Silverman,
    };
    objective.report(&spec, selection, 1, true)
}

/// Golden-section search for FW/AW.
fn select_scalar(
    objective: &Objective,
    method: Method,
    criterion: Criterion,
    config: &OptimizerConfig,
) -> Result<CriterionReport> {
    debug_assert!(!method.is_selective());
    let data = objective.data();
    let scott = plugin_factor(data.len(), data.dims(), PluginRule::Scott);
    let bracket = (config.scalar_bracket.0 * scott, config.scalar_bracket.1 * scott);
    let d = data.dims();
    let found = golden_section_minimize(
        |h| {
            let spec = BandwidthSpec::from_components(method, vec![h; d], config.alpha)?;
            objective.score(&spec, criterion)
        },
        bracket,
        config.scalar_tol,
    )?;
    let spec = BandwidthSpec::from_components(method, vec![found.argmin; d], config.alpha)?;
    objective.report(&spec, criterion.into(), found.evaluations, true)
}

/// Nelder-Mead in `ln h` for SW/SAW, started from `start` (per-direction factors).
fn select_selective(
    objective: &Objective,
    method: Method,
    criterion: Criterion,
    config: &OptimizerConfig,
    start: &[f64],
) -> Result<CriterionReport> {
    debug_assert!(method.is_selective());
    let d = objective.data().dims();
    let x0: Vec<f64> = start.iter().map(|h| h.ln()).collect();
    let steps = vec![(1.0 + config.simplex_init_spread).ln(); d];
    let opts = NelderMeadOptions {
        ftol: config.ftol(criterion),
        xtol: config.simplex_xtol,
        max_evals: config.max_evals.unwrap_or(200 * d),
    };
    let found = nelder_mead_minimize(
        |x| {
            let hs = x.iter().map(|v| v.exp()).collect();
            let spec = BandwidthSpec::from_components(method, hs, config.alpha)?;
            objective.score(&spec, criterion)
        },
        &x0,
        &steps,
        opts,
    );
    if !found.value.is_finite() {
        return Err(KdeError::NonFiniteObjective(start[0]));
    }
    let hs = found.argmin.iter().map(|v| v.exp()).collect();
    let spec = BandwidthSpec::from_components(method, hs, config.alpha)?;
    objective.report(&spec, criterion.into(), found.evaluations, found.converged)
}

/// Selects the bandwidth of `method` minimizing `criterion`.
pub fn select_bandwidth(
    data: Arc<Dataset>,
    method: Method,
    criterion: Criterion,
    config: &OptimizerConfig,
) -> Result<CriterionReport> {
    let objective = Objective::new(data)?;
    select_with(&objective, method, criterion, config, None)
}

/// Like [`select_bandwidth`] on a prepared objective. For selective
/// methods, `warm_start` may carry the already-selected scalar counterpart.
pub fn select_with(
    objective: &Objective,
    method: Method,
    criterion: Criterion,
    config: &OptimizerConfig,
    warm_start: Option<&CriterionReport>,
) -> Result<CriterionReport> {
    config.validate()?;
    if !method.is_selective() {
        return select_scalar(objective, method, criterion, config);
    }
    let d = objective.data().dims();
    let scalar = match warm_start {
        Some(r) if r.method == method.scalar_counterpart() && r.selection == criterion.into() => {
            r.factor.components(d)
        }
        _ => select_scalar(objective, method.scalar_counterpart(), criterion, config)?
            .factor
            .components(d),
    };
    select_selective(objective, method, criterion, config, &scalar)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{gen_example1, Example1Config};

    #[test]
    fn constant_output_has_zero_mcse() {
        let rows: Vec<Vec<f64>> = (0..12)
            .map(|i| vec![i as f64 * 0.3, (i as f64).sin(), 4.0])
            .collect();
        let data = Dataset::from_rows(&rows).unwrap();
        // Constant output makes the sample covariance singular, so build the
        // bandwidth directly.
        let h = nalgebra::DMatrix::from_row_slice(3, 3, &[0.5, 0.1, 0.0, 0.1, 0.4, 0.0, 0.0, 0.0, 0.2]);
        let bw = crate::bandwidth::BandwidthMatrix::new(h, 2).unwrap();
        let spec = BandwidthSpec::fixed(1.0).unwrap();
        let model = FittedModel::from_parts(Arc::new(data), spec, bw, None).unwrap();
        let out = mcse_of(&model).unwrap();
        assert!(out.value.abs() < 1e-24);
        assert_eq!(out.fallback_rows, 0);
    }

    #[test]
    fn lscv_flattens_for_wide_bandwidths() {
        let data = Arc::new(gen_example1(&Example1Config { seed: 4, ..Default::default() }).unwrap());
        let scott = plugin_factor(data.len(), data.dims(), PluginRule::Scott);
        let values: Vec<f64> = [1.0, 2.0, 5.0, 10.0]
            .iter()
            .map(|c| lscv(data.clone(), &BandwidthSpec::fixed(c * scott).unwrap()).unwrap())
            .collect();
        for w in values.windows(2) {
            assert!(w[0] < w[1], "{values:?}");
        }
        assert!(values.iter().all(|&v| v < 0.0));
    }

    #[test]
    fn selection_parsing() {
        assert_eq!("LSCV".parse::<Selection>().unwrap(), Selection::Lscv);
        assert_eq!("scott".parse::<Selection>().unwrap(), Selection::Scott);
        assert!("x".parse::<Criterion>().is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = OptimizerConfig::default();
        assert!(c.validate().is_ok());
        c.scalar_bracket = (2.0, 1.0);
        assert!(c.validate().is_err());
    }
}
