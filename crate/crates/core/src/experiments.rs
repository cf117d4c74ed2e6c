//! Synthetic datasets and the benchmark harness.
//!
//! * Example 1: `Y = X/4 + sin X + noise`, `X ~ N(0, x_std)`.
//! * Shading: a mast anemometer that under-reads by a constant gain when the
//!   wind blows from a fixed direction sector, with an unshaded reference
//!   instrument as the output. Columns are `(v_mast, dir_mast, v_ref)`.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Weibull};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bandwidth::{Method, PluginRule};
use crate::conditional::correct_batch;
use crate::dataset::{split_indices, Dataset};
use crate::error::{KdeError, Result};
use crate::selection::{plugin_report, select_with, Criterion, CriterionReport, Objective, OptimizerConfig};

/// Noise-free target of Example 1.
pub fn example1_target(x: f64) -> f64 {
    x / 4.0 + x.sin()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Example1Config {
    pub m: usize,
    pub x_std: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for Example1Config {
    fn default() -> Self {
        Self {
            m: 100,
            x_std: 5.0,
            noise_std: 0.5,
            seed: 0,
        }
    }
}

fn normal(mean: f64, std: f64) -> Result<Normal<f64>> {
    Normal::new(mean, std).map_err(|e| KdeError::InvalidArgument(e.to_string()))
}

pub fn gen_example1(config: &Example1Config) -> Result<Dataset> {
    if config.m < 10 || !(config.x_std > 0.0) || !(config.noise_std > 0.0) {
        return Err(KdeError::InvalidArgument(format!(
            "invalid Example 1 configuration {config:?}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let xs = normal(0.0, config.x_std)?;
    let noise = normal(0.0, config.noise_std)?;
    let mut values = Vec::with_capacity(2 * config.m);
    for _ in 0..config.m {
        let x = xs.sample(&mut rng);
        let y = example1_target(x) + noise.sample(&mut rng);
        values.push(x);
        values.push(y);
    }
    let data = Dataset::new(vec!["x".into(), "y".into()], values, 1)?;
    data.validate()?;
    Ok(data)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShadingConfig {
    pub m: usize,
    /// Shaded direction sector in degrees, `[from, to)`.
    pub sector: (f64, f64),
    /// Reference speed over mast speed inside the sector.
    pub shading_gain: f64,
    pub speed_shape: f64,
    pub speed_scale: f64,
    /// Fraction of directions drawn from the prevailing lobe; the rest are uniform.
    pub prevailing_fraction: f64,
    pub prevailing_mean: f64,
    pub prevailing_std: f64,
    /// Speed measurement noise (both instruments), m/s.
    pub noise_std: f64,
    /// Direction measurement noise, degrees.
    pub direction_noise_std: f64,
    pub seed: u64,
}

impl Default for ShadingConfig {
    fn default() -> Self {
        Self {
            m: 3000,
            sector: (290.0, 330.0),
            shading_gain: 1.45,
            speed_shape: 2.2,
            speed_scale: 9.0,
            prevailing_fraction: 0.5,
            prevailing_mean: 300.0,
            prevailing_std: 40.0,
            noise_std: 0.4,
            direction_noise_std: 2.0,
            seed: 0,
        }
    }
}

impl ShadingConfig {
    pub fn in_sector(&self, direction: f64) -> bool {
        direction >= self.sector.0 && direction < self.sector.1
    }
}

fn wrap_degrees(d: f64) -> f64 {
    d.rem_euclid(360.0)
}

/// Shading stand-in. Shading is decided by the true direction; the mast
/// reports direction with its own noise.
pub fn gen_shading(config: &ShadingConfig) -> Result<Dataset> {
    let (from, to) = config.sector;
    if !(0.0..360.0).contains(&from) || !(from < to && to <= 360.0) || !(config.shading_gain >= 1.0) {
        return Err(KdeError::InvalidArgument(format!(
            "invalid shading configuration {config:?}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let speed = Weibull::new(config.speed_scale, config.speed_shape)
        .map_err(|e| KdeError::InvalidArgument(e.to_string()))?;
    let lobe = normal(config.prevailing_mean, config.prevailing_std)?;
    let noise = |rng: &mut ChaCha8Rng, std: f64| -> f64 {
        if std > 0.0 {
            rng.sample::<f64, _>(rand_distr::StandardNormal) * std
        } else {
            0.0
        }
    };
    let mut values = Vec::with_capacity(3 * config.m);
    for _ in 0..config.m {
        let v: f64 = speed.sample(&mut rng);
        let dir = if rng.random::<f64>() < config.prevailing_fraction {
            wrap_degrees(lobe.sample(&mut rng))
        } else {
            rng.random_range(0.0..360.0)
        };
        let v_ref = v + noise(&mut rng, config.noise_std);
        let seen = if config.in_sector(dir) {
            v / config.shading_gain
        } else {
            v
        };
        let v_mast = seen + noise(&mut rng, config.noise_std);
        let dir_mast = wrap_degrees(dir + noise(&mut rng, config.direction_noise_std));
        values.extend_from_slice(&[v_mast, dir_mast, v_ref]);
    }
    let data = Dataset::new(
        vec!["v_mast".into(), "dir_mast".into(), "v_ref".into()],
        values,
        2,
    )?;
    data.validate()?;
    Ok(data)
}

pub fn rmse(predicted: &[f64], truth: &[f64]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(KdeError::DimensionMismatch {
            expected: truth.len(),
            got: predicted.len(),
        });
    }
    if truth.is_empty() {
        return Err(KdeError::InvalidArgument("rmse of empty vectors".to_string()));
    }
    let sse: f64 = predicted
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok((sse / truth.len() as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub fraction: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub methods: Vec<Method>,
    pub criteria: Vec<Criterion>,
    /// `None` trains on all rows and leaves RMSE empty.
    pub split: Option<SplitConfig>,
    pub level: f64,
    /// Input column that stands in for the uncorrected output, for `raw_rmse`.
    pub raw_column: Option<usize>,
    pub optimizer: OptimizerConfig,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            methods: Method::ALL.to_vec(),
            criteria: vec![Criterion::Lscv, Criterion::Mcse],
            split: Some(SplitConfig {
                fraction: 0.8,
                seed: 0,
            }),
            level: crate::conditional::DEFAULT_LEVEL,
            raw_column: None,
            optimizer: OptimizerConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    #[serde(flatten)]
    pub report: CriterionReport,
    /// Validation RMSE of the corrected output.
    pub rmse: Option<f64>,
    /// Validation rows with no evidence, predicted by the training mean.
    pub no_evidence_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkTable {
    pub rows: Vec<BenchmarkRow>,
    pub raw_rmse: Option<f64>,
    pub train_rows: usize,
    pub validation_rows: usize,
}

impl BenchmarkTable {
    pub fn find(&self, method: Method, selection: crate::selection::Selection) -> Option<&BenchmarkRow> {
        self.rows
            .iter()
            .find(|r| r.report.method == method && r.report.selection == selection)
    }
}

/// Validation RMSE of a selected bandwidth. Returns `(rmse, no_evidence_rows)`.
fn validation_rmse(
    objective: &Objective,
    report: &CriterionReport,
    validation: &Dataset,
    level: f64,
) -> Result<(f64, usize)> {
    let model = objective.fit(&report.spec()?)?;
    let train = objective.data();
    let prior = train.column(train.output_index()).sum::<f64>() / train.len() as f64;
    let inputs: Vec<Vec<f64>> = (0..validation.len()).map(|i| validation.inputs(i)).collect();
    let truth: Vec<f64> = (0..validation.len()).map(|i| validation.output(i)).collect();
    let mut missing = 0;
    let predicted: Vec<f64> = correct_batch(&model, &inputs, level)
        .into_iter()
        .map(|r| match r {
            Ok(c) => Ok(c.expectation),
            Err(KdeError::NoEvidence) => {
                missing += 1;
                Ok(prior)
            }
            Err(e) => Err(e),
        })
        .collect::<Result<_>>()?;
    Ok((rmse(&predicted, &truth)?, missing))
}

/// Runs the plug-in baselines (FW and AW at Scott) plus every requested
/// method/criterion pair, scoring criteria on the training part and RMSE on
/// the validation part.
pub fn run_benchmark(data: &Dataset, config: &BenchmarkConfig) -> Result<BenchmarkTable> {
    config.optimizer.validate()?;
    let (train, validation) = match config.split {
        Some(s) => {
            let (t, v) = split_indices(data.len(), s.fraction, s.seed)?;
            (data.select_rows(&t)?, Some(data.select_rows(&v)?))
        }
        None => (data.clone(), None),
    };
    train.validate()?;
    let objective = Objective::new(Arc::new(train))?;
    let alpha = config.optimizer.alpha;

    let mut reports = vec![
        plugin_report(&objective, Method::Fixed, PluginRule::Scott, alpha)?,
        plugin_report(&objective, Method::Adaptive, PluginRule::Scott, alpha)?,
    ];

    let mut criteria = config.criteria.clone();
    criteria.sort();
    criteria.dedup();
    let mut methods = config.methods.clone();
    methods.sort();
    methods.dedup();

    // Scalar searches first; the selective ones are seeded from them.
    let scalar_needed: Vec<(Method, Criterion)> = criteria
        .iter()
        .flat_map(|&c| {
            [Method::Fixed, Method::Adaptive]
                .into_iter()
                .filter(|m| methods.iter().any(|x| x.scalar_counterpart() == *m))
                .map(move |m| (m, c))
        })
        .collect();
    let scalar: Vec<CriterionReport> = scalar_needed
        .par_iter()
        .map(|&(m, c)| select_with(&objective, m, c, &config.optimizer, None))
        .collect::<Result<_>>()?;
    let selective: Vec<(Method, Criterion)> = criteria
        .iter()
        .flat_map(|&c| {
            methods
                .iter()
                .filter(|m| m.is_selective())
                .map(move |&m| (m, c))
        })
        .collect();
    let selective: Vec<CriterionReport> = selective
        .par_iter()
        .map(|&(m, c)| {
            let warm = scalar
                .iter()
                .find(|r| r.method == m.scalar_counterpart() && r.selection == c.into());
            select_with(&objective, m, c, &config.optimizer, warm)
        })
        .collect::<Result<_>>()?;

    for &c in &criteria {
        for &m in &methods {
            let pool = if m.is_selective() { &selective } else { &scalar };
            if let Some(r) = pool.iter().find(|r| r.method == m && r.selection == c.into()) {
                reports.push(r.clone());
            }
        }
    }

    let rows = reports
        .into_par_iter()
        .map(|report| {
            let (rmse, missing) = match &validation {
                Some(v) => {
                    let (e, n) = validation_rmse(&objective, &report, v, config.level)?;
                    (Some(e), n)
                }
                None => (None, 0),
            };
            Ok(BenchmarkRow {
                report,
                rmse,
                no_evidence_rows: missing,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let raw_rmse = match (&validation, config.raw_column) {
        (Some(v), Some(col)) => {
            if col >= v.dims() || col == v.output_index() {
                return Err(KdeError::InvalidArgument(format!(
                    "raw column {col} must be an input column"
                )));
            }
            let proxy: Vec<f64> = v.column(col).collect();
            let truth: Vec<f64> = v.column(v.output_index()).collect();
            Some(rmse(&proxy, &truth)?)
        }
        _ => None,
    };

    Ok(BenchmarkTable {
        rows,
        raw_rmse,
        train_rows: objective.data().len(),
        validation_rows: validation.as_ref().map_or(0, Dataset::len),
    })
}
