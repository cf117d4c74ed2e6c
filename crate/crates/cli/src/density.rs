use std::path::{Path, PathBuf};

use kdecorrect::conditional::{condition, conditional_expectation, conditional_quantile, credible_interval};
use kdecorrect::density::kde_evaluate;
use kdecorrect::Dataset;
use serde::Serialize;

use crate::args::DensityArgs;
use crate::error::{CliError, CliResult};
use crate::model::ModelFile;
use crate::output::{fmt_f64, write_csv, write_json};

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// `n` evenly spaced points from `lo` to `hi` inclusive.
fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let step = (hi - lo) / (n - 1) as f64;
    (0..n)
        .map(|k| if k == n - 1 { hi } else { lo + step * k as f64 })
        .collect()
}

fn parse_ranges(spec: &str, axes: usize) -> CliResult<Vec<(f64, f64)>> {
    let parts: Vec<&str> = spec.split(',').collect();
    if parts.len() != axes {
        return Err(usage(format!("--range needs {axes} `lo:hi` pair(s), got `{spec}`")));
    }
    parts
        .iter()
        .map(|p| {
            let (lo, hi) = p
                .split_once(':')
                .ok_or_else(|| usage(format!("range `{p}` is not of the form lo:hi")))?;
            let lo: f64 = lo.trim().parse().map_err(|_| usage(format!("bad range bound `{lo}`")))?;
            let hi: f64 = hi.trim().parse().map_err(|_| usage(format!("bad range bound `{hi}`")))?;
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(usage(format!("range `{p}` must satisfy lo < hi")));
            }
            Ok((lo, hi))
        })
        .collect()
}

fn parse_dims(spec: &str, data: &Dataset) -> CliResult<[usize; 2]> {
    let dims: Vec<usize> = spec
        .split(',')
        .map(|t| {
            let t = t.trim();
            match t.parse::<usize>() {
                Ok(i) if i < data.dims() => Ok(i),
                Ok(i) => Err(usage(format!("dimension {i} out of range for {} columns", data.dims()))),
                Err(_) => data
                    .columns()
                    .iter()
                    .position(|c| c == t)
                    .ok_or_else(|| usage(format!("unknown column `{t}`"))),
            }
        })
        .collect::<CliResult<_>>()?;
    match dims[..] {
        [a, b] if a != b => Ok([a, b]),
        _ => Err(usage(format!("--dims needs two distinct columns, got `{spec}`"))),
    }
}

/// Sidecar path next to the grid CSV.
pub fn sidecar_path(out: &Path) -> PathBuf {
    if out.extension().is_some_and(|e| e == "json") {
        let mut s = out.as_os_str().to_owned();
        s.push(".summary.json");
        PathBuf::from(s)
    } else {
        out.with_extension("json")
    }
}

#[derive(Debug, Serialize)]
struct Quantile {
    p: f64,
    value: f64,
}

#[derive(Debug, Serialize)]
struct ConditionalSummary {
    inputs: Vec<String>,
    at: Vec<f64>,
    output: String,
    expectation: f64,
    level: f64,
    lower: f64,
    upper: f64,
    quantiles: Vec<Quantile>,
    evidence: f64,
    range: (f64, f64),
    points: usize,
    /// Trapezoid integral of the exported curve.
    grid_mass: f64,
}

pub fn run(args: &DensityArgs) -> CliResult<()> {
    if args.points < 2 {
        return Err(usage("--points must be at least 2"));
    }
    let file = ModelFile::load(&args.model)?;
    let model = file.to_model()?;
    match (args.joint, args.conditional) {
        (true, false) => joint(args, &model),
        (false, true) => conditional(args, &model),
        _ => Err(usage("choose exactly one of --joint or --conditional")),
    }
}

fn joint(args: &DensityArgs, model: &kdecorrect::FittedModel) -> CliResult<()> {
    let data = model.data();
    let dims = parse_dims(args.dims.as_deref().unwrap_or_default(), data)?;
    let ranges = match &args.range {
        Some(spec) => parse_ranges(spec, 2)?,
        None => {
            let (means, stds) = (data.means(), data.stds());
            dims.iter()
                .map(|&k| (means[k] - 6.0 * stds[k], means[k] + 6.0 * stds[k]))
                .collect()
        }
    };
    let marginal = model.marginal(&dims)?;
    let xs = linspace(ranges[0].0, ranges[0].1, args.points);
    let ys = linspace(ranges[1].0, ranges[1].1, args.points);
    let points: Vec<Vec<f64>> = xs
        .iter()
        .flat_map(|&x| ys.iter().map(move |&y| vec![x, y]))
        .collect();
    let density = kde_evaluate(&marginal, &points)?;
    let header = vec![
        data.columns()[dims[0]].clone(),
        data.columns()[dims[1]].clone(),
        "density".to_string(),
    ];
    let rows: Vec<Vec<String>> = points
        .iter()
        .zip(&density)
        .map(|(p, f)| vec![fmt_f64(p[0]), fmt_f64(p[1]), fmt_f64(*f)])
        .collect();
    write_csv(&args.out, &header, &rows)?;
    eprintln!("wrote {} grid points", rows.len());
    Ok(())
}

fn conditional(args: &DensityArgs, model: &kdecorrect::FittedModel) -> CliResult<()> {
    let data = model.data();
    let spec = args.at.as_deref().unwrap_or_default();
    let at: Vec<f64> = spec
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| usage(format!("bad --at value `{t}`"))))
        .collect::<CliResult<_>>()?;
    let inputs: Vec<String> = data.input_indices().iter().map(|&k| data.columns()[k].clone()).collect();
    if at.len() != inputs.len() {
        return Err(usage(format!(
            "--at has {} values but the model has {} inputs ({})",
            at.len(),
            inputs.len(),
            inputs.join(", ")
        )));
    }
    if !(args.level > 0.0 && args.level < 1.0) {
        return Err(usage(format!("--level {} outside (0, 1)", args.level)));
    }
    let mix = condition(model, &at)?;
    let range = match &args.range {
        Some(spec) => parse_ranges(spec, 1)?[0],
        None => mix.support(6.0),
    };
    let ys = linspace(range.0, range.1, args.points);
    let density: Vec<f64> = ys.iter().map(|&y| mix.pdf(y)).collect();
    let grid_mass = ys
        .windows(2)
        .zip(density.windows(2))
        .map(|(y, f)| 0.5 * (y[1] - y[0]) * (f[0] + f[1]))
        .sum();

    let (lower, upper) = credible_interval(&mix, args.level)?;
    let quantiles = [0.05, 0.25, 0.5, 0.75, 0.95]
        .iter()
        .map(|&p| Ok(Quantile { p, value: conditional_quantile(&mix, p)? }))
        .collect::<CliResult<_>>()?;
    let summary = ConditionalSummary {
        inputs,
        at,
        output: data.output_name().to_string(),
        expectation: conditional_expectation(&mix),
        level: args.level,
        lower,
        upper,
        quantiles,
        evidence: mix.evidence(),
        range,
        points: args.points,
        grid_mass,
    };

    let header = vec![data.output_name().to_string(), "density".to_string()];
    let rows: Vec<Vec<String>> = ys
        .iter()
        .zip(&density)
        .map(|(y, f)| vec![fmt_f64(*y), fmt_f64(*f)])
        .collect();
    write_csv(&args.out, &header, &rows)?;
    write_json(&sidecar_path(&args.out), &summary)?;
    eprintln!("expectation {} ({}..{})", summary.expectation, lower, upper);
    Ok(())
}
