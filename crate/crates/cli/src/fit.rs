use std::sync::Arc;

use kdecorrect::bandwidth::PluginRule;
use kdecorrect::dataset::load_csv;
use kdecorrect::selection::{plugin_report, select_with, Objective, OptimizerConfig};
use kdecorrect::{Criterion, CriterionReport, Selection};

use crate::args::FitArgs;
use crate::error::CliResult;
use crate::model::ModelFile;
use crate::output::fmt_f64;

pub fn run(args: &FitArgs) -> CliResult<()> {
    let (data, stats) = load_csv(&args.input, Some(&args.output_col))?;
    if stats.dropped > 0 {
        eprintln!("dropped {} incomplete rows", stats.dropped);
    }
    let objective = Objective::new(Arc::new(data))?;
    let config = OptimizerConfig {
        alpha: args.alpha,
        ..Default::default()
    };
    config.validate()?;
    let report = match args.criterion {
        Selection::Scott => plugin_report(&objective, args.method, PluginRule::Scott, args.alpha)?,
        Selection::Silverman => {
            plugin_report(&objective, args.method, PluginRule::Silverman, args.alpha)?
        }
        Selection::Lscv => select_with(&objective, args.method, Criterion::Lscv, &config, None)?,
        Selection::Mcse => select_with(&objective, args.method, Criterion::Mcse, &config, None)?,
    };
    let model = objective.fit(&report.spec()?)?;
    ModelFile::new(&model, &report, args.seed).save(&args.model)?;
    print_summary(&report);
    Ok(())
}

pub fn factor_cell(report: &CriterionReport) -> String {
    report
        .factor
        .components(1)
        .iter()
        .map(|h| fmt_f64(*h))
        .collect::<Vec<_>>()
        .join(" ")
}

fn print_summary(report: &CriterionReport) {
    println!("method\tcriterion\tfactor\tlscv\tmcse\tevaluations\tconverged");
    println!(
        "{}\t{}\t{}\t{}\t{}\t{}\t{}",
        report.method,
        report.selection,
        factor_cell(report),
        fmt_f64(report.lscv),
        fmt_f64(report.mcse),
        report.evaluations,
        report.converged
    );
}
