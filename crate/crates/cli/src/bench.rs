use std::path::{Path, PathBuf};

use kdecorrect::dataset::load_csv;
use kdecorrect::experiments::{
    gen_example1, gen_shading, run_benchmark, BenchmarkConfig, BenchmarkTable, Example1Config,
    ShadingConfig, SplitConfig,
};
use kdecorrect::selection::OptimizerConfig;
use kdecorrect::Dataset;
use serde::Serialize;

use crate::args::{BenchCommon, BenchSource};
use crate::error::{CliError, CliResult};
use crate::fit::factor_cell;
use crate::output::{fmt_f64, write_csv, write_json};

pub const TABLE_COLUMNS: [&str; 8] = [
    "method",
    "criterion",
    "factor",
    "lscv",
    "mcse",
    "rmse",
    "evaluations",
    "converged",
];

#[derive(Debug, Serialize)]
#[serde(tag = "source", rename_all = "lowercase")]
enum SourceMeta {
    Example1 {
        config: Example1Config,
    },
    Shading {
        config: ShadingConfig,
    },
    Csv {
        input: PathBuf,
        output_column: String,
        raw_column: Option<String>,
        dropped_rows: usize,
    },
}

#[derive(Debug, Serialize)]
struct Meta<'a> {
    version: &'static str,
    dataset: SourceMeta,
    rows: usize,
    benchmark: &'a BenchmarkConfig,
    train_rows: usize,
    validation_rows: usize,
}

fn config(common: &BenchCommon, default_split: Option<f64>, raw_column: Option<usize>) -> CliResult<BenchmarkConfig> {
    if common.methods.is_empty() || common.criteria.is_empty() {
        return Err(CliError::Usage("--methods and --criteria need at least one entry".into()));
    }
    if !(common.level > 0.0 && common.level < 1.0) {
        return Err(CliError::Usage(format!("--level {} outside (0, 1)", common.level)));
    }
    let split = common.split.or(default_split).map(|fraction| SplitConfig {
        fraction,
        seed: common.split_seed,
    });
    if let Some(s) = split {
        if !(s.fraction > 0.0 && s.fraction < 1.0) {
            return Err(CliError::Usage(format!("--split {} outside (0, 1)", s.fraction)));
        }
    }
    Ok(BenchmarkConfig {
        methods: common.methods.clone(),
        criteria: common.criteria.clone(),
        split,
        level: common.level,
        raw_column,
        optimizer: OptimizerConfig {
            alpha: common.alpha,
            ..Default::default()
        },
    })
}

fn column_index(data: &Dataset, name: &str) -> CliResult<usize> {
    data.columns()
        .iter()
        .position(|c| c == name)
        .ok_or_else(|| CliError::Data(format!("column `{name}` not found")))
}

pub fn run(source: &BenchSource) -> CliResult<()> {
    let (data, meta, common, bench) = match source {
        BenchSource::Example1 { seed, m, common } => {
            let cfg = Example1Config {
                m: *m,
                seed: *seed,
                ..Default::default()
            };
            let data = gen_example1(&cfg)?;
            let bench = config(common, None, None)?;
            (data, SourceMeta::Example1 { config: cfg }, common, bench)
        }
        BenchSource::Shading { seed, m, common } => {
            let cfg = ShadingConfig {
                m: *m,
                seed: *seed,
                ..Default::default()
            };
            let data = gen_shading(&cfg)?;
            // Mast speed is the uncorrected measurement of the reference speed.
            let bench = config(common, Some(0.8), Some(0))?;
            (data, SourceMeta::Shading { config: cfg }, common, bench)
        }
        BenchSource::Csv {
            input,
            output_col,
            raw_col,
            common,
        } => {
            let (data, stats) = load_csv(input, Some(output_col))?;
            let raw = raw_col.as_deref().map(|c| column_index(&data, c)).transpose()?;
            let bench = config(common, Some(0.8), raw)?;
            let meta = SourceMeta::Csv {
                input: input.clone(),
                output_column: output_col.clone(),
                raw_column: raw_col.clone(),
                dropped_rows: stats.dropped,
            };
            (data, meta, common, bench)
        }
    };

    let table = run_benchmark(&data, &bench)?;
    write_outputs(&common.out, &table, &Meta {
        version: env!("CARGO_PKG_VERSION"),
        dataset: meta,
        rows: data.len(),
        benchmark: &bench,
        train_rows: table.train_rows,
        validation_rows: table.validation_rows,
    })?;
    print_table(&table);
    Ok(())
}

fn table_rows(table: &BenchmarkTable) -> Vec<Vec<String>> {
    let mut rows: Vec<Vec<String>> = table
        .rows
        .iter()
        .map(|r| {
            vec![
                r.report.method.to_string(),
                r.report.selection.to_string(),
                factor_cell(&r.report),
                fmt_f64(r.report.lscv),
                fmt_f64(r.report.mcse),
                r.rmse.map(fmt_f64).unwrap_or_default(),
                r.report.evaluations.to_string(),
                r.report.converged.to_string(),
            ]
        })
        .collect();
    if let Some(raw) = table.raw_rmse {
        let mut row = vec![String::new(); TABLE_COLUMNS.len()];
        row[0] = "raw".to_string();
        row[5] = fmt_f64(raw);
        rows.insert(0, row);
    }
    rows
}

fn write_outputs(dir: &Path, table: &BenchmarkTable, meta: &Meta) -> CliResult<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))?;
    let header: Vec<String> = TABLE_COLUMNS.iter().map(|s| s.to_string()).collect();
    write_csv(&dir.join("table.csv"), &header, &table_rows(table))?;
    write_json(&dir.join("table.json"), table)?;
    write_json(&dir.join("meta.json"), meta)
}

fn print_table(table: &BenchmarkTable) {
    println!(
        "{:<5} {:<9} {:<28} {:>12} {:>10} {:>9} {:>6}",
        "method", "criterion", "factor", "lscv", "mcse", "rmse", "evals"
    );
    if let Some(raw) = table.raw_rmse {
        println!("{:<5} {:<9} {:<28} {:>12} {:>10} {:>9.4} {:>6}", "raw", "", "", "", "", raw, "");
    }
    for r in &table.rows {
        let factor: Vec<String> = r.report.factor.components(1).iter().map(|h| format!("{h:.4}")).collect();
        let rmse = r.rmse.map(|v| format!("{v:.4}")).unwrap_or_default();
        println!(
            "{:<5} {:<9} {:<28} {:>12.4e} {:>10.4} {:>9} {:>6}",
            r.report.method.to_string(),
            r.report.selection.to_string(),
            factor.join(" "),
            r.report.lscv,
            r.report.mcse,
            rmse,
            r.report.evaluations
        );
    }
    if table.validation_rows > 0 {
        println!(
            "train rows {}, validation rows {}",
            table.train_rows, table.validation_rows
        );
    }
}
