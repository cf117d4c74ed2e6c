use std::fs::File;

use kdecorrect::conditional::correct_batch;
use kdecorrect::KdeError;

use crate::args::PredictArgs;
use crate::error::{CliError, CliResult};
use crate::model::ModelFile;
use crate::output::{fmt_f64, write_csv};

pub const ADDED_COLUMNS: [&str; 5] = ["expected", "lower", "upper", "evidence", "flag"];

pub fn run(args: &PredictArgs) -> CliResult<()> {
    if !(args.level > 0.0 && args.level < 1.0) {
        return Err(CliError::Usage(format!("--level {} outside (0, 1)", args.level)));
    }
    let file = ModelFile::load(&args.model)?;
    let model = file.to_model()?;

    let input = File::open(&args.input)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", args.input.display())))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
    let positions: Vec<usize> = file
        .input_columns()
        .iter()
        .map(|name| {
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| CliError::Data(format!("input column `{name}` missing from {}", args.input.display())))
        })
        .collect::<CliResult<_>>()?;

    let mut records = Vec::new();
    let mut queries = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let x = positions
            .iter()
            .map(|&p| {
                let cell = record.get(p).unwrap_or("").trim();
                match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(v),
                    _ => Err(CliError::Data(format!(
                        "row {}: `{cell}` in column `{}` is not a finite number",
                        row + 1,
                        header[p]
                    ))),
                }
            })
            .collect::<CliResult<Vec<f64>>>()?;
        queries.push(x);
        records.push(record.iter().map(str::to_string).collect::<Vec<_>>());
    }

    let results = correct_batch(&model, &queries, args.level);
    let mut rows = Vec::with_capacity(records.len());
    for (mut cells, result) in records.into_iter().zip(results) {
        match result {
            Ok(r) => cells.extend([
                fmt_f64(r.expectation),
                fmt_f64(r.lower),
                fmt_f64(r.upper),
                fmt_f64(r.evidence),
                String::new(),
            ]),
            Err(KdeError::NoEvidence) => cells.extend([
                String::new(),
                String::new(),
                String::new(),
                fmt_f64(0.0),
                "no_evidence".to_string(),
            ]),
            Err(e) => return Err(e.into()),
        }
        rows.push(cells);
    }
    let mut out_header = header;
    out_header.extend(ADDED_COLUMNS.iter().map(|s| s.to_string()));
    write_csv(&args.out, &out_header, &rows)?;
    eprintln!("corrected {} rows", rows.len());
    Ok(())
}
