//! Delimited-text ingestion: comma-separated, first row is the header.

use std::collections::BTreeMap;
use std::path::Path;

use svex_core::ExperimentData;

use crate::errors::{CliError, CliResult};

/// The named columns of one CSV file, all as strings.
pub struct Table {
    pub columns: BTreeMap<String, Vec<String>>,
    pub rows: usize,
}

pub fn read_table(path: &Path, needed: &[&str]) -> CliResult<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut index = Vec::new();
    for name in needed {
        let pos = headers.iter().position(|h| h == name).ok_or_else(|| {
            CliError::data(format!(
                "{}: missing column `{name}` (header: {})",
                path.display(),
                headers.join(", ")
            ))
        })?;
        index.push((name.to_string(), pos));
    }
    let mut columns: BTreeMap<String, Vec<String>> =
        needed.iter().map(|n| (n.to_string(), Vec::new())).collect();
    let mut rows = 0usize;
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        for (name, pos) in &index {
            let value = record.get(*pos).ok_or_else(|| {
                CliError::data(format!(
                    "{}: row {}: missing value in column `{name}`",
                    path.display(),
                    line + 2
                ))
            })?;
            columns.get_mut(name).unwrap().push(value.to_string());
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(CliError::data(format!("{}: no data rows", path.display())));
    }
    Ok(Table { columns, rows })
}

pub fn parse_outcome(values: &[String], column: &str) -> CliResult<Vec<f64>> {
    values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            if v.is_empty() {
                return Err(CliError::data(format!(
                    "column `{column}`, row {}: missing value",
                    i + 2
                )));
            }
            v.parse::<f64>().map_err(|_| {
                CliError::data(format!("column `{column}`, row {}: `{v}` is not numeric", i + 2))
            })
        })
        .collect()
}

/// Treatment values must be the integers 0/1 (or the strings "0"/"1").
pub fn parse_treatment(values: &[String], column: &str) -> CliResult<Vec<bool>> {
    values
        .iter()
        .enumerate()
        .map(|(i, v)| match v.as_str() {
            "0" => Ok(false),
            "1" => Ok(true),
            other => Err(CliError::data(format!(
                "column `{column}`, row {}: treatment must be 0 or 1, got `{other}`",
                i + 2
            ))),
        })
        .collect()
}

/// Build validated experiment data from string columns, attaching the named
/// covariate columns.
pub fn build_experiment(
    outcome: &[String],
    treatment: &[String],
    weight: &[String],
    outcome_col: &str,
    treatment_col: &str,
    weight_col: &str,
    covariates: &[(String, Vec<String>)],
) -> CliResult<ExperimentData> {
    let y = parse_outcome(outcome, outcome_col)?;
    let t = parse_treatment(treatment, treatment_col)?;
    let w = parse_outcome(weight, weight_col)?;
    let mut data = ExperimentData::new(y, t, w)?;
    for (name, values) in covariates {
        data = data.with_covariate(name, values.clone())?;
    }
    Ok(data)
}
