//! Delimited-text datasets.

use std::fs::File;
use std::path::Path;

use stratmatch_core::{encode_categoricals, Dataset, Error as CoreError};

use crate::error::{AppError, AppResult};

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub treatment: String,
    pub outcome: String,
    pub delimiter: u8,
    /// Columns one-hot encoded into one indicator per observed level.
    pub categorical: Vec<String>,
}

impl LoadOptions {
    pub fn new(treatment: &str, outcome: &str) -> Self {
        Self {
            treatment: treatment.to_string(),
            outcome: outcome.to_string(),
            delimiter: b',',
            categorical: Vec::new(),
        }
    }
}

/// Accepts `,`, `tab`, `\t` or any single ASCII character.
pub fn parse_delimiter(s: &str) -> Option<u8> {
    match s {
        "tab" | "\\t" | "\t" => Some(b'\t'),
        "comma" => Some(b','),
        _ if s.len() == 1 && s.is_ascii() => Some(s.as_bytes()[0]),
        _ => None,
    }
}

fn parse_failure(path: &Path, line: usize, column: &str, reason: String) -> AppError {
    AppError::data(
        path,
        CoreError::ParseFailure {
            row: line,
            column: column.to_string(),
            reason,
        },
    )
}

/// Reads a table with a header row. Every column other than the treatment and
/// outcome columns becomes a feature, in file order. Parse failures report
/// the 1-based file line (the header is line 1).
pub fn load_dataset(path: &Path, opts: &LoadOptions) -> AppResult<Dataset> {
    let file = File::open(path).map_err(|e| AppError::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .has_headers(true)
        .from_reader(file);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| AppError::data(path, CoreError::NamedColumnAbsent(name.to_string())))
    };
    let t_col = find(&opts.treatment)?;
    let y_col = find(&opts.outcome)?;
    for c in &opts.categorical {
        find(c)?;
    }
    let feature_cols: Vec<usize> = (0..header.len()).filter(|&j| j != t_col && j != y_col).collect();

    let mut treatment = Vec::new();
    let mut outcome = Vec::new();
    let mut raw: Vec<Vec<String>> = vec![Vec::new(); feature_cols.len()];
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(i + 2, |p| p.line() as usize);
        let cell = |j: usize| rec.get(j).map(str::trim).unwrap_or("");
        let number = |j: usize| -> AppResult<f64> {
            let s = cell(j);
            if s.is_empty() {
                return Err(parse_failure(path, line, &header[j], "missing value".into()));
            }
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_failure(path, line, &header[j], format!("`{s}` is not a finite number")))
        };
        let t = number(t_col)?;
        if t != 0.0 && t != 1.0 {
            return Err(parse_failure(path, line, &header[t_col], format!("treatment must be 0 or 1, got {t}")));
        }
        treatment.push(t == 1.0);
        outcome.push(number(y_col)?);
        for (k, &j) in feature_cols.iter().enumerate() {
            if opts.categorical.contains(&header[j]) {
                if cell(j).is_empty() {
                    return Err(parse_failure(path, line, &header[j], "missing value".into()));
                }
                raw[k].push(cell(j).to_string());
            } else {
                raw[k].push(number(j)?.to_string());
            }
        }
    }

    // assemble columns, expanding categoricals in place
    let n = treatment.len();
    let mut names = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for (k, &j) in feature_cols.iter().enumerate() {
        if opts.categorical.contains(&header[j]) {
            let (lvl_names, rows) = encode_categoricals(&header[j], &raw[k]);
            for (l, name) in lvl_names.into_iter().enumerate() {
                names.push(name);
                columns.push(rows.iter().map(|r| r[l]).collect());
            }
        } else {
            names.push(header[j].clone());
            columns.push(raw[k].iter().map(|s| s.parse().expect("validated above")).collect());
        }
    }
    let mut flat = Vec::with_capacity(n * names.len());
    for i in 0..n {
        flat.extend(columns.iter().map(|c| c[i]));
    }
    Dataset::from_flat(treatment, flat, outcome, names).map_err(|e| AppError::data(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> AppError {
    let line = e.position().map_or(0, |p| p.line());
    AppError::Format {
        path: path.to_path_buf(),
        line,
        message: e.to_string(),
    }
}

/// Writes features, then treatment and outcome columns. Values use the
/// shortest representation that parses back to the same `f64`.
pub fn write_dataset(d: &Dataset, path: &Path, treatment: &str, outcome: &str, delimiter: u8) -> AppResult<()> {
    let mut w = csv::WriterBuilder::new()
        .delimiter(delimiter)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut header: Vec<String> = d.feature_names().to_vec();
    header.push(treatment.to_string());
    header.push(outcome.to_string());
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for i in 0..d.len() {
        let mut rec: Vec<String> = d.row(i).iter().map(|v| v.to_string()).collect();
        rec.push(if d.is_treated(i) { "1" } else { "0" }.to_string());
        rec.push(d.y(i).to_string());
        w.write_record(&rec).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| AppError::io(path, e))
}
