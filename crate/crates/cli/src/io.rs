//! Numeric CSV input and output.

use std::path::Path;

use nalgebra::DMatrix;

use crate::CliError;

/// Reads a comma-delimited numeric table into a matrix, one row per record.
pub fn read_matrix(path: &Path, header: bool) -> Result<DMatrix<f64>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(header)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if *cols.get_or_insert(record.len()) != record.len() {
            return Err(CliError::Data(format!("{}: record {} has {} fields", path.display(), i + 1, record.len())));
        }
        for field in record.iter() {
            let x: f64 = field
                .parse()
                .map_err(|_| CliError::Data(format!("{}: record {}: not a number: {field:?}", path.display(), i + 1)))?;
            if !x.is_finite() {
                return Err(CliError::Data(format!("{}: record {}: non-finite value", path.display(), i + 1)));
            }
            values.push(x);
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| CliError::Data(format!("{}: no data", path.display())))?;
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

pub fn render_matrix(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:.16e}", m[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}
