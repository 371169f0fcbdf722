//! CSV input and output of numeric tables.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use scle_core::DataMatrix;

use crate::error::{AppError, AppResult};
use crate::format::real;

/// Numeric table from CSV: comma separated, `.` decimal point, optional
/// header row (detected as a first row that does not parse as numbers) that
/// is skipped. Returns `(rows, cols, row-major values)`.
pub fn read_table(path: &Path) -> AppResult<(usize, usize, Vec<f64>)> {
    let file = File::open(path).map_err(|e| AppError::Usage(format!("cannot open {}: {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let parsed: Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        let parsed = match parsed {
            Ok(v) => v,
            Err(_) if line == 0 => continue,
            Err(_) => {
                return Err(AppError::Usage(format!(
                    "{}: row {} has a non-numeric field",
                    path.display(),
                    line + 1
                )))
            }
        };
        match cols {
            None => cols = Some(parsed.len()),
            Some(c) if c != parsed.len() => {
                return Err(AppError::Usage(format!(
                    "{}: row {} has {} fields, expected {c}",
                    path.display(),
                    line + 1,
                    parsed.len()
                )))
            }
            _ => {}
        }
        values.extend(parsed);
        rows += 1;
    }
    let cols = cols.ok_or_else(|| AppError::Usage(format!("{}: no data rows", path.display())))?;
    Ok((rows, cols, values))
}

pub fn read_data(path: &Path) -> AppResult<DataMatrix> {
    let (n, d, values) = read_table(path)?;
    Ok(DataMatrix::from_rows(n, d, values)?)
}

pub fn read_matrix(path: &Path) -> AppResult<DMatrix<f64>> {
    let (n, d, values) = read_table(path)?;
    Ok(DMatrix::from_row_slice(n, d, &values))
}

/// Writes a table whose cells are already formatted.
pub fn write_rows(path: &Path, header: &[String], rows: &[Vec<String>]) -> AppResult<()> {
    let mut out = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?;
    out.write_record(header)?;
    for row in rows {
        out.write_record(row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> AppResult<()> {
    let header: Vec<String> = (1..=m.ncols()).map(|j| format!("c{j}")).collect();
    let rows: Vec<Vec<String>> = m.row_iter().map(|r| r.iter().map(|v| real(*v)).collect()).collect();
    write_rows(path, &header, &rows)
}

pub fn write_text(path: &Path, text: &str) -> AppResult<()> {
    let mut f = File::create(path).map_err(|e| AppError::Usage(format!("cannot write {}: {e}", path.display())))?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_is_optional() {
        let dir = tempfile::tempdir().unwrap();
        let with = dir.path().join("a.csv");
        std::fs::write(&with, "x1,x2\n1.0,2\n3,4.5\n").unwrap();
        let without = dir.path().join("b.csv");
        std::fs::write(&without, "1.0,2\n3,4.5\n").unwrap();
        let a = read_data(&with).unwrap();
        let b = read_data(&without).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.row(1), &[3.0, 4.5]);
    }

    #[test]
    fn ragged_rows_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        std::fs::write(&p, "1,2\n3\n").unwrap();
        assert!(read_data(&p).is_err());
        assert!(read_data(&dir.path().join("missing.csv")).is_err());
    }

    #[test]
    fn matrix_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let m = DMatrix::from_row_slice(2, 2, &[1.0 / 3.0, 0.1, 0.1, 2.0]);
        write_matrix(&p, &m).unwrap();
        assert_eq!(read_matrix(&p).unwrap(), m);
    }
}
